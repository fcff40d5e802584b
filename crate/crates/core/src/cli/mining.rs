use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{file_digest, write_manifest, MiningArgs, MANIFEST_FILE};
use crate::dataset::{self, chronological_split, retain_roles, Role, SplitRatios};
use crate::features::{self, FeatureRow};
use crate::filter::{filter_stream, SourceFilter};
use crate::jsonl;
use crate::language::Language;
use crate::parallel::parallel_map;
use crate::repo::{ChangeKind, CommitRecord, RepoHandle};
use crate::szz::{run_szz, SzzAlgorithm, TraceLine};
use crate::vfc::{self, compile_rules, identify_vfcs, MatchLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// All kept commits.
    Realistic,
    /// Only VIC and VFC commits.
    Ideal,
}

#[derive(Debug, Clone, Serialize)]
pub struct MiningConfig {
    pub save_folder: PathBuf,
    pub repo_name: String,
    pub repo_path: PathBuf,
    pub language: Language,
    pub workers: usize,
    pub szz: SzzAlgorithm,
    pub ratios: SplitRatios,
    pub manual_patch_file: Option<PathBuf>,
    /// `None` disables keyword matching.
    pub regex_level: Option<MatchLevel>,
    pub until: Option<i64>,
    pub setting: Setting,
}

impl MiningConfig {
    /// Defaults for everything but the required locations.
    pub fn new(save_folder: PathBuf, repo_name: &str, repo_path: PathBuf, language: Language) -> Self {
        Self {
            save_folder,
            repo_name: repo_name.to_string(),
            repo_path,
            language,
            workers: 50,
            szz: SzzAlgorithm::V,
            ratios: SplitRatios::default(),
            manual_patch_file: None,
            regex_level: Some(MatchLevel::StrongOnly),
            until: None,
            setting: Setting::Realistic,
        }
    }

    pub(super) fn from_args(a: &MiningArgs) -> anyhow::Result<Self> {
        if a.mode != "local" {
            bail!("unsupported mode `{}`: only `local` is available", a.mode);
        }
        if a.workers == 0 {
            bail!("-workers must be at least 1");
        }
        let language: Language = a
            .common
            .repo_language
            .as_deref()
            .context("-repo_language is required for mining")?
            .parse()?;
        let regex_level = match a.regex_level.as_deref() {
            Some("none") => None,
            Some(level) => Some(level.parse::<MatchLevel>().map_err(anyhow::Error::msg)?),
            None if a.manual_patch_file.is_some() => None,
            None => Some(MatchLevel::StrongOnly),
        };
        let setting = match a.setting.as_str() {
            "realistic" => Setting::Realistic,
            "ideal" => Setting::Ideal,
            other => bail!("unknown setting `{other}` (realistic | ideal)"),
        };
        Ok(Self {
            save_folder: a.common.save_folder.clone(),
            repo_name: a.common.repo_name.clone(),
            repo_path: a.repo_path.clone(),
            language,
            workers: a.workers,
            szz: a.szz.parse().map_err(anyhow::Error::msg)?,
            ratios: a.split.parse().map_err(anyhow::Error::msg)?,
            manual_patch_file: a.manual_patch_file.clone(),
            regex_level,
            until: a.until,
            setting,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.save_folder.join(&self.repo_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSummary {
    pub path: String,
    pub change_kind: ChangeKind,
    pub lines_added: usize,
    pub lines_removed: usize,
}

/// One line of `commits.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitSummary {
    pub commit_id: String,
    pub parent_ids: Vec<String>,
    pub author_id: String,
    pub author_time: i64,
    pub commit_time: i64,
    pub message: String,
    pub files: Vec<FileSummary>,
}

impl From<&CommitRecord> for CommitSummary {
    fn from(c: &CommitRecord) -> Self {
        Self {
            commit_id: c.id.clone(),
            parent_ids: c.parent_ids.clone(),
            author_id: c.author_id.clone(),
            author_time: c.author_time,
            commit_time: c.commit_time,
            message: c.message.clone(),
            files: c
                .files
                .iter()
                .map(|f| FileSummary {
                    path: f.path().to_string(),
                    change_kind: f.change_kind,
                    lines_added: f.lines_added(),
                    lines_removed: f.lines_removed(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MiningSummary {
    pub out_dir: PathBuf,
    pub commits_total: usize,
    pub commits_kept: usize,
    pub dropped: BTreeMap<String, usize>,
    pub vfcs: usize,
    pub vics: usize,
    /// Traced inducing commits that were filtered out of the dataset.
    pub vics_outside_dataset: usize,
    pub unknown_manual: usize,
    pub trace_failures: Vec<String>,
    pub split_sizes: [usize; 3],
}

pub const MINING_FILES: [&str; 7] = [
    "commits.jsonl",
    "features.jsonl",
    "vfcs.jsonl",
    "traces.jsonl",
    "train.jsonl",
    "valid.jsonl",
    "test.jsonl",
];

pub fn run_mining(cfg: &MiningConfig) -> anyhow::Result<MiningSummary> {
    let repo = RepoHandle::open(&cfg.repo_path, cfg.language)
        .with_context(|| format!("cannot open repository {}", cfg.repo_path.display()))?;
    let filter = SourceFilter::new(cfg.language);
    let rules = compile_rules();
    let workers = cfg.workers.max(1);

    let mut commits = repo.enumerate_commit_headers(cfg.until)?;
    let total = commits.len();
    log::info!("{total} commits reachable from {}", repo.head_ref());
    let diffs = parallel_map(&commits, workers, |c| {
        if c.is_merge() {
            Ok(Vec::new())
        } else {
            repo.commit_diff(c)
        }
    })?;
    for (c, d) in commits.iter_mut().zip(diffs) {
        c.files = d;
    }
    let (kept, dropped) = filter_stream(commits, &filter);
    let mut dropped_by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for (_, reason) in &dropped {
        let name = serde_json::to_value(reason)?.as_str().unwrap_or("other").to_string();
        *dropped_by_reason.entry(name).or_default() += 1;
    }
    log::info!("{} commits kept after filtering", kept.len());
    if kept.is_empty() {
        bail!("no commits left after filtering; nothing to mine");
    }

    let vectors = features::extract_all(&repo, &kept, &filter, &rules, workers)?;
    let rows: Vec<FeatureRow> = kept
        .iter()
        .zip(&vectors)
        .map(|(c, v)| FeatureRow::from_vector(c.id.clone(), c.author_time, v))
        .collect();

    let manual = match &cfg.manual_patch_file {
        Some(path) => {
            let all = vfc::load_manual_patches(path)?;
            let total_entries = all.len();
            let mine: Vec<_> = all
                .into_iter()
                .filter(|p| p.repository.eq_ignore_ascii_case(&cfg.repo_name))
                .collect();
            log::info!(
                "{} of {total_entries} manual patches name {}",
                mine.len(),
                cfg.repo_name
            );
            Some(mine)
        }
        None => None,
    };
    let identification = identify_vfcs(&kept, &rules, cfg.regex_level, manual.as_deref());
    for u in &identification.unknown_manual {
        log::warn!("manual patch {} not found among kept commits", u.commit_id);
    }
    let vfc_ids: HashSet<String> = identification.records.iter().map(|r| r.commit_id.clone()).collect();
    let vfc_commits: Vec<CommitRecord> = kept.iter().filter(|c| vfc_ids.contains(&c.id)).cloned().collect();

    let outcomes = run_szz(&repo, &vfc_commits, cfg.szz, &filter, workers);
    let kept_ids: HashSet<&str> = kept.iter().map(|c| c.id.as_str()).collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut vics: HashSet<String> = HashSet::new();
    let mut outside: HashSet<String> = HashSet::new();
    for outcome in outcomes {
        match outcome {
            Ok(t) => {
                for id in &t.vic_ids {
                    if kept_ids.contains(id.as_str()) {
                        vics.insert(id.clone());
                    } else {
                        outside.insert(id.clone());
                    }
                }
                traces.push(TraceLine::from(&t));
            }
            Err(f) => {
                log::warn!("tracing {} failed: {}", f.vfc_id, f.error);
                failures.push(f.vfc_id);
            }
        }
    }

    let annotated = dataset::annotate(rows.clone(), &vics, &vfc_ids)?;
    let annotated = match cfg.setting {
        Setting::Realistic => annotated,
        Setting::Ideal => retain_roles(annotated, &[Role::Vic, Role::Vfc]),
    };
    if annotated.is_empty() {
        bail!("the {:?} setting leaves no commits to split", cfg.setting);
    }
    let split = chronological_split(annotated, cfg.ratios)?;

    let out = cfg.out_dir();
    let summaries: Vec<CommitSummary> = kept.iter().map(CommitSummary::from).collect();
    jsonl::write_jsonl(&out.join("commits.jsonl"), &summaries)?;
    features::write_feature_file(&rows, &out.join("features.jsonl"))?;
    jsonl::write_jsonl(&out.join("vfcs.jsonl"), &identification.records)?;
    jsonl::write_jsonl(&out.join("traces.jsonl"), &traces)?;
    dataset::write_split(&split, &out)?;

    let summary = MiningSummary {
        out_dir: out.clone(),
        commits_total: total,
        commits_kept: kept.len(),
        dropped: dropped_by_reason,
        vfcs: vfc_ids.len(),
        vics: vics.len(),
        vics_outside_dataset: outside.len(),
        unknown_manual: identification.unknown_manual.len(),
        trace_failures: failures,
        split_sizes: [split.train.len(), split.valid.len(), split.test.len()],
    };
    let mut inputs = serde_json::Map::new();
    inputs.insert("repository_head".into(), json!(repo.head()));
    if let Some(p) = &cfg.manual_patch_file {
        inputs.insert("manual_patch_file".into(), json!(file_digest(p)?));
    }
    let outputs: BTreeMap<&str, String> = MINING_FILES
        .iter()
        .map(|name| Ok((*name, file_digest(&out.join(name))?)))
        .collect::<anyhow::Result<_>>()?;
    write_manifest(
        &out.join(MANIFEST_FILE),
        &json!({
            "command": "mining",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "inputs": inputs,
            "outputs": outputs,
            "summary": summary,
        }),
    )?;
    Ok(summary)
}
