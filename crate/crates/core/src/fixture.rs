//! Scripted Git repositories with pinned identities and timestamps.
//!
//! Used by the test suites to build small histories whose commit hashes
//! are reproducible across machines and runs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Epoch seconds used as the default starting clock (2020-01-01T00:00:00Z).
pub const BASE_TIME: i64 = 1_577_836_800;

pub struct FixtureRepo {
    root: PathBuf,
    clock: i64,
}

impl FixtureRepo {
    /// Creates an empty repository with `main` as the default branch.
    pub fn init(path: impl AsRef<Path>) -> io::Result<Self> {
        let root = path.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let repo = Self { root, clock: BASE_TIME };
        repo.git(&["init", "-q", "-b", "main"])?;
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn base_command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.current_dir(&self.root)
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_TERMINAL_PROMPT", "0")
            .args(["-c", "commit.gpgsign=false", "-c", "core.autocrlf=false"]);
        cmd
    }

    /// Runs git in the fixture and returns trimmed stdout.
    pub fn git(&self, args: &[&str]) -> io::Result<String> {
        let out = self.base_command().args(args).output()?;
        if !out.status.success() {
            return Err(io::Error::other(format!(
                "git {} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    pub fn write(&self, rel: &str, contents: &str) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, contents)
    }

    /// Writes one line per element, each terminated by a newline.
    pub fn write_lines(&self, rel: &str, lines: &[&str]) -> io::Result<()> {
        let mut text = lines.join("\n");
        if !lines.is_empty() {
            text.push('\n');
        }
        self.write(rel, &text)
    }

    pub fn write_bytes(&self, rel: &str, contents: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, contents)
    }

    pub fn remove(&self, rel: &str) -> io::Result<()> {
        self.git(&["rm", "-q", rel]).map(|_| ())
    }

    pub fn rename(&self, from: &str, to: &str) -> io::Result<()> {
        if let Some(dir) = self.root.join(to).parent() {
            fs::create_dir_all(dir)?;
        }
        self.git(&["mv", from, to]).map(|_| ())
    }

    pub fn set_executable(&self, rel: &str, executable: bool) -> io::Result<()> {
        let flag = if executable { "+x" } else { "-x" };
        self.git(&["update-index", "--add", &format!("--chmod={flag}"), rel])
            .map(|_| ())
    }

    /// Stages everything and commits. The clock advances one hour per
    /// commit unless an explicit time is given through [`commit_at`](Self::commit_at).
    pub fn commit(&mut self, author: &str, message: &str) -> io::Result<String> {
        self.clock += 3600;
        let t = self.clock;
        self.commit_at(author, message, t, t)
    }

    pub fn commit_at(&mut self, author: &str, message: &str, author_time: i64, commit_time: i64) -> io::Result<String> {
        self.clock = self.clock.max(commit_time);
        self.git(&["add", "-A"])?;
        let email = format!("{}@example.com", author.to_lowercase().replace(' ', "."));
        let out = self
            .base_command()
            .args(["commit", "-q", "--allow-empty", "--no-verify", "-m", message])
            .env("GIT_AUTHOR_NAME", author)
            .env("GIT_AUTHOR_EMAIL", &email)
            .env("GIT_AUTHOR_DATE", format!("@{author_time} +0000"))
            .env("GIT_COMMITTER_NAME", author)
            .env("GIT_COMMITTER_EMAIL", &email)
            .env("GIT_COMMITTER_DATE", format!("@{commit_time} +0000"))
            .output()?;
        if !out.status.success() {
            return Err(io::Error::other(format!(
                "git commit failed: {}",
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        self.git(&["rev-parse", "HEAD"])
    }

    pub fn branch(&self, name: &str) -> io::Result<()> {
        self.git(&["branch", name]).map(|_| ())
    }

    pub fn checkout(&self, name: &str) -> io::Result<()> {
        self.git(&["checkout", "-q", name]).map(|_| ())
    }

    /// Starts a merge without committing it. Conflicts are left in the
    /// working tree; the caller resolves them and then calls `commit`.
    pub fn merge_no_commit(&self, branch: &str) -> io::Result<()> {
        let out = self
            .base_command()
            .args(["merge", "-q", "--no-ff", "--no-commit", branch])
            .env("GIT_AUTHOR_NAME", "merger")
            .env("GIT_AUTHOR_EMAIL", "merger@example.com")
            .env("GIT_COMMITTER_NAME", "merger")
            .env("GIT_COMMITTER_EMAIL", "merger@example.com")
            .output()?;
        // exit status 1 means conflicts, which the caller resolves
        match out.status.code() {
            Some(0) | Some(1) => Ok(()),
            _ => Err(io::Error::other(format!(
                "git merge failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ))),
        }
    }
}
