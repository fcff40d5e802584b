#![allow(dead_code)]

pub mod conformance;
pub mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use jitvp::features::ExpertFeatureVector;
use jitvp::fixture::{FixtureRepo, BASE_TIME};
use jitvp::szz::SzzAlgorithm;
use jitvp::{CommitRecord, Language, RepoHandle};
use tempfile::TempDir;

pub const DAY: i64 = 86_400;

pub fn tempdir() -> TempDir {
    tempfile::tempdir().expect("tempdir")
}

pub fn open_c(path: &Path) -> RepoHandle {
    RepoHandle::open(path, Language::C).expect("open fixture repository")
}

/// A scripted repository with one fixing commit and the inducing commits
/// each SZZ variant must report for it.
pub struct SzzCase {
    pub name: &'static str,
    pub dir: TempDir,
    pub vfc: String,
    pub expected: BTreeMap<SzzAlgorithm, BTreeSet<String>>,
}

impl SzzCase {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn vfc_record(&self) -> CommitRecord {
        open_c(self.path()).commit(&self.vfc).expect("vfc commit")
    }
}

fn set(ids: &[&String]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn same_for_all(ids: &[&String]) -> BTreeMap<SzzAlgorithm, BTreeSet<String>> {
    SzzAlgorithm::ALL.iter().map(|&a| (a, set(ids))).collect()
}

fn per_variant(
    b: &[&String],
    ag: &[&String],
    ma: &[&String],
    v: &[&String],
) -> BTreeMap<SzzAlgorithm, BTreeSet<String>> {
    BTreeMap::from([
        (SzzAlgorithm::B, set(b)),
        (SzzAlgorithm::Ag, set(ag)),
        (SzzAlgorithm::Ma, set(ma)),
        (SzzAlgorithm::V, set(v)),
    ])
}

fn new_repo() -> (TempDir, FixtureRepo) {
    let dir = tempdir();
    let repo = FixtureRepo::init(dir.path()).expect("init");
    (dir, repo)
}

pub fn simple_introduction() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines(
        "a.c",
        &[
            "int f(const char *src) {",
            "    char buf[8];",
            "    strcpy(buf, src);",
            "    return 0;",
            "}",
        ],
    )
    .unwrap();
    let c1 = r.commit("alice", "add f").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int f(const char *src) {",
            "    char buf[8];",
            "    strncpy(buf, src, sizeof buf);",
            "    return 0;",
            "}",
        ],
    )
    .unwrap();
    let vfc = r.commit("bob", "Fix CVE-2020-0001 buffer overflow").unwrap();
    SzzCase {
        name: "simple_introduction",
        dir,
        vfc,
        expected: same_for_all(&[&c1]),
    }
}

pub fn intermediate_modification() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("a.c", &["int g(void) {", "    int n = read();", "    use(n);", "}"])
        .unwrap();
    let c1 = r.commit("alice", "add g").unwrap();
    r.write_lines("a.c", &["int g(void) {", "    int n = read_len();", "    use(n);", "}"])
        .unwrap();
    let c2 = r.commit("bob", "use read_len").unwrap();
    r.write_lines(
        "a.c",
        &["int g(void) {", "    size_t n = read_len();", "    use(n);", "}"],
    )
    .unwrap();
    let vfc = r
        .commit("carol", "Fix integer sign vulnerability (CVE-2020-0002)")
        .unwrap();
    SzzCase {
        name: "intermediate_modification",
        dir,
        vfc,
        expected: per_variant(&[&c2], &[&c2], &[&c2], &[&c1]),
    }
}

pub fn whitespace_reindent() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("a.c", &["void h(int a, int b) {", "    if (a&&b) run();", "}"])
        .unwrap();
    let c1 = r.commit("alice", "add h").unwrap();
    r.write_lines("a.c", &["void h(int a, int b) {", "        if (a&&b) run();", "}"])
        .unwrap();
    let c2 = r.commit("bob", "reindent").unwrap();
    r.write_lines("a.c", &["void h(int a, int b) {", "    if (a && b && ok) run();", "}"])
        .unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0003").unwrap();
    SzzCase {
        name: "whitespace_reindent",
        dir,
        vfc,
        expected: per_variant(&[&c2], &[&c1], &[&c1], &[&c1]),
    }
}

pub fn trailing_comment() -> SzzCase {
    let (dir, mut r) = new_repo();
    let body = |mid: &str| {
        vec![
            "int k(int y) {".to_string(),
            "    int x;".to_string(),
            mid.to_string(),
            "    return x;".to_string(),
            "}".to_string(),
        ]
    };
    let write = |r: &FixtureRepo, mid: &str| {
        let lines = body(mid);
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        r.write_lines("a.c", &refs).unwrap();
    };
    write(&r, "    x = compute(y);");
    let c1 = r.commit("alice", "add k").unwrap();
    write(&r, "    x = compute(y); /* checked */");
    let c2 = r.commit("bob", "annotate").unwrap();
    write(&r, "    x = compute_safe(y);");
    let vfc = r.commit("carol", "Fix CVE-2020-0004").unwrap();
    SzzCase {
        name: "trailing_comment",
        dir,
        vfc,
        expected: per_variant(&[&c2], &[&c1], &[&c1], &[&c1]),
    }
}

pub fn cosmetic_candidates() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("a.c", &["int m(int v) {", "    v = v * 2;", "    return v;", "}"])
        .unwrap();
    let c1 = r.commit("alice", "add m").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int m(int v) {",
            "    // legacy path",
            "",
            "    v = v * 2;",
            "    return v;",
            "}",
        ],
    )
    .unwrap();
    let c2 = r.commit("bob", "note legacy path").unwrap();
    r.write_lines("a.c", &["int m(int v) {", "    v = v * 3;", "    return v;", "}"])
        .unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0005").unwrap();
    SzzCase {
        name: "cosmetic_candidates",
        dir,
        vfc,
        expected: per_variant(&[&c1, &c2], &[&c1], &[&c1], &[&c1]),
    }
}

pub fn multiple_inducing() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines(
        "a.c",
        &[
            "int p(void) {",
            "    int a = 1;",
            "    int b = 2;",
            "    return a + b;",
            "}",
        ],
    )
    .unwrap();
    let c1 = r.commit("alice", "add p").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int p(void) {",
            "    int a = 1;",
            "    int b = 2;",
            "    int c = 3;",
            "    return a + b;",
            "}",
        ],
    )
    .unwrap();
    let c2 = r.commit("bob", "add c").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int p(void) {",
            "    int a = 10;",
            "    int b = 2;",
            "    int c = 30;",
            "    return a + b;",
            "}",
        ],
    )
    .unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0006").unwrap();
    SzzCase {
        name: "multiple_inducing",
        dir,
        vfc,
        expected: same_for_all(&[&c1, &c2]),
    }
}

const RENAME_BODY: [&str; 8] = [
    "int r(void) {",
    "    int status = 0;",
    "    status = unsafe_call();",
    "    log_status(status);",
    "    flush_all();",
    "    report(status);",
    "    return status;",
    "}",
];

pub fn pure_rename() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("old.c", &RENAME_BODY).unwrap();
    let c1 = r.commit("alice", "add r").unwrap();
    r.rename("old.c", "new.c").unwrap();
    r.commit("bob", "rename old.c").unwrap();
    let mut body = RENAME_BODY.to_vec();
    body[2] = "    status = safe_call();";
    r.write_lines("new.c", &body).unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0007").unwrap();
    SzzCase {
        name: "pure_rename",
        dir,
        vfc,
        expected: same_for_all(&[&c1]),
    }
}

pub fn rename_with_edit() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("old.c", &RENAME_BODY).unwrap();
    let c1 = r.commit("alice", "add r").unwrap();
    r.rename("old.c", "new.c").unwrap();
    let mut body = RENAME_BODY.to_vec();
    body[4] = "    flush_some();";
    r.write_lines("new.c", &body).unwrap();
    r.commit("bob", "rename and flush less").unwrap();
    body[2] = "    status = safe_call();";
    r.write_lines("new.c", &body).unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0008").unwrap();
    SzzCase {
        name: "rename_with_edit",
        dir,
        vfc,
        expected: same_for_all(&[&c1]),
    }
}

fn merge_base_lines(k_line: &str, return_line: &str) -> Vec<String> {
    [
        "int f(void) {",
        k_line,
        "    int a = 1;",
        "    int b = 2;",
        "    int c = 3;",
        "    int d = 4;",
        return_line,
        "}",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn write_owned(r: &FixtureRepo, path: &str, lines: &[String]) {
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    r.write_lines(path, &refs).unwrap();
}

/// The merge rewrites a line relative to both parents.
pub fn evil_merge() -> SzzCase {
    let (dir, mut r) = new_repo();
    write_owned(&r, "a.c", &merge_base_lines("    int k = limit;", "    return k + d;"));
    let c1 = r.commit("alice", "add f").unwrap();
    r.branch("side").unwrap();
    r.checkout("side").unwrap();
    write_owned(
        &r,
        "a.c",
        &merge_base_lines("    int k = limit + 1;", "    return k + d;"),
    );
    let c2 = r.commit("bob", "raise limit").unwrap();
    r.checkout("main").unwrap();
    write_owned(
        &r,
        "a.c",
        &merge_base_lines("    int k = limit;", "    return k + d + a;"),
    );
    r.commit("carol", "include a").unwrap();
    r.merge_no_commit("side").unwrap();
    write_owned(
        &r,
        "a.c",
        &merge_base_lines("    int k =  limit + 1;", "    return k + d + a;"),
    );
    let m = r.commit("dave", "Merge branch 'side'").unwrap();
    write_owned(
        &r,
        "a.c",
        &merge_base_lines("    int k = clamp(limit + 1);", "    return k + d + a;"),
    );
    let vfc = r.commit("erin", "Fix CVE-2020-0009 out-of-bounds read").unwrap();
    SzzCase {
        name: "evil_merge",
        dir,
        vfc,
        expected: per_variant(&[&m], &[&m], &[&c2], &[&c1]),
    }
}

pub fn side_branch_merge() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines("a.c", &["int s(int x) {", "    use(x);", "    return x;", "}"])
        .unwrap();
    r.write_lines("b.c", &["int t(void) {", "    return 0;", "}"]).unwrap();
    r.commit("alice", "add s and t").unwrap();
    r.branch("side").unwrap();
    r.checkout("side").unwrap();
    r.write_lines(
        "a.c",
        &["int s(int x) {", "    check(x);", "    use(x);", "    return x;", "}"],
    )
    .unwrap();
    let c2 = r.commit("bob", "check x").unwrap();
    r.checkout("main").unwrap();
    r.write_lines("b.c", &["int t(void) {", "    return 1;", "}"]).unwrap();
    r.commit("carol", "t returns 1").unwrap();
    r.merge_no_commit("side").unwrap();
    r.commit("dave", "Merge branch 'side'").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int s(int x) {",
            "    check_bounds(x, MAX);",
            "    use(x);",
            "    return x;",
            "}",
        ],
    )
    .unwrap();
    let vfc = r.commit("erin", "Fix CVE-2020-0010").unwrap();
    SzzCase {
        name: "side_branch_merge",
        dir,
        vfc,
        expected: same_for_all(&[&c2]),
    }
}

pub fn deep_chain() -> SzzCase {
    let (dir, mut r) = new_repo();
    let write = |r: &FixtureRepo, mid: &str| {
        r.write_lines(
            "a.c",
            &[
                "void t(int count, int size) {",
                "    int total;",
                mid,
                "    alloc(total);",
                "}",
            ],
        )
        .unwrap();
    };
    write(&r, "    total = count * size;");
    let c1 = r.commit("alice", "add t").unwrap();
    write(&r, "    total = count * elem_size;");
    r.commit("bob", "use element size").unwrap();
    write(&r, "        total = count * elem_size;");
    r.commit("carol", "reindent").unwrap();
    write(&r, "    total = count * elem_size + 1;");
    let c4 = r.commit("dave", "reserve terminator").unwrap();
    write(&r, "    total = checked_mul(count, elem_size);");
    let vfc = r.commit("erin", "Fix CVE-2020-0011 integer overflow").unwrap();
    SzzCase {
        name: "deep_chain",
        dir,
        vfc,
        expected: per_variant(&[&c4], &[&c4], &[&c4], &[&c1]),
    }
}

pub fn unrelated_replacement() -> SzzCase {
    let (dir, mut r) = new_repo();
    r.write_lines(
        "a.c",
        &[
            "int z(struct ctx *ctx) {",
            "    prepare(ctx);",
            "    return cleanup(ctx);",
            "}",
        ],
    )
    .unwrap();
    r.commit("alice", "add z").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int z(struct ctx *ctx) {",
            "    prepare(ctx);",
            "    int flag = 0;",
            "}",
        ],
    )
    .unwrap();
    let c2 = r.commit("bob", "drop cleanup").unwrap();
    r.write_lines(
        "a.c",
        &[
            "int z(struct ctx *ctx) {",
            "    prepare(ctx);",
            "    int flag = 1;",
            "}",
        ],
    )
    .unwrap();
    let vfc = r.commit("carol", "Fix CVE-2020-0012").unwrap();
    SzzCase {
        name: "unrelated_replacement",
        dir,
        vfc,
        expected: same_for_all(&[&c2]),
    }
}

pub fn szz_cases() -> Vec<SzzCase> {
    vec![
        simple_introduction(),
        intermediate_modification(),
        whitespace_reindent(),
        trailing_comment(),
        cosmetic_candidates(),
        multiple_inducing(),
        pure_rename(),
        rename_with_edit(),
        evil_merge(),
        side_branch_merge(),
        deep_chain(),
        unrelated_replacement(),
    ]
}

/// Twelve linear commits whose feature vectors are worked out by hand in
/// `expected_feature_vectors`.
pub struct FeatureFixture {
    pub dir: TempDir,
    pub commits: Vec<String>,
}

pub fn feature_fixture() -> FeatureFixture {
    let (dir, mut r) = new_repo();
    let mut commits = Vec::new();
    let mut at = |r: &mut FixtureRepo, day: i64, author: &str, message: &str| {
        let t = BASE_TIME + day * DAY;
        commits.push(r.commit_at(author, message, t, t).unwrap());
    };

    // 1
    r.write_lines("src/a.c", &["int a(void) {", "    int x = 0;", "    return x;", "}"])
        .unwrap();
    r.write_lines("src/b.c", &["int b(void) {", "}"]).unwrap();
    at(&mut r, 0, "alice", "initial import");
    // 2
    r.write_lines("lib/u.c", &["int u(int v) {", "    return v;", "}"])
        .unwrap();
    r.write_lines("lib/u.h", &["int u(int v);"]).unwrap();
    at(&mut r, 10, "bob", "add util library");
    // 3
    r.write_lines(
        "src/a.c",
        &[
            "int a(void) {",
            "    int x = 1;",
            "    return x;",
            "}",
            "int a2(void) { return 2; }",
        ],
    )
    .unwrap();
    at(&mut r, 20, "alice", "Fix XSS in renderer");
    // 4
    r.write_lines("src/b.c", &["int b(void) {", "    return 0;", "}"])
        .unwrap();
    r.write_lines("lib/u.c", &["int u(int v) {", "    return v + 1;", "}"])
        .unwrap();
    at(&mut r, 30, "carol", "refactor helpers");
    // 5
    r.write_lines(
        "src/net/n.c",
        &["int n(void) {", "    int k = 0;", "    return k;", "}"],
    )
    .unwrap();
    r.write_lines("src/net/n.h", &["#pragma once", "int n(void);"]).unwrap();
    r.write_lines("lib/u.h", &["int u(int value);", "int w(void);"])
        .unwrap();
    at(&mut r, 40, "bob", "add network module");
    // 6
    r.write_lines(
        "src/net/n.c",
        &["int n(void) {", "    int k = 1;", "    return k;", "}"],
    )
    .unwrap();
    r.write_lines(
        "src/a.c",
        &[
            "int a(void) {",
            "    int x = 1;",
            "    return x + 0;",
            "}",
            "int a2(void) { return 2; }",
        ],
    )
    .unwrap();
    at(&mut r, 50, "carol", "Prevent buffer overflow in parser");
    // 7
    r.write_lines("src/b.c", &["int b(void) {", "    return 1;", "}"])
        .unwrap();
    at(&mut r, 400, "alice", "tidy b");
    // 8
    r.remove("lib/u.h").unwrap();
    at(&mut r, 401, "bob", "delete util header");
    // 9
    r.rename("src/net/n.c", "src/net/conn.c").unwrap();
    r.write_lines(
        "src/net/conn.c",
        &["int n(void) {", "    int k = 1;", "    return k * 2;", "}"],
    )
    .unwrap();
    at(&mut r, 402, "dave", "rename and edit network source");
    // 10
    r.write_lines(
        "src/net/conn.c",
        &["int conn(void) {", "    int k = 1;", "    return k * 2;", "}"],
    )
    .unwrap();
    at(&mut r, 403, "dave", "follow-up on conn");
    // 11
    r.write_lines(
        "src/a.c",
        &[
            "int a(void) {",
            "    int x = 1;",
            "    return x + 0;",
            "}",
            "int a2(void) { return 2; }",
            "int a3(void) { return 3; }",
        ],
    )
    .unwrap();
    r.write_lines("src/b.c", &["int b(void) {", "    return 1;", "}", "int b2(void);"])
        .unwrap();
    r.write_lines("lib/u.c", &["int u(int v) {", "    return v + 2;", "}"])
        .unwrap();
    at(&mut r, 404, "alice", "Fix CVE-2021-1234 in a and b");
    // 12
    r.write_lines("tests/t.c", &["int main(void) {", "    return 0;", "}"])
        .unwrap();
    r.write_lines("README.md", &["# demo"]).unwrap();
    at(&mut r, 405, "erin", "add tests");

    FeatureFixture { dir, commits }
}

#[allow(clippy::too_many_arguments)]
pub fn v(
    ns: u64,
    nd: u64,
    nf: u64,
    entropy: f64,
    la: u64,
    ld: u64,
    lt: f64,
    fix: u8,
    ndev: u64,
    age: f64,
    nuc: u64,
    exp: u64,
    rexp: f64,
    sexp: u64,
) -> ExpertFeatureVector {
    ExpertFeatureVector {
        ns,
        nd,
        nf,
        entropy,
        la,
        ld,
        lt,
        fix,
        ndev,
        age,
        nuc,
        exp,
        rexp,
        sexp,
    }
}

/// Vectors for `feature_fixture`, worked out by hand from the fixture's diffs and dates.
pub fn expected_feature_vectors() -> Vec<ExpertFeatureVector> {
    // -sum p log2 p written out per churn split
    let h_4_2 = -(2.0 / 3.0 * (2.0f64 / 3.0).log2() + 1.0 / 3.0 * (1.0f64 / 3.0).log2());
    let h_3_1 = -(0.75 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
    let h_4_2_3 = (15.0 * 3.0f64.log2() - 10.0) / 9.0;
    vec![
        v(1, 1, 2, h_4_2, 6, 0, 0.0, 0, 0, 0.0, 0, 0, 0.0, 0),
        v(1, 1, 2, h_3_1, 4, 0, 0.0, 0, 0, 0.0, 0, 0, 0.0, 0),
        v(1, 1, 1, 0.0, 2, 1, 4.0, 1, 1, 20.0, 1, 1, 1.0, 1),
        v(2, 2, 2, h_4_2, 2, 1, 2.5, 0, 2, 25.0, 2, 0, 0.0, 0),
        v(2, 2, 3, h_4_2_3, 8, 1, 1.0 / 3.0, 0, 1, 10.0, 1, 1, 1.0, 1),
        v(1, 2, 2, 1.0, 2, 2, 4.5, 1, 2, 20.0, 3, 1, 1.0, 1),
        v(1, 1, 1, 0.0, 1, 1, 3.0, 0, 2, 370.0, 2, 2, 1.0, 2),
        v(1, 1, 1, 0.0, 0, 2, 2.0, 0, 1, 361.0, 2, 2, 1.5, 2),
        v(1, 1, 1, 0.0, 1, 1, 4.0, 0, 2, 352.0, 2, 0, 0.0, 0),
        v(1, 1, 1, 0.0, 1, 1, 4.0, 0, 3, 1.0, 3, 1, 1.0, 1),
        v(2, 2, 3, 1.5, 3, 1, 11.0 / 3.0, 1, 3, 244.0, 6, 3, 2.0, 3),
        v(1, 1, 1, 0.0, 3, 0, 0.0, 0, 0, 0.0, 0, 0, 0.0, 0),
    ]
}

/// Differences beyond 1e-12 between `got` and the hand-computed vectors.
pub fn feature_mismatches(got: &[ExpertFeatureVector]) -> Vec<String> {
    let want = expected_feature_vectors();
    if got.len() != want.len() {
        return vec![format!("{} vectors, want {}", got.len(), want.len())];
    }
    let mut out = Vec::new();
    for (at, (g, w)) in got.iter().zip(&want).enumerate() {
        for ((name, gv), (_, wv)) in g.named_values().iter().zip(&w.named_values()) {
            if (gv - wv).abs() > 1e-12 {
                out.push(format!("commit {} feature {name}: got {gv}, want {wv}", at + 1));
            }
        }
    }
    out
}

/// A C project of forty linear commits where every fifth commit fixes a
/// line written earlier, so mining finds fixes, inducing commits and
/// neutral commits spread over time.
pub fn build_pipeline_repo(path: &Path) {
    let mut r = FixtureRepo::init(path).unwrap();
    let authors = ["alice", "bob", "carol"];
    let names = ["src/io.c", "src/net.c", "lib/str.c", "lib/mem.c"];
    let mut files: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for i in 0..40usize {
        let t = BASE_TIME + i as i64 * DAY;
        let message = if i < names.len() {
            let f = &mut files[i];
            f.push(format!("int f{i}(int v) {{"));
            for j in 0..6 {
                f.push(format!("    int v{i}_{j} = v + {j};"));
            }
            f.push("    return v;".to_string());
            f.push("}".to_string());
            format!("add {}", names[i])
        } else if i % 5 == 0 {
            let k = (i / 5) % names.len();
            let f = &mut files[k];
            let line = 1 + (i / 5) % (f.len() - 2);
            f[line] = format!("    int fixed{i} = clamp(v, {i});");
            format!("Fix CVE-2021-{:04} out-of-bounds write in {}", 100 + i, names[k])
        } else {
            let k = i % names.len();
            let f = &mut files[k];
            let line = 1 + (i * 7) % (f.len() - 2);
            f[line] = format!("    int w{i} = v * {i};");
            f.insert(f.len() - 2, format!("    v += {i};"));
            format!("update {} ({i})", names[k])
        };
        for (name, lines) in names.iter().zip(&files) {
            if !lines.is_empty() {
                write_owned(&r, name, lines);
            }
        }
        r.commit_at(authors[i % authors.len()], &message, t, t).unwrap();
    }
}
