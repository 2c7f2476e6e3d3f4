//! Scripted git repositories for tests, examples and demos.
//!
//! Histories are written with `git fast-import`, so author timestamps and
//! file contents are fully controlled and builds are fast.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::git::unix_to_utc;
use crate::rng::substream;

pub const DAY: i64 = 86_400;
/// 2018-01-01T00:00:00Z
pub const DEMO_SNAPSHOT: i64 = 1_514_764_800;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Write(String, Vec<u8>),
    Delete(String),
}

impl Change {
    pub fn text(path: &str, content: &str) -> Change {
        Change::Write(path.to_string(), content.as_bytes().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedCommit {
    pub author: String,
    pub email: String,
    pub unix: i64,
    pub message: String,
    pub changes: Vec<Change>,
}

impl ScriptedCommit {
    pub fn new(author: &str, email: &str, unix: i64, changes: Vec<Change>) -> Self {
        ScriptedCommit {
            author: author.to_string(),
            email: email.to_string(),
            unix,
            message: format!("change by {author}"),
            changes,
        }
    }
}

fn git(dir: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(dir)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("LC_ALL", "C")
        .env_remove("GIT_DIR")
        .env_remove("GIT_WORK_TREE");
    cmd
}

fn fixture_err(dir: &Path, message: impl Into<String>) -> Error {
    Error::Git {
        repo: dir.to_path_buf(),
        message: message.into(),
    }
}

fn data(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(format!("data {}\n", bytes.len()).as_bytes());
    out.extend_from_slice(bytes);
    out.push(b'\n');
}

/// Create a repository at `dir` whose `main` branch is exactly `commits`,
/// in order. An empty script leaves an empty repository.
pub fn build_repo(dir: &Path, commits: &[ScriptedCommit]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let status = git(dir).args(["init", "-q"]).status()?;
    if !status.success() {
        return Err(fixture_err(dir, "git init failed"));
    }
    let mut stream = Vec::new();
    for (i, c) in commits.iter().enumerate() {
        let ident = format!("{} <{}> {} +0000\n", c.author, c.email, c.unix);
        stream.extend_from_slice(format!("commit refs/heads/main\nmark :{}\n", i + 1).as_bytes());
        stream.extend_from_slice(format!("author {ident}committer {ident}").as_bytes());
        data(&mut stream, c.message.as_bytes());
        if i > 0 {
            stream.extend_from_slice(format!("from :{i}\n").as_bytes());
        }
        for change in &c.changes {
            match change {
                Change::Write(path, bytes) => {
                    stream.extend_from_slice(format!("M 100644 inline {path}\n").as_bytes());
                    data(&mut stream, bytes);
                }
                Change::Delete(path) => stream.extend_from_slice(format!("D {path}\n").as_bytes()),
            }
        }
        stream.push(b'\n');
    }
    let mut child = git(dir)
        .args(["fast-import", "--quiet"])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()?;
    child.stdin.take().expect("piped stdin").write_all(&stream)?;
    let out = child.wait_with_output()?;
    if !out.status.success() {
        return Err(fixture_err(
            dir,
            String::from_utf8_lossy(&out.stderr).trim().to_string(),
        ));
    }
    let status = git(dir)
        .args(["symbolic-ref", "HEAD", "refs/heads/main"])
        .status()?;
    if !status.success() {
        return Err(fixture_err(dir, "cannot point HEAD at main"));
    }
    Ok(())
}

pub fn package_json(deps: &[&str], dev_deps: &[&str]) -> String {
    let section = |names: &[&str]| {
        names
            .iter()
            .map(|n| format!("\"{n}\": \"^1.0.0\""))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "{{\n  \"name\": \"fixture\",\n  \"dependencies\": {{{}}},\n  \"devDependencies\": {{{}}}\n}}\n",
        section(deps),
        section(dev_deps)
    )
}

/// The developer whose features the golden fixture pins down.
pub const GOLDEN_DEVELOPER: &str = "dana@example.com";

/// Snapshot of the golden fixture (the moment of its last commit).
pub fn golden_snapshot() -> DateTime<Utc> {
    unix_to_utc(DEMO_SNAPSHOT)
}

/// A maintainer sets up a react client; then Dana commits 30, 10 and 0
/// days before the snapshot. The first two touch client files and only
/// the second adds an import.
pub fn golden_script() -> Vec<ScriptedCommit> {
    let t = DEMO_SNAPSHOT;
    let dana = ("Dana", GOLDEN_DEVELOPER);
    vec![
        ScriptedCommit::new(
            "Max Maintainer",
            "max@example.com",
            t - 40 * DAY,
            vec![
                Change::text("package.json", &package_json(&["react"], &[])),
                Change::text(
                    "src/index.js",
                    "import React from 'react';\n\nexport default React;\n",
                ),
                Change::text("README.md", "# fixture\n"),
            ],
        ),
        ScriptedCommit::new(
            dana.0,
            dana.1,
            t - 30 * DAY,
            vec![Change::text(
                "src/index.js",
                "import React from 'react';\n\nexport const answer = 42;\nexport default React;\n",
            )],
        ),
        ScriptedCommit::new(
            dana.0,
            dana.1,
            t - 10 * DAY,
            vec![Change::text(
                "src/view.js",
                "import { render } from 'react';\n\nexport const view = () => render;\n",
            )],
        ),
        ScriptedCommit::new(
            dana.0,
            dana.1,
            t,
            vec![Change::text("README.md", "# fixture\n\nNow with docs.\n")],
        ),
    ]
}

/// The vector the golden fixture must produce for [`GOLDEN_DEVELOPER`].
pub fn golden_expected() -> FeatureVector {
    FeatureVector {
        developer: GOLDEN_DEVELOPER.to_string(),
        library: "react".to_string(),
        commits: 3,
        commits_client_files: 2,
        commits_import_library: 1,
        code_churn: 1 + 3 + 2,
        code_churn_client_files: 1 + 3,
        imports: 1,
        days_since_first_import: Some(10),
        days_since_last_import: Some(10),
        days_between_imports: Some(0),
        avg_days_commits_client_files: 20.0,
        avg_days_commits_import_library: None,
        projects: 1,
        projects_import: 1,
    }
}

// ---------------------------------------------------------------------
// Randomised histories

/// What the generator intended for one scripted commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedCommit {
    pub author_email: String,
    pub unix: i64,
    pub touches_client: bool,
    pub imports_added: u64,
}

#[derive(Debug, Clone)]
pub struct RandomHistory {
    pub script: Vec<ScriptedCommit>,
    pub plan: Vec<PlannedCommit>,
}

struct RepoState {
    files: BTreeMap<String, String>,
    counter: usize,
}

impl RepoState {
    fn client_files(&self, lib: &str) -> Vec<String> {
        self.files
            .iter()
            .filter(|(_, c)| c.contains(&format!("from '{lib}'")))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

/// One kind of developer action, reflected in file contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    EditClient,
    AddImport,
    EditOther,
    Binary,
}

fn apply_action<R: Rng>(
    state: &mut RepoState,
    action: Action,
    lib: &str,
    rng: &mut R,
) -> (Vec<Change>, bool, u64) {
    state.counter += 1;
    let n = state.counter;
    match action {
        Action::EditClient => {
            let clients = state.client_files(lib);
            let path = clients.choose(rng).expect("a client file exists").clone();
            let content = state.files.get_mut(&path).expect("tracked");
            content.push_str(&format!("export const v{n} = {n};\n"));
            (vec![Change::text(&path, content)], true, 0)
        }
        Action::AddImport => {
            let imports = rng.random_range(1..=2u64);
            let mut body = String::new();
            for i in 0..imports {
                body.push_str(&format!("import part{n}x{i} from '{lib}';\n"));
            }
            body.push_str(&format!("export const f{n} = {n};\n"));
            let path = format!("src/feature{n}.js");
            state.files.insert(path.clone(), body.clone());
            (vec![Change::text(&path, &body)], true, imports)
        }
        Action::EditOther => {
            let path = format!("docs/note{}.md", n % 3);
            let content = state.files.entry(path.clone()).or_default();
            content.push_str(&format!("note {n}\n"));
            (vec![Change::text(&path, content)], false, 0)
        }
        Action::Binary => {
            let path = format!("assets/blob{n}.bin");
            (
                vec![Change::Write(path, vec![0, 159, 146, 150, 0, n as u8])],
                false,
                0,
            )
        }
    }
}

fn bootstrap(lib: &str) -> (RepoState, ScriptedCommit) {
    let mut files = BTreeMap::new();
    files.insert("package.json".to_string(), package_json(&[lib], &[]));
    files.insert(
        "src/index.js".to_string(),
        format!("import base from '{lib}';\nexport default base;\n"),
    );
    let changes = files.iter().map(|(p, c)| Change::text(p, c)).collect();
    let commit = ScriptedCommit::new(
        "Setup Bot",
        "setup@example.com",
        DEMO_SNAPSHOT - 2000 * DAY,
        changes,
    );
    (RepoState { files, counter: 0 }, commit)
}

/// A single-repository history with a few developers and random actions,
/// plus the per-commit plan an independent oracle can recompute features
/// from. The setup commit is not part of the plan.
pub fn random_history(seed: u64, lib: &str) -> RandomHistory {
    let mut rng = substream(seed, "fixture/random-history");
    let (mut state, setup) = bootstrap(lib);
    let devs = rng.random_range(1..=3usize);
    let n = rng.random_range(3..=15usize);
    let mut times: Vec<i64> = (0..n)
        .map(|_| DEMO_SNAPSHOT - rng.random_range(0..400) * DAY - rng.random_range(0..DAY))
        .collect();
    times.sort();
    let mut script = vec![setup];
    let mut plan = Vec::new();
    for unix in times {
        let d = rng.random_range(0..devs);
        let action = *[
            Action::EditClient,
            Action::AddImport,
            Action::EditOther,
            Action::Binary,
        ]
        .choose(&mut rng)
        .expect("non-empty");
        let (changes, touches_client, imports_added) = apply_action(&mut state, action, lib, &mut rng);
        let email = format!("dev{d}@example.com");
        script.push(ScriptedCommit::new(&format!("Dev {d}"), &email, unix, changes));
        plan.push(PlannedCommit {
            author_email: email,
            unix,
            touches_client,
            imports_added,
        });
    }
    RandomHistory { script, plan }
}

// ---------------------------------------------------------------------
// Demo corpus

#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub repos_dir: PathBuf,
    pub ground_truth: PathBuf,
    pub snapshot: DateTime<Utc>,
    pub developers: usize,
}

impl DemoCorpus {
    /// A ready-to-run config over this corpus for the react library.
    pub fn config(&self, output_dir: &Path, seed: u64) -> crate::pipeline::PipelineConfig {
        use crate::pipeline::{LibraryConfig, PipelineConfig, RepoSource};
        let mut cfg = PipelineConfig::new(
            vec![LibraryConfig::builtin("react")],
            RepoSource::Directory {
                path: self.repos_dir.clone(),
            },
            self.snapshot,
        );
        cfg.ground_truth = Some(self.ground_truth.clone());
        cfg.seed = Some(seed);
        cfg.output_dir = output_dir.to_path_buf();
        cfg
    }
}

/// Expertise score from a latent skill in [0, 1].
fn score_of(skill: f64) -> u8 {
    (1.0 + (skill * 5.0).floor()).clamp(1.0, 5.0) as u8
}

/// Write a corpus of react client repositories (plus two non-clients)
/// under `root/repos`, and matching self-reported scores under
/// `root/ground_truth.csv`. Skilled developers commit more often, over
/// longer spans, to client files, and add more imports.
pub fn demo_corpus(root: &Path, developers: usize, seed: u64) -> Result<DemoCorpus> {
    let lib = "react";
    let repos_dir = root.join("repos");
    fs::create_dir_all(&repos_dir)?;
    let mut rng = substream(seed, "fixture/demo");
    let n_repos = 6;
    let mut states = Vec::new();
    let mut scripts: Vec<Vec<ScriptedCommit>> = Vec::new();
    for _ in 0..n_repos {
        let (state, setup) = bootstrap(lib);
        states.push(state);
        scripts.push(vec![setup]);
    }

    let mut gt = String::from("developer,library,score\n");
    struct Planned {
        repo: usize,
        unix: i64,
        dev: usize,
        action: Action,
    }
    let mut planned = Vec::new();
    for d in 0..developers {
        let skill: f64 = rng.random();
        let noisy = (skill + rng.random_range(-0.08..0.08)).clamp(0.0, 0.999);
        // One in ten developers never answered the survey.
        if d % 10 != 9 {
            gt.push_str(&format!("dev{d}@example.com,{lib},{}\n", score_of(noisy)));
        }
        let commits = 2 + (skill * 24.0 * rng.random_range(0.6..1.4)) as usize;
        let span = 20.0 + skill * 700.0 * rng.random_range(0.7..1.3);
        let end = rng.random_range(0.0..60.0);
        let home = rng.random_range(0..n_repos);
        let away = if skill > 0.5 {
            rng.random_range(0..n_repos)
        } else {
            home
        };
        for c in 0..commits {
            let client = c == 0 || rng.random_bool(0.15 + 0.8 * skill);
            let action = if !client {
                if rng.random_bool(0.1) {
                    Action::Binary
                } else {
                    Action::EditOther
                }
            } else if rng.random_bool(0.05 + 0.45 * skill) {
                Action::AddImport
            } else {
                Action::EditClient
            };
            let days_ago = end + span * rng.random::<f64>();
            planned.push(Planned {
                repo: if rng.random_bool(0.3) { away } else { home },
                unix: DEMO_SNAPSHOT - (days_ago * DAY as f64) as i64,
                dev: d,
                action,
            });
        }
    }
    planned.sort_by_key(|p| (p.repo, p.unix, p.dev));
    for p in planned {
        let (changes, _, _) = apply_action(&mut states[p.repo], p.action, lib, &mut rng);
        let email = format!("dev{}@example.com", p.dev);
        scripts[p.repo].push(ScriptedCommit::new(
            &format!("Dev {}", p.dev),
            &email,
            p.unix,
            changes,
        ));
    }
    for (r, script) in scripts.iter().enumerate() {
        build_repo(&repos_dir.join(format!("demo__client{r}")), script)?;
    }

    // Non-clients: one depends on a look-alike package, one on nothing.
    let lookalike = vec![ScriptedCommit::new(
        "Dev 0",
        "dev0@example.com",
        DEMO_SNAPSHOT - 100 * DAY,
        vec![
            Change::text("package.json", &package_json(&["preact"], &["react-dom"])),
            Change::text("src/index.js", "import { h } from 'preact';\n"),
        ],
    )];
    build_repo(&repos_dir.join("demo__lookalike"), &lookalike)?;
    let plain = vec![ScriptedCommit::new(
        "Dev 1",
        "dev1@example.com",
        DEMO_SNAPSHOT - 50 * DAY,
        vec![Change::text("main.c", "int main(void) { return 0; }\n")],
    )];
    build_repo(&repos_dir.join("demo__plain"), &plain)?;

    let ground_truth = root.join("ground_truth.csv");
    fs::write(&ground_truth, gt)?;
    Ok(DemoCorpus {
        repos_dir,
        ground_truth,
        snapshot: unix_to_utc(DEMO_SNAPSHOT),
        developers,
    })
}

// ---------------------------------------------------------------------
// Planted populations

/// Share of developers in the dense, highly active population.
pub const PLANTED_DENSE_SHARE: f64 = 0.4;
pub const PLANTED_DENSE_EXPERTS: f64 = 0.9;
pub const PLANTED_BACKGROUND_EXPERTS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDeveloper {
    pub vector: FeatureVector,
    pub label: crate::learn::Ternary,
    pub dense: bool,
}

fn planted_vector<R: Rng>(id: &str, dense: bool, rng: &mut R) -> FeatureVector {
    let commits: u64 = if dense {
        rng.random_range(150..=250)
    } else {
        rng.random_range(1..=30)
    };
    let ccf = if dense {
        (commits as f64 * rng.random_range(0.6..0.9)) as u64
    } else {
        rng.random_range(1..=commits)
    };
    let cil = if dense {
        (ccf as f64 * rng.random_range(0.2..0.4)) as u64
    } else {
        rng.random_range(0..=ccf / 3)
    };
    let imports = cil + rng.random_range(0..=cil);
    let code_churn = commits * rng.random_range(20..=40);
    let code_churn_client_files = code_churn * ccf / commits;
    let (first, last) = if cil == 0 {
        (None, None)
    } else if dense {
        (Some(rng.random_range(300..=700)), Some(rng.random_range(0..=60)))
    } else {
        let last = rng.random_range(0..=200);
        (Some(last + rng.random_range(0..=100)), Some(last))
    };
    let projects = if dense {
        rng.random_range(2..=5)
    } else {
        rng.random_range(1..=2)
    };
    FeatureVector {
        developer: id.to_string(),
        library: "react".into(),
        commits,
        commits_client_files: ccf,
        commits_import_library: cil,
        code_churn,
        code_churn_client_files,
        imports,
        days_since_first_import: first,
        days_since_last_import: last,
        days_between_imports: first.zip(last).map(|(f, l)| f - l),
        avg_days_commits_client_files: if ccf < 2 {
            0.0
        } else if dense {
            rng.random_range(2.0..6.0)
        } else {
            rng.random_range(5.0..60.0)
        },
        avg_days_commits_import_library: (cil >= 2).then(|| {
            if dense {
                rng.random_range(10.0..30.0)
            } else {
                rng.random_range(20.0..120.0)
            }
        }),
        projects,
        projects_import: if cil == 0 {
            0
        } else {
            rng.random_range(1..=projects)
        },
    }
}

/// `n` developers from two planted populations: a dense, highly active one
/// holding exactly 90% experts, and a diffuse background with 20%. Overall
/// expert share stays below one half.
pub fn planted_population(n: usize, seed: u64) -> Vec<PlantedDeveloper> {
    use crate::learn::Ternary;
    use rand::seq::SliceRandom;

    let mut rng = substream(seed, "fixture/planted");
    let n_dense = (n as f64 * PLANTED_DENSE_SHARE).round() as usize;
    let labels = |size: usize, share: f64, rng: &mut crate::rng::StageRng| {
        let experts = (size as f64 * share).round() as usize;
        let mut out: Vec<Ternary> = (0..size)
            .map(|i| match i {
                i if i < experts => Ternary::Expert,
                i if (i - experts).is_multiple_of(2) => Ternary::Novice,
                _ => Ternary::Intermediate,
            })
            .collect();
        out.shuffle(rng);
        out
    };
    let dense_labels = labels(n_dense, PLANTED_DENSE_EXPERTS, &mut rng);
    let background_labels = labels(n - n_dense, PLANTED_BACKGROUND_EXPERTS, &mut rng);
    let mut out: Vec<PlantedDeveloper> = dense_labels
        .into_iter()
        .map(|l| (true, l))
        .chain(background_labels.into_iter().map(|l| (false, l)))
        .enumerate()
        .map(|(i, (dense, label))| PlantedDeveloper {
            vector: planted_vector(&format!("planted{seed}-{i}"), dense, &mut rng),
            label,
            dense,
        })
        .collect();
    out.shuffle(&mut rng);
    out
}
