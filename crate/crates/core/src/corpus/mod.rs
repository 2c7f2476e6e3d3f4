//! Client-project detection: which repositories depend on a target library,
//! and which of their files import it.

mod imports;
mod library;
mod manifest;
pub mod remote;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use imports::{
    detect_client_files, import_specifiers, is_source_path, line_imports, looks_binary, SOURCE_EXTENSIONS,
};
pub use library::LibrarySpec;
pub use manifest::{parse_manifest, DependencyEvidence, ManifestKind, DEPENDENCY_SECTIONS};

use crate::error::{Error, Result};
use crate::git::{HeadSnapshot, Repo};
use crate::report::ScanReport;

/// A repository to inspect: its `owner/name` id and a local clone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoRef {
    pub repo_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEvidence {
    pub path: String,
    pub kind: ManifestKind,
    pub section: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientProject {
    pub repo_id: String,
    pub local_path: PathBuf,
    pub manifest_evidence: Vec<ManifestEvidence>,
    pub client_files: BTreeSet<String>,
    pub head_snapshot: HeadSnapshot,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub projects: Vec<ClientProject>,
    pub report: ScanReport,
}

/// Keep the repositories that declare `lib` as a dependency at the commit
/// frozen by `snapshot`, and collect their client files.
pub fn build_corpus(repos: &[RepoRef], lib: &LibrarySpec, snapshot: DateTime<Utc>) -> Corpus {
    let mut repos = repos.to_vec();
    repos.sort();
    repos.dedup_by(|a, b| a.repo_id == b.repo_id);

    let results: Vec<(String, Result<Option<ClientProject>>, ScanReport)> = repos
        .par_iter()
        .map(|r| {
            let mut report = ScanReport::default();
            let res = scan_repo(r, lib, snapshot, &mut report);
            (r.repo_id.clone(), res, report)
        })
        .collect();

    let mut corpus = Corpus::default();
    for (repo_id, res, report) in results {
        corpus.report.merge(report);
        match res {
            Ok(Some(project)) => corpus.projects.push(project),
            Ok(None) => {}
            Err(e) => corpus.report.error(&repo_id, None, e.to_string()),
        }
    }
    corpus.projects.sort_by(|a, b| a.repo_id.cmp(&b.repo_id));
    corpus
}

fn scan_repo(
    r: &RepoRef,
    lib: &LibrarySpec,
    snapshot: DateTime<Utc>,
    report: &mut ScanReport,
) -> Result<Option<ClientProject>> {
    let repo = Repo::open(&r.path)?;
    let Some(head) = repo.snapshot_at(snapshot)? else {
        report.note(&r.repo_id, None, "no commits at or before snapshot");
        return Ok(None);
    };
    let files = repo.list_files(&head.commit)?;
    let mut cat = repo.cat_file()?;

    let mut evidence = Vec::new();
    for path in files.iter().filter(|p| is_manifest_candidate(p)) {
        let kind = ManifestKind::from_path(path)?;
        let Some(bytes) = cat.blob(&head.commit, path)? else {
            report.error(&r.repo_id, None, format!("cannot read {path}"));
            continue;
        };
        match parse_manifest(&bytes, kind, lib) {
            Ok(Some(ev)) => evidence.extend(ev.sections.into_iter().map(|section| ManifestEvidence {
                path: path.clone(),
                kind,
                section,
            })),
            Ok(None) => {}
            Err(e) => report.error(&r.repo_id, None, format!("{path}: {e}")),
        }
    }
    if evidence.is_empty() {
        return Ok(None);
    }

    let mut client_files = BTreeSet::new();
    for path in files.iter().filter(|p| is_source_path(p)) {
        match cat.blob(&head.commit, path)? {
            Some(bytes) if !looks_binary(&bytes) => {
                if detect_client_files(&String::from_utf8_lossy(&bytes), lib) {
                    client_files.insert(path.clone());
                }
            }
            Some(_) => {}
            None => report.error(&r.repo_id, None, format!("cannot read {path}")),
        }
    }

    Ok(Some(ClientProject {
        repo_id: r.repo_id.clone(),
        local_path: r.path.clone(),
        manifest_evidence: evidence,
        client_files,
        head_snapshot: head,
    }))
}

fn is_manifest_candidate(path: &str) -> bool {
    ManifestKind::from_path(path).is_ok()
        && !path
            .split('/')
            .any(|c| c == "node_modules" || c == "bower_components")
}

fn is_git_repo(path: &Path) -> bool {
    path.join(".git").exists() || (path.join("HEAD").is_file() && path.join("objects").is_dir())
}

/// Discover repositories under `root`: either `root/<repo>` (with `owner__name`
/// mapped to `owner/name`) or a two-level `root/<owner>/<name>` layout.
pub fn discover_repos(root: &Path) -> Result<Vec<RepoRef>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for dir in entries {
        let name = file_name(&dir);
        if is_git_repo(&dir) {
            let name = name.trim_end_matches(".git");
            out.push(RepoRef {
                repo_id: name.replacen("__", "/", 1),
                path: dir.clone(),
            });
            continue;
        }
        let mut inner: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir() && is_git_repo(p))
            .collect();
        inner.sort();
        for repo in inner {
            out.push(RepoRef {
                repo_id: format!("{name}/{}", file_name(&repo).trim_end_matches(".git")),
                path: repo,
            });
        }
    }
    Ok(out)
}

/// Parse a newline-delimited `owner/name` list; blank lines and `#`
/// comments are skipped.
pub fn parse_repo_list(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let valid = line
            .split_once('/')
            .is_some_and(|(o, n)| !o.is_empty() && !n.is_empty() && !n.contains('/'))
            && !line.chars().any(char::is_whitespace);
        if !valid {
            return Err(Error::Row {
                path: "repo list".into(),
                line: i as u64 + 1,
                message: format!("expected owner/name, got `{line}`"),
            });
        }
        out.push(line.to_string());
    }
    Ok(out)
}

/// Map repo ids to local clones under `root`, trying `root/owner/name`,
/// `root/owner/name.git` and `root/owner__name`. Missing clones resolve to
/// the first candidate path and fail later as unreachable.
pub fn locate_repos(ids: &[String], root: &Path) -> Vec<RepoRef> {
    ids.iter()
        .map(|id| {
            let candidates = [
                root.join(id),
                root.join(format!("{id}.git")),
                root.join(id.replacen('/', "__", 1)),
            ];
            let path = candidates
                .iter()
                .find(|p| p.exists())
                .unwrap_or(&candidates[0])
                .clone();
            RepoRef {
                repo_id: id.clone(),
                path,
            }
        })
        .collect()
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repo_list_parsing() {
        let ids = parse_repo_list("# top\nfacebook/react\n\n  socketio/socket.io \n").unwrap();
        assert_eq!(ids, vec!["facebook/react", "socketio/socket.io"]);
        assert!(matches!(
            parse_repo_list("ok/repo\nnot-a-slug\n"),
            Err(Error::Row { line: 2, .. })
        ));
    }

    #[test]
    fn empty_repo_list_gives_empty_corpus() {
        let lib = LibrarySpec::builtin("react").unwrap();
        let corpus = build_corpus(&[], &lib, Utc::now());
        assert!(corpus.projects.is_empty());
        assert!(corpus.report.entries.is_empty());
    }

    #[test]
    fn unreachable_repo_is_reported_not_fatal() {
        let lib = LibrarySpec::builtin("react").unwrap();
        let repos = vec![RepoRef {
            repo_id: "ghost/repo".into(),
            path: PathBuf::from("/nonexistent/ghost"),
        }];
        let corpus = build_corpus(&repos, &lib, Utc::now());
        assert!(corpus.projects.is_empty());
        assert_eq!(corpus.report.errors().count(), 1);
    }

    #[test]
    fn manifest_candidates_skip_vendored_dirs() {
        assert!(is_manifest_candidate("package.json"));
        assert!(is_manifest_candidate("web/bower.json"));
        assert!(!is_manifest_candidate("node_modules/react/package.json"));
        assert!(!is_manifest_candidate("composer.json"));
    }
}
