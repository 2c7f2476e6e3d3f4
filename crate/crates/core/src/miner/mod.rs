//! Walk client-project histories and emit one `CommitEvent` per non-merge
//! commit.

mod diff;
mod identity;

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diff::{count_added_imports, parse_log, FileChange, FileDiff, RawCommit};
pub use identity::{
    normalize_email, resolve_identities, AccountLookup, AuthorRef, DeveloperIdentity, IdentityResolver,
    RemoteLookup,
};

use crate::corpus::{detect_client_files, is_source_path, looks_binary, ClientProject, LibrarySpec};
use crate::error::{Error, Result};
use crate::git::{unix_to_utc, CatFile, Repo};
use crate::report::ScanReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEvent {
    pub developer: String,
    pub project: String,
    pub commit: String,
    pub authored_at: DateTime<Utc>,
    pub churn_total: u64,
    pub churn_client: u64,
    pub touched_client_file: bool,
    pub imports_added: u64,
}

impl CommitEvent {
    pub fn check(&self) -> Result<()> {
        if self.churn_client > self.churn_total {
            return Err(Error::contract(format!(
                "{}: churn_client {} > churn_total {}",
                self.commit, self.churn_client, self.churn_total
            )));
        }
        if self.imports_added > 0 && !self.touched_client_file {
            return Err(Error::contract(format!(
                "{}: imports added without touching a client file",
                self.commit
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct HistoryScan {
    pub events: Vec<CommitEvent>,
    pub report: ScanReport,
}

/// Raw `git log -p` for everything reachable from the frozen head,
/// merges excluded, renames disabled so both diff sides name the same path.
pub fn read_history(repo: &Repo, head: &str) -> Result<Vec<RawCommit>> {
    let out = repo.run(&[
        "log",
        "--no-merges",
        "--no-renames",
        "--no-color",
        "--no-ext-diff",
        "--no-textconv",
        "--encoding=UTF-8",
        "-p",
        diff::LOG_FORMAT,
        head,
    ])?;
    Ok(parse_log(&String::from_utf8_lossy(&out)))
}

/// Whether `path` is a client file in the image a change produced (the
/// pre-image for deletions).
fn is_client_at(cat: &mut CatFile, commit: &str, file: &FileDiff, lib: &LibrarySpec) -> Result<Option<bool>> {
    if !is_source_path(&file.path) || file.binary {
        return Ok(Some(false));
    }
    let rev = match file.change {
        FileChange::Deleted => format!("{commit}^"),
        _ => commit.to_string(),
    };
    Ok(cat
        .blob(&rev, &file.path)?
        .map(|bytes| !looks_binary(&bytes) && detect_client_files(&String::from_utf8_lossy(&bytes), lib)))
}

pub fn scan_history(
    project: &ClientProject,
    lib: &LibrarySpec,
    resolver: &IdentityResolver,
) -> Result<HistoryScan> {
    let repo = Repo::open(&project.local_path)?;
    let commits = read_history(&repo, &project.head_snapshot.commit)?;
    let mut cat = repo.cat_file()?;
    let mut scan = HistoryScan::default();

    for c in commits {
        let mut event = CommitEvent {
            developer: String::new(),
            project: project.repo_id.clone(),
            commit: c.hash.clone(),
            authored_at: unix_to_utc(c.authored_unix),
            churn_total: 0,
            churn_client: 0,
            touched_client_file: false,
            imports_added: 0,
        };
        for file in &c.files {
            let churn = file.added + file.deleted;
            event.churn_total += churn;
            let client = match is_client_at(&mut cat, &c.hash, file, lib) {
                Ok(Some(b)) => b,
                Ok(None) => {
                    scan.report.error(
                        &project.repo_id,
                        Some(&c.hash),
                        format!("unreadable object for {}", file.path),
                    );
                    false
                }
                Err(e) => {
                    scan.report.error(&project.repo_id, Some(&c.hash), e.to_string());
                    false
                }
            };
            if client {
                event.touched_client_file = true;
                event.churn_client += churn;
                event.imports_added += count_added_imports(&file.text, lib);
            }
        }
        event.developer = resolver.resolve(&AuthorRef {
            name: c.author_name.clone(),
            email: c.author_email.clone(),
            repo_id: project.repo_id.clone(),
            commit: c.hash.clone(),
        });
        scan.events.push(event);
    }
    sort_events(&mut scan.events);
    Ok(scan)
}

pub fn sort_events(events: &mut [CommitEvent]) {
    events
        .sort_by(|a, b| (a.authored_at, &a.commit, &a.project).cmp(&(b.authored_at, &b.commit, &b.project)));
}

/// Scan every project in parallel. A corrupt repository only loses its own
/// events; commits authored after `snapshot` are dropped with a note.
pub fn mine_projects(
    projects: &[ClientProject],
    lib: &LibrarySpec,
    resolver: &IdentityResolver,
    snapshot: DateTime<Utc>,
) -> HistoryScan {
    let per_project: Vec<(String, Result<HistoryScan>)> = projects
        .par_iter()
        .map(|p| (p.repo_id.clone(), scan_history(p, lib, resolver)))
        .collect();

    let mut all = HistoryScan::default();
    for (repo_id, res) in per_project {
        match res {
            Ok(scan) => {
                all.report.merge(scan.report);
                let (kept, late): (Vec<_>, Vec<_>) =
                    scan.events.into_iter().partition(|e| e.authored_at <= snapshot);
                for e in late {
                    all.report
                        .note(&repo_id, Some(&e.commit), "authored after snapshot; excluded");
                }
                all.events.extend(kept);
            }
            Err(e) => all.report.error(&repo_id, None, format!("project skipped: {e}")),
        }
    }
    for flag in resolver.flags() {
        all.report.note("identity", None, flag);
    }
    sort_events(&mut all.events);
    all
}

pub fn write_events_csv<W: Write>(events: &[CommitEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<CommitEvent>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn events_csv_header_and_round_trip() {
        let events = vec![CommitEvent {
            developer: "dev, \"quoted\"".into(),
            project: "o/r".into(),
            commit: "abc".into(),
            authored_at: Utc.with_ymd_and_hms(2018, 4, 1, 12, 0, 0).unwrap(),
            churn_total: 10,
            churn_client: 4,
            touched_client_file: true,
            imports_added: 1,
        }];
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "developer,project,commit,authored_at,churn_total,churn_client,touched_client_file,imports_added\n"
        ));
        assert!(text.contains("2018-04-01T12:00:00Z"));
        assert!(text.contains("\"dev, \"\"quoted\"\"\""));
        assert_eq!(read_events_csv(&buf[..]).unwrap(), events);
    }

    #[test]
    fn event_invariants_are_checked() {
        let mut e = CommitEvent {
            developer: "d".into(),
            project: "p".into(),
            commit: "c".into(),
            authored_at: Utc::now(),
            churn_total: 1,
            churn_client: 2,
            touched_client_file: false,
            imports_added: 0,
        };
        assert!(e.check().is_err());
        e.churn_client = 1;
        assert!(e.check().is_ok());
        e.imports_added = 1;
        assert!(e.check().is_err());
    }
}
