//! Thin wrapper over the `git` command-line tool.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The commit a repository was frozen at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSnapshot {
    pub commit: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct Repo {
    path: PathBuf,
}

impl Repo {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let repo = Repo { path: path.into() };
        if !repo.path.exists() {
            return Err(repo.err(format!("{} does not exist", repo.path.display())));
        }
        repo.run(&["rev-parse", "--git-dir"])?;
        Ok(repo)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.path)
            .args(["-c", "core.quotepath=off", "-c", "log.showRoot=true"])
            .env("LC_ALL", "C")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env_remove("GIT_DIR")
            .env_remove("GIT_WORK_TREE");
        cmd
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> Error {
        Error::Git {
            repo: self.path.clone(),
            message: message.into(),
        }
    }

    /// Run a git subcommand and return raw stdout.
    pub fn run(&self, args: &[&str]) -> Result<Vec<u8>> {
        let out = self
            .command()
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| self.err(format!("cannot spawn git: {e}")))?;
        if !out.status.success() {
            return Err(self.err(format!(
                "`git {}` failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }

    /// Last commit reachable from HEAD whose commit time is at or before
    /// `snapshot`; `None` when the history starts after it (or is empty).
    pub fn snapshot_at(&self, snapshot: DateTime<Utc>) -> Result<Option<HeadSnapshot>> {
        if self
            .run(&["rev-parse", "--verify", "-q", "HEAD^{commit}"])
            .is_err()
        {
            return Ok(None);
        }
        let before = format!("--before={}", snapshot.timestamp());
        let out = self.run(&["rev-list", "-1", &before, "HEAD"])?;
        let commit = String::from_utf8_lossy(&out).trim().to_string();
        if commit.is_empty() {
            return Ok(None);
        }
        let out = self.run(&["show", "-s", "--format=%ct", &commit])?;
        let secs: i64 = String::from_utf8_lossy(&out)
            .trim()
            .parse()
            .map_err(|_| self.err("unparsable commit time"))?;
        Ok(Some(HeadSnapshot {
            commit,
            timestamp: unix_to_utc(secs),
        }))
    }

    /// All blob paths in the tree of `commit`.
    pub fn list_files(&self, commit: &str) -> Result<Vec<String>> {
        let out = self.run(&["ls-tree", "-r", "-z", "--name-only", commit])?;
        Ok(out
            .split(|&b| b == 0)
            .filter(|p| !p.is_empty())
            .map(|p| String::from_utf8_lossy(p).into_owned())
            .collect())
    }

    pub fn cat_file(&self) -> Result<CatFile> {
        CatFile::spawn(self)
    }
}

pub fn unix_to_utc(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(secs, 0).single().unwrap_or_default()
}

/// A long-lived `git cat-file --batch` process for reading blobs.
pub struct CatFile {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    repo: PathBuf,
}

impl CatFile {
    fn spawn(repo: &Repo) -> Result<Self> {
        let mut child = repo
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| repo.err(format!("cannot spawn git cat-file: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(CatFile {
            child,
            stdin,
            stdout,
            repo: repo.path.clone(),
        })
    }

    fn err(&self, message: String) -> Error {
        Error::Git {
            repo: self.repo.clone(),
            message,
        }
    }

    /// Read `rev:path`; `Ok(None)` when the object does not exist.
    pub fn blob(&mut self, rev: &str, path: &str) -> Result<Option<Vec<u8>>> {
        if path.contains('\n') {
            return Err(self.err(format!("path with newline: {path:?}")));
        }
        writeln!(self.stdin, "{rev}:{path}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| self.err(format!("cat-file write: {e}")))?;
        let mut header = String::new();
        self.stdout
            .read_line(&mut header)
            .map_err(|e| self.err(format!("cat-file read: {e}")))?;
        let header = header.trim_end();
        if header.ends_with(" missing") || header.ends_with(" ambiguous") || header.is_empty() {
            return Ok(None);
        }
        let mut parts = header.split(' ');
        let (_, kind, size) = (parts.next(), parts.next(), parts.next());
        let size: usize = size
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("bad cat-file header `{header}`")))?;
        let mut buf = vec![0u8; size + 1];
        self.stdout
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("cat-file read: {e}")))?;
        buf.pop();
        if kind != Some("blob") {
            return Ok(None);
        }
        Ok(Some(buf))
    }
}

impl Drop for CatFile {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
