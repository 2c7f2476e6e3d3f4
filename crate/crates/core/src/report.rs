use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Note,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportEntry {
    pub repo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit: Option<String>,
    pub level: Level,
    pub message: String,
}

/// Non-fatal problems collected while scanning; scanning continues past them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub entries: Vec<ReportEntry>,
}

impl ScanReport {
    pub fn error(&mut self, repo: &str, commit: Option<&str>, message: impl Into<String>) {
        self.push(repo, commit, Level::Error, message.into());
    }

    pub fn note(&mut self, repo: &str, commit: Option<&str>, message: impl Into<String>) {
        self.push(repo, commit, Level::Note, message.into());
    }

    fn push(&mut self, repo: &str, commit: Option<&str>, level: Level, message: String) {
        self.entries.push(ReportEntry {
            repo: repo.to_string(),
            commit: commit.map(str::to_string),
            level,
            message,
        });
    }

    pub fn merge(&mut self, other: ScanReport) {
        self.entries.extend(other.entries);
    }

    pub fn errors(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| e.level == Level::Error)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
