//! Parsing of `git log -p` output into per-commit, per-file diffs.

use crate::corpus::{line_imports, LibrarySpec};

/// Separator git emits before each commit header (see `LOG_FORMAT`).
pub(crate) const RECORD_SEP: char = '\u{1e}';
pub(crate) const FIELD_SEP: char = '\u{1f}';
pub(crate) const LOG_FORMAT: &str = "--format=%x1e%H%x1f%at%x1f%an%x1f%ae";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileChange {
    Added,
    Modified,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    pub path: String,
    pub change: FileChange,
    pub binary: bool,
    pub added: u64,
    pub deleted: u64,
    /// Unified diff text for this file, headers included.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCommit {
    pub hash: String,
    pub authored_unix: i64,
    pub author_name: String,
    pub author_email: String,
    pub files: Vec<FileDiff>,
}

/// Number of added lines (inside hunks) that import `lib`.
pub fn count_added_imports(diff: &str, lib: &LibrarySpec) -> u64 {
    let mut in_hunk = false;
    let mut count = 0;
    for line in diff.lines() {
        if line.starts_with("@@") {
            in_hunk = true;
            continue;
        }
        if line.starts_with("diff --git ") {
            in_hunk = false;
            continue;
        }
        if in_hunk {
            if let Some(added) = line.strip_prefix('+') {
                if line_imports(added, lib) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Split `git log -p` output produced with `LOG_FORMAT`.
pub fn parse_log(output: &str) -> Vec<RawCommit> {
    output
        .split(RECORD_SEP)
        .filter(|chunk| !chunk.trim().is_empty())
        .filter_map(parse_commit)
        .collect()
}

fn parse_commit(chunk: &str) -> Option<RawCommit> {
    let (header, body) = chunk.split_once('\n').unwrap_or((chunk, ""));
    let mut fields = header.split(FIELD_SEP);
    let hash = fields.next()?.trim().to_string();
    let authored_unix = fields.next()?.trim().parse().ok()?;
    let author_name = fields.next().unwrap_or_default().to_string();
    let author_email = fields.next().unwrap_or_default().trim().to_string();

    let mut files = Vec::new();
    let mut current: Option<(FileDiff, bool)> = None;
    for line in body.split_inclusive('\n') {
        let bare = line.trim_end_matches('\n');
        if bare.starts_with("diff --git ") {
            if let Some((f, _)) = current.take() {
                files.push(f);
            }
            current = Some((
                FileDiff {
                    path: path_from_diff_header(bare).unwrap_or_default(),
                    change: FileChange::Modified,
                    binary: false,
                    added: 0,
                    deleted: 0,
                    text: String::new(),
                },
                false,
            ));
        }
        let Some((file, in_hunk)) = current.as_mut() else {
            continue;
        };
        file.text.push_str(line);
        if *in_hunk {
            if bare.starts_with('+') {
                file.added += 1;
            } else if bare.starts_with('-') {
                file.deleted += 1;
            }
            continue;
        }
        if bare.starts_with("@@") {
            *in_hunk = true;
        } else if bare.starts_with("new file mode") {
            file.change = FileChange::Added;
        } else if bare.starts_with("deleted file mode") {
            file.change = FileChange::Deleted;
        } else if bare.starts_with("Binary files ") || bare == "GIT binary patch" {
            file.binary = true;
        } else if let Some(p) = bare.strip_prefix("+++ ") {
            if let Some(p) = strip_side(p, "b/") {
                file.path = p;
            }
        } else if let Some(p) = bare.strip_prefix("--- ") {
            if let Some(p) = strip_side(p, "a/") {
                file.path = p;
            }
        }
    }
    if let Some((f, _)) = current.take() {
        files.push(f);
    }
    for f in &mut files {
        if f.binary {
            f.added = 0;
            f.deleted = 0;
        }
    }
    Some(RawCommit {
        hash,
        authored_unix,
        author_name,
        author_email,
        files,
    })
}

/// `a/<p>` / `b/<p>` side of a `---`/`+++` line; `None` for `/dev/null`.
fn strip_side(raw: &str, prefix: &str) -> Option<String> {
    let raw = raw.strip_suffix('\t').unwrap_or(raw);
    if raw == "/dev/null" {
        return None;
    }
    let unquoted = unquote(raw);
    unquoted.strip_prefix(prefix).map(str::to_string)
}

/// Without renames both sides of `diff --git a/<p> b/<p>` are equal.
fn path_from_diff_header(line: &str) -> Option<String> {
    let rest = line.strip_prefix("diff --git ")?;
    if rest.starts_with('"') {
        let end = closing_quote(rest)?;
        return unquote(&rest[..=end]).strip_prefix("a/").map(str::to_string);
    }
    let inner = rest.strip_prefix("a/")?;
    // inner = "<p> b/<p>", so |p| = (|inner| - 3) / 2
    let n = inner.len().checked_sub(3)? / 2;
    let (p, tail) = inner.split_at(n);
    (tail.strip_prefix(" b/") == Some(p)).then(|| p.to_string())
}

fn closing_quote(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

/// Undo git's C-style path quoting.
fn unquote(s: &str) -> String {
    let Some(inner) = s.strip_prefix('"').and_then(|s| s.strip_suffix('"')) else {
        return s.to_string();
    };
    let bytes = inner.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' || i + 1 >= bytes.len() {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        let c = bytes[i + 1];
        i += 2;
        match c {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'"' => out.push(b'"'),
            b'\\' => out.push(b'\\'),
            b'0'..=b'7' => {
                let digits = &inner[i - 1..(i + 2).min(inner.len())];
                if let Ok(v) = u8::from_str_radix(digits, 8) {
                    out.push(v);
                    i += 2;
                } else {
                    out.push(c);
                }
            }
            other => out.push(other),
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn react() -> LibrarySpec {
        LibrarySpec::builtin("react").unwrap()
    }

    #[test]
    fn two_added_requires() {
        let diff = "diff --git a/a.js b/a.js\n--- a/a.js\n+++ b/a.js\n@@ -1 +1,3 @@\n x\n+const a = require('react')\n+const b = require('react')\n";
        assert_eq!(count_added_imports(diff, &react()), 2);
    }

    #[test]
    fn removed_import_never_counts() {
        let diff = "--- a/a.js\n+++ b/a.js\n@@ -1,2 +1 @@\n-import React from 'react'\n x\n";
        assert_eq!(count_added_imports(diff, &react()), 0);
    }

    #[test]
    fn context_lines_do_not_count() {
        let diff = "--- a/a.js\n+++ b/a.js\n@@ -1,2 +1,3 @@\n import React from 'react'\n var x = require('react')\n+console.log(1)\n";
        // Oracle: re-scan only `+`-prefixed hunk lines.
        let oracle = diff
            .lines()
            .skip_while(|l| !l.starts_with("@@"))
            .filter(|l| l.starts_with('+'))
            .filter(|l| l.contains("'react'"))
            .count() as u64;
        assert_eq!(oracle, 0);
        assert_eq!(count_added_imports(diff, &react()), oracle);
    }

    #[test]
    fn header_lines_are_not_additions() {
        let diff = "--- a/react.js\n+++ b/import 'react'\n@@ -0,0 +1 @@\n+x\n";
        assert_eq!(count_added_imports(diff, &react()), 0);
    }

    #[test]
    fn parses_a_log_with_binary_and_deletion() {
        let log = format!(
            "{RECORD_SEP}abc{FIELD_SEP}100{FIELD_SEP}Dev{FIELD_SEP}d@x\n\n\
diff --git a/img.png b/img.png\nnew file mode 100644\nindex 0000000..1111111\nBinary files /dev/null and b/img.png differ\n\
diff --git a/src/a.js b/src/a.js\ndeleted file mode 100644\nindex 1111111..0000000\n--- a/src/a.js\n+++ /dev/null\n@@ -1,2 +0,0 @@\n-import 'react'\n-x\n\
diff --git a/my file.js b/my file.js\nindex 1..2 100644\n--- a/my file.js\t\n+++ b/my file.js\t\n@@ -1 +1,2 @@\n x\n+++y\n"
        );
        let commits = parse_log(&log);
        assert_eq!(commits.len(), 1);
        let c = &commits[0];
        assert_eq!(c.hash, "abc");
        assert_eq!(c.authored_unix, 100);
        assert_eq!(c.author_email, "d@x");
        assert_eq!(c.files.len(), 3);
        assert_eq!(c.files[0].path, "img.png");
        assert!(c.files[0].binary);
        assert_eq!((c.files[0].added, c.files[0].deleted), (0, 0));
        assert_eq!(c.files[1].path, "src/a.js");
        assert_eq!(c.files[1].change, FileChange::Deleted);
        assert_eq!((c.files[1].added, c.files[1].deleted), (0, 2));
        assert_eq!(c.files[2].path, "my file.js");
        assert_eq!((c.files[2].added, c.files[2].deleted), (1, 0));
    }

    #[test]
    fn quoted_paths() {
        assert_eq!(
            path_from_diff_header(r#"diff --git "a/t\tab.js" "b/t\tab.js""#).as_deref(),
            Some("t\tab.js")
        );
        assert_eq!(unquote(r#""a/caf\303\251.js""#), "a/café.js");
    }
}
