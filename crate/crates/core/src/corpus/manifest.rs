use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LibrarySpec;
use crate::error::{Error, Result};

/// Sections whose keys are dependency names. Runtime and development
/// dependencies both count as evidence.
pub const DEPENDENCY_SECTIONS: &[&str] = &[
    "dependencies",
    "devDependencies",
    "peerDependencies",
    "optionalDependencies",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ManifestKind {
    #[serde(rename = "package.json")]
    PackageJson,
    #[serde(rename = "bower.json")]
    BowerJson,
}

impl ManifestKind {
    /// Classify a repository path by its file name.
    pub fn from_path(path: &str) -> Result<Self> {
        let name = path.rsplit('/').next().unwrap_or(path);
        match name {
            "package.json" => Ok(ManifestKind::PackageJson),
            "bower.json" => Ok(ManifestKind::BowerJson),
            _ => Err(Error::UnsupportedManifest(path.to_string())),
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ManifestKind::PackageJson => "package.json",
            ManifestKind::BowerJson => "bower.json",
        }
    }
}

impl fmt::Display for ManifestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEvidence {
    pub kind: ManifestKind,
    /// Dependency sections that declare the library, in manifest order.
    pub sections: Vec<String>,
}

/// Look for `lib` among the dependency keys of a manifest.
pub fn parse_manifest(
    content: &[u8],
    kind: ManifestKind,
    lib: &LibrarySpec,
) -> Result<Option<DependencyEvidence>> {
    let value: Value = serde_json::from_slice(content).map_err(|e| Error::Manifest {
        kind: kind.to_string(),
        offset: byte_offset(content, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(root) = value else {
        return Err(Error::Manifest {
            kind: kind.to_string(),
            offset: first_non_ws(content),
            message: "top-level value is not an object".into(),
        });
    };

    let mut sections = Vec::new();
    for &section in DEPENDENCY_SECTIONS {
        match root.get(section) {
            None | Some(Value::Null) => {}
            Some(Value::Object(deps)) => {
                if deps.contains_key(&lib.manifest_name) {
                    sections.push(section.to_string());
                }
            }
            Some(_) => {
                return Err(Error::Manifest {
                    kind: kind.to_string(),
                    offset: find_key(content, section),
                    message: format!("`{section}` is not an object"),
                });
            }
        }
    }
    Ok((!sections.is_empty()).then_some(DependencyEvidence { kind, sections }))
}

/// serde_json reports 1-based line and column; convert to a byte offset.
fn byte_offset(content: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for _ in 1..line {
        match content[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return content.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(content.len())
}

fn first_non_ws(content: &[u8]) -> usize {
    content.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(0)
}

fn find_key(content: &[u8], key: &str) -> usize {
    let needle = format!("\"{key}\"");
    content
        .windows(needle.len())
        .position(|w| w == needle.as_bytes())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn react() -> LibrarySpec {
        LibrarySpec::builtin("react").unwrap()
    }

    #[test]
    fn runtime_dependency_is_evidence() {
        let m = br#"{"name":"app","dependencies":{"react":"^16.0.0"}}"#;
        let ev = parse_manifest(m, ManifestKind::PackageJson, &react())
            .unwrap()
            .unwrap();
        assert_eq!(ev.kind, ManifestKind::PackageJson);
        assert_eq!(ev.sections, vec!["dependencies"]);
    }

    #[test]
    fn dev_dependency_is_evidence_too() {
        let m = br#"{"dependencies":{"react":"1"},"devDependencies":{"react":"1"}}"#;
        let ev = parse_manifest(m, ManifestKind::BowerJson, &react())
            .unwrap()
            .unwrap();
        assert_eq!(ev.sections, vec!["dependencies", "devDependencies"]);
    }

    #[test]
    fn no_dependency_sections_is_absent() {
        let m = br#"{"name":"app","version":"1.0.0"}"#;
        assert!(parse_manifest(m, ManifestKind::PackageJson, &react())
            .unwrap()
            .is_none());
    }

    #[test]
    fn similar_names_do_not_match() {
        let m = br#"{"dependencies":{"react-dom":"^16","preact":"8"}}"#;
        assert!(parse_manifest(m, ManifestKind::PackageJson, &react())
            .unwrap()
            .is_none());
    }

    #[test]
    fn malformed_manifest_reports_offset() {
        let m = b"{\n  \"dependencies\": {\n    \"react\": ,\n  }\n}";
        let err = parse_manifest(m, ManifestKind::PackageJson, &react()).unwrap_err();
        match err {
            Error::Manifest { offset, .. } => {
                // points into the third line, at or just after the stray comma
                assert_eq!(&m[offset..offset + 1], b",");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_object_root_or_section_is_an_error() {
        assert!(parse_manifest(b"[1,2]", ManifestKind::PackageJson, &react()).is_err());
        let m = br#"{"dependencies":["react"]}"#;
        assert!(matches!(
            parse_manifest(m, ManifestKind::BowerJson, &react()),
            Err(Error::Manifest { offset: 1, .. })
        ));
    }

    #[test]
    fn manifest_kind_from_path() {
        assert_eq!(
            ManifestKind::from_path("web/package.json").unwrap(),
            ManifestKind::PackageJson
        );
        assert_eq!(
            ManifestKind::from_path("bower.json").unwrap(),
            ManifestKind::BowerJson
        );
        assert!(matches!(
            ManifestKind::from_path("Cargo.toml"),
            Err(Error::UnsupportedManifest(_))
        ));
    }
}
