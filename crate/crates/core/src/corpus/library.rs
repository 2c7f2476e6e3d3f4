use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A target library: how it is named in manifests and how it is imported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub id: String,
    pub manifest_name: String,
    #[serde(default)]
    pub repo_slug: String,
    pub import_patterns: Vec<String>,
}

impl LibrarySpec {
    pub fn new(
        id: impl Into<String>,
        manifest_name: impl Into<String>,
        repo_slug: impl Into<String>,
        import_patterns: &[&str],
    ) -> Result<Self> {
        let spec = LibrarySpec {
            id: id.into(),
            manifest_name: manifest_name.into(),
            repo_slug: repo_slug.into(),
            import_patterns: import_patterns.iter().map(|p| p.to_string()).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The three libraries studied in the original work.
    pub fn builtin(id: &str) -> Option<Self> {
        let spec = match id {
            "react" => Self::new("react", "react", "facebook/react", &["react"]),
            "node-mongodb" => Self::new(
                "node-mongodb",
                "mongodb",
                "mongodb/node-mongodb-native",
                &["mongodb"],
            ),
            "socket.io" => Self::new("socket.io", "socket.io", "socketio/socket.io", &["socket.io"]),
            _ => return None,
        };
        spec.ok()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidLibrary("id is empty".into()));
        }
        if self.manifest_name.is_empty() || self.manifest_name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidLibrary(format!(
                "manifest name `{}` must be non-empty without whitespace",
                self.manifest_name
            )));
        }
        if self.import_patterns.is_empty() {
            return Err(Error::InvalidLibrary(format!(
                "library `{}` has no import patterns",
                self.id
            )));
        }
        for p in &self.import_patterns {
            if p.is_empty() || p.chars().any(char::is_whitespace) || p.ends_with('/') {
                return Err(Error::InvalidLibrary(format!("bad import pattern `{p}`")));
            }
        }
        Ok(())
    }

    /// True when `specifier` names this library: an exact pattern, or a
    /// pattern followed by `/` and a subpath.
    pub fn matches_specifier(&self, specifier: &str) -> bool {
        self.import_patterns.iter().any(|p| {
            specifier == p
                || (specifier.len() > p.len() + 1
                    && specifier.starts_with(p.as_str())
                    && specifier.as_bytes()[p.len()] == b'/')
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for id in ["react", "node-mongodb", "socket.io"] {
            let lib = LibrarySpec::builtin(id).unwrap();
            assert_eq!(lib.id, id);
        }
        assert!(LibrarySpec::builtin("vue").is_none());
    }

    #[test]
    fn rejects_whitespace_manifest_name() {
        assert!(LibrarySpec::new("x", "re act", "", &["x"]).is_err());
        assert!(LibrarySpec::new("x", "", "", &["x"]).is_err());
        assert!(LibrarySpec::new("x", "x", "", &[]).is_err());
    }

    #[test]
    fn specifier_matching_is_exact_or_subpath() {
        let lib = LibrarySpec::builtin("react").unwrap();
        assert!(lib.matches_specifier("react"));
        assert!(lib.matches_specifier("react/addons"));
        assert!(lib.matches_specifier("react/lib/ReactDOM"));
        assert!(!lib.matches_specifier("preact"));
        assert!(!lib.matches_specifier("react-dom"));
        assert!(!lib.matches_specifier("react/"));
        assert!(!lib.matches_specifier("reactx/y"));
    }
}
