//! Lexical import detection.
//!
//! Two statement families are recognised, line by line: CommonJS
//! `require('<p>')` calls and ES `import … from '<p>'` / `import '<p>'`
//! statements (including the `} from '<p>'` closer of a multi-line import).
//! Comments are not stripped; this is an approximation, not a parser.

use std::sync::OnceLock;

use regex::Regex;

use super::LibrarySpec;

/// File extensions treated as JavaScript-family source code.
pub const SOURCE_EXTENSIONS: &[&str] = &["js", "jsx", "mjs", "cjs", "ts", "tsx", "vue"];

fn import_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r#"\brequire\s*\(\s*(?:'([^'\n]*)'|"([^"\n]*)")\s*\)"#,
            r#"|\bimport\b[^'"\n;]*?\bfrom\s*(?:'([^'\n]*)'|"([^"\n]*)")"#,
            r#"|\bimport\s*(?:'([^'\n]*)'|"([^"\n]*)")"#,
            r#"|^\s*\}\s*from\s*(?:'([^'\n]*)'|"([^"\n]*)")"#,
        ))
        .expect("import regex")
    })
}

/// Module specifiers imported on a single line.
pub fn import_specifiers(line: &str) -> impl Iterator<Item = &str> {
    import_regex()
        .captures_iter(line)
        .filter_map(|caps| caps.iter().skip(1).flatten().next().map(|m| m.as_str()))
}

/// True when `line` imports `lib`.
pub fn line_imports(line: &str, lib: &LibrarySpec) -> bool {
    import_specifiers(line).any(|s| lib.matches_specifier(s))
}

/// True iff `content` contains at least one import of `lib`.
pub fn detect_client_files(content: &str, lib: &LibrarySpec) -> bool {
    content.lines().any(|line| line_imports(line, lib))
}

/// Whether a repository path looks like a JavaScript-family source file.
pub fn is_source_path(path: &str) -> bool {
    if path
        .split('/')
        .any(|c| c == "node_modules" || c == "bower_components")
    {
        return false;
    }
    match path.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && !stem.ends_with('/') => {
            SOURCE_EXTENSIONS.iter().any(|e| ext.eq_ignore_ascii_case(e))
        }
        _ => false,
    }
}

/// Git's binary heuristic: a NUL byte in the first 8000 bytes.
pub fn looks_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8000).any(|&b| b == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn react() -> LibrarySpec {
        LibrarySpec::builtin("react").unwrap()
    }

    #[test]
    fn require_exact_name() {
        assert!(detect_client_files("const r = require('react')", &react()));
        assert!(detect_client_files("const r = require(\"react\");", &react()));
    }

    #[test]
    fn subpath_and_prefix_rules() {
        assert!(detect_client_files("import x from 'react/addons'", &react()));
        assert!(!detect_client_files("import x from 'preact'", &react()));
        assert!(!detect_client_files("import x from 'react-dom'", &react()));
    }

    // Hand-labelled import lines: (line, imports react?).
    const HAND_SET: [(&str, bool); 20] = [
        ("import React from 'react';", true),
        ("import React, { Component } from \"react\";", true),
        ("import * as R from 'react'", true),
        ("import 'react';", true),
        ("import \"react/addons\";", true),
        ("import x from 'react/addons'", true),
        ("import { render } from 'react/lib/ReactMount';", true),
        ("var React = require('react');", true),
        ("const A = require( \"react/addons\" )", true),
        ("} from 'react';", true),
        ("import x from 'preact'", false),
        ("import x from 'react-dom'", false),
        ("import x from 'reactive/react'", false),
        ("var r = require('react-router')", false),
        ("import 'preact/compat'", false),
        ("const react = 'react';", false),
        ("import x from './react'", false),
        ("require('reactor')", false),
        ("import type { Node } from 'react-native';", false),
        ("export default from 'react';", false),
    ];

    /// Oracle: extract the quoted specifier by hand and apply the
    /// exact-or-prefix-plus-separator rule directly.
    fn oracle(line: &str) -> bool {
        let statement = line.contains("require(")
            || line.contains("require( ")
            || line.trim_start().starts_with("import")
            || line.trim_start().starts_with('}');
        if !statement {
            return false;
        }
        let q = line.find(['\'', '"']);
        let Some(start) = q else { return false };
        let quote = line.as_bytes()[start] as char;
        let rest = &line[start + 1..];
        let end = rest.find(quote).unwrap();
        let spec = &rest[..end];
        spec == "react" || spec.strip_prefix("react/").is_some_and(|s| !s.is_empty())
    }

    #[test]
    fn hand_set_agrees_with_oracle() {
        for (line, expected) in HAND_SET {
            assert_eq!(oracle(line), expected, "oracle disagrees on {line}");
            assert_eq!(detect_client_files(line, &react()), expected, "{line}");
        }
    }

    #[test]
    fn multiple_specifiers_on_a_line() {
        let specs: Vec<_> = import_specifiers("const a = require('x'), b = require(\"react\");").collect();
        assert_eq!(specs, vec!["x", "react"]);
    }

    #[test]
    fn source_paths() {
        assert!(is_source_path("src/App.jsx"));
        assert!(is_source_path("index.js"));
        assert!(is_source_path("a/b/c.TS"));
        assert!(!is_source_path("README.md"));
        assert!(!is_source_path("node_modules/react/index.js"));
        assert!(!is_source_path(".js"));
        assert!(!is_source_path("Makefile"));
    }

    #[test]
    fn binary_heuristic() {
        assert!(looks_binary(b"\x89PNG\0\0"));
        assert!(!looks_binary(b"import 'react'"));
    }
}
