use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ternary {
    Novice,
    Intermediate,
    Expert,
}

impl Ternary {
    pub fn from_score(score: u8) -> Option<Self> {
        match score {
            1 | 2 => Some(Ternary::Novice),
            3 => Some(Ternary::Intermediate),
            4 | 5 => Some(Ternary::Expert),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// How self-reported 1–5 scores are grouped into classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ternary,
    Five,
}

impl Scheme {
    pub fn n_classes(self) -> usize {
        match self {
            Scheme::Ternary => 3,
            Scheme::Five => 5,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Scheme::Ternary => &["Novice", "Intermediate", "Expert"],
            Scheme::Five => &["Novice 1", "Novice 2", "Intermediate", "Expert 4", "Expert 5"],
        }
    }

    pub fn class_of(self, label: &GroundTruthLabel) -> usize {
        match self {
            Scheme::Ternary => label.ternary.index(),
            Scheme::Five => label.score as usize - 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ternary => "ternary",
            Scheme::Five => "five",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ternary" | "3" => Ok(Scheme::Ternary),
            "five" | "5" => Ok(Scheme::Five),
            _ => Err(Error::invalid(format!("unknown class scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub developer: String,
    pub library: String,
    pub score: u8,
    pub ternary: Ternary,
}

impl GroundTruthLabel {
    pub fn new(developer: impl Into<String>, library: impl Into<String>, score: u8) -> Result<Self> {
        let ternary =
            Ternary::from_score(score).ok_or_else(|| Error::invalid(format!("score {score} outside 1-5")))?;
        Ok(GroundTruthLabel {
            developer: developer.into(),
            library: library.into(),
            score,
            ternary,
        })
    }
}

#[derive(Debug, Deserialize)]
struct RawLabel {
    developer: String,
    library: String,
    score: String,
}

/// Read `developer,library,score` rows. `known_libraries` limits which
/// library ids are accepted; duplicates and out-of-range scores are errors
/// carrying the offending line.
pub fn ingest_ground_truth<R: Read>(
    input: R,
    source: &str,
    known_libraries: &[&str],
) -> Result<Vec<GroundTruthLabel>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["developer", "library", "score"] {
        return Err(Error::Row {
            path: source.into(),
            line: 1,
            message: format!(
                "expected header developer,library,score, got {}",
                header.join(",")
            ),
        });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawLabel>().enumerate() {
        let line = i as u64 + 2;
        let err = |message: String| Error::Row {
            path: source.into(),
            line,
            message,
        };
        let row = row.map_err(|e| err(e.to_string()))?;
        let developer = row.developer.trim().to_string();
        let library = row.library.trim().to_string();
        if !known_libraries.contains(&library.as_str()) {
            return Err(err(format!("unknown library `{library}`")));
        }
        let score: u8 = row
            .score
            .trim()
            .parse()
            .map_err(|_| err(format!("score `{}` is not an integer", row.score.trim())))?;
        let label = GroundTruthLabel::new(developer.clone(), library.clone(), score)
            .map_err(|e| err(e.to_string()))?;
        if !seen.insert((developer.clone(), library.clone())) {
            return Err(err(format!("duplicate label for ({developer}, {library})")));
        }
        out.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<Vec<GroundTruthLabel>> {
        ingest_ground_truth(text.as_bytes(), "gt.csv", &["react"])
    }

    #[test]
    fn class_mapping() {
        let gt = ingest("developer,library,score\nalice,react,5\nbob,react,3\ndan,react,2\n").unwrap();
        assert_eq!(gt[0].ternary, Ternary::Expert);
        assert_eq!(gt[1].ternary, Ternary::Intermediate);
        assert_eq!(gt[2].ternary, Ternary::Novice);
        assert_eq!(Scheme::Five.class_of(&gt[0]), 4);
        assert_eq!(Scheme::Ternary.class_of(&gt[0]), 2);
    }

    #[test]
    fn out_of_range_score_names_its_line() {
        let err = ingest("developer,library,score\nalice,react,5\ncarol,react,7\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_library_and_duplicates_are_rejected() {
        assert!(matches!(
            ingest("developer,library,score\nalice,vue,5\n"),
            Err(Error::Row { line: 2, .. })
        ));
        assert!(matches!(
            ingest("developer,library,score\nalice,react,5\nalice,react,4\n"),
            Err(Error::Row { line: 3, .. })
        ));
        assert!(ingest("dev,lib,score\n").is_err());
    }
}
