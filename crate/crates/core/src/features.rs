//! Aggregation of commit events into the 13 per-developer expertise features.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miner::CommitEvent;

pub const FEATURE_NAMES: [&str; 13] = [
    "commits",
    "commitsClientFiles",
    "commitsImportLibrary",
    "codeChurn",
    "codeChurnClientFiles",
    "imports",
    "daysSinceFirstImport",
    "daysSinceLastImport",
    "daysBetweenImports",
    "avgDaysCommitsClientFiles",
    "avgDaysCommitsImportLibrary",
    "projects",
    "projectsImport",
];

/// Column indices into `FEATURE_NAMES`.
pub mod col {
    pub const COMMITS: usize = 0;
    pub const COMMITS_CLIENT_FILES: usize = 1;
    pub const COMMITS_IMPORT_LIBRARY: usize = 2;
    pub const CODE_CHURN: usize = 3;
    pub const CODE_CHURN_CLIENT_FILES: usize = 4;
    pub const IMPORTS: usize = 5;
    pub const DAYS_SINCE_FIRST_IMPORT: usize = 6;
    pub const DAYS_SINCE_LAST_IMPORT: usize = 7;
    pub const DAYS_BETWEEN_IMPORTS: usize = 8;
    pub const AVG_DAYS_COMMITS_CLIENT_FILES: usize = 9;
    pub const AVG_DAYS_COMMITS_IMPORT_LIBRARY: usize = 10;
    pub const PROJECTS: usize = 11;
    pub const PROJECTS_IMPORT: usize = 12;
}

const SECONDS_PER_DAY: i64 = 86_400;

/// Whole days in `seconds`, rounded toward negative infinity.
pub fn whole_days(seconds: i64) -> i64 {
    seconds.div_euclid(SECONDS_PER_DAY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub developer: String,
    pub library: String,
    pub commits: u64,
    pub commits_client_files: u64,
    pub commits_import_library: u64,
    pub code_churn: u64,
    pub code_churn_client_files: u64,
    pub imports: u64,
    pub days_since_first_import: Option<i64>,
    pub days_since_last_import: Option<i64>,
    pub days_between_imports: Option<i64>,
    pub avg_days_commits_client_files: f64,
    pub avg_days_commits_import_library: Option<f64>,
    pub projects: u64,
    pub projects_import: u64,
}

impl FeatureVector {
    /// Values in `FEATURE_NAMES` order; `None` marks a missing value.
    pub fn values(&self) -> [Option<f64>; 13] {
        [
            Some(self.commits as f64),
            Some(self.commits_client_files as f64),
            Some(self.commits_import_library as f64),
            Some(self.code_churn as f64),
            Some(self.code_churn_client_files as f64),
            Some(self.imports as f64),
            self.days_since_first_import.map(|d| d as f64),
            self.days_since_last_import.map(|d| d as f64),
            self.days_between_imports.map(|d| d as f64),
            Some(self.avg_days_commits_client_files),
            self.avg_days_commits_import_library,
            Some(self.projects as f64),
            Some(self.projects_import as f64),
        ]
    }

    /// Ordering invariants between the features.
    pub fn check(&self) -> Result<()> {
        let ok = self.commits_import_library <= self.commits_client_files
            && self.commits_client_files <= self.commits
            && self.code_churn_client_files <= self.code_churn
            && self.projects_import <= self.projects
            && self.imports >= self.commits_import_library
            && self.commits_client_files >= 1
            && match (self.days_since_first_import, self.days_since_last_import) {
                (Some(first), Some(last)) => first >= last && last >= 0,
                (None, None) => true,
                _ => false,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "feature invariants violated for {}",
                self.developer
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// No commit changed a client file.
    NoClientFileCommits,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Included(FeatureVector),
    Excluded {
        developer: String,
        reason: ExclusionReason,
    },
}

/// Mergeable partial aggregate over one developer's events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureAccumulator {
    developer: Option<String>,
    mixed_developers: bool,
    commits: u64,
    commits_client: u64,
    commits_import: u64,
    churn: u64,
    churn_client: u64,
    imports: u64,
    client_times: Vec<i64>,
    import_times: Vec<i64>,
    projects: BTreeSet<String>,
    projects_import: BTreeSet<String>,
    latest: Option<i64>,
}

impl FeatureAccumulator {
    pub fn push(&mut self, e: &CommitEvent) {
        match &self.developer {
            None => self.developer = Some(e.developer.clone()),
            Some(d) if *d != e.developer => self.mixed_developers = true,
            Some(_) => {}
        }
        let t = e.authored_at.timestamp();
        self.latest = Some(self.latest.map_or(t, |l| l.max(t)));
        self.commits += 1;
        self.churn += e.churn_total;
        self.projects.insert(e.project.clone());
        if e.touched_client_file {
            self.commits_client += 1;
            self.churn_client += e.churn_client;
            self.client_times.push(t);
        }
        if e.imports_added > 0 {
            self.commits_import += 1;
            self.imports += e.imports_added;
            self.import_times.push(t);
            self.projects_import.insert(e.project.clone());
        }
    }

    pub fn merge(mut self, other: FeatureAccumulator) -> FeatureAccumulator {
        match (&self.developer, &other.developer) {
            (Some(a), Some(b)) if a != b => self.mixed_developers = true,
            (None, Some(_)) => self.developer = other.developer.clone(),
            _ => {}
        }
        self.mixed_developers |= other.mixed_developers;
        self.commits += other.commits;
        self.commits_client += other.commits_client;
        self.commits_import += other.commits_import;
        self.churn += other.churn;
        self.churn_client += other.churn_client;
        self.imports += other.imports;
        self.client_times.extend(other.client_times);
        self.import_times.extend(other.import_times);
        self.projects.extend(other.projects);
        self.projects_import.extend(other.projects_import);
        self.latest = match (self.latest, other.latest) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self
    }

    pub fn finish(mut self, library: &str, snapshot: DateTime<Utc>) -> Result<Outcome> {
        if self.mixed_developers {
            return Err(Error::contract("events from more than one developer"));
        }
        let Some(developer) = self.developer.take() else {
            return Err(Error::contract("no events"));
        };
        let snap = snapshot.timestamp();
        if self.latest.is_some_and(|t| t > snap) {
            return Err(Error::contract(format!(
                "{developer}: event authored after the snapshot"
            )));
        }
        if self.commits_client == 0 {
            return Ok(Outcome::Excluded {
                developer,
                reason: ExclusionReason::NoClientFileCommits,
            });
        }
        self.client_times.sort_unstable();
        self.import_times.sort_unstable();

        let first_import = self.import_times.first().copied();
        let last_import = self.import_times.last().copied();
        let days_between_imports = match (first_import, last_import) {
            (Some(f), Some(l)) => Some(whole_days(l - f)),
            _ => None,
        };

        Ok(Outcome::Included(FeatureVector {
            developer,
            library: library.to_string(),
            commits: self.commits,
            commits_client_files: self.commits_client,
            commits_import_library: self.commits_import,
            code_churn: self.churn,
            code_churn_client_files: self.churn_client,
            imports: self.imports,
            days_since_first_import: first_import.map(|t| whole_days(snap - t)),
            days_since_last_import: last_import.map(|t| whole_days(snap - t)),
            days_between_imports,
            avg_days_commits_client_files: mean_gap(&self.client_times).unwrap_or(0.0),
            avg_days_commits_import_library: mean_gap(&self.import_times),
            projects: self.projects.len() as u64,
            projects_import: self.projects_import.len() as u64,
        }))
    }
}

/// Mean whole-day gap between consecutive sorted timestamps; `None` for
/// fewer than two.
fn mean_gap(sorted: &[i64]) -> Option<f64> {
    if sorted.len() < 2 {
        return None;
    }
    let total: i64 = sorted.windows(2).map(|w| whole_days(w[1] - w[0])).sum();
    Some(total as f64 / (sorted.len() - 1) as f64)
}

/// Features for one developer's events.
pub fn compute_features(events: &[CommitEvent], library: &str, snapshot: DateTime<Utc>) -> Result<Outcome> {
    let mut acc = FeatureAccumulator::default();
    for e in events {
        acc.push(e);
    }
    acc.finish(library, snapshot)
}

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub vectors: Vec<FeatureVector>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Group events by developer and compute every vector, sorted by developer.
pub fn compute_all(events: &[CommitEvent], library: &str, snapshot: DateTime<Utc>) -> Result<FeatureTable> {
    let mut by_dev: BTreeMap<&str, Vec<&CommitEvent>> = BTreeMap::new();
    for e in events {
        by_dev.entry(e.developer.as_str()).or_default().push(e);
    }
    let outcomes: Vec<Result<Outcome>> = by_dev
        .into_par_iter()
        .map(|(_, evs)| {
            let mut acc = FeatureAccumulator::default();
            for e in evs {
                acc.push(e);
            }
            acc.finish(library, snapshot)
        })
        .collect();
    let mut table = FeatureTable::default();
    for o in outcomes {
        match o? {
            Outcome::Included(v) => table.vectors.push(v),
            Outcome::Excluded { developer, reason } => table.excluded.push((developer, reason)),
        }
    }
    Ok(table)
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn write_features_csv<W: Write>(vectors: &[FeatureVector], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["developer", "library"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for v in vectors {
        let mut row = vec![v.developer.clone(), v.library.clone()];
        row.extend(v.values().iter().map(|x| x.map(fmt_num).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let expected: Vec<&str> = ["developer", "library"]
        .into_iter()
        .chain(FEATURE_NAMES)
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::invalid("features.csv header does not match"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |m: String| Error::Row {
            path: "features.csv".into(),
            line,
            message: m,
        };
        let cell = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j + 2).unwrap_or("").trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(format!("bad number `{s}` in {}", FEATURE_NAMES[j])))
            }
        };
        let req = |j: usize| -> Result<f64> {
            cell(j)?.ok_or_else(|| bad(format!("{} may not be empty", FEATURE_NAMES[j])))
        };
        out.push(FeatureVector {
            developer: rec.get(0).unwrap_or("").to_string(),
            library: rec.get(1).unwrap_or("").to_string(),
            commits: req(col::COMMITS)? as u64,
            commits_client_files: req(col::COMMITS_CLIENT_FILES)? as u64,
            commits_import_library: req(col::COMMITS_IMPORT_LIBRARY)? as u64,
            code_churn: req(col::CODE_CHURN)? as u64,
            code_churn_client_files: req(col::CODE_CHURN_CLIENT_FILES)? as u64,
            imports: req(col::IMPORTS)? as u64,
            days_since_first_import: cell(col::DAYS_SINCE_FIRST_IMPORT)?.map(|d| d as i64),
            days_since_last_import: cell(col::DAYS_SINCE_LAST_IMPORT)?.map(|d| d as i64),
            days_between_imports: cell(col::DAYS_BETWEEN_IMPORTS)?.map(|d| d as i64),
            avg_days_commits_client_files: req(col::AVG_DAYS_COMMITS_CLIENT_FILES)?,
            avg_days_commits_import_library: cell(col::AVG_DAYS_COMMITS_IMPORT_LIBRARY)?,
            projects: req(col::PROJECTS)? as u64,
            projects_import: req(col::PROJECTS_IMPORT)? as u64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    fn snapshot() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2018, 4, 30, 0, 0, 0).unwrap()
    }

    fn ev(days_ago: i64, client: bool, imports: u64, project: &str) -> CommitEvent {
        CommitEvent {
            developer: "D".into(),
            project: project.into(),
            commit: format!("c{days_ago}"),
            authored_at: snapshot() - Duration::days(days_ago),
            churn_total: 10,
            churn_client: if client { 4 } else { 0 },
            touched_client_file: client,
            imports_added: imports,
        }
    }

    fn included(o: Outcome) -> FeatureVector {
        match o {
            Outcome::Included(v) => v,
            other => panic!("expected a vector, got {other:?}"),
        }
    }

    #[test]
    fn three_commit_example() {
        // Hand computation: client commits 30 and 10 days ago (gap 20), the
        // second adds one import, a third non-client commit today.
        let events = vec![
            ev(30, true, 0, "o/r"),
            ev(10, true, 1, "o/r"),
            ev(0, false, 0, "o/r"),
        ];
        let v = included(compute_features(&events, "react", snapshot()).unwrap());
        assert_eq!(v.commits, 3);
        assert_eq!(v.commits_client_files, 2);
        assert_eq!(v.commits_import_library, 1);
        assert_eq!(v.imports, 1);
        assert_eq!(v.days_since_first_import, Some(10));
        assert_eq!(v.days_since_last_import, Some(10));
        assert_eq!(v.days_between_imports, Some(0));
        assert_eq!(v.avg_days_commits_client_files, 20.0);
        assert_eq!(v.avg_days_commits_import_library, None);
        assert_eq!(v.projects, 1);
        assert_eq!(v.projects_import, 1);
        assert_eq!(v.code_churn, 30);
        assert_eq!(v.code_churn_client_files, 8);
        v.check().unwrap();
    }

    #[test]
    fn no_imports_means_missing_import_dates() {
        let v = included(
            compute_features(&[ev(5, true, 0, "p"), ev(1, true, 0, "p")], "react", snapshot()).unwrap(),
        );
        assert_eq!(v.days_since_first_import, None);
        assert_eq!(v.days_since_last_import, None);
        assert_eq!(v.days_between_imports, None);
        assert_eq!(v.avg_days_commits_import_library, None);
        assert_eq!(v.avg_days_commits_client_files, 4.0);
    }

    #[test]
    fn single_client_commit_has_zero_average_gap() {
        let v = included(compute_features(&[ev(3, true, 0, "p")], "react", snapshot()).unwrap());
        assert_eq!(v.avg_days_commits_client_files, 0.0);
    }

    #[test]
    fn non_candidates_are_excluded() {
        let o = compute_features(&[ev(3, false, 0, "p")], "react", snapshot()).unwrap();
        assert_eq!(
            o,
            Outcome::Excluded {
                developer: "D".into(),
                reason: ExclusionReason::NoClientFileCommits
            }
        );
    }

    #[test]
    fn mixed_developers_violate_the_contract() {
        let mut other = ev(2, true, 0, "p");
        other.developer = "E".into();
        assert!(compute_features(&[ev(3, true, 0, "p"), other], "react", snapshot()).is_err());
    }

    #[test]
    fn day_flooring() {
        assert_eq!(whole_days(86_399), 0);
        assert_eq!(whole_days(86_400), 1);
        assert_eq!(whole_days(-1), -1);
    }

    #[test]
    fn csv_round_trip_with_missing_cells() {
        let v = included(compute_features(&[ev(3, true, 0, "p")], "react", snapshot()).unwrap());
        let mut buf = Vec::new();
        write_features_csv(std::slice::from_ref(&v), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("developer,library,commits,commitsClientFiles,"));
        assert!(text.contains(",,,"));
        assert_eq!(read_features_csv(&buf[..]).unwrap(), vec![v]);
    }

    fn arb_events() -> impl Strategy<Value = Vec<CommitEvent>> {
        prop::collection::vec((0i64..400, any::<bool>(), 0u64..3, 0usize..3, 0u64..50), 1..30).prop_map(
            |raw| {
                raw.into_iter()
                    .enumerate()
                    .map(|(i, (days, client, imports, proj, churn))| {
                        let client = client || imports > 0;
                        CommitEvent {
                            developer: "D".into(),
                            project: format!("p{proj}"),
                            commit: format!("{i:04}"),
                            authored_at: snapshot() - Duration::hours(days * 7),
                            churn_total: churn * 2,
                            churn_client: if client { churn } else { 0 },
                            touched_client_file: client,
                            imports_added: imports,
                        }
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant(events in arb_events(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = compute_features(&events, "react", snapshot()).unwrap();
            let b = compute_features(&shuffled, "react", snapshot()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn chunked_merge_equals_single_pass(events in arb_events(), cut in 0usize..30) {
            let cut = cut.min(events.len());
            let mut left = FeatureAccumulator::default();
            let mut right = FeatureAccumulator::default();
            events[..cut].iter().for_each(|e| left.push(e));
            events[cut..].iter().for_each(|e| right.push(e));
            let merged = right.merge(left).finish("react", snapshot()).unwrap();
            let single = compute_features(&events, "react", snapshot()).unwrap();
            prop_assert_eq!(merged, single);
        }

        #[test]
        fn vectors_satisfy_ordering_invariants(events in arb_events()) {
            if let Outcome::Included(v) = compute_features(&events, "react", snapshot()).unwrap() {
                prop_assert!(v.check().is_ok());
            }
        }
    }
}
