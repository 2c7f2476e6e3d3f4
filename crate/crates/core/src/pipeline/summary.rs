//! Plain-text rendering of a finished output directory.

use std::fmt::Write as _;
use std::path::Path;

use super::*;
use crate::stats::EffectSizeReport;

/// Summarize every library listed in `out_dir/manifest.json`.
pub fn render_report(out_dir: &Path) -> Result<String> {
    let manifest: Manifest = read_json(&out_dir.join(MANIFEST_JSON))?;
    let mut s = String::new();
    let seed = manifest.seed.map_or("none".to_string(), |x| x.to_string());
    let _ = writeln!(
        s,
        "snapshot {}  seed {seed}",
        manifest.config.snapshot.to_rfc3339()
    );
    for (library, entry) in &manifest.libraries {
        let dir = out_dir.join(&entry.dir);
        let _ = writeln!(s, "\n== {library} ==");
        if let Ok(file) = open(&dir.join(FEATURES_CSV)) {
            let vectors = features::read_features_csv(file)?;
            let _ = writeln!(s, "candidate experts: {}", vectors.len());
        }
        if dir.join(SUPERVISED_JSON).exists() {
            let r: SupervisedReport = read_json(&dir.join(SUPERVISED_JSON))?;
            let _ = writeln!(s, "labeled: {:?} ({} scheme)", r.class_counts, r.scheme);
            let _ = writeln!(s, "{:<8} {:>7} {:>7} {:>7}", "model", "F", "kappa", "AUC");
            for c in std::iter::once(&r.baseline).chain(&r.classifiers) {
                let _ = writeln!(
                    s,
                    "{:<8} {:>7.3} {:>7.3} {:>7.3}",
                    c.classifier.to_string(),
                    c.f_measure,
                    c.kappa,
                    c.auc
                );
            }
        }
        if dir.join(CLUSTERS_JSON).exists() {
            let m: ClusterModel = read_json(&dir.join(CLUSTERS_JSON))?;
            let _ = writeln!(
                s,
                "k={} expert cluster {} (threshold {:.2}{})",
                m.k,
                m.expert_cluster,
                m.threshold_used,
                if m.below_threshold { ", not reached" } else { "" }
            );
            let _ = writeln!(
                s,
                "{:<8} {:>7} {:>7} {:>7} {:>7}",
                "cluster", "size", "novice", "interm", "expert"
            );
            for c in &m.composition {
                let _ = writeln!(
                    s,
                    "{:<8} {:>7} {:>7.2} {:>7.2} {:>7.2}",
                    c.cluster, c.members, c.novice, c.intermediate, c.expert
                );
            }
        }
        if dir.join(VERDICTS_CSV).exists() {
            let rows = cluster::read_verdicts_csv(open(&dir.join(VERDICTS_CSV))?)?;
            let flagged = rows
                .iter()
                .filter(|r| r.verdict == cluster::Verdict::LikelyExpert)
                .count();
            let _ = writeln!(s, "likely experts: {flagged} of {}", rows.len());
        }
        if dir.join(EFFECTS_JSON).exists() {
            let r: EffectSizeReport = read_json(&dir.join(EFFECTS_JSON))?;
            let _ = writeln!(
                s,
                "{:<32} {:>4} {:>8} {:>10} {:>9}",
                "feature", "dir", "delta", "magnitude", "p"
            );
            for f in &r.features {
                match (&f.direction, f.delta, &f.magnitude, f.p) {
                    (Some(d), Some(delta), Some(m), Some(p)) => {
                        let dir = serde_json::to_value(d)?;
                        let mag = serde_json::to_value(m)?;
                        let _ = writeln!(
                            s,
                            "{:<32} {:>4} {:>8.3} {:>10} {:>9.4}",
                            f.feature,
                            dir.as_str().unwrap_or("?"),
                            delta,
                            mag.as_str().unwrap_or("?"),
                            p
                        );
                    }
                    _ => {
                        let _ = writeln!(
                            s,
                            "{:<32} skipped: {}",
                            f.feature,
                            f.skipped.as_deref().unwrap_or("")
                        );
                    }
                }
            }
        }
    }
    if manifest.intersection.is_some() {
        let doc: Intersection = read_json(&out_dir.join(INTERSECTION_JSON))?;
        let _ = writeln!(
            s,
            "\nlikely experts in all of {}: {}",
            doc.libraries.join(", "),
            doc.developers.len()
        );
    }
    Ok(s)
}
