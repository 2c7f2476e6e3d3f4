use libexpert::cluster::kmeans;
use libexpert::cluster::kmeans::nearest;
use libexpert::learn::{smote, stratified_folds, SmoteConfig};
use libexpert::rng::substream;
use libexpert::stats::{cliffs_delta, mann_whitney_exact, mann_whitney_normal, mann_whitney_u};
use proptest::prelude::*;
use rand::Rng;

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..20).prop_map(f64::from), 1..=max)
}

proptest! {
    #[test]
    fn mann_whitney_is_well_formed(x in sample(15), y in sample(15)) {
        let r = mann_whitney_u(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p));
        prop_assert_eq!(r.u_x + r.u_y, (x.len() * y.len()) as f64);
        prop_assert_eq!(r.exact, x.len() + y.len() <= 12);
        let s = mann_whitney_u(&y, &x).unwrap();
        prop_assert!((r.p - s.p).abs() < 1e-12);
    }

    #[test]
    fn cliffs_delta_is_bounded_and_antisymmetric(x in sample(20), y in sample(20)) {
        let (d, _) = cliffs_delta(&x, &y).unwrap();
        let (e, _) = cliffs_delta(&y, &x).unwrap();
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert_eq!(d, -e);
    }

    #[test]
    fn kmeans_assigns_to_nearest_centroid(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 4..30),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let fit = kmeans(&rows, k, 5, seed, "prop").unwrap();
        prop_assert_eq!(fit.centroids.len(), k);
        for (row, &a) in rows.iter().zip(&fit.assignment) {
            let (best, d) = nearest(&fit.centroids, row);
            let own: f64 = row.iter().zip(&fit.centroids[a]).map(|(p, q)| (p - q).powi(2)).sum();
            prop_assert!(best == a || (own - d).abs() < 1e-9);
        }
    }

    #[test]
    fn stratified_folds_balance_each_class(
        labels in prop::collection::vec(0usize..3, 10..80),
        seed in any::<u64>(),
    ) {
        let smallest = (0..3).map(|c| labels.iter().filter(|&&l| l == c).count()).filter(|&n| n > 0).min().unwrap();
        let result = stratified_folds(&labels, 5, &mut substream(seed, "folds"));
        prop_assert_eq!(result.is_err(), smallest < 5);
        prop_assume!(smallest >= 5);
        let folds = stratified_folds(&labels, 5, &mut substream(seed, "folds")).unwrap();
        for class in 0..3 {
            let mut per = [0usize; 5];
            for (l, f) in labels.iter().zip(&folds) {
                if *l == class {
                    per[*f] += 1;
                }
            }
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} spread {:?}", class, per);
        }
    }

    #[test]
    fn smote_rows_stay_in_the_minority_box(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 3), 1..25),
        seed in any::<u64>(),
    ) {
        let out = smote(&rows, SmoteConfig::default(), &mut substream(seed, "smote"));
        prop_assert_eq!(out.is_err(), rows.len() <= 3);
        prop_assume!(rows.len() > 3);
        let out = out.unwrap();
        for s in &out {
            for (j, v) in s.values.iter().enumerate() {
                let lo = rows.iter().map(|r| r[j]).fold(f64::MAX, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::MIN, f64::max);
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
            prop_assert_ne!(s.base, s.neighbor);
        }
    }
}

#[test]
fn normal_approximation_tracks_exact_p_at_six_and_six() {
    let mut rng = substream(3, "mwu-sweep");
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..1.2)).collect();
        let exact = mann_whitney_exact(&x, &y).unwrap();
        let approx = mann_whitney_normal(&x, &y).unwrap();
        assert_eq!(exact.u_x, approx.u_x);
        worst = worst.max((exact.p - approx.p).abs());
    }
    assert!(worst <= 0.02, "max |exact - normal| = {worst}");
}
