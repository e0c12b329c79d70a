use gaitcorr::evaluate::{box_stats, pearson, rmse};
use gaitcorr::kinematics::{cardan_yxz, extract_signals, CardanAngles};
use gaitcorr::learning::{hold_out_participants, window};
use gaitcorr::model::Point;
use gaitcorr::neuralnet::{split_rows, Normalization, Subset};
use gaitcorr::synth::{generate, GaitParams};
use proptest::prelude::*;

fn wrap(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cardan_round_trip(y in -179.0..179.0f64, x in -89.0..89.0f64, z in -179.0..179.0f64) {
        let back = cardan_yxz(&CardanAngles::new(y, x, z).to_matrix());
        prop_assert!(wrap(back.y - y).abs() < 1e-8);
        prop_assert!((back.x - x).abs() < 1e-8);
        prop_assert!(wrap(back.z - z).abs() < 1e-8);
    }

    #[test]
    fn split_is_a_partition(n in 10usize..2000, seed in any::<u64>()) {
        let s = split_rows(n, (0.6, 0.2, 0.2), seed).unwrap();
        let mut all: Vec<usize> = [Subset::Train, Subset::Validation, Subset::Test].iter().flat_map(|&k| s.indices(k)).collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(&s, &split_rows(n, (0.6, 0.2, 0.2), seed).unwrap());
    }

    #[test]
    fn holdout_is_disjoint_and_covers(n in 5usize..60, frac in 0.05..0.95f64, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("P{i:03}")).collect();
        let h = hold_out_participants(&ids, frac, seed).unwrap();
        prop_assert!(!h.retest.is_empty() && !h.learning.is_empty());
        prop_assert!(h.retest.iter().all(|r| !h.learning.contains(r)));
        prop_assert_eq!(h.retest.len() + h.learning.len(), n);
        let mut shuffled = ids.clone();
        shuffled.reverse();
        prop_assert_eq!(h, hold_out_participants(&shuffled, frac, seed).unwrap());
    }

    #[test]
    fn window_rows_are_slices(sig in prop::collection::vec(-100.0..100.0f64, 1..80), w in 1usize..8) {
        prop_assume!(w <= sig.len());
        let m = window(&sig, w).unwrap();
        prop_assert_eq!(m.nrows(), sig.len() - w + 1);
        for i in 0..m.nrows() {
            for j in 0..w {
                prop_assert_eq!(m[(i, j)], sig[i + j]);
            }
        }
    }

    #[test]
    fn normalization_inverts(rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..30)) {
        let norm = Normalization::fit_or_center(rows.iter().map(Vec::as_slice), 3);
        let (mut z, mut back) = ([0.0; 3], [0.0; 3]);
        for r in &rows {
            norm.apply(r, &mut z);
            norm.invert(&z, &mut back);
            for (a, b) in r.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn metrics_are_bounded(pairs in prop::collection::vec((-90.0..90.0f64, -90.0..90.0f64), 3..100)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let e = rmse(&a, &b).unwrap();
        prop_assert!(e >= 0.0 && (e - rmse(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        if let Ok(r) = pearson(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
        let s = box_stats(&a).unwrap();
        prop_assert!(s.min <= s.p25 && s.p25 <= s.median && s.median <= s.p75 && s.p75 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // frames are built from landmark differences and world axes only
    #[test]
    fn angles_ignore_translation(seed in 0u64..1000, dx in -5.0..5.0f64, dy in -5.0..5.0f64, dz in -1.0..1.0f64) {
        let g = generate(&GaitParams::random(seed)).unwrap();
        let base = extract_signals(&g.truth).unwrap();
        let moved = extract_signals(&g.truth.translated(Point::new(dx, dy, dz))).unwrap();
        for (a, b) in base.signals.iter().zip(&moved.signals) {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-6, "{} {:?}", a.name.name(), a.side);
            }
        }
    }
}
