//! Property tests over randomly generated datasets and predictors.

use proptest::prelude::*;

use fifaudit::classifier::FnPredictor;
use fifaudit::dataset::{read_csv, write_csv};
use fifaudit::fif::{fif, rank_and_residual, FifOptions};
use fifaudit::gsa::{bspline_basis, KnotVector, MarginalBasis, CUBIC};
use fifaudit::interventions::{poison_labels, reweigh};
use fifaudit::metrics::{self, MetricKind};
use fifaudit::oracle::scaled_variance_identity;
use fifaudit::report::fif_json;
use fifaudit::{Dataset, GroupKey, Record, Schema};

/// Rows as `(group, x0, x1, label)`.
fn dataset(rows: &[(usize, f64, f64, bool)], prefix: &str) -> Dataset {
    let schema = Schema::new(vec!["x0".into(), "x1".into()], vec!["g".into()], "y", None).unwrap();
    let records = rows
        .iter()
        .enumerate()
        .map(|(id, &(g, a, b, y))| Record {
            id,
            x: vec![a, b],
            a: GroupKey::new([format!("{prefix}{g}")]),
            y: u8::from(y),
            y_hat: None,
        })
        .collect();
    Dataset::new(schema, records, None).unwrap()
}

fn rows(groups: usize, max: usize) -> impl Strategy<Value = Vec<(usize, f64, f64, bool)>> {
    // Every group gets at least two rows so each metric has two groups.
    let base: Vec<(usize, f64, f64, bool)> = (0..groups)
        .flat_map(|g| [(g, 0.1, 0.9, true), (g, 0.8, 0.2, false)])
        .collect();
    prop::collection::vec((0..groups, 0.0..1.0f64, 0.0..1.0f64, any::<bool>()), 10..max).prop_map(move |mut v| {
        v.extend(base.iter().cloned());
        v
    })
}

fn threshold(t0: f64, t1: f64) -> impl Fn(&[f64], &GroupKey) -> u8 + Send + Sync + Clone {
    move |x: &[f64], _: &GroupKey| u8::from(x[0] >= t0 || x[1] >= t1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_bounded_and_ignore_group_names(
        data in rows(3, 60),
        t0 in 0.0..1.0f64,
        t1 in 0.0..1.0f64,
    ) {
        let m = FnPredictor(threshold(t0, t1));
        for kind in MetricKind::ALL {
            let a = metrics::compute(kind, &m, &dataset(&data, "g"));
            let b = metrics::compute(kind, &m, &dataset(&data, "renamed-"));
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((0.0..=1.0).contains(&a.value));
                    prop_assert_eq!(a.value, b.value);
                    prop_assert!(a.p_max() >= a.p_min());
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn reweighing_makes_group_and_label_independent(data in rows(3, 80)) {
        let d = dataset(&data, "g");
        let (rw, empty) = reweigh(&d).unwrap();
        prop_assert_eq!(rw.len(), d.len());
        prop_assert!((rw.total_weight() - d.total_weight()).abs() < 1e-9);
        let total = rw.total_weight();
        for key in d.group_keys() {
            let mass = |pred: &dyn Fn(&Record) -> bool| -> f64 {
                rw.records().iter().enumerate().filter(|(_, r)| pred(r)).map(|(i, _)| rw.weight(i)).sum()
            };
            let p_a = mass(&|r| r.a == key) / total;
            for y in 0..2u8 {
                if empty.iter().any(|c| c.group == key && c.y == y) {
                    continue;
                }
                let p_y = mass(&|r| r.y == y) / total;
                let p_ay = mass(&|r| r.a == key && r.y == y) / total;
                prop_assert!((p_ay - p_a * p_y).abs() < 1e-9, "{key} y={y}: {p_ay} vs {}", p_a * p_y);
            }
        }
    }

    #[test]
    fn poisoning_flips_only_positive_labels_of_one_group(
        data in rows(2, 80),
        fraction in 0.05..1.0f64,
        seed in any::<u64>(),
    ) {
        let d = dataset(&data, "g");
        let (p, summary) = poison_labels(&d, fraction, seed).unwrap();
        let eligible = d.records().iter().filter(|r| r.a == summary.group && r.y == 1).count();
        prop_assert_eq!(summary.flipped.len(), (fraction * eligible as f64).ceil() as usize);
        for (before, after) in d.records().iter().zip(p.records()) {
            if summary.flipped.contains(&before.id) {
                prop_assert_eq!((before.y, after.y), (1, 0));
                prop_assert_eq!(&before.a, &summary.group);
            } else {
                prop_assert_eq!(before.y, after.y);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(data in rows(3, 40)) {
        let d = dataset(&data, "g");
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), d.schema()).unwrap();
        prop_assert_eq!(back.records(), d.records());
    }

    #[test]
    fn cubic_bases_are_a_nonnegative_partition_of_unity(
        mut interior in prop::collection::vec(0.01..0.99f64, 0..8),
        x in -0.5..1.5f64,
    ) {
        interior.sort_by(f64::total_cmp);
        let k = KnotVector::clamped(0.0, 1.0, &interior);
        let (start, v) = k.nonzero(x);
        prop_assert!(v.iter().all(|&b| b >= -1e-15));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // The recursion is zero at the upper end of the range by its
        // half-open spans; the fast path assigns that point to the last span.
        let xc = x.clamp(0.0, 1.0);
        for (r, b) in v.iter().enumerate().filter(|_| xc < 1.0) {
            prop_assert!((b - bspline_basis(start + r, CUBIC, &k, xc)).abs() < 1e-12);
        }
        let basis = MarginalBasis::Spline { knots: k.clone() };
        let dense: f64 = (0..basis.size()).map(|j| basis.value(j, x)).sum();
        prop_assert!((dense - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_variance_identity_holds(p1 in 0.0..1.0f64, p2 in 0.0..1.0f64) {
        prop_assume!((1.0 - (p1 + p2)).abs() > 1e-3);
        prop_assert!(scaled_variance_identity(p1, p2).unwrap() <= 1e-12);
    }
}

proptest! {
    // Each case runs two full backfits per metric.
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fif_reports_are_deterministic_and_rank_consistently(
        data in rows(2, 120),
        t0 in 0.2..0.8f64,
        t1 in 0.2..0.8f64,
        top in 1usize..4,
    ) {
        let d = dataset(&data, "g");
        let m = FnPredictor(threshold(t0, t1));
        for kind in MetricKind::ALL {
            let one = FifOptions { threads: 1, ..FifOptions::default() };
            let (a, b) = match (fif(kind, &m, &d, 2, &one), fif(kind, &m, &d, 2, &FifOptions::default())) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(a), Err(b)) => {
                    prop_assert_eq!(a.to_string(), b.to_string());
                    continue;
                }
                (a, b) => return Err(TestCaseError::fail(format!("{a:?} vs {b:?}"))),
            };
            prop_assert_eq!(fif_json(&a, top).to_string(), fif_json(&b, top).to_string());
            prop_assert!(a.entries.iter().all(|e| e.w.is_finite()));
            let ranked = rank_and_residual(&a, top);
            prop_assert_eq!(ranked.kept.len(), top.min(a.entries.len()));
            let kept: f64 = ranked.kept.iter().map(|e| e.w).sum();
            prop_assert!((kept + ranked.residual - a.estimated_bias).abs() < 1e-12);
            prop_assert!(ranked.kept.windows(2).all(|w| w[0].w.abs() >= w[1].w.abs()));
        }
    }
}
