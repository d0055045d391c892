mod support;

use patternscout_core::evaluation::{
    confusion, filter_dataset, metrics, pearson, Annotation, AnnotationSet, Prediction, RepoMeta,
};
use proptest::prelude::*;
use support::oracles::{confusion_recount, dataset_predicate};

fn records() -> impl Strategy<Value = Vec<(Annotation, bool)>> {
    prop::collection::btree_map((0u8..12, 0u8..5), (any::<bool>(), any::<bool>()), 1..60).prop_map(|m| {
        m.into_iter()
            .map(|((r, p), (present, detected))| {
                (
                    Annotation {
                        repo_id: format!("repo{r}"),
                        pattern: format!("pattern{p}"),
                        present,
                    },
                    detected,
                )
            })
            .collect()
    })
}

fn split(rows: &[(Annotation, bool)]) -> (Vec<Annotation>, Vec<Prediction>) {
    let truth = rows.iter().map(|(a, _)| a.clone()).collect();
    let preds = rows
        .iter()
        .map(|(a, d)| Prediction {
            repo_id: a.repo_id.clone(),
            pattern: a.pattern.clone(),
            detected: *d,
        })
        .collect();
    (truth, preds)
}

fn meta() -> impl Strategy<Value = RepoMeta> {
    (
        "[a-z]{3,8}",
        prop_oneof![0u64..30, Just(9), Just(10)],
        prop_oneof![0u64..24, Just(5), Just(6)],
        prop_oneof![0u64..200_000, Just(99), Just(100), Just(102_400), Just(102_401)],
        prop_oneof![0u64..10, Just(2), Just(3)],
        prop_oneof![0u64..20, Just(4), Just(5)],
        prop_oneof![0u64..6, Just(1), Just(2)],
    )
        .prop_map(|(repo_id, s, m, z, a, c, k)| RepoMeta {
            repo_id,
            stars: Some(s),
            active_months: Some(m),
            size_kb: Some(z),
            matching_artifacts: Some(a),
            recent_commits: Some(c),
            contributors: Some(k),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn confusion_matches_recount(rows in records()) {
        let (truth, preds) = split(&rows);
        let set = AnnotationSet::new(truth.clone()).unwrap();
        let c = confusion(&preds, &set).unwrap();
        prop_assert_eq!(c.overall, confusion_recount(&preds, &truth));
        for (pattern, cm) in &c.per_pattern {
            let sub: Vec<Prediction> = preds.iter().filter(|p| &p.pattern == pattern).cloned().collect();
            prop_assert_eq!(*cm, confusion_recount(&sub, &truth));
        }
    }

    #[test]
    fn metrics_are_permutation_invariant(
        (rows, a, b) in records().prop_flat_map(|r| (Just(r.clone()), Just(r.clone()).prop_shuffle(), Just(r).prop_shuffle()))
    ) {
        let (truth, preds) = split(&rows);
        let (shuffled_truth, _) = split(&a);
        let (_, shuffled_preds) = split(&b);
        let m1 = metrics(&confusion(&preds, &AnnotationSet::new(truth).unwrap()).unwrap().overall).unwrap();
        let m2 = metrics(&confusion(&shuffled_preds, &AnnotationSet::new(shuffled_truth).unwrap()).unwrap().overall).unwrap();
        prop_assert_eq!(m1, m2);
    }

    #[test]
    fn dataset_filter_matches_predicate(repos in prop::collection::vec(meta(), 20)) {
        let kept = filter_dataset(&repos).unwrap();
        let want: Vec<RepoMeta> = repos.iter().filter(|r| dataset_predicate(r)).cloned().collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn pearson_affine_invariance(
        xs in prop::collection::vec(-100.0..100.0f64, 3..20),
        noise in prop::collection::vec(-100.0..100.0f64, 20),
        a in 0.1..10.0f64,
        b in -50.0..50.0f64,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, n)| x + n).collect();
        let Ok(r) = pearson(&xs, &ys) else { return Ok(()) };
        let scaled: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
        prop_assert!((pearson(&xs, &scaled).unwrap() - r).abs() < 1e-9);
        let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
        prop_assert!((pearson(&xs, &neg).unwrap() + r).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}
