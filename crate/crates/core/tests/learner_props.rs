use proptest::prelude::*;

use hydrotwin_core::learner::{
    evaluate, fit_gbt, fit_knn, fit_tree, Dataset, Regressor, TrainConfig, TreeNode,
};

fn dataset() -> impl Strategy<Value = Dataset> {
    (4usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), n),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n),
        )
            .prop_map(|(x, y)| Dataset::new(x, y, vec!["a".into(), "b".into()], vec!["p".into(), "q".into()]).unwrap())
    })
}

/// Half the distance from `row` to the nearest threshold on its decision
/// path, per feature.
fn leaf_slack(node: &TreeNode, row: &[f64]) -> Vec<f64> {
    let mut slack = vec![f64::INFINITY; row.len()];
    let mut node = node;
    while let TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    } = node
    {
        slack[*feature] = slack[*feature].min((row[*feature] - threshold).abs() / 2.0);
        node = if row[*feature] <= *threshold { left } else { right };
    }
    slack
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn training_rmse_non_increasing_at_unit_rate(ds in dataset()) {
        let mut last = f64::INFINITY;
        for n_trees in 1..=6 {
            let cfg = TrainConfig { n_trees, learning_rate: 1.0, max_depth: 2, ..TrainConfig::default() };
            let m = fit_gbt(&ds, &cfg).unwrap();
            let rmse: f64 = evaluate(&m, &ds).unwrap().iter().map(|o| o.rmse).sum();
            prop_assert!(rmse <= last + 1e-9);
            last = rmse;
        }
    }

    #[test]
    fn tree_piecewise_constant(ds in dataset(), qx in -12.0f64..12.0, qy in -12.0f64..12.0, s in -1.0f64..1.0) {
        let tree = fit_tree(&ds.features, &ds.target_column(0), &TrainConfig { max_depth: 4, ..TrainConfig::default() }).unwrap();
        let q = [qx, qy];
        let slack = leaf_slack(&tree.root, &q);
        let moved: Vec<f64> = q.iter().zip(&slack).map(|(v, d)| if d.is_finite() { v + s * d * 0.99 } else { v + s }).collect();
        // a point exactly on a threshold has zero slack and cannot move
        prop_assert_eq!(tree.predict(&q), tree.predict(&moved));
    }

    #[test]
    fn knn_within_target_range(ds in dataset(), k in 1usize..4, qx in -20.0f64..20.0, qy in -20.0f64..20.0) {
        let m = fit_knn(&ds, k.min(ds.n_rows())).unwrap();
        let p = m.predict_row(&[qx, qy]).unwrap();
        for j in 0..2 {
            let col = ds.target_column(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            prop_assert!(p[j] >= lo - 1e-12 && p[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn knn_standardisation_invariance(ds in dataset(), scale in 0.1f64..50.0, shift in -100.0f64..100.0, qx in -10.0f64..10.0, qy in -10.0f64..10.0) {
        let m = fit_knn(&ds, 3.min(ds.n_rows())).unwrap();
        let mut scaled = ds.clone();
        for row in &mut scaled.features {
            row[0] = row[0] * scale + shift;
        }
        let ms = fit_knn(&scaled, 3.min(ds.n_rows())).unwrap();
        let a = m.predict_row(&[qx, qy]).unwrap();
        let b = ms.predict_row(&[qx * scale + shift, qy]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn refits_are_bit_identical(ds in dataset()) {
        let cfg = TrainConfig { n_trees: 10, ..TrainConfig::default() };
        prop_assert_eq!(fit_gbt(&ds, &cfg).unwrap(), fit_gbt(&ds, &cfg).unwrap());
        prop_assert_eq!(fit_knn(&ds, 2).unwrap(), fit_knn(&ds, 2).unwrap());
    }
}
