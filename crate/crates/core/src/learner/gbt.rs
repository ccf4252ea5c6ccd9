use serde::{Deserialize, Serialize};

use super::{check_width, fit_tree, Dataset, RegressionTree, Regressor, TrainConfig};
use crate::error::{Error, Result};

/// One boosted ensemble per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtOutput {
    pub init_value: f64,
    pub trees: Vec<RegressionTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub outputs: Vec<GbtOutput>,
    pub learning_rate: f64,
    pub config: TrainConfig,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

/// Squared-error gradient boosting, independently per target column.
pub fn fit_gbt(dataset: &Dataset, config: &TrainConfig) -> Result<GbtModel> {
    config.validate()?;
    dataset.validate()?;
    if dataset.n_rows() < 2 {
        return Err(Error::EmptyDataset("boosting needs at least two rows".into()));
    }
    let n = dataset.n_rows();
    let outputs = (0..dataset.n_targets())
        .map(|j| {
            let target = dataset.target_column(j);
            let init_value = target.iter().sum::<f64>() / n as f64;
            let mut fitted = vec![init_value; n];
            let mut residual = vec![0.0; n];
            let mut trees = Vec::with_capacity(config.n_trees);
            for _ in 0..config.n_trees {
                for i in 0..n {
                    residual[i] = target[i] - fitted[i];
                }
                let tree = fit_tree(&dataset.features, &residual, config)?;
                for (f, row) in fitted.iter_mut().zip(&dataset.features) {
                    *f += config.learning_rate * tree.predict(row);
                }
                trees.push(tree);
            }
            Ok(GbtOutput { init_value, trees })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GbtModel {
        outputs,
        learning_rate: config.learning_rate,
        config: config.clone(),
        feature_names: dataset.feature_names.clone(),
        target_names: dataset.target_names.clone(),
    })
}

impl Regressor for GbtModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_width(self.n_features(), row)?;
        Ok(self
            .outputs
            .iter()
            .map(|out| {
                out.trees
                    .iter()
                    .fold(out.init_value, |acc, tree| acc + self.learning_rate * tree.predict(row))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_rows() -> Dataset {
        Dataset::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 3.0], vec![3.0, 2.0]],
            vec![vec![3.0, -1.0], vec![7.0, 0.5], vec![-2.0, 4.0], vec![11.0, 2.0]],
            vec!["a".into(), "b".into()],
            vec!["y".into(), "z".into()],
        )
        .unwrap()
    }

    #[test]
    fn single_deep_tree_memorises_distinct_rows() {
        let ds = four_rows();
        let cfg = TrainConfig {
            n_trees: 1,
            max_depth: 64,
            learning_rate: 1.0,
            ..TrainConfig::default()
        };
        let model = fit_gbt(&ds, &cfg).unwrap();
        for (x, y) in ds.features.iter().zip(&ds.targets) {
            assert_eq!(&model.predict_row(x).unwrap(), y);
        }
    }

    #[test]
    fn depth_zero_predicts_init_value() {
        let ds = four_rows();
        let cfg = TrainConfig {
            n_trees: 5,
            max_depth: 0,
            ..TrainConfig::default()
        };
        let model = fit_gbt(&ds, &cfg).unwrap();
        assert_eq!(model.outputs[0].trees.len(), 5);
        let p = model.predict_row(&[10.0, -4.0]).unwrap();
        assert_eq!(p, vec![4.75, 1.375]);
    }

    #[test]
    fn training_rmse_non_increasing_at_unit_rate() {
        let ds = Dataset::new(
            (0..40).map(|i| vec![i as f64, ((i * 13) % 7) as f64]).collect(),
            (0..40).map(|i| vec![((i * i) % 11) as f64 + 0.1 * i as f64]).collect(),
            vec!["a".into(), "b".into()],
            vec!["y".into()],
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for n_trees in 1..=8 {
            let cfg = TrainConfig {
                n_trees,
                max_depth: 2,
                learning_rate: 1.0,
                ..TrainConfig::default()
            };
            let m = fit_gbt(&ds, &cfg).unwrap();
            let rmse = super::super::evaluate(&m, &ds).unwrap()[0].rmse;
            assert!(rmse <= last + 1e-12, "{n_trees}: {rmse} > {last}");
            last = rmse;
        }
    }

    #[test]
    fn rejects_bad_input() {
        let ds = four_rows();
        let one = ds.subset(&[0]);
        assert!(fit_gbt(&one, &TrainConfig::default()).is_err());
        let model = fit_gbt(&ds, &TrainConfig { n_trees: 2, ..TrainConfig::default() }).unwrap();
        assert!(matches!(model.predict_row(&[1.0]), Err(Error::Dimension(_))));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(fit_gbt(&ds, &bad), Err(Error::Config(_))));
    }
}
