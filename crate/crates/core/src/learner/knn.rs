use serde::{Deserialize, Serialize};

use super::{check_width, Dataset, Regressor};
use crate::error::{Error, Result};

/// k-nearest-neighbours regressor on standardised features.
///
/// Features with zero spread in the training data get `std = 0` and are
/// left out of the distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub train_features: Vec<Vec<f64>>,
    pub train_targets: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

pub fn fit_knn(dataset: &Dataset, k: usize) -> Result<KnnModel> {
    dataset.validate()?;
    let n = dataset.n_rows();
    if k < 1 || k > n {
        return Err(Error::Config(format!("k must lie in [1, {n}], got {k}")));
    }
    let d = dataset.n_features();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for f in 0..d {
        let mean = dataset.features.iter().map(|r| r[f]).sum::<f64>() / n as f64;
        let var = dataset.features.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n as f64;
        means[f] = mean;
        stds[f] = var.sqrt();
    }
    let mut model = KnnModel {
        k,
        means,
        stds,
        train_features: Vec::with_capacity(n),
        train_targets: dataset.targets.clone(),
        feature_names: dataset.feature_names.clone(),
        target_names: dataset.target_names.clone(),
    };
    model.train_features = dataset.features.iter().map(|r| model.standardise(r)).collect();
    Ok(model)
}

impl KnnModel {
    fn standardise(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }
}

impl Regressor for KnnModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn n_outputs(&self) -> usize {
        self.target_names.len()
    }

    /// Mean target of the `k` nearest rows; distance ties go to the lower
    /// training index.
    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_width(self.n_features(), row)?;
        let query = self.standardise(row);
        let mut dist: Vec<(f64, usize)> = self
            .train_features
            .iter()
            .enumerate()
            .map(|(i, x)| (x.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance);
        }
        let mut out = vec![0.0; self.n_outputs()];
        for &(_, i) in &dist[..self.k] {
            for (o, y) in out.iter_mut().zip(&self.train_targets[i]) {
                *o += y;
            }
        }
        for o in &mut out {
            *o /= self.k as f64;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataset {
        Dataset::new(
            vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 5.0], vec![10.0, 5.0]],
            vec![vec![1.0], vec![2.0], vec![3.0], vec![10.0]],
            vec!["x".into(), "const".into()],
            vec!["y".into()],
        )
        .unwrap()
    }

    #[test]
    fn k1_returns_training_target() {
        let d = ds();
        let m = fit_knn(&d, 1).unwrap();
        for (x, y) in d.features.iter().zip(&d.targets) {
            assert_eq!(&m.predict_row(x).unwrap(), y);
        }
        assert_eq!(m.stds[1], 0.0);
    }

    #[test]
    fn k_equals_n_is_global_mean() {
        let m = fit_knn(&ds(), 4).unwrap();
        assert_eq!(m.predict_row(&[-100.0, 3.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        // query at 0.5 is equidistant from rows 0 and 1
        let m = fit_knn(&ds(), 1).unwrap();
        assert_eq!(m.predict_row(&[0.5, 5.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn invalid_k() {
        assert!(fit_knn(&ds(), 0).is_err());
        assert!(fit_knn(&ds(), 5).is_err());
    }
}
