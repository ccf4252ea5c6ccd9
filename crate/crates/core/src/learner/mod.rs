//! Multi-output regression from scratch.
//!
//! Gradient-boosted CART ensembles (one independent booster per output,
//! squared-error loss) and a standardised k-nearest-neighbours regressor,
//! plus a k-fold selection harness.

mod gbt;
mod knn;
mod selection;
mod tree;

use serde::{Deserialize, Serialize};

pub use gbt::{fit_gbt, GbtModel, GbtOutput};
pub use knn::{fit_knn, KnnModel};
pub use selection::{model_selection, CandidateScore, CandidateSpec, SelectionReport};
pub use tree::{fit_tree, RegressionTree, TreeNode};

use crate::error::{Error, Result};

/// Row-major training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            features,
            targets,
            feature_names,
            target_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::EmptyDataset("dataset has no rows".into()));
        }
        if self.features.len() != self.targets.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} target rows",
                self.features.len(),
                self.targets.len()
            )));
        }
        let (d, m) = (self.feature_names.len(), self.target_names.len());
        for (i, (x, y)) in self.features.iter().zip(&self.targets).enumerate() {
            if x.len() != d || y.len() != m {
                return Err(Error::Dimension(format!(
                    "row {i} has {} features and {} targets, expected {d} and {m}",
                    x.len(),
                    y.len()
                )));
            }
            if x.iter().chain(y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn target_column(&self, j: usize) -> Vec<f64> {
        self.targets.iter().map(|row| row[j]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            targets: rows.iter().map(|&i| self.targets[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }
}

/// Hyperparameters shared by the tree learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Anything that maps a feature row to one prediction per output.
pub trait Regressor {
    fn n_features(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|row| self.predict_row(row)).collect()
    }
}

pub(crate) fn check_width(expected: usize, row: &[f64]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::Dimension(format!(
            "model expects {expected} features, got {}",
            row.len()
        )));
    }
    Ok(())
}

/// A fitted model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Gbt(GbtModel),
    Knn(KnnModel),
}

impl Model {
    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Gbt(m) => &m.feature_names,
            Model::Knn(m) => &m.feature_names,
        }
    }

    pub fn target_names(&self) -> &[String] {
        match self {
            Model::Gbt(m) => &m.target_names,
            Model::Knn(m) => &m.target_names,
        }
    }
}

impl Regressor for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Gbt(m) => m.n_features(),
            Model::Knn(m) => m.n_features(),
        }
    }

    fn n_outputs(&self) -> usize {
        match self {
            Model::Gbt(m) => m.n_outputs(),
            Model::Knn(m) => m.n_outputs(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Gbt(m) => m.predict_row(row),
            Model::Knn(m) => m.predict_row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub name: String,
    pub rmse: f64,
    /// Absent when the test targets have zero variance.
    pub r2: Option<f64>,
}

/// Per-output RMSE and R² on a held-out set.
pub fn evaluate<M: Regressor + ?Sized>(model: &M, test: &Dataset) -> Result<Vec<OutputMetrics>> {
    if test.n_rows() == 0 {
        return Err(Error::EmptyDataset("empty test set".into()));
    }
    if test.n_targets() != model.n_outputs() {
        return Err(Error::Dimension(format!(
            "model has {} outputs, test set {}",
            model.n_outputs(),
            test.n_targets()
        )));
    }
    let predictions = model.predict(&test.features)?;
    Ok((0..test.n_targets())
        .map(|j| {
            let actual = test.target_column(j);
            let predicted: Vec<f64> = predictions.iter().map(|p| p[j]).collect();
            let (rmse, r2) = rmse_r2(&actual, &predicted);
            OutputMetrics {
                name: test.target_names[j].clone(),
                rmse,
                r2,
            }
        })
        .collect())
}

pub(crate) fn rmse_r2(actual: &[f64], predicted: &[f64]) -> (f64, Option<f64>) {
    let n = actual.len() as f64;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { Some(1.0 - sse / sst) } else { None };
    ((sse / n).sqrt(), r2)
}
