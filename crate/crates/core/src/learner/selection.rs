use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, fit_gbt, fit_knn, Dataset, Model, TrainConfig};
use crate::error::{Error, Result};

/// A learner configuration entered into the selection harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateSpec {
    Gbt { name: String, config: TrainConfig },
    Knn { name: String, k: usize },
}

impl CandidateSpec {
    /// Boosting with depth-0 trees: every tree is a zero leaf, so the model
    /// predicts the training mean.
    pub fn mean_predictor() -> Self {
        CandidateSpec::Gbt {
            name: "mean".into(),
            config: TrainConfig {
                n_trees: 1,
                max_depth: 0,
                ..TrainConfig::default()
            },
        }
    }

    pub fn name(&self) -> &str {
        match self {
            CandidateSpec::Gbt { name, .. } | CandidateSpec::Knn { name, .. } => name,
        }
    }

    pub fn fit(&self, dataset: &Dataset) -> Result<Model> {
        match self {
            CandidateSpec::Gbt { config, .. } => fit_gbt(dataset, config).map(Model::Gbt),
            CandidateSpec::Knn { k, .. } => fit_knn(dataset, *k).map(Model::Knn),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    /// Per fold, RMSE averaged over outputs.
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Best first.
    pub ranking: Vec<CandidateScore>,
    /// Fold index of each row.
    pub folds: Vec<usize>,
    pub best_name: String,
    /// The winning candidate refit on all rows.
    pub best: Model,
}

/// k-fold cross-validation over `candidates`, ranked by mean RMSE. Ties
/// keep the order in which candidates were listed.
pub fn model_selection(
    dataset: &Dataset,
    candidates: &[CandidateSpec],
    k_folds: usize,
    seed: u64,
) -> Result<SelectionReport> {
    dataset.validate()?;
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to select from".into()));
    }
    if k_folds < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    let n = dataset.n_rows();
    if n < k_folds {
        return Err(Error::Config(format!("{n} rows cannot fill {k_folds} folds")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k_folds;
    }

    let mut ranking = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let mut fold_rmse = Vec::with_capacity(k_folds);
        for fold in 0..k_folds {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
            let model = candidate.fit(&dataset.subset(&train))?;
            let metrics = evaluate(&model, &dataset.subset(&test))?;
            fold_rmse.push(metrics.iter().map(|m| m.rmse).sum::<f64>() / metrics.len() as f64);
        }
        let mean_rmse = fold_rmse.iter().sum::<f64>() / k_folds as f64;
        ranking.push((
            CandidateScore {
                name: candidate.name().to_string(),
                fold_rmse,
                mean_rmse,
            },
            candidate,
        ));
    }
    ranking.sort_by(|a, b| a.0.mean_rmse.total_cmp(&b.0.mean_rmse));
    let winner = ranking[0].1;
    let best = winner.fit(dataset)?;
    Ok(SelectionReport {
        best_name: winner.name().to_string(),
        ranking: ranking.into_iter().map(|(score, _)| score).collect(),
        folds,
        best,
    })
}
