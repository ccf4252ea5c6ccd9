//! Inflow forecasting: seasonal-naive and moving-average baselines plus a
//! recursive boosted-tree model on lag, calendar and weather features.

use chrono::{DateTime, Datelike, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{fit_gbt, Dataset, Regressor, TrainConfig};

/// Equally spaced observations starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: DateTime<Utc>, step_minutes: u32, values: Vec<f64>) -> Result<Self> {
        if step_minutes < 1 {
            return Err(Error::Config("step_minutes must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series value at index {i}")));
        }
        Ok(Self {
            start,
            step_minutes,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(i64::from(self.step_minutes) * i as i64)
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    /// Instant immediately after the last observation.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }
}

/// Calendar and weather covariates for one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExogRow {
    /// 0 = Monday.
    pub day_of_week: u8,
    pub rainfall_mm: f64,
    pub temp_max_c: f64,
}

impl ExogRow {
    pub fn at(ts: DateTime<Utc>, rainfall_mm: f64, temp_max_c: f64) -> Self {
        Self {
            day_of_week: ts.weekday().num_days_from_monday() as u8,
            rainfall_mm,
            temp_max_c,
        }
    }

    fn push_features(&self, out: &mut Vec<f64>) {
        for d in 0..7 {
            out.push(if self.day_of_week == d { 1.0 } else { 0.0 });
        }
        out.push(self.rainfall_mm);
        out.push(self.temp_max_c);
    }
}

/// Covariates for the history followed by the forecast horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogFeatures {
    pub rows: Vec<ExogRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    SeasonalNaive,
    MovingAverage,
    FeatureModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub values: Vec<f64>,
    pub method: ForecastMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mae: f64,
    pub rmse: f64,
    pub mase: Option<f64>,
}

/// Forecaster selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ForecastSpec {
    SeasonalNaive { period: usize },
    MovingAverage { window: usize },
    FeatureModel { period: usize, train: TrainConfig },
}

impl ForecastSpec {
    /// Largest history the method needs.
    pub fn min_history(&self) -> usize {
        match self {
            ForecastSpec::SeasonalNaive { period } => *period,
            ForecastSpec::MovingAverage { window } => *window,
            ForecastSpec::FeatureModel { period, .. } => 2 * period,
        }
    }

    pub fn forecast(&self, series: &TimeSeries, exog: Option<&ExogFeatures>, horizon: usize) -> Result<ForecastResult> {
        match self {
            ForecastSpec::SeasonalNaive { period } => seasonal_naive(series, *period, horizon),
            ForecastSpec::MovingAverage { window } => moving_average(series, *window, horizon),
            ForecastSpec::FeatureModel { period, train } => {
                let exog = exog.ok_or_else(|| Error::Coverage("feature model needs exogenous features".into()))?;
                feature_forecast(series, exog, horizon, *period, train)
            }
        }
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

/// Repeat the last observed season.
pub fn seasonal_naive(series: &TimeSeries, period: usize, horizon: usize) -> Result<ForecastResult> {
    check_positive("period", period)?;
    check_positive("horizon", horizon)?;
    let n = series.len();
    if n < period {
        return Err(Error::InsufficientHistory {
            needed: period,
            available: n,
        });
    }
    Ok(ForecastResult {
        values: (0..horizon).map(|h| series.values[n - period + h % period]).collect(),
        method: ForecastMethod::SeasonalNaive,
    })
}

/// Flat forecast at the mean of the last `window` observations.
pub fn moving_average(series: &TimeSeries, window: usize, horizon: usize) -> Result<ForecastResult> {
    check_positive("window", window)?;
    check_positive("horizon", horizon)?;
    let n = series.len();
    if n < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: n,
        });
    }
    let mean = series.values[n - window..].iter().sum::<f64>() / window as f64;
    Ok(ForecastResult {
        values: vec![mean; horizon],
        method: ForecastMethod::MovingAverage,
    })
}

fn feature_row(lag1: f64, lag_period: f64, exog: &ExogRow) -> Vec<f64> {
    let mut row = Vec::with_capacity(11);
    row.push(lag1);
    row.push(lag_period);
    exog.push_features(&mut row);
    row
}

fn feature_names() -> Vec<String> {
    let mut names = vec!["lag_1".to_string(), "lag_period".to_string()];
    for day in ["mon", "tue", "wed", "thu", "fri", "sat", "sun"] {
        names.push(format!("dow_{day}"));
    }
    names.push("rainfall_mm".into());
    names.push("temp_max_c".into());
    names
}

/// Boosted-tree forecast on (lag-1, lag-period, day-of-week, rainfall,
/// max temperature), iterated one step at a time with predictions fed back
/// as lags. Only `exog` rows `0..len + horizon` are read.
pub fn feature_forecast(
    series: &TimeSeries,
    exog: &ExogFeatures,
    horizon: usize,
    period: usize,
    config: &TrainConfig,
) -> Result<ForecastResult> {
    check_positive("period", period)?;
    check_positive("horizon", horizon)?;
    let n = series.len();
    if n < 2 * period || n < 2 {
        return Err(Error::InsufficientHistory {
            needed: (2 * period).max(2),
            available: n,
        });
    }
    if exog.rows.len() < n + horizon {
        return Err(Error::Coverage(format!(
            "{} exogenous rows for {} history steps plus horizon {horizon}",
            exog.rows.len(),
            n
        )));
    }
    let y = &series.values;
    let first = period.max(1);
    let features: Vec<Vec<f64>> = (first..n)
        .map(|i| feature_row(y[i - 1], y[i - period], &exog.rows[i]))
        .collect();
    let targets: Vec<Vec<f64>> = (first..n).map(|i| vec![y[i]]).collect();
    let dataset = Dataset::new(features, targets, feature_names(), vec!["inflow".into()])?;
    let model = fit_gbt(&dataset, config)?;

    let mut path = y.clone();
    for h in 0..horizon {
        let i = n + h;
        let row = feature_row(path[i - 1], path[i - period], &exog.rows[i]);
        path.push(model.predict_row(&row)?[0]);
    }
    Ok(ForecastResult {
        values: path.split_off(n),
        method: ForecastMethod::FeatureModel,
    })
}

/// MAE, RMSE and MASE (scaled by the in-sample seasonal-naive MAE of
/// `train`; absent when that scale is zero or undefined).
pub fn evaluate_forecast(actual: &[f64], predicted: &[f64], train: &[f64], period: usize) -> Result<AccuracyReport> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    check_positive("period", period)?;
    let n = actual.len() as f64;
    let mae = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / n;
    let rmse = (actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n).sqrt();
    let mase = if train.len() > period {
        let scale = (period..train.len())
            .map(|t| (train[t] - train[t - period]).abs())
            .sum::<f64>()
            / (train.len() - period) as f64;
        (scale > 0.0).then(|| mae / scale)
    } else {
        None
    };
    Ok(AccuracyReport { mae, rmse, mase })
}
