//! The six forecaster kinds behind one fitted-model interface.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gru::{fit_gru, GruHyperparams, GruModel};
use crate::interpret::{coefficient_importance, split_gain_importance, ImportanceReport};
use crate::linear::{fit_lasso, fit_ridge, LinearHyperparams, LinearModel};
use crate::tree::{fit_extra_trees, fit_gbm, EnsembleModel, TreeHyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lasso,
    Ridge,
    Etr,
    Xgb,
    Lgbm,
    Gru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lasso,
        ModelKind::Ridge,
        ModelKind::Etr,
        ModelKind::Xgb,
        ModelKind::Lgbm,
        ModelKind::Gru,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Lasso => "LASSO",
            ModelKind::Ridge => "RIDGE",
            ModelKind::Etr => "ETR",
            ModelKind::Xgb => "XGB",
            ModelKind::Lgbm => "LGBM",
            ModelKind::Gru => "GRU",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, ModelKind::Etr | ModelKind::Xgb | ModelKind::Lgbm)
    }

    /// Shrinkage used by the boosted kinds unless configured otherwise.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelKind::Xgb => 0.3,
            _ => 0.1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Linear(LinearHyperparams),
    Tree(TreeHyperparams),
    Gru(GruHyperparams),
}

impl Hyperparams {
    /// Same hyperparameters with the random seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Hyperparams::Linear(_) => {}
            Hyperparams::Tree(t) => t.seed = seed,
            Hyperparams::Gru(g) => g.seed = seed,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedModel {
    Linear(LinearModel),
    Ensemble(EnsembleModel),
    Gru(GruModel),
}

pub fn fit_model(kind: ModelKind, hp: &Hyperparams, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<FittedModel> {
    let mismatch = || Error::Config(format!("hyperparameters {hp:?} do not belong to {kind}"));
    Ok(match (kind, hp) {
        (ModelKind::Lasso, Hyperparams::Linear(h)) => FittedModel::Linear(fit_lasso(x, y, *h)?),
        (ModelKind::Ridge, Hyperparams::Linear(h)) => FittedModel::Linear(fit_ridge(x, y, *h)?),
        (ModelKind::Etr, Hyperparams::Tree(h)) => FittedModel::Ensemble(fit_extra_trees(x, y, h)?),
        (ModelKind::Xgb | ModelKind::Lgbm, Hyperparams::Tree(h)) => FittedModel::Ensemble(fit_gbm(x, y, h)?),
        (ModelKind::Gru, Hyperparams::Gru(h)) => FittedModel::Gru(fit_gru(x, y, h)?.0),
        _ => return Err(mismatch()),
    })
}

/// Common interface of fitted forecasters.
pub trait ForecastModel: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;

    /// Predicts rows of `x` that directly follow the rows of `context`.
    /// Only sequence models look at the context.
    fn predict_with_context(&self, context: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let _ = context;
        self.predict(x)
    }

    fn describe(&self) -> String;

    fn native_importance(&self, feature_names: &[String]) -> Result<ImportanceReport>;
}

impl ForecastModel for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.n_features(),
            FittedModel::Ensemble(m) => m.n_features,
            FittedModel::Gru(m) => m.n_features(),
        }
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Ensemble(m) => m.predict(x),
            FittedModel::Gru(m) => m.predict(x),
        }
    }

    fn predict_with_context(&self, context: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedModel::Gru(m) => m.predict_with_context(context, x),
            other => other.predict(x),
        }
    }

    fn describe(&self) -> String {
        match self {
            FittedModel::Linear(m) => {
                let nonzero = m.coefficients.iter().filter(|b| **b != 0.0).count();
                format!(
                    "{:?} alpha={} nonzero={}/{} converged={}",
                    m.kind,
                    m.alpha,
                    nonzero,
                    m.n_features(),
                    m.converged
                )
            }
            FittedModel::Ensemble(m) => format!(
                "{:?} trees={} max_depth={} learning_rate={}",
                m.kind,
                m.trees.len(),
                m.trees.iter().map(|t| t.depth()).max().unwrap_or(0),
                m.learning_rate
            ),
            FittedModel::Gru(m) => format!(
                "GRU layers={} hidden={} lookback={} activation={:?}",
                m.params.layers.len(),
                m.params.hidden(),
                m.lookback,
                m.params.activation
            ),
        }
    }

    fn native_importance(&self, feature_names: &[String]) -> Result<ImportanceReport> {
        match self {
            FittedModel::Linear(m) => coefficient_importance(m, feature_names),
            FittedModel::Ensemble(m) => split_gain_importance(m, feature_names),
            FittedModel::Gru(_) => Err(Error::Method(
                "GRU models have no native importance; use permutation or exact Shapley attribution".into(),
            )),
        }
    }
}
