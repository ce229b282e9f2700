use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gru::{Activation, GruHyperparams, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LOOKBACK, HIDDEN_UNITS_GRID, LAYERS_GRID};
use crate::linear::{LinearHyperparams, ALPHA_GRID};
use crate::model::{Hyperparams, ModelKind};
use crate::timeseries::Frequency;
use crate::tree::{MaxFeatures, TreeHyperparams, MAX_DEPTH_GRID, N_ESTIMATORS_GRID};
use crate::windowing::{Subperiod, YearMonth};

pub const HORIZONS: [usize; 3] = [1, 5, 10];
const MAX_FEATURES_GRID: [MaxFeatures; 2] = [MaxFeatures::Sqrt, MaxFeatures::Log2];
const ACTIVATION_GRID: [Activation; 2] = [Activation::Sigmoid, Activation::Relu];

/// Search-space restriction for one model kind. Unset lists mean the full
/// grid for that kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_estimators: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<Vec<MaxFeatures>>,
    /// Boosting shrinkage; not searched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Vec<Activation>>,
    /// GRU training settings; not searched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookback: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gru_learning_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub grid: GridSpec,
}

fn subset<T: Copy + PartialEq + std::fmt::Debug>(
    kind: ModelKind,
    name: &str,
    chosen: &Option<Vec<T>>,
    allowed: &[T],
) -> Result<Vec<T>> {
    match chosen {
        None => Ok(allowed.to_vec()),
        Some(v) if v.is_empty() => Err(Error::Config(format!("{kind}: empty {name} grid"))),
        Some(v) => {
            for x in v {
                if !allowed.contains(x) {
                    return Err(Error::Config(format!(
                        "{kind}: {name} value {x:?} is outside the search space {allowed:?}"
                    )));
                }
            }
            Ok(v.clone())
        }
    }
}

impl ModelSpec {
    pub fn full(kind: ModelKind) -> Self {
        Self {
            kind,
            grid: GridSpec::default(),
        }
    }

    /// Grid points in search order; `seed` is filled into stochastic kinds.
    pub fn candidates(&self, seed: u64) -> Result<Vec<Hyperparams>> {
        let k = self.kind;
        let g = &self.grid;
        let foreign = |used: &[(&str, bool)]| -> Result<()> {
            for (name, set) in used {
                if *set {
                    return Err(Error::Config(format!("{k}: `{name}` does not apply to this model")));
                }
            }
            Ok(())
        };
        let tree_keys = [
            ("n_estimators", g.n_estimators.is_some()),
            ("max_depth", g.max_depth.is_some()),
            ("max_features", g.max_features.is_some()),
            ("learning_rate", g.learning_rate.is_some()),
        ];
        let gru_keys = [
            ("n_layers", g.n_layers.is_some()),
            ("hidden_units", g.hidden_units.is_some()),
            ("activation", g.activation.is_some()),
            ("lookback", g.lookback.is_some()),
            ("epochs", g.epochs.is_some()),
            ("batch_size", g.batch_size.is_some()),
            ("gru_learning_rate", g.gru_learning_rate.is_some()),
        ];
        let linear_keys = [("alpha", g.alpha.is_some())];
        let mut out = Vec::new();
        match k {
            ModelKind::Lasso | ModelKind::Ridge => {
                foreign(&tree_keys)?;
                foreign(&gru_keys)?;
                for alpha in subset(k, "alpha", &g.alpha, &ALPHA_GRID)? {
                    out.push(Hyperparams::Linear(LinearHyperparams { alpha }));
                }
            }
            ModelKind::Etr | ModelKind::Xgb | ModelKind::Lgbm => {
                foreign(&linear_keys)?;
                foreign(&gru_keys)?;
                if k == ModelKind::Etr && g.learning_rate.is_some() {
                    return Err(Error::Config("ETR: `learning_rate` does not apply to bagging".into()));
                }
                let lr = g.learning_rate.unwrap_or(k.default_learning_rate());
                if !(lr > 0.0 && lr <= 1.0) {
                    return Err(Error::Config(format!("{k}: learning_rate {lr} not in (0, 1]")));
                }
                for n_estimators in subset(k, "n_estimators", &g.n_estimators, &N_ESTIMATORS_GRID)? {
                    for max_depth in subset(k, "max_depth", &g.max_depth, &MAX_DEPTH_GRID)? {
                        for max_features in subset(k, "max_features", &g.max_features, &MAX_FEATURES_GRID)? {
                            out.push(Hyperparams::Tree(TreeHyperparams {
                                n_estimators,
                                max_depth,
                                max_features,
                                learning_rate: lr,
                                seed,
                            }));
                        }
                    }
                }
            }
            ModelKind::Gru => {
                foreign(&linear_keys)?;
                foreign(&tree_keys)?;
                let lookback = g.lookback.unwrap_or(DEFAULT_LOOKBACK);
                let epochs = g.epochs.unwrap_or(DEFAULT_EPOCHS);
                let batch = g.batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
                let lr = g.gru_learning_rate.unwrap_or(crate::gru::DEFAULT_LEARNING_RATE);
                if lookback == 0 || epochs == 0 || batch == 0 || !(lr > 0.0) {
                    return Err(Error::Config("GRU: lookback, epochs, batch_size and learning rate must be positive".into()));
                }
                for n_layers in subset(k, "n_layers", &g.n_layers, &LAYERS_GRID)? {
                    for hidden_units in subset(k, "hidden_units", &g.hidden_units, &HIDDEN_UNITS_GRID)? {
                        for activation in subset(k, "activation", &g.activation, &ACTIVATION_GRID)? {
                            out.push(Hyperparams::Gru(GruHyperparams {
                                n_layers,
                                hidden_units,
                                activation,
                                lookback,
                                epochs,
                                batch_size: Some(batch),
                                learning_rate: lr,
                                seed,
                            }));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Which input columns a run uses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureSet {
    /// Every non-target series in the manifest.
    #[default]
    Full,
    /// Calendar columns only.
    CalendarOnly,
    Subset { columns: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    #[serde(flatten)]
    pub set: FeatureSet,
    #[serde(default)]
    pub include_calendar: bool,
    /// Lagged target values appended as features (0 = none).
    #[serde(default)]
    pub target_lags: usize,
}

impl FeatureSpec {
    pub fn label(&self) -> String {
        let mut s = match &self.set {
            FeatureSet::Full => "full".to_string(),
            FeatureSet::CalendarOnly => "CalFt".to_string(),
            FeatureSet::Subset { columns } => columns.join("+"),
        };
        if self.include_calendar && self.set != FeatureSet::CalendarOnly {
            s = if s.is_empty() { "CalFt".into() } else { format!("CalFt+{s}") };
        }
        if self.target_lags > 0 {
            s.push_str(&format!("+lag{}", self.target_lags));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingSpec {
    pub start: YearMonth,
    pub end: YearMonth,
    pub window_months: u32,
    pub stride_months: u32,
    pub train_fraction: f64,
}

impl Default for RollingSpec {
    fn default() -> Self {
        Self {
            start: YearMonth { year: 2009, month: 1 },
            end: YearMonth { year: 2021, month: 12 },
            window_months: 30,
            stride_months: 6,
            train_fraction: 0.8,
        }
    }
}

fn default_periods() -> Vec<Subperiod> {
    Subperiod::ALL.to_vec()
}

fn default_frequencies() -> Vec<Frequency> {
    vec![Frequency::Daily, Frequency::Weekly]
}

fn default_horizons() -> Vec<usize> {
    HORIZONS.to_vec()
}

fn default_models() -> Vec<ModelSpec> {
    ModelKind::ALL.into_iter().map(ModelSpec::full).collect()
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn default_covariates() -> Vec<String> {
    ["oil", "gold", "tsx"].map(String::from).to_vec()
}

fn default_lag_order() -> usize {
    5
}

/// Declarative description of a backtest. Every field has a default, so
/// `{}` runs the full design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_periods")]
    pub periods: Vec<Subperiod>,
    #[serde(default = "default_frequencies")]
    pub frequencies: Vec<Frequency>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub rolling: RollingSpec,
    /// Fraction of each training span held out (at its end) for tuning.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Covariates added one at a time by the incremental ablation.
    #[serde(default = "default_covariates")]
    pub covariates: Vec<String>,
    /// Target lags added by the lag ablation.
    #[serde(default = "default_lag_order")]
    pub lag_order: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.periods.is_empty() || self.frequencies.is_empty() || self.horizons.is_empty() || self.models.is_empty() {
            return cfg("periods, frequencies, horizons and models must be nonempty".into());
        }
        for h in &self.horizons {
            if !HORIZONS.contains(h) {
                return cfg(format!("horizon {h} not in {HORIZONS:?}"));
            }
        }
        for f in &self.frequencies {
            if *f == Frequency::Monthly {
                return cfg("frequency must be daily or weekly".into());
            }
        }
        for (list, what) in [
            (has_dupes(&self.periods), "periods"),
            (has_dupes(&self.frequencies), "frequencies"),
            (has_dupes(&self.horizons), "horizons"),
            (has_dupes(&self.models.iter().map(|m| m.kind).collect::<Vec<_>>()), "models"),
        ] {
            if list {
                return cfg(format!("duplicate entries in {what}"));
            }
        }
        for m in &self.models {
            m.candidates(0)?;
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return cfg(format!("validation_fraction {} not in (0, 1)", self.validation_fraction));
        }
        let r = &self.rolling;
        if !(r.train_fraction > 0.0 && r.train_fraction < 1.0) || r.window_months == 0 || r.stride_months == 0 {
            return cfg("rolling window, stride and train fraction must be positive (fraction below 1)".into());
        }
        if r.start > r.end {
            return cfg(format!("rolling start {} after end {}", r.start, r.end));
        }
        if let FeatureSet::Subset { columns } = &self.features.set {
            if has_dupes(columns) {
                return cfg("duplicate feature columns".into());
            }
            if columns.is_empty() && !self.features.include_calendar {
                return cfg("empty feature subset without calendar features".into());
            }
        }
        if self.lag_order == 0 {
            return cfg("lag_order must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn has_dupes<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}
