use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FeatureSet, FeatureSpec};
use super::report::ExperimentReport;
use super::runner::{run_experiment_with, Forecaster, StandardForecaster};
use crate::error::{Error, Result};
use crate::manifest::LoadedData;
use crate::model::ModelKind;
use crate::timeseries::Frequency;
use crate::windowing::Subperiod;

/// `100·(base − variant)/base`; positive when the variant is better.
pub fn percent_reduction(base: f64, variant: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::UndefinedMetric("baseline NRMSE is zero; percentage undefined".into()));
    }
    Ok(100.0 * (base - variant) / base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagAblationCell {
    pub period: Subperiod,
    pub model: ModelKind,
    pub frequency: Frequency,
    pub horizon: usize,
    pub baseline_nrmse: f64,
    pub lagged_nrmse: f64,
    pub percent_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagAblation {
    pub lags: usize,
    pub cells: Vec<LagAblationCell>,
    pub baseline: ExperimentReport,
    pub lagged: ExperimentReport,
}

pub fn lag_ablation(config: &ExperimentConfig, data: &LoadedData) -> Result<LagAblation> {
    lag_ablation_with(config, data, &StandardForecaster)
}

/// Runs the configuration without and with `lag_order` target lags.
/// Cells where either side has no evaluated window are left out.
pub fn lag_ablation_with(config: &ExperimentConfig, data: &LoadedData, forecaster: &dyn Forecaster) -> Result<LagAblation> {
    let mut base_cfg = config.clone();
    base_cfg.features.target_lags = 0;
    let mut lag_cfg = config.clone();
    lag_cfg.features.target_lags = config.lag_order;
    let baseline = run_experiment_with(&base_cfg, data, forecaster)?;
    let lagged = run_experiment_with(&lag_cfg, data, forecaster)?;
    let mut cells = Vec::new();
    for &period in &config.periods {
        for spec in &config.models {
            for &frequency in &config.frequencies {
                for &horizon in &config.horizons {
                    let agg = |r: &ExperimentReport| r.cell(period, frequency, horizon, spec.kind).and_then(|c| c.aggregate);
                    let (Some(b), Some(v)) = (agg(&baseline), agg(&lagged)) else {
                        continue;
                    };
                    cells.push(LagAblationCell {
                        period,
                        model: spec.kind,
                        frequency,
                        horizon,
                        baseline_nrmse: b.nrmse,
                        lagged_nrmse: v.nrmse,
                        percent_reduction: percent_reduction(b.nrmse, v.nrmse)?,
                    });
                }
            }
        }
    }
    Ok(LagAblation {
        lags: config.lag_order,
        cells,
        baseline,
        lagged,
    })
}

impl LagAblation {
    /// Rows (period, model); columns `{freq}_h{h}` holding signed percentages.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let cfg = &self.baseline.config;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["period".to_string(), "model".to_string()];
        for f in &cfg.frequencies {
            for h in &cfg.horizons {
                header.push(format!("{f}_h{h}"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for &p in &cfg.periods {
            for spec in &cfg.models {
                let mut row = vec![p.to_string(), spec.kind.label().to_string()];
                for &f in &cfg.frequencies {
                    for &h in &cfg.horizons {
                        let cell = self
                            .cells
                            .iter()
                            .find(|c| c.period == p && c.model == spec.kind && c.frequency == f && c.horizon == h);
                        row.push(cell.map_or_else(|| "NA".into(), |c| format!("{:.2}", c.percent_reduction)));
                    }
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateCell {
    pub period: Subperiod,
    pub model: ModelKind,
    pub frequency: Frequency,
    pub horizon: usize,
    pub feature_set: String,
    pub nrmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateAblation {
    /// Labels in evaluation order, calendar-only first.
    pub feature_sets: Vec<String>,
    pub cells: Vec<CovariateCell>,
}

/// Calendar-only, then calendar plus the first 1, 2, … covariates.
pub fn incremental_feature_sets(covariates: &[String]) -> Vec<FeatureSpec> {
    (0..=covariates.len())
        .map(|k| FeatureSpec {
            set: if k == 0 {
                FeatureSet::CalendarOnly
            } else {
                FeatureSet::Subset {
                    columns: covariates[..k].to_vec(),
                }
            },
            include_calendar: true,
            target_lags: 0,
        })
        .collect()
}

pub fn incremental_covariate_ablation(config: &ExperimentConfig, data: &LoadedData) -> Result<CovariateAblation> {
    incremental_covariate_ablation_with(config, data, &StandardForecaster)
}

pub fn incremental_covariate_ablation_with(
    config: &ExperimentConfig,
    data: &LoadedData,
    forecaster: &dyn Forecaster,
) -> Result<CovariateAblation> {
    for c in &config.covariates {
        if !data.has(c) {
            return Err(Error::Config(format!("covariate `{c}` is not in the data manifest")));
        }
    }
    let mut feature_sets = Vec::new();
    let mut cells = Vec::new();
    for features in incremental_feature_sets(&config.covariates) {
        let cfg = ExperimentConfig {
            features,
            ..config.clone()
        };
        let label = cfg.features.label();
        let report = run_experiment_with(&cfg, data, forecaster)?;
        for c in &report.cells {
            if let Some(a) = c.aggregate {
                cells.push(CovariateCell {
                    period: c.period,
                    model: c.model,
                    frequency: c.frequency,
                    horizon: c.horizon,
                    feature_set: label.clone(),
                    nrmse: a.nrmse,
                    mae: a.mae,
                });
            }
        }
        feature_sets.push(label);
    }
    Ok(CovariateAblation { feature_sets, cells })
}

impl CovariateAblation {
    /// NRMSE per feature set for one (period, model, frequency, horizon), in
    /// evaluation order; `None` where the cell produced no windows.
    pub fn series(&self, period: Subperiod, model: ModelKind, frequency: Frequency, horizon: usize) -> Vec<Option<f64>> {
        self.feature_sets
            .iter()
            .map(|fs| {
                self.cells
                    .iter()
                    .find(|c| {
                        c.period == period && c.model == model && c.frequency == frequency && c.horizon == horizon && &c.feature_set == fs
                    })
                    .map(|c| c.nrmse)
            })
            .collect()
    }

    /// Feature set whose addition gave the largest NRMSE drop over its
    /// predecessor.
    pub fn largest_drop(&self, period: Subperiod, model: ModelKind, frequency: Frequency, horizon: usize) -> Option<&str> {
        let s = self.series(period, model, frequency, horizon);
        let mut best: Option<(usize, f64)> = None;
        for i in 1..s.len() {
            if let (Some(prev), Some(cur)) = (s[i - 1], s[i]) {
                let drop = prev - cur;
                if best.is_none_or(|(_, b)| drop > b) {
                    best = Some((i, drop));
                }
            }
        }
        best.map(|(i, _)| self.feature_sets[i].as_str())
    }

    /// Long format grouped by (period, model, frequency, horizon).
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "model", "frequency", "horizon", "feature_set", "nrmse", "mae"])
            .map_err(csv_err)?;
        let mut rows: Vec<&CovariateCell> = self.cells.iter().collect();
        let set_rank = |c: &CovariateCell| self.feature_sets.iter().position(|f| f == &c.feature_set);
        // Stable sort keeps config order within each group.
        rows.sort_by_key(|c| (c.period, c.model as u8, c.frequency as u8, c.horizon, set_rank(c)));
        for c in rows {
            w.write_record([
                c.period.to_string(),
                c.model.label().to_string(),
                c.frequency.to_string(),
                c.horizon.to_string(),
                c.feature_set.clone(),
                format!("{:.6}", c.nrmse),
                format!("{:.6}", c.mae),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv output: {e}"))
}
