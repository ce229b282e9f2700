use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelKind};
use crate::timeseries::Frequency;
use crate::windowing::{DateInterval, Subperiod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub index: usize,
    /// Dates of the (purged) training rows.
    pub train: DateInterval,
    pub test: DateInterval,
    pub n_train: usize,
    pub n_test: usize,
    pub hyperparams: Hyperparams,
    pub validation_nrmse: Option<f64>,
    pub nrmse: f64,
    pub mae: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub index: usize,
    pub reason: String,
}

/// Means over the evaluated windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub nrmse: f64,
    pub mae: f64,
    pub n_windows: usize,
}

impl Aggregate {
    pub fn of(windows: &[WindowResult]) -> Option<Self> {
        if windows.is_empty() {
            return None;
        }
        let n = windows.len() as f64;
        Some(Self {
            nrmse: windows.iter().map(|w| w.nrmse).sum::<f64>() / n,
            mae: windows.iter().map(|w| w.mae).sum::<f64>() / n,
            n_windows: windows.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub period: Subperiod,
    pub frequency: Frequency,
    pub horizon: usize,
    pub model: ModelKind,
    pub features: String,
    pub windows: Vec<WindowResult>,
    pub skipped: Vec<SkippedWindow>,
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fingerprint: String,
    pub target: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl ExperimentReport {
    /// Copy with wall-clock timings zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for c in &mut r.cells {
            for w in &mut c.windows {
                w.fit_seconds = 0.0;
            }
        }
        r
    }

    /// Canonical JSON without timings.
    pub fn payload_json(&self) -> String {
        serde_json::to_string(&self.without_timing()).expect("report serializes")
    }

    pub fn cell(&self, period: Subperiod, frequency: Frequency, horizon: usize, model: ModelKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.period == period && c.frequency == frequency && c.horizon == horizon && c.model == model)
    }

    /// Model with the lowest mean NRMSE in one (period, frequency, horizon).
    /// Earlier models in the configuration win ties.
    pub fn best_model(&self, period: Subperiod, frequency: Frequency, horizon: usize) -> Option<ModelKind> {
        let mut best: Option<(ModelKind, f64)> = None;
        for c in &self.cells {
            if c.period != period || c.frequency != frequency || c.horizon != horizon {
                continue;
            }
            if let Some(a) = c.aggregate {
                if best.is_none_or(|(_, b)| a.nrmse < b) {
                    best = Some((c.model, a.nrmse));
                }
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
    }

    /// One row per evaluated window.
    pub fn write_windows_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "period", "frequency", "horizon", "model", "features", "window", "train_start", "train_end", "test_start",
            "test_end", "n_train", "n_test", "hyperparams", "validation_nrmse", "nrmse", "mae",
        ])
        .map_err(csv_err)?;
        for c in &self.cells {
            for win in &c.windows {
                w.write_record([
                    c.period.to_string(),
                    c.frequency.to_string(),
                    c.horizon.to_string(),
                    c.model.label().to_string(),
                    c.features.clone(),
                    win.index.to_string(),
                    win.train.start.to_string(),
                    win.train.end.to_string(),
                    win.test.start.to_string(),
                    win.test.end.to_string(),
                    win.n_train.to_string(),
                    win.n_test.to_string(),
                    serde_json::to_string(&win.hyperparams)?,
                    fmt_opt(win.validation_nrmse),
                    format!("{:.6}", win.nrmse),
                    format!("{:.6}", win.mae),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }

    /// Rows are (period, model); columns are `{freq}_h{h}_{metric}`.
    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let cfg = &self.config;
        let mut header = vec!["period".to_string(), "model".to_string()];
        for f in &cfg.frequencies {
            for h in &cfg.horizons {
                for m in ["nrmse", "mae"] {
                    header.push(format!("{f}_h{h}_{m}"));
                }
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header).map_err(csv_err)?;
        for &p in &cfg.periods {
            for spec in &cfg.models {
                let mut row = vec![p.to_string(), spec.kind.label().to_string()];
                for &f in &cfg.frequencies {
                    for &h in &cfg.horizons {
                        let agg = self.cell(p, f, h, spec.kind).and_then(|c| c.aggregate);
                        row.push(fmt_opt(agg.map(|a| a.nrmse)));
                        row.push(fmt_opt(agg.map(|a| a.mae)));
                    }
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }

    /// Long format, one row per (cell, metric), for plotting.
    pub fn write_long_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "frequency", "horizon", "model", "metric", "value", "n_windows"])
            .map_err(csv_err)?;
        for c in &self.cells {
            let Some(a) = c.aggregate else { continue };
            for (metric, value) in [("nrmse", a.nrmse), ("mae", a.mae)] {
                w.write_record([
                    c.period.to_string(),
                    c.frequency.to_string(),
                    c.horizon.to_string(),
                    c.model.label().to_string(),
                    metric.to_string(),
                    format!("{value:.6}"),
                    a.n_windows.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv output: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinearHyperparams;
    use chrono::NaiveDate;

    fn window(nrmse: f64) -> WindowResult {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        WindowResult {
            index: 0,
            train: DateInterval { start: d, end: d },
            test: DateInterval { start: d, end: d },
            n_train: 1,
            n_test: 1,
            hyperparams: Hyperparams::Linear(LinearHyperparams { alpha: 1.0 }),
            validation_nrmse: None,
            nrmse,
            mae: nrmse / 2.0,
            fit_seconds: 1.5,
        }
    }

    fn cell(model: ModelKind, windows: Vec<WindowResult>) -> CellReport {
        CellReport {
            period: Subperiod::Covid,
            frequency: Frequency::Daily,
            horizon: 1,
            model,
            features: "full".into(),
            aggregate: Aggregate::of(&windows),
            windows,
            skipped: vec![],
        }
    }

    #[test]
    fn aggregates_and_best_model() {
        let r = ExperimentReport {
            fingerprint: "x".into(),
            target: "fx".into(),
            config: ExperimentConfig::default(),
            cells: vec![
                cell(ModelKind::Lasso, vec![window(0.2), window(0.6)]),
                cell(ModelKind::Ridge, vec![window(0.3)]),
                cell(ModelKind::Etr, vec![window(0.3)]),
                cell(ModelKind::Xgb, vec![]),
            ],
        };
        let a = r.cells[0].aggregate.unwrap();
        assert!((a.nrmse - 0.4).abs() < 1e-15);
        assert_eq!(a.n_windows, 2);
        assert!(r.cells[3].aggregate.is_none());
        // RIDGE and ETR tie; the earlier one wins.
        assert_eq!(r.best_model(Subperiod::Covid, Frequency::Daily, 1), Some(ModelKind::Ridge));
        assert_eq!(r.best_model(Subperiod::All, Frequency::Daily, 1), None);
        let back = ExperimentReport::from_json(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.without_timing().cells[0].windows[0].fit_seconds, 0.0);

        let mut buf = Vec::new();
        r.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("period,model,daily_h1_nrmse,daily_h1_mae,daily_h5_nrmse"));
        assert!(text.contains("covid,LASSO,0.400000,0.200000"));
        assert!(text.contains("all,GRU,NA,NA"));
    }
}
