use std::ops::Range;
use std::time::Instant;

use chrono::NaiveDate;
use ndarray::{s, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FeatureSet, FeatureSpec, ModelSpec};
use super::report::{Aggregate, CellReport, ExperimentReport, SkippedWindow, WindowResult};
use crate::error::{Error, Result};
use crate::manifest::LoadedData;
use crate::metrics::{mae, nrmse};
use crate::model::{fit_model, FittedModel, ForecastModel, Hyperparams, ModelKind};
use crate::par;
use crate::timeseries::{add_lags, make_supervised, Frequency, SupervisedDataset};
use crate::windowing::{rolling_windows, subperiod_split, train_count, DateInterval, Subperiod, WindowSplit, YearMonth};

/// Training spans shorter than this are skipped rather than fitted.
pub const MIN_TRAIN_ROWS: usize = 10;

/// Fits a model and predicts an evaluation span. Swappable so the runner
/// can be exercised with stub models.
pub trait Forecaster: Sync {
    /// `context` holds the feature rows immediately preceding `eval`.
    fn fit_predict(
        &self,
        kind: ModelKind,
        hp: &Hyperparams,
        train: &SupervisedDataset,
        eval: &SupervisedDataset,
        context: ArrayView2<f64>,
    ) -> Result<Vec<f64>>;
}

/// Fits the real model of each kind.
pub struct StandardForecaster;

impl Forecaster for StandardForecaster {
    fn fit_predict(
        &self,
        kind: ModelKind,
        hp: &Hyperparams,
        train: &SupervisedDataset,
        eval: &SupervisedDataset,
        context: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        let model = fit_model(kind, hp, train.x.view(), train.y.view())?;
        Ok(model.predict_with_context(context, eval.x.view())?.to_vec())
    }
}

/// Mixes `parts` into `base` (SplitMix64 finalizer per step).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |h, p| mix(h ^ p))
}

fn period_dates(config: &ExperimentConfig, period: Subperiod) -> (NaiveDate, NaiveDate) {
    let (first, last) = match period {
        Subperiod::All => (config.rolling.start, config.rolling.end),
        other => {
            let span = other.span();
            (span.first, span.last)
        }
    };
    (first.first_day(), last.add_months(1).first_day().pred_opt().expect("valid date"))
}

/// Supervised rows for one (period, frequency, horizon) with the configured
/// features. Only observations inside the period are used, so no label
/// comes from outside it.
pub fn build_dataset(
    config: &ExperimentConfig,
    features: &FeatureSpec,
    data: &LoadedData,
    period: Subperiod,
    frequency: Frequency,
    horizon: usize,
) -> Result<SupervisedDataset> {
    let table = data.table(frequency)?;
    let (start, end) = period_dates(config, period);
    let table = table.slice(start, end);
    if table.n_rows() == 0 {
        return Err(Error::InsufficientData(format!("no {frequency} observations in {}", period.label())));
    }
    let (include_calendar, subset): (bool, Option<Vec<String>>) = match &features.set {
        FeatureSet::Full => (features.include_calendar, None),
        FeatureSet::CalendarOnly => (true, Some(Vec::new())),
        FeatureSet::Subset { columns } => {
            for c in columns {
                if c == &data.target {
                    return Err(Error::Config(format!("target `{c}` cannot be a feature; use target_lags")));
                }
                if !data.has(c) {
                    return Err(Error::Config(format!("feature `{c}` is not in the data manifest")));
                }
            }
            (features.include_calendar, Some(columns.clone()))
        }
    };
    let ds = make_supervised(&table, &data.target, horizon, include_calendar, subset.as_deref())?;
    if features.target_lags > 0 {
        add_lags(&ds, &data.target, features.target_lags)
    } else {
        Ok(ds)
    }
}

/// Planned window count and the splits that received data.
pub fn splits_for(config: &ExperimentConfig, period: Subperiod, dates: &[NaiveDate]) -> Result<(usize, Vec<WindowSplit>)> {
    match period {
        Subperiod::All => {
            let r = &config.rolling;
            let schedule = rolling_windows(r.start, r.end, r.window_months, r.stride_months, r.train_fraction)?;
            Ok((schedule.windows.len(), schedule.assign(dates)))
        }
        other => Ok((1, vec![subperiod_split(other, dates, config.rolling.train_fraction)?])),
    }
}

/// Drops the last `horizon` training rows, whose labels fall in the span
/// that follows.
fn purged(range: Range<usize>, horizon: usize) -> Range<usize> {
    range.start..range.end.saturating_sub(horizon).max(range.start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub index: usize,
    pub hyperparams: Hyperparams,
    /// `None` when the grid had a single point and no search ran.
    pub validation_nrmse: Option<f64>,
}

/// Picks the grid point with the lowest NRMSE on the last
/// `validation_fraction` of `train`; earlier grid points win ties.
pub fn grid_search(
    forecaster: &dyn Forecaster,
    kind: ModelKind,
    candidates: &[Hyperparams],
    train: &SupervisedDataset,
    validation_fraction: f64,
) -> Result<GridChoice> {
    match candidates {
        [] => return Err(Error::Config(format!("{kind}: empty hyperparameter grid"))),
        [only] => {
            return Ok(GridChoice {
                index: 0,
                hyperparams: *only,
                validation_nrmse: None,
            })
        }
        _ => {}
    }
    let n = train.n_rows();
    let n_fit = train_count(n, 1.0 - validation_fraction);
    let inner = purged(0..n_fit, train.horizon);
    if inner.len() < 2 || n_fit >= n {
        return Err(Error::InsufficientData(format!(
            "{n} training rows leave no room for a validation tail"
        )));
    }
    let fit = train.rows(inner);
    let val = train.rows(n_fit..n);
    let context = train.x.slice(s![..n_fit, ..]);
    let scores = par::map(candidates, |hp| {
        forecaster
            .fit_predict(kind, hp, &fit, &val, context)
            .and_then(|pred| nrmse(val.y.as_slice().expect("contiguous"), &pred))
    });
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
            Ok(v) => log::warn!("{kind} grid point {i}: validation NRMSE {v}"),
            Err(e) => {
                log::warn!("{kind} grid point {i}: {e}");
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((index, score)) => Ok(GridChoice {
            index,
            hyperparams: candidates[index],
            validation_nrmse: Some(score),
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Solver(format!("{kind}: no grid point produced a finite score")))),
    }
}

struct CellPlan {
    period: Subperiod,
    frequency: Frequency,
    horizon: usize,
    model: ModelSpec,
    dataset: std::result::Result<std::sync::Arc<SupervisedDataset>, String>,
    planned: usize,
    splits: Vec<WindowSplit>,
}

fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::InsufficientData(_) | Error::Diverged(_) | Error::Solver(_) | Error::UndefinedMetric(_)
    )
}

fn run_window(
    forecaster: &dyn Forecaster,
    config: &ExperimentConfig,
    plan: &CellPlan,
    dataset: &SupervisedDataset,
    split: &WindowSplit,
    seed: u64,
) -> Result<WindowResult> {
    let start = Instant::now();
    let kind = plan.model.kind;
    let train_rows = purged(split.train.clone(), plan.horizon);
    if train_rows.len() < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} training rows after purging the last {} (need {MIN_TRAIN_ROWS})",
            train_rows.len(),
            plan.horizon
        )));
    }
    let train = dataset.rows(train_rows);
    let test = dataset.rows(split.test.clone());
    let candidates = plan.model.candidates(seed)?;
    let choice = grid_search(forecaster, kind, &candidates, &train, config.validation_fraction)?;
    let context = dataset.x.slice(s![split.train.clone(), ..]);
    let pred = forecaster.fit_predict(kind, &choice.hyperparams, &train, &test, context)?;
    let y = test.y.as_slice().expect("contiguous");
    Ok(WindowResult {
        index: split.index,
        train: DateInterval {
            start: train.timestamps[0],
            end: *train.timestamps.last().expect("nonempty train"),
        },
        test: split.test_dates,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        hyperparams: choice.hyperparams,
        validation_nrmse: choice.validation_nrmse,
        nrmse: nrmse(y, &pred)?,
        mae: mae(y, &pred)?,
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

fn frequency_code(f: Frequency) -> u64 {
    match f {
        Frequency::Daily => 0,
        Frequency::Weekly => 1,
        Frequency::Monthly => 2,
    }
}

/// Runs the backtest with the real models.
pub fn run_experiment(config: &ExperimentConfig, data: &LoadedData) -> Result<ExperimentReport> {
    run_experiment_with(config, data, &StandardForecaster)
}

/// Runs every (period, frequency, horizon, model) cell over its windows.
/// Windows run in parallel; results are merged in configuration order.
pub fn run_experiment_with(config: &ExperimentConfig, data: &LoadedData, forecaster: &dyn Forecaster) -> Result<ExperimentReport> {
    config.validate()?;
    let mut plans = Vec::new();
    for &period in &config.periods {
        for &frequency in &config.frequencies {
            for &horizon in &config.horizons {
                let built = match build_dataset(config, &config.features, data, period, frequency, horizon) {
                    Ok(ds) => Ok(ds),
                    Err(e) if is_skippable(&e) => Err(e.to_string()),
                    Err(e) => return Err(e),
                };
                let (planned, splits, dataset) = match built {
                    Ok(ds) => match splits_for(config, period, &ds.timestamps) {
                        Ok((p, s)) => (p, s, Ok(std::sync::Arc::new(ds))),
                        Err(e) if is_skippable(&e) => (1, Vec::new(), Err(e.to_string())),
                        Err(e) => return Err(e),
                    },
                    Err(msg) => (1, Vec::new(), Err(msg)),
                };
                for model in &config.models {
                    plans.push(CellPlan {
                        period,
                        frequency,
                        horizon,
                        model: model.clone(),
                        dataset: dataset.clone(),
                        planned,
                        splits: splits.clone(),
                    });
                }
            }
        }
    }

    let tasks: Vec<(usize, usize)> = plans
        .iter()
        .enumerate()
        .flat_map(|(c, p)| (0..p.splits.len()).map(move |w| (c, w)))
        .collect();
    let results = par::map(&tasks, |&(c, w)| {
        let plan = &plans[c];
        let split = &plan.splits[w];
        let ds = plan.dataset.as_ref().expect("splits imply a dataset");
        let seed = derive_seed(
            config.seed,
            &[
                plan.period as u64,
                frequency_code(plan.frequency),
                plan.horizon as u64,
                plan.model.kind as u64,
                split.index as u64,
            ],
        );
        run_window(forecaster, config, plan, ds, split, seed)
    });

    let mut by_cell: Vec<Vec<(usize, Result<WindowResult>)>> = plans.iter().map(|_| Vec::new()).collect();
    for (&(c, w), r) in tasks.iter().zip(results) {
        by_cell[c].push((plans[c].splits[w].index, r));
    }
    let mut cells = Vec::with_capacity(plans.len());
    for (plan, results) in plans.iter().zip(by_cell) {
        let mut windows = Vec::new();
        let mut skipped = Vec::new();
        if let Err(msg) = &plan.dataset {
            skipped.push(SkippedWindow { index: 0, reason: msg.clone() });
        }
        let assigned: Vec<usize> = plan.splits.iter().map(|s| s.index).collect();
        if plan.dataset.is_ok() {
            for i in (0..plan.planned).filter(|i| !assigned.contains(i)) {
                skipped.push(SkippedWindow {
                    index: i,
                    reason: "fewer than two observations in window".into(),
                });
            }
        }
        for (index, r) in results {
            match r {
                Ok(w) => windows.push(w),
                Err(e) if is_skippable(&e) => {
                    log::warn!(
                        "skipping {} {} h={} {} window {index}: {e}",
                        plan.period,
                        plan.frequency,
                        plan.horizon,
                        plan.model.kind
                    );
                    skipped.push(SkippedWindow { index, reason: e.to_string() });
                }
                Err(e) => return Err(e),
            }
        }
        skipped.sort_by_key(|s| s.index);
        cells.push(CellReport {
            period: plan.period,
            frequency: plan.frequency,
            horizon: plan.horizon,
            model: plan.model.kind,
            features: config.features.label(),
            aggregate: Aggregate::of(&windows),
            windows,
            skipped,
        });
    }
    Ok(ExperimentReport {
        fingerprint: config.fingerprint(),
        target: data.target.clone(),
        config: config.clone(),
        cells,
    })
}

/// One planned train/test split, for dry runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedWindow {
    pub period: Subperiod,
    pub frequency: Frequency,
    pub index: usize,
    pub train: Option<DateInterval>,
    pub test: Option<DateInterval>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Window schedule per (period, frequency) using the target's own dates.
pub fn plan(config: &ExperimentConfig, data: &LoadedData) -> Result<Vec<PlannedWindow>> {
    config.validate()?;
    let mut out = Vec::new();
    for &period in &config.periods {
        for &frequency in &config.frequencies {
            let table = data.table(frequency)?;
            let (start, end) = period_dates(config, period);
            let dates = table.slice(start, end).dates;
            let (planned, splits) = match splits_for(config, period, &dates) {
                Ok(v) => v,
                Err(e) if is_skippable(&e) => (1, Vec::new()),
                Err(e) => return Err(e),
            };
            for i in 0..planned {
                let split = splits.iter().find(|s| s.index == i);
                out.push(PlannedWindow {
                    period,
                    frequency,
                    index: i,
                    train: split.map(|s| s.train_dates),
                    test: split.map(|s| s.test_dates),
                    n_train: split.map_or(0, |s| s.train.len()),
                    n_test: split.map_or(0, |s| s.test.len()),
                });
            }
        }
    }
    Ok(out)
}

/// A model fitted for attribution together with the rows it explains.
#[derive(Debug, Clone)]
pub struct InterpretationFit {
    pub model: FittedModel,
    pub choice: GridChoice,
    pub train: SupervisedDataset,
    /// Feature rows preceding `explain` (unpurged), for sequence context.
    pub context: SupervisedDataset,
    pub explain: SupervisedDataset,
}

/// Fits `kind` for one (period, frequency, horizon) and selects rows to
/// explain. With `range`, the rows dated inside it are explained and the
/// model trains on the `train_fraction · window_months` months before the
/// range start. Without it, the last window (or the subperiod split) is used.
pub fn fit_for_interpretation(
    config: &ExperimentConfig,
    data: &LoadedData,
    period: Subperiod,
    frequency: Frequency,
    horizon: usize,
    kind: ModelKind,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<InterpretationFit> {
    config.validate()?;
    let spec = config
        .models
        .iter()
        .find(|m| m.kind == kind)
        .cloned()
        .unwrap_or_else(|| ModelSpec::full(kind));
    let ds = build_dataset(config, &config.features, data, period, frequency, horizon)?;
    let (train_range, explain_range) = match range {
        Some((from, to)) => {
            if from > to {
                return Err(Error::Config(format!("interpretation range {from}..{to} is empty")));
            }
            let lo = ds.timestamps.partition_point(|d| *d < from);
            let hi = ds.timestamps.partition_point(|d| *d <= to);
            if lo == hi {
                return Err(Error::InsufficientData(format!("no rows dated {from}..{to} in {}", period.label())));
            }
            let months = train_count(config.rolling.window_months as usize, config.rolling.train_fraction).max(1);
            let train_start = YearMonth::of(from).add_months(-(months as i64)).first_day();
            let t0 = ds.timestamps.partition_point(|d| *d < train_start);
            (t0..lo, lo..hi)
        }
        None => {
            let (_, splits) = splits_for(config, period, &ds.timestamps)?;
            let last = splits
                .last()
                .ok_or_else(|| Error::InsufficientData(format!("no usable window in {}", period.label())))?;
            (last.train.clone(), last.test.clone())
        }
    };
    let train_rows = purged(train_range.clone(), horizon);
    if train_rows.len() < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} training rows before the explained range (need {MIN_TRAIN_ROWS})",
            train_rows.len()
        )));
    }
    let train = ds.rows(train_rows);
    let seed = derive_seed(config.seed, &[period as u64, frequency_code(frequency), horizon as u64, kind as u64]);
    let choice = grid_search(&StandardForecaster, kind, &spec.candidates(seed)?, &train, config.validation_fraction)?;
    let model = fit_model(kind, &choice.hyperparams, train.x.view(), train.y.view())?;
    Ok(InterpretationFit {
        model,
        choice,
        train,
        context: ds.rows(train_range),
        explain: ds.rows(explain_range),
    })
}
