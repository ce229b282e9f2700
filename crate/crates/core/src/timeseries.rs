//! Raw series ingestion, mixed-frequency alignment and supervised dataset
//! construction.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Frequency::Daily),
            "weekly" => Ok(Frequency::Weekly),
            "monthly" => Ok(Frequency::Monthly),
            _ => Err(Error::Config(format!("unknown frequency `{s}` (daily, weekly, monthly)"))),
        }
    }
}

/// A named single-frequency series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    frequency: Frequency,
    points: Vec<(NaiveDate, f64)>,
}

impl TimeSeries {
    /// Builds a series, sorting points by date. Duplicate dates, non-finite
    /// values and empty input are rejected.
    pub fn new(
        name: impl Into<String>,
        frequency: Frequency,
        mut points: Vec<(NaiveDate, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        if points.is_empty() {
            return Err(Error::Validation(format!("series `{name}` is empty")));
        }
        if let Some((d, v)) = points.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "series `{name}` has non-finite value {v} at {d}"
            )));
        }
        points.sort_by_key(|(d, _)| *d);
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!(
                "series `{name}` has duplicate date {}",
                w[0].0
            )));
        }
        Ok(Self {
            name,
            frequency,
            points,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].0
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, v)| *v)
    }

    /// Restricts the series to `[start, end]`. Fails if nothing remains.
    pub fn slice(&self, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let points = self
            .points
            .iter()
            .filter(|(d, _)| *d >= start && *d <= end)
            .copied()
            .collect();
        Self::new(self.name.clone(), self.frequency, points)
    }
}

/// Reads a two-column `date,value` CSV into a validated series.
pub fn load_csv(
    path: impl AsRef<Path>,
    name: &str,
    frequency: Frequency,
    has_header: bool,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, name, frequency, has_header)
}

/// Same as [`load_csv`] over any reader; `origin` is only used in messages.
pub fn read_csv<R: Read>(
    reader: R,
    origin: &Path,
    name: &str,
    frequency: Frequency,
    has_header: bool,
) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 columns (date,value), found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("invalid date `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|e| parse_err(line, format!("invalid number `{}`: {e}", &record[1])))?;
        points.push((date, value));
    }
    if points.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no observations for `{name}`",
            origin.display()
        )));
    }
    TimeSeries::new(name, frequency, points)
}

/// Collapses a daily series to one point per ISO week, keeping the last
/// observation of each week (dated on the day it was observed).
pub fn resample_weekly(series: &TimeSeries) -> Result<TimeSeries> {
    if series.frequency != Frequency::Daily {
        return Err(Error::Frequency {
            expected: Frequency::Daily.to_string(),
            found: series.frequency.to_string(),
        });
    }
    let mut out: Vec<(NaiveDate, f64)> = Vec::with_capacity(series.len() / 5 + 1);
    let mut current_week = None;
    for &(date, value) in &series.points {
        let week = date.iso_week();
        if current_week == Some(week) {
            *out.last_mut().expect("week already started") = (date, value);
        } else {
            current_week = Some(week);
            out.push((date, value));
        }
    }
    TimeSeries::new(series.name.clone(), Frequency::Weekly, out)
}

/// Columns aligned on a shared date grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTable {
    pub frequency: Frequency,
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// One vector per name, each `dates.len()` long.
    pub columns: Vec<Vec<f64>>,
}

impl AlignedTable {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Splits the table back into one series per column.
    pub fn to_series(&self) -> Result<Vec<TimeSeries>> {
        self.names
            .iter()
            .zip(&self.columns)
            .map(|(name, col)| {
                TimeSeries::new(
                    name.clone(),
                    self.frequency,
                    self.dates.iter().copied().zip(col.iter().copied()).collect(),
                )
            })
            .collect()
    }

    /// Keeps rows with dates in `[start, end]`.
    pub fn slice(&self, start: NaiveDate, end: NaiveDate) -> AlignedTable {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&i| self.dates[i] >= start && self.dates[i] <= end)
            .collect();
        AlignedTable {
            frequency: self.frequency,
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }
}

/// Aligns series of mixed frequency on a common grid.
///
/// The grid is the date set of the first series at `target_freq` (daily
/// series are resampled first when the target is weekly). Every other
/// series is forward-filled onto it: a grid date takes the latest
/// observation dated on or before it. Leading grid rows where some series
/// has not yet been observed are dropped.
pub fn align_mixed_frequency(series: &[TimeSeries], target_freq: Frequency) -> Result<AlignedTable> {
    if target_freq == Frequency::Monthly {
        return Err(Error::Config(
            "alignment target must be daily or weekly".into(),
        ));
    }
    if series.is_empty() {
        return Err(Error::Alignment("no series to align".into()));
    }
    let mut names = HashSet::new();
    for s in series {
        if !names.insert(s.name()) {
            return Err(Error::Alignment(format!("duplicate series name `{}`", s.name())));
        }
    }
    let prepared: Vec<TimeSeries> = series
        .iter()
        .map(|s| {
            if target_freq == Frequency::Weekly && s.frequency == Frequency::Daily {
                resample_weekly(s)
            } else {
                Ok(s.clone())
            }
        })
        .collect::<Result<_>>()?;
    let grid_series = prepared
        .iter()
        .find(|s| s.frequency == target_freq)
        .ok_or_else(|| {
            Error::Alignment(format!(
                "no series at {target_freq} or finer frequency defines the grid"
            ))
        })?;
    let latest_start = prepared.iter().map(|s| s.first_date()).max().expect("nonempty");
    let earliest_end = prepared.iter().map(|s| s.last_date()).min().expect("nonempty");
    if latest_start > earliest_end {
        return Err(Error::Alignment(format!(
            "series do not overlap: latest start {latest_start} is after earliest end {earliest_end}"
        )));
    }

    let grid: Vec<NaiveDate> = grid_series
        .points()
        .iter()
        .map(|(d, _)| *d)
        .filter(|d| *d >= latest_start)
        .collect();
    if grid.is_empty() {
        return Err(Error::Alignment("empty date grid after overlap".into()));
    }

    let columns: Vec<Vec<f64>> = prepared
        .iter()
        .map(|s| forward_fill(s, &grid))
        .collect();
    Ok(AlignedTable {
        frequency: target_freq,
        dates: grid,
        names: prepared.iter().map(|s| s.name().to_string()).collect(),
        columns,
    })
}

/// Every grid date is on or after the series start, so each gets a value.
fn forward_fill(series: &TimeSeries, grid: &[NaiveDate]) -> Vec<f64> {
    let pts = series.points();
    let mut j = 0;
    grid.iter()
        .map(|&d| {
            while j + 1 < pts.len() && pts[j + 1].0 <= d {
                j += 1;
            }
            debug_assert!(pts[j].0 <= d);
            pts[j].1
        })
        .collect()
}

/// Calendar covariates for one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    /// Monday = 0 .. Sunday = 6.
    pub day_of_week: u32,
    /// 1..=5, days 1-7 are week 1.
    pub week_of_month: u32,
    pub month_of_year: u32,
}

impl CalendarFeatures {
    pub fn of(date: NaiveDate) -> Self {
        Self {
            day_of_week: date.weekday().num_days_from_monday(),
            week_of_month: (date.day() - 1) / 7 + 1,
            month_of_year: date.month(),
        }
    }

    pub fn names(frequency: Frequency) -> &'static [&'static str] {
        match frequency {
            Frequency::Daily => &["day_of_week", "week_of_month", "month_of_year"],
            _ => &["week_of_month", "month_of_year"],
        }
    }

    pub fn values(&self, frequency: Frequency) -> Vec<f64> {
        let mut v = Vec::with_capacity(3);
        if frequency == Frequency::Daily {
            v.push(self.day_of_week as f64);
        }
        v.push(self.week_of_month as f64);
        v.push(self.month_of_year as f64);
        v
    }
}

/// Feature matrix paired with a horizon-shifted target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    pub timestamps: Vec<NaiveDate>,
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    /// Target `horizon` steps after each timestamp.
    pub y: Array1<f64>,
    pub horizon: usize,
    pub frequency: Frequency,
    pub target_name: String,
    /// Target observed at each timestamp (unshifted); source for target lags.
    pub target_now: Array1<f64>,
}

impl SupervisedDataset {
    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Rows `range` as a new dataset.
    pub fn rows(&self, range: std::ops::Range<usize>) -> SupervisedDataset {
        SupervisedDataset {
            timestamps: self.timestamps[range.clone()].to_vec(),
            feature_names: self.feature_names.clone(),
            x: self.x.slice(s![range.clone(), ..]).to_owned(),
            y: self.y.slice(s![range.clone()]).to_owned(),
            horizon: self.horizon,
            frequency: self.frequency,
            target_name: self.target_name.clone(),
            target_now: self.target_now.slice(s![range]).to_owned(),
        }
    }

    /// Keeps only the named feature columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<SupervisedDataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| Error::Config(format!("unknown feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        out.x = self.x.select(Axis(1), &idx);
        out.feature_names = names.to_vec();
        Ok(out)
    }

    pub(crate) fn check_invariants(&self) -> Result<()> {
        let n = self.n_rows();
        if self.x.nrows() != n || self.y.len() != n || self.target_now.len() != n {
            return Err(Error::Validation("dataset row counts disagree".into()));
        }
        if self.x.ncols() != self.feature_names.len() {
            return Err(Error::Validation("feature name count disagrees with X".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name) {
                return Err(Error::Validation(format!("duplicate feature `{name}`")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("dataset has missing or non-finite entries".into()));
        }
        Ok(())
    }
}

/// Builds a direct `horizon`-step-ahead dataset: `y[t] = target[t + horizon]`
/// with features observed at `t`. Without a subset, every non-target column
/// is a feature. Calendar columns for date `t` are appended when requested.
pub fn make_supervised(
    table: &AlignedTable,
    target: &str,
    horizon: usize,
    include_calendar: bool,
    feature_subset: Option<&[String]>,
) -> Result<SupervisedDataset> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let target_col = table
        .column(target)
        .ok_or_else(|| Error::Config(format!("target `{target}` not in table")))?;
    let n = table.n_rows();
    if horizon >= n {
        return Err(Error::InsufficientData(format!(
            "horizon {horizon} needs more than {n} rows"
        )));
    }
    let features: Vec<String> = match feature_subset {
        Some(subset) => {
            for name in subset {
                if table.column(name).is_none() {
                    return Err(Error::Config(format!("unknown feature `{name}`")));
                }
            }
            subset.to_vec()
        }
        None => table
            .names
            .iter()
            .filter(|n| n.as_str() != target)
            .cloned()
            .collect(),
    };
    let cal_names = if include_calendar {
        CalendarFeatures::names(table.frequency)
    } else {
        &[]
    };
    let rows = n - horizon;
    let p = features.len() + cal_names.len();
    let mut x = Array2::zeros((rows, p));
    for (j, name) in features.iter().enumerate() {
        let col = table.column(name).expect("checked above");
        for t in 0..rows {
            x[[t, j]] = col[t];
        }
    }
    if include_calendar {
        for t in 0..rows {
            let cal = CalendarFeatures::of(table.dates[t]).values(table.frequency);
            for (k, v) in cal.into_iter().enumerate() {
                x[[t, features.len() + k]] = v;
            }
        }
    }
    let mut feature_names = features;
    feature_names.extend(cal_names.iter().map(|s| s.to_string()));
    let ds = SupervisedDataset {
        timestamps: table.dates[..rows].to_vec(),
        feature_names,
        x,
        y: Array1::from_iter(target_col[horizon..].iter().copied()),
        horizon,
        frequency: table.frequency,
        target_name: target.to_string(),
        target_now: Array1::from_iter(target_col[..rows].iter().copied()),
    };
    ds.check_invariants()?;
    Ok(ds)
}

/// Appends `column_lag1..column_lagk` (value `j` rows earlier) and drops the
/// first `k` rows. `column` may be a feature or the dataset's target.
pub fn add_lags(dataset: &SupervisedDataset, column: &str, k: usize) -> Result<SupervisedDataset> {
    if k == 0 {
        return Err(Error::Config("lag count must be at least 1".into()));
    }
    let n = dataset.n_rows();
    if k >= n {
        return Err(Error::InsufficientData(format!(
            "{k} lags need more than {n} rows"
        )));
    }
    let source: Vec<f64> = if let Some(j) = dataset.feature_index(column) {
        dataset.x.column(j).to_vec()
    } else if column == dataset.target_name {
        dataset.target_now.to_vec()
    } else {
        return Err(Error::Config(format!("unknown lag column `{column}`")));
    };
    let p = dataset.n_features();
    let rows = n - k;
    let mut x = Array2::zeros((rows, p + k));
    x.slice_mut(s![.., ..p]).assign(&dataset.x.slice(s![k.., ..]));
    for t in 0..rows {
        for j in 1..=k {
            x[[t, p + j - 1]] = source[t + k - j];
        }
    }
    let mut feature_names = dataset.feature_names.clone();
    feature_names.extend((1..=k).map(|j| format!("{column}_lag{j}")));
    let ds = SupervisedDataset {
        timestamps: dataset.timestamps[k..].to_vec(),
        feature_names,
        x,
        y: dataset.y.slice(s![k..]).to_owned(),
        horizon: dataset.horizon,
        frequency: dataset.frequency,
        target_name: dataset.target_name.clone(),
        target_now: dataset.target_now.slice(s![k..]).to_owned(),
    };
    ds.check_invariants()?;
    Ok(ds)
}
