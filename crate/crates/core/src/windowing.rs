//! Rolling train/test schedules and the fixed economic subperiods.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(i: i64) -> Self {
        Self {
            year: i.div_euclid(12) as i32,
            month: (i.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    /// Months from `self` to `other`; negative when `other` is earlier.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.index() - self.index()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("expected YYYY-MM, got `{s}`")))?;
        let year = y
            .parse()
            .map_err(|_| Error::Config(format!("bad year in `{s}`")))?;
        let month = m
            .parse()
            .map_err(|_| Error::Config(format!("bad month in `{s}`")))?;
        YearMonth::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive month span `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthSpan {
    pub first: YearMonth,
    pub last: YearMonth,
}

impl MonthSpan {
    pub fn months(&self) -> i64 {
        self.first.months_until(self.last) + 1
    }

    pub fn start_date(&self) -> NaiveDate {
        self.first.first_day()
    }

    /// First day after the span.
    pub fn end_date_exclusive(&self) -> NaiveDate {
        self.last.add_months(1).first_day()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start_date() && date < self.end_date_exclusive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// One rolling window: a month span whose observations are later split by
/// count into train and test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub span: MonthSpan,
    /// Nominal calendar train months (`train_fraction` of the span).
    pub train_months: MonthSpan,
    /// Nominal calendar test months.
    pub test_months: MonthSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub windows: Vec<Window>,
    pub window_months: u32,
    pub stride_months: u32,
    pub train_fraction: f64,
}

/// Row ranges of one window after assigning observation dates to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSplit {
    pub index: usize,
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub train_dates: DateInterval,
    pub test_dates: DateInterval,
}

/// Number of training observations out of `n` for a chronological split.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    // Guard against 0.8 * 10 landing a hair under 8.
    ((n as f64) * train_fraction + 1e-9).floor() as usize
}

/// Generates every window of `window_months` that fits wholly in
/// `start..=end`, starting every `stride_months`.
pub fn rolling_windows(
    start: YearMonth,
    end: YearMonth,
    window_months: u32,
    stride_months: u32,
    train_fraction: f64,
) -> Result<WindowSchedule> {
    if window_months == 0 || stride_months == 0 {
        return Err(Error::Schedule("window and stride must be positive".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Schedule(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let total = start.months_until(end) + 1;
    let window = window_months as i64;
    if total < window {
        return Err(Error::Schedule(format!(
            "range {start}..{end} spans {total} months, shorter than one {window}-month window"
        )));
    }
    let count = (total - window) / stride_months as i64 + 1;
    let train_len = train_count(window_months as usize, train_fraction).max(1) as i64;
    let windows = (0..count)
        .map(|i| {
            let first = start.add_months(i * stride_months as i64);
            let last = first.add_months(window - 1);
            let train_last = first.add_months(train_len - 1);
            Window {
                index: i as usize,
                span: MonthSpan { first, last },
                train_months: MonthSpan {
                    first,
                    last: train_last,
                },
                test_months: MonthSpan {
                    first: train_last.add_months(1),
                    last,
                },
            }
        })
        .collect();
    Ok(WindowSchedule {
        windows,
        window_months,
        stride_months,
        train_fraction,
    })
}

impl WindowSchedule {
    /// Assigns sorted observation dates to each window and splits the
    /// window's rows by count. Windows with fewer than two observations are
    /// left out.
    pub fn assign(&self, dates: &[NaiveDate]) -> Vec<WindowSplit> {
        self.windows
            .iter()
            .filter_map(|w| {
                let rows = rows_in(dates, w.span.start_date(), w.span.end_date_exclusive());
                split_rows(w.index, rows, dates, self.train_fraction)
            })
            .collect()
    }
}

fn rows_in(dates: &[NaiveDate], start: NaiveDate, end_exclusive: NaiveDate) -> Range<usize> {
    let lo = dates.partition_point(|d| *d < start);
    let hi = dates.partition_point(|d| *d < end_exclusive);
    lo..hi.max(lo)
}

fn split_rows(
    index: usize,
    rows: Range<usize>,
    dates: &[NaiveDate],
    train_fraction: f64,
) -> Option<WindowSplit> {
    let n = rows.len();
    let n_train = train_count(n, train_fraction);
    if n_train == 0 || n_train == n {
        return None;
    }
    let train = rows.start..rows.start + n_train;
    let test = train.end..rows.end;
    Some(WindowSplit {
        index,
        train_dates: DateInterval {
            start: dates[train.start],
            end: dates[train.end - 1],
        },
        test_dates: DateInterval {
            start: dates[test.start],
            end: dates[test.end - 1],
        },
        train,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subperiod {
    All,
    EconomicExpansion,
    EconomicStagnation,
    Covid,
}

impl Subperiod {
    pub const ALL: [Subperiod; 4] = [
        Subperiod::All,
        Subperiod::EconomicExpansion,
        Subperiod::EconomicStagnation,
        Subperiod::Covid,
    ];

    pub fn span(self) -> MonthSpan {
        let (a, b) = match self {
            Subperiod::All => (2009, 2021),
            Subperiod::EconomicExpansion => (2009, 2011),
            Subperiod::EconomicStagnation => (2014, 2016),
            Subperiod::Covid => (2019, 2021),
        };
        MonthSpan {
            first: YearMonth { year: a, month: 1 },
            last: YearMonth { year: b, month: 12 },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Subperiod::All => "All (2009-2021)",
            Subperiod::EconomicExpansion => "Economic Expansion (2009-2011)",
            Subperiod::EconomicStagnation => "Economic Stagnation (2014-2016)",
            Subperiod::Covid => "Covid (2019-2021)",
        }
    }
}

impl fmt::Display for Subperiod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subperiod::All => "all",
            Subperiod::EconomicExpansion => "economic_expansion",
            Subperiod::EconomicStagnation => "economic_stagnation",
            Subperiod::Covid => "covid",
        };
        f.write_str(s)
    }
}

impl FromStr for Subperiod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subperiod::ALL
            .into_iter()
            .find(|p| p.to_string() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown period `{s}` (all, economic_expansion, economic_stagnation, covid)"
                ))
            })
    }
}

/// Single chronological split of the subperiod's observations.
pub fn subperiod_split(
    spec: Subperiod,
    dates: &[NaiveDate],
    train_fraction: f64,
) -> Result<WindowSplit> {
    let span = spec.span();
    let rows = rows_in(dates, span.start_date(), span.end_date_exclusive());
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no observations in {}",
            spec.label()
        )));
    }
    split_rows(0, rows.clone(), dates, train_fraction).ok_or_else(|| {
        Error::InsufficientData(format!(
            "{} observations in {} cannot be split {train_fraction}:{}",
            rows.len(),
            spec.label(),
            1.0 - train_fraction
        ))
    })
}
