//! Forecast accuracy metrics.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Actuals and predictions for one evaluation span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub timestamps: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
    pub horizon: usize,
}

impl ForecastSeries {
    pub fn new(timestamps: Vec<NaiveDate>, y: Vec<f64>, yhat: Vec<f64>, horizon: usize) -> Result<Self> {
        check(&y, &yhat)?;
        if timestamps.len() != y.len() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} forecasts",
                timestamps.len(),
                y.len()
            )));
        }
        Ok(Self {
            timestamps,
            y,
            yhat,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn nrmse(&self) -> Result<f64> {
        nrmse(&self.y, &self.yhat)
    }

    pub fn mae(&self) -> Result<f64> {
        mae(&self.y, &self.yhat)
    }
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Validation(format!(
            "{} actuals but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("metric over zero forecasts".into()));
    }
    Ok(())
}

/// `sqrt(mean((ŷ−y)²)) / mean(|y|)`.
pub fn nrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let t = y.len() as f64;
    let scale = y.iter().map(|v| v.abs()).sum::<f64>() / t;
    if scale == 0.0 {
        return Err(Error::UndefinedMetric("NRMSE with all-zero actuals".into()));
    }
    let mse = y.iter().zip(yhat).map(|(a, p)| (p - a) * (p - a)).sum::<f64>() / t;
    Ok(mse.sqrt() / scale)
}

/// `mean(|ŷ−y|)`.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, p)| (p - a).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nrmse,
    Mae,
}

impl Metric {
    pub fn evaluate(self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        match self {
            Metric::Nrmse => nrmse(y, yhat),
            Metric::Mae => mae(y, yhat),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Nrmse => "NRMSE",
            Metric::Mae => "MAE",
        }
    }
}

/// Descriptive statistics of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Sample SD (n − 1 denominator); 0 for a single point.
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Adjusted Fisher-Pearson skewness; `None` below three points or for
    /// a constant series.
    pub skew: Option<f64>,
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InsufficientData("summary of an empty series".into()));
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let sd = if n > 1 { (m2 * nf / (nf - 1.0)).sqrt() } else { 0.0 };
        let skew = (n >= 3 && m2 > 0.0).then(|| (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * m3 / m2.powf(1.5));
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Ok(Self {
            count: n,
            mean,
            sd,
            min: sorted[0],
            median,
            max: sorted[n - 1],
            skew,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(nrmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((nrmse(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((nrmse(&[2.0, -2.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mae(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!((mae(&[0.0, 0.0], &[1.0, -3.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(nrmse(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(mae(&[], &[]), Err(Error::InsufficientData(_))));
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Validation(_))));
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert!(ForecastSeries::new(vec![d, d], vec![1.0], vec![1.0], 1).is_err());
        let fs = ForecastSeries::new(vec![d], vec![2.0], vec![1.0], 1).unwrap();
        assert_eq!(fs.mae().unwrap(), 1.0);
        assert_eq!(fs.nrmse().unwrap(), 0.5);
    }

    #[test]
    fn summary_stats() {
        let s = SummaryStats::of(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert_eq!((s.count, s.mean, s.min, s.median, s.max), (4, 4.0, 1.0, 2.5, 10.0));
        // Sample variance: (9 + 4 + 1 + 36) / 3.
        assert!((s.sd - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // g1 = m3 / m2^1.5 with m2 = 12.5, m3 = (−27 − 8 − 1 + 216)/4 = 45.
        let g1 = 45.0 / 12.5f64.powf(1.5);
        assert!((s.skew.unwrap() - g1 * (12.0f64).sqrt() / 2.0).abs() < 1e-12);
        let one = SummaryStats::of(&[0.7]).unwrap();
        assert_eq!((one.sd, one.skew), (0.0, None));
        assert_eq!(SummaryStats::of(&[1.0, 1.0, 1.0]).unwrap().skew, None);
        assert!(SummaryStats::of(&[]).is_err());
    }
}
