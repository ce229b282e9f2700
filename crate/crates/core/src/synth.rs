//! Seeded synthetic macro dataset with a planted oil-driven target.
//!
//! Daily business-day series: `cadusd` (target), `oil`, `gold`, `tsx`,
//! `sp500`, `ed`. Monthly series dated the first of each month: `ir`,
//! `ppi`, `m1`, `unemp`, `indprod`. The target is
//! `0.86 + 0.1·tanh((oil − 70)/20) + N(0, noise_sd)`; nothing else enters it.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::manifest::{DataManifest, Role, SeriesEntry};
use crate::timeseries::{Frequency, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub noise_sd: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start: NaiveDate::from_ymd_opt(2009, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2021, 12, 31).expect("valid date"),
            noise_sd: 0.004,
        }
    }
}

pub const TARGET: &str = "cadusd";

pub fn oil_signal(oil: f64) -> f64 {
    0.86 + 0.1 * ((oil - 70.0) / 20.0).tanh()
}

fn business_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

fn month_starts(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(start.year(), start.month(), 1).expect("valid date");
    while d <= end {
        out.push(d);
        d = d.checked_add_months(chrono::Months::new(1)).expect("in range");
    }
    out
}

/// Mean-reverting walk `v ← v + κ(μ − v) + σε`.
fn ou(rng: &mut ChaCha8Rng, n: usize, start: f64, mean: f64, kappa: f64, sigma: f64) -> Vec<f64> {
    let eps = Normal::new(0.0, 1.0).expect("valid normal");
    let mut v = start;
    (0..n)
        .map(|_| {
            v += kappa * (mean - v) + sigma * eps.sample(rng);
            v
        })
        .collect()
}

/// Geometric random walk with drift `mu` and volatility `sigma` per step.
fn gbm(rng: &mut ChaCha8Rng, n: usize, start: f64, mu: f64, sigma: f64) -> Vec<f64> {
    let eps = Normal::new(0.0, 1.0).expect("valid normal");
    let mut v = start;
    (0..n)
        .map(|_| {
            v *= (mu + sigma * eps.sample(rng)).exp();
            v
        })
        .collect()
}

/// Generates all series, target first, with their roles.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<(TimeSeries, Role)>> {
    if cfg.start >= cfg.end {
        return Err(Error::Config("synthetic range must have start before end".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let days = business_days(cfg.start, cfg.end);
    let months = month_starts(cfg.start, cfg.end);
    let n = days.len();
    let m = months.len();

    let oil = ou(&mut rng, n, 70.0, 70.0, 0.01, 1.5);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(format!("noise_sd: {e}")))?;
    let target: Vec<f64> = oil.iter().map(|o| oil_signal(*o) + noise.sample(&mut rng)).collect();
    let daily = [
        (TARGET, target),
        ("oil", oil),
        ("gold", gbm(&mut rng, n, 1200.0, 0.0001, 0.01)),
        ("tsx", gbm(&mut rng, n, 12000.0, 0.0002, 0.009)),
        ("sp500", gbm(&mut rng, n, 1500.0, 0.0003, 0.011)),
        ("ed", ou(&mut rng, n, 2.0, 2.0, 0.02, 0.05)),
    ];
    let monthly = [
        ("ir", ou(&mut rng, m, 1.0, 1.0, 0.05, 0.1)),
        ("ppi", gbm(&mut rng, m, 100.0, 0.002, 0.005)),
        ("m1", gbm(&mut rng, m, 500.0, 0.005, 0.004)),
        ("unemp", ou(&mut rng, m, 7.0, 7.0, 0.05, 0.2)),
        ("indprod", gbm(&mut rng, m, 100.0, 0.001, 0.01)),
    ];
    let mut out = Vec::new();
    for (i, (name, values)) in daily.into_iter().enumerate() {
        let role = if i == 0 { Role::Target } else { Role::Feature };
        let s = TimeSeries::new(name, Frequency::Daily, days.iter().copied().zip(values).collect())?;
        out.push((s, role));
    }
    for (name, values) in monthly {
        let s = TimeSeries::new(name, Frequency::Monthly, months.iter().copied().zip(values).collect())?;
        out.push((s, Role::Feature));
    }
    Ok(out)
}

/// Writes one `date,value` CSV per series plus `manifest.json` into `dir`;
/// returns the manifest path.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = IndexMap::new();
    for (series, role) in generate(cfg)? {
        let file = format!("{}.csv", series.name());
        let path = dir.join(&file);
        let mut text = String::from("date,value\n");
        for (d, v) in series.points() {
            text.push_str(&format!("{d},{v}\n"));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        entries.insert(
            series.name().to_string(),
            SeriesEntry {
                path: PathBuf::from(file),
                frequency: series.frequency(),
                role,
                header: true,
            },
        );
    }
    let manifest = DataManifest { series: entries };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_manifest;

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 11);
        assert_eq!(a[0].0.name(), TARGET);
        assert_eq!(a[0].0.len(), 3392);
        let monthly = a.iter().find(|(s, _)| s.name() == "ir").unwrap();
        assert_eq!(monthly.0.len(), 156);
        let c = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a[1].0, c[1].0);
    }

    #[test]
    fn target_follows_oil() {
        let cfg = SynthConfig::default();
        let data = generate(&cfg).unwrap();
        let target: Vec<f64> = data[0].0.values().collect();
        let oil: Vec<f64> = data[1].0.values().collect();
        let max_resid = target
            .iter()
            .zip(&oil)
            .map(|(t, o)| (t - oil_signal(*o)).abs())
            .fold(0.0, f64::max);
        assert!(max_resid < 10.0 * cfg.noise_sd);
    }

    #[test]
    fn written_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            end: NaiveDate::from_ymd_opt(2010, 6, 30).unwrap(),
            ..SynthConfig::default()
        };
        let path = write_dataset(dir.path(), &cfg).unwrap();
        let (m, data) = load_manifest(&path).unwrap();
        assert_eq!(m.target().unwrap(), TARGET);
        let generated = generate(&cfg).unwrap();
        for (s, _) in &generated {
            let loaded = data.series.iter().find(|l| l.name() == s.name()).unwrap();
            assert_eq!(loaded, s);
        }
    }
}
