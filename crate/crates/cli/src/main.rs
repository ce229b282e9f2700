use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use fxcast_core::experiment::{
    fit_for_interpretation, incremental_covariate_ablation, lag_ablation, plan, run_experiment, ExperimentConfig,
    ExperimentReport,
};
use fxcast_core::interpret::{mean_abs_shap, shap_timeseries, ShapMethod};
use fxcast_core::manifest::{load_manifest, LoadedData};
use fxcast_core::metrics::SummaryStats;
use fxcast_core::model::{ForecastModel, ModelKind};
use fxcast_core::synth::{write_dataset, SynthConfig};
use fxcast_core::timeseries::Frequency;
use fxcast_core::windowing::Subperiod;
use fxcast_core::Error;

/// Reference level of the CAD/USD rate over 2009-2021: mean, SD, min, max.
const CADUSD_REFERENCE: [(&str, f64); 4] = [("mean", 0.86), ("sd", 0.10), ("min", 0.69), ("max", 1.06)];
const REFERENCE_TOLERANCE: f64 = 0.02;
/// Attributions whose parts miss the prediction by more than this are rejected.
const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "fxcast", version, about = "Interpretable exchange-rate forecasting backtests")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Data manifest (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Experiment config (JSON); defaults to the full design.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "FXCAST_OUT", default_value = "fxcast-out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load every series in a manifest and print summary statistics.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Rolling-window backtest of every configured model.
    Run {
        #[command(flatten)]
        common: Common,
        /// Print the window schedule and exit without fitting.
        #[arg(long)]
        dry_run: bool,
    },
    /// Fit one model and write feature importances and Shapley values.
    Interpret {
        #[command(flatten)]
        common: Common,
        /// Model kind; without it the best model in --report is used.
        #[arg(long)]
        model: Option<String>,
        /// Report from a previous `run`, used to pick the best model.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        period: String,
        #[arg(long, default_value = "daily")]
        frequency: String,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// First date to explain (YYYY-MM-DD).
        #[arg(long, requires = "to")]
        from: Option<NaiveDate>,
        /// Last date to explain (YYYY-MM-DD).
        #[arg(long, requires = "from")]
        to: Option<NaiveDate>,
        /// auto, tree, linear or exact.
        #[arg(long, default_value = "auto")]
        shap: String,
    },
    /// Lag or incremental-covariate ablation.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: AblationKind,
    },
    /// Write a seeded synthetic dataset whose target depends on oil only.
    Synth {
        #[arg(long, env = "FXCAST_OUT", default_value = "fxcast-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = SynthConfig::default().noise_sd)]
        noise_sd: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationKind {
    Lags,
    Covariates,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let usage = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_usage));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Validate { data } => validate(&data),
        Command::Run { common, dry_run } => run(&common, dry_run),
        Command::Interpret {
            common,
            model,
            report,
            period,
            frequency,
            horizon,
            from,
            to,
            shap,
        } => {
            let period: Subperiod = period.parse()?;
            let frequency: Frequency = frequency.parse()?;
            let shap: ShapMethod = shap.parse()?;
            let range = from.zip(to);
            interpret(&common, model, report, period, frequency, horizon, range, shap)
        }
        Command::Ablate { common, kind } => ablate(&common, kind),
        Command::Synth { out, seed, noise_sd } => {
            let cfg = SynthConfig {
                seed,
                noise_sd,
                ..SynthConfig::default()
            };
            let path = write_dataset(&out, &cfg)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn load(common: &Common) -> anyhow::Result<(ExperimentConfig, LoadedData)> {
    let mut config = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            ExperimentConfig::from_json(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let (_, data) = load_manifest(&common.data)?;
    Ok((config, data))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn validate(manifest: &Path) -> anyhow::Result<()> {
    let (_, data) = load_manifest(manifest)?;
    println!(
        "{:<12} {:<8} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "series", "freq", "count", "mean", "sd", "min", "median", "max", "skew"
    );
    for s in &data.series {
        let values: Vec<f64> = s.values().collect();
        let st = SummaryStats::of(&values)?;
        println!(
            "{:<12} {:<8} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>8}",
            s.name(),
            s.frequency().to_string(),
            st.count,
            st.mean,
            st.sd,
            st.min,
            st.median,
            st.max,
            fmt_opt(st.skew)
        );
    }
    let target = &data.series[0];
    let st = SummaryStats::of(&target.values().collect::<Vec<_>>())?;
    for (name, reference) in CADUSD_REFERENCE {
        let got = match name {
            "mean" => st.mean,
            "sd" => st.sd,
            "min" => st.min,
            _ => st.max,
        };
        let verdict = if (got - reference).abs() <= REFERENCE_TOLERANCE {
            "ok"
        } else {
            "differs"
        };
        println!(
            "target {name}: {got:.4} vs reference {reference:.2} ± {REFERENCE_TOLERANCE}: {verdict}"
        );
    }
    Ok(())
}

fn run(common: &Common, dry_run: bool) -> anyhow::Result<()> {
    let (config, data) = load(common)?;
    if dry_run {
        let windows = plan(&config, &data)?;
        println!("period,frequency,window,train_start,train_end,test_start,test_end,n_train,n_test");
        for w in &windows {
            let d = |i: Option<fxcast_core::windowing::DateInterval>| {
                i.map_or(("NA".to_string(), "NA".to_string()), |i| (i.start.to_string(), i.end.to_string()))
            };
            let (ts, te) = d(w.train);
            let (vs, ve) = d(w.test);
            println!(
                "{},{},{},{ts},{te},{vs},{ve},{},{}",
                w.period, w.frequency, w.index, w.n_train, w.n_test
            );
        }
        let cells = config.periods.len() * config.frequencies.len() * config.horizons.len() * config.models.len();
        eprintln!("{} windows planned, {cells} (period, frequency, horizon, model) cells", windows.len());
        return Ok(());
    }
    let report = run_experiment(&config, &data)?;
    write_report(&common.out, &report)?;
    for c in &report.cells {
        if !c.skipped.is_empty() {
            warn!(
                "{} {} h={} {}: {} window(s) skipped",
                c.period,
                c.frequency,
                c.horizon,
                c.model,
                c.skipped.len()
            );
        }
    }
    let mut stdout = std::io::stdout().lock();
    report.write_summary_csv(&mut stdout)?;
    Ok(())
}

fn write_report(out: &Path, report: &ExperimentReport) -> anyhow::Result<()> {
    write_json(&out.join("report.json"), report)?;
    write_atomic(&out.join("windows.csv"), |w| Ok(report.write_windows_csv(w)?))?;
    write_atomic(&out.join("summary.csv"), |w| Ok(report.write_summary_csv(w)?))?;
    write_atomic(&out.join("summary_long.csv"), |w| Ok(report.write_long_csv(w)?))
}

#[allow(clippy::too_many_arguments)]
fn interpret(
    common: &Common,
    model: Option<String>,
    report: Option<PathBuf>,
    period: Subperiod,
    frequency: Frequency,
    horizon: usize,
    range: Option<(NaiveDate, NaiveDate)>,
    shap: ShapMethod,
) -> anyhow::Result<()> {
    let (config, data) = load(common)?;
    let kind: ModelKind = match (model, report) {
        (Some(m), _) => m.parse()?,
        (None, Some(path)) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let report = ExperimentReport::from_json(&text)?;
            report.best_model(period, frequency, horizon).ok_or_else(|| {
                Error::Config(format!(
                    "{} has no evaluated {period} {frequency} h={horizon} cell",
                    path.display()
                ))
            })?
        }
        (None, None) => return Err(Error::Config("pass --model or --report".into()).into()),
    };
    let fit = fit_for_interpretation(&config, &data, period, frequency, horizon, kind, range)?;
    let names = fit.train.feature_names.clone();
    let table = shap_timeseries(&fit.model, &fit.explain, fit.context.x.view(), shap)?;
    let err = table.max_local_accuracy_error();
    if err > LOCAL_ACCURACY_TOLERANCE {
        return Err(anyhow!("attributions miss predictions by {err:e}"));
    }
    let out = &common.out;
    match fit.model.native_importance(&names) {
        Ok(native) => write_json(&out.join("importance_native.json"), &native)?,
        Err(Error::Method(m)) => warn!("no native importance: {m}"),
        Err(e) => return Err(e.into()),
    }
    let shap_importance = mean_abs_shap(&table.rows, &names)?;
    write_json(&out.join("importance_shap.json"), &shap_importance)?;
    write_atomic(&out.join("shap_timeseries.csv"), |w| Ok(table.write_csv(w)?))?;
    write_json(
        &out.join("interpretation.json"),
        &serde_json::json!({
            "model": kind,
            "period": period,
            "frequency": frequency,
            "horizon": horizon,
            "hyperparams": fit.choice.hyperparams,
            "validation_nrmse": fit.choice.validation_nrmse,
            "shap_method": table.method,
            "convention": table.convention,
            "train_start": fit.train.timestamps.first(),
            "train_end": fit.train.timestamps.last(),
            "rows_explained": table.rows.len(),
            "max_local_accuracy_error": err,
            "fitted": fit.model,
        }),
    )?;
    println!("{} on {period} {frequency} h={horizon}: {} rows explained", kind, table.rows.len());
    for (name, score) in shap_importance.ranking() {
        println!("{name:<20} {score:.4}");
    }
    Ok(())
}

fn ablate(common: &Common, kind: AblationKind) -> anyhow::Result<()> {
    let (config, data) = load(common)?;
    let out = &common.out;
    match kind {
        AblationKind::Lags => {
            let a = lag_ablation(&config, &data)?;
            write_json(&out.join("lag_ablation.json"), &a)?;
            write_atomic(&out.join("lag_ablation.csv"), |w| Ok(a.write_csv(w)?))?;
            a.write_csv(std::io::stdout().lock())?;
        }
        AblationKind::Covariates => {
            let a = incremental_covariate_ablation(&config, &data)?;
            write_json(&out.join("covariate_ablation.json"), &a)?;
            write_atomic(&out.join("covariate_ablation.csv"), |w| Ok(a.write_csv(w)?))?;
            a.write_csv(std::io::stdout().lock())?;
        }
    }
    Ok(())
}
