//! `apte` command-line front end: runs the full analysis, simulates
//! datasets with hidden ground truth, exposes the changepoint and unit-root
//! stages on their own, and re-renders plots from saved reports.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use apte::changepoint::{self, Method};
use apte::config::RunConfig;
use apte::plot::{self, PlotKind, PlotSpec};
use apte::report::{self, ApteReport};
use apte::simulate::{self, SimConfig};
use apte::{design, pipeline, series, stationarity, Error, ErrorKind, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "apte", version, about = "Single-subject average period treatment effect analysis")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a daily or weekly CSV and write the report,
    /// plots, period table, effective configuration and log.
    Analyze(AnalyzeArgs),
    /// Generate a dataset from a named scenario, with its hidden truth kept
    /// in a separate file.
    Simulate(SimulateArgs),
    /// Detect mean changepoints in the weekly outcome or exposure series.
    Changepoint(ChangepointArgs),
    /// Run the ADF and KPSS unit-root tests on a weekly series.
    Stationarity(SeriesArgs),
    /// Re-render plots and the CSV table from a saved report JSON or table CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Daily (date, weight, activity) or weekly (week_index, ...) CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// First day of each aggregation week (e.g. monday).
    #[arg(long)]
    start_day: Option<String>,
    #[arg(long)]
    lags_y: Option<usize>,
    #[arg(long)]
    lags_x: Option<usize>,
    /// Threshold candidate quantiles, comma separated.
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Predictors kept after importance screening.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    /// Shortest period in weeks; shorter segments are merged.
    #[arg(long)]
    min_period: Option<usize>,
    /// Known period table (period,start_week,length,mean_exposure[,treatment]).
    #[arg(long)]
    periods: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Daily,
    Weekly,
}

#[derive(Args)]
struct SimulateArgs {
    /// Named scenario (see --list).
    #[arg(long, default_value = "null")]
    scenario: String,
    /// JSON simulator configuration used instead of a named scenario.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of periods.
    #[arg(long)]
    n_periods: Option<usize>,
    /// Probability that a daily weight is missing.
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long, value_enum, default_value = "daily")]
    format: DataFormat,
    /// Replications per level for the oracle trajectory in the truth file.
    #[arg(long, default_value_t = 1000)]
    oracle_reps: usize,
    #[arg(long, default_value = "apte-sim")]
    out_dir: PathBuf,
    /// Print the scenario names and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Column {
    Outcome,
    Exposure,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "outcome")]
    series: Column,
    #[arg(long, default_value = "monday")]
    start_day: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Amoc,
    Pelt,
}

#[derive(Args)]
struct ChangepointArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, value_enum, default_value = "pelt")]
    method: MethodArg,
    /// Penalty per changepoint (default 3 ln n).
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `analyze`.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    report: Option<PathBuf>,
    /// Per-week table CSV (week,E1,E0,APTE,E1_naive,E0_naive,APTE_naive).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "apte-report")]
    out_dir: PathBuf,
}

/// Log sink that forwards to stderr and keeps a copy for the log artifact.
#[derive(Clone, Default)]
struct Tee(Arc<Mutex<Vec<u8>>>);

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().expect("log buffer").extend_from_slice(buf);
        io::stderr().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stderr().flush()
    }
}

impl Tee {
    fn contents(&self) -> Vec<u8> {
        self.0.lock().expect("log buffer").clone()
    }
}

fn init_logging() -> Tee {
    let tee = Tee::default();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Pipe(Box::new(tee.clone())))
        .init();
    tee
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Estimation => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let log = init_logging();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Analyze(args) => analyze(args, &log),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Changepoint(args) => changepoint_cmd(args),
        Command::Stationarity(args) => stationarity_cmd(args),
        Command::Report(args) => report_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Writes every file under `dir` through a temporary name and a rename.
/// On failure the files written by this call are removed.
fn write_artifacts(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut done: Vec<PathBuf> = Vec::new();
    for (name, bytes) in files {
        let target = dir.join(name);
        let temp = dir.join(format!(".{name}.tmp"));
        let written = fs::write(&temp, bytes).and_then(|_| fs::rename(&temp, &target));
        if let Err(e) = written {
            let _ = fs::remove_file(&temp);
            for path in &done {
                let _ = fs::remove_file(path);
            }
            return Err(io_err(&target, e));
        }
        done.push(target);
    }
    Ok(())
}

fn csv_bytes(report: &ApteReport) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    report.write_csv(&mut out)?;
    Ok(out)
}

fn plots(report: &ApteReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut files = Vec::new();
    for kind in PlotKind::ALL {
        if kind == PlotKind::Timeseries && report.series.is_none() {
            log::info!("report holds no series; skipping the time-series plot");
            continue;
        }
        let svg = plot::render(&PlotSpec::new(kind), report).map_err(|e| e.at("plot"))?;
        files.push((kind.file_name(), svg.into_bytes()));
    }
    Ok(files)
}

fn analyze(args: AnalyzeArgs, log: &Tee) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.input {
        cfg.input = Some(p.display().to_string());
    }
    if let Some(p) = &args.periods {
        cfg.periods = Some(p.display().to_string());
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = p.display().to_string();
    }
    if let Some(d) = &args.start_day {
        cfg.start_day = d.parse()?;
    }
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.lags_y = args.lags_y.unwrap_or(cfg.lags_y);
    cfg.lags_x = args.lags_x.unwrap_or(cfg.lags_x);
    cfg.top_k = args.top_k.unwrap_or(cfg.top_k);
    cfg.n_trees = args.trees.unwrap_or(cfg.n_trees);
    cfg.min_period = args.min_period.unwrap_or(cfg.min_period);
    if let Some(q) = args.quantiles {
        cfg.quantiles = q;
    }
    cfg.validate()?;
    if cfg.input.is_none() {
        return Err(Error::Config("no input file given (use --input or set input in the configuration)".into()));
    }

    let analysis = pipeline::run(&cfg)?;
    let report = ApteReport::from_analysis(&analysis);
    log::info!(
        "APTE estimable over {} weeks; outcome model OOB MSE {:.4}",
        report.horizon,
        analysis.final_oob_mse
    );
    let mut periods = Vec::new();
    design::write_periods_csv(&analysis.plan, &mut periods)?;
    let mut files = vec![
        ("report.csv", csv_bytes(&report)?),
        ("report.json", report.to_json()?.into_bytes()),
        ("periods.csv", periods),
        ("config.toml", cfg.to_toml()?.into_bytes()),
    ];
    files.extend(plots(&report)?);
    files.push(("analysis.log", log.contents()));
    let dir = PathBuf::from(&cfg.out_dir);
    write_artifacts(&dir, &files)?;
    emit(&String::from_utf8_lossy(&files[0].1))?;
    eprintln!("artifacts written to {}", dir.display());
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    if args.list {
        return emit(&format!("{}\n", simulate::SCENARIOS.join("\n")));
    }
    let mut cfg: SimConfig = match &args.sim_config {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => simulate::scenario(&args.scenario).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario '{}'; choose one of {}",
                args.scenario,
                simulate::SCENARIOS.join(", ")
            ))
        })?,
    };
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.n_periods = args.n_periods.unwrap_or(cfg.n_periods);
    cfg.missing_rate = args.missing_rate.unwrap_or(cfg.missing_rate);
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;

    let sim = simulate::simulate_series(&cfg)?;
    let horizon = cfg.period_lengths.max().min(12);
    let oracle = simulate::oracle_apte(&cfg, horizon, args.oracle_reps)?;
    let mut data = Vec::new();
    match args.format {
        DataFormat::Daily => series::write_daily(&simulate::to_daily(&sim), &mut data)?,
        DataFormat::Weekly => series::write_weekly_csv(&sim.series, &mut data)?,
    }
    let mut periods = Vec::new();
    design::write_periods_csv(&sim.plan, &mut periods)?;
    let truth = serde_json::json!({ "truth": sim.truth, "oracle": oracle });
    let mut truth_text = serde_json::to_string_pretty(&truth)?;
    truth_text.push('\n');
    write_artifacts(
        &args.out_dir,
        &[
            ("data.csv", data),
            ("periods.csv", periods),
            ("truth.json", truth_text.into_bytes()),
        ],
    )?;
    eprintln!(
        "{} weeks in {} periods written to {}",
        sim.series.len(),
        cfg.n_periods,
        args.out_dir.display()
    );
    Ok(())
}

fn load_weekly(args: &SeriesArgs) -> Result<Vec<f64>> {
    let cfg = RunConfig {
        start_day: args.start_day.parse()?,
        ..RunConfig::default()
    };
    let weekly = pipeline::load_series(&args.input, &cfg)?;
    let (imputed, _) = series::interpolate_missing(&weekly)?;
    match args.series {
        Column::Outcome => imputed.outcomes(),
        Column::Exposure => imputed.exposures(),
    }
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(io_err(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(&value)?))
}

fn changepoint_cmd(args: ChangepointArgs) -> Result<()> {
    let values = load_weekly(&args.series)?;
    let penalty = match args.penalty {
        Some(p) => p,
        None => changepoint::mbic_penalty(values.len())?,
    };
    let method = match args.method {
        MethodArg::Amoc => Method::Amoc,
        MethodArg::Pelt => Method::Pelt,
    };
    print_json(serde_json::to_value(changepoint::detect(&values, penalty, method)?)?)
}

fn stationarity_cmd(args: SeriesArgs) -> Result<()> {
    let values = load_weekly(&args)?;
    print_json(serde_json::json!({
        "n": values.len(),
        "adf": stationarity::adf_test(&values, None)?,
        "kpss": stationarity::kpss_test(&values, None)?,
    }))
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let report = match (&args.report, &args.table) {
        (Some(path), _) => ApteReport::from_json(&read_text(path)?)?,
        (None, Some(path)) => {
            let file = File::open(path).map_err(|e| io_err(path, e))?;
            ApteReport::from_rows(report::read_table_csv(file)?)?
        }
        (None, None) => return Err(Error::Config("give --report or --table".into())),
    };
    let mut files = vec![("report.csv", csv_bytes(&report)?)];
    files.extend(plots(&report)?);
    write_artifacts(&args.out_dir, &files)?;
    eprintln!("plots written to {}", args.out_dir.display());
    Ok(())
}
