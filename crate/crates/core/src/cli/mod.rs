//! Command-line front end: `analytic`, `invert`, `simulate` and `compare`.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric error, 4 comparison
//! FAIL.

pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytic::ApModel;
use crate::error::{Error, Result};
use crate::inversion::{self, ModelTransform, WaitKind};
use crate::VERSION;
use report::{
    analytic_statistics, analytic_summary, analytic_table, compare, predicted_k_class,
    run_simulation, ComparisonReport, Mode, ReportFile, SimulationRequest, Statistic, Verdict,
};

pub const DEFAULT_SEED: u64 = 42;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_FAIL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "aplevy", version, about = "Lowest-class waiting times in accumulating-priority Lévy queues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate transforms on an alpha grid, with a summary of loads and means.
    Analytic(AnalyticArgs),
    /// Invert a waiting-time transform into CDF values and quantiles.
    Invert(InvertArgs),
    /// Run the event simulator or the first-passage Monte Carlo.
    Simulate(SimulateArgs),
    /// Grade simulation estimates against analytic values.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Des,
    FptExact,
    FptGrid,
}

impl From<SimMode> for Mode {
    fn from(m: SimMode) -> Self {
        match m {
            SimMode::Des => Mode::Des,
            SimMode::FptExact => Mode::FptExact,
            SimMode::FptGrid => Mode::FptGrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Tagged-class particle wait.
    Wn,
    /// Tagged-class customer wait (compound Poisson models).
    Customer,
    /// Stationary workload.
    W0,
    /// Workload plus the tagged stationary excess.
    W0Excess,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated values or `log:LO:HI:N` / `lin:LO:HI:N`.
    #[arg(long, default_value = "log:0.01:100:25")]
    pub alpha_grid: String,
    /// Initial work for the first-passage statistics.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "lin:0.25:10:40")]
    pub t_grid: String,
    /// Comma-separated probability levels.
    #[arg(long)]
    pub quantiles: Option<String>,
    #[arg(long, value_enum, default_value = "wn")]
    pub target: Target,
    /// Gaver-Stehfest order (even, 8..=20).
    #[arg(long, default_value_t = inversion::DEFAULT_ORDER)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "des")]
    pub mode: SimMode,
    /// Jobs (des) or replications (fpt modes).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "log:0.01:100:25")]
    pub alpha_grid: String,
    #[arg(long, default_value = "0.5,0.9,0.99")]
    pub quantiles: String,
    /// Initial work for the first-passage modes.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Warmup jobs (des mode).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Run the event simulator even when rho >= 1.
    #[arg(long)]
    pub allow_unstable: bool,
    /// Raw-sample CSV dump.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run the full pipeline on this model instead of reading reports.
    #[arg(long, conflicts_with_all = ["analytic", "simulation"])]
    pub model: Option<PathBuf>,
    /// Analytic JSON report.
    #[arg(long, requires = "simulation")]
    pub analytic: Option<PathBuf>,
    /// Simulation JSON report(s).
    #[arg(long, num_args = 1..)]
    pub simulation: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Jobs for the event simulator in pipeline mode.
    #[arg(long, default_value_t = 1_000_000)]
    pub jobs: usize,
    /// First-passage replications in pipeline mode.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value = "0.5,1,2")]
    pub alpha_grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Analytic(a) => cmd_analytic(&a).map(|_| EXIT_OK),
        Command::Invert(a) => cmd_invert(&a).map(|_| EXIT_OK),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::Compare(a) => cmd_compare(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::MeansUnavailable(_) => EXIT_NUMERIC,
        _ => EXIT_VALIDATION,
    }
}

/// Reads a model file; schema problems are reported with their JSON path.
pub fn load_model(path: &Path) -> Result<ApModel> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<ApModel> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

/// Parses `a,b,c`, `log:LO:HI:N` or `lin:LO:HI:N` into a strictly
/// increasing grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::Parameter(format!("grid '{spec}': {m}"));
    let grid: Vec<f64> = if let Some(rest) = spec.strip_prefix("log:").or_else(|| spec.strip_prefix("lin:")) {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected LO:HI:N"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad("LO is not a number"))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad("HI is not a number"))?;
        let n: usize = parts[2].parse().map_err(|_| bad("N is not an integer"))?;
        if n == 0 {
            return Err(bad("N must be positive"));
        }
        let frac = |k: usize| if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        if spec.starts_with("log:") {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(bad("log grids need positive bounds"));
            }
            (0..n).map(|k| (lo.ln() + (hi / lo).ln() * frac(k)).exp()).collect()
        } else {
            (0..n).map(|k| lo + (hi - lo) * frac(k)).collect()
        }
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(bad("values must be finite"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(grid)
}

fn nonnegative(grid: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if grid[0] < 0.0 {
        return Err(Error::Parameter(format!("{what} values must be >= 0")));
    }
    Ok(grid)
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_header(model_hash: &str) -> String {
    format!("# model_hash={model_hash}\n# version={VERSION}\n")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn statistics_csv(stats: &[Statistic]) -> String {
    let mut s = String::from("name,alpha,v,value,std_error,allowance,n\n");
    for st in stats {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            st.name,
            opt(st.alpha),
            opt(st.v),
            st.value,
            opt(st.std_error),
            opt(st.allowance),
            st.n.map(|n| n.to_string()).unwrap_or_default()
        ));
    }
    s
}

#[derive(Serialize)]
struct AnalyticReport {
    kind: &'static str,
    version: &'static str,
    model_hash: String,
    summary: report::AnalyticSummary,
    k_class: report::KClass,
    table: Vec<report::AnalyticRow>,
    statistics: Vec<Statistic>,
}

pub fn cmd_analytic(args: &AnalyticArgs) -> Result<()> {
    let model = load_model(&args.common.model)?;
    model.ensure_stable()?;
    let alphas = nonnegative(parse_grid(&args.alpha_grid)?, "alpha")?;
    let hash = model.model_hash();
    let table = analytic_table(&model, &alphas)?;
    let summary = analytic_summary(&model);
    let bytes = match args.common.format {
        Format::Json => to_json(&AnalyticReport {
            kind: "analytic",
            version: VERSION,
            model_hash: hash,
            k_class: summary.k_class,
            summary,
            table,
            statistics: analytic_statistics(&model, &alphas, args.v)?,
        })?,
        Format::Csv => {
            let mut s = csv_header(&hash);
            s.push_str(&format!("# rho={}\n# overtaking_load={}\n", summary.rho, summary.overtaking_load));
            for c in &summary.classes {
                s.push_str(&format!("# class={} b={} a={} load={}\n", c.class, c.b, c.deceleration, c.load));
            }
            match &summary.mean_waits {
                Some(m) => {
                    s.push_str(&format!(
                        "# mean_w0={}\n# mean_ye={}\n# mean_wn_particle={}\n",
                        m.mean_w0, m.mean_ye, m.mean_wn_particle
                    ));
                    if let Some(c) = m.mean_w_customer {
                        s.push_str(&format!("# mean_w_customer={c}\n"));
                    }
                }
                None => s.push_str(&format!(
                    "# mean_waits_error={}\n",
                    summary.mean_waits_error.clone().unwrap_or_default()
                )),
            }
            s.push_str("alpha,phi,phi_a,phi_a_inverse,w0_lst,wn_lst,w_customer_lst,joint_lst_diagonal\n");
            for r in &table {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.alpha,
                    r.phi,
                    r.phi_a,
                    r.phi_a_inverse,
                    r.w0_lst,
                    r.wn_lst,
                    opt(r.w_customer_lst),
                    r.joint_lst_diagonal
                ));
            }
            s.into_bytes()
        }
    };
    emit(&args.common.out, &bytes)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertRow {
    pub t: f64,
    pub cdf: f64,
    pub raw: f64,
    /// The unclamped value left `[-1e-3, 1 + 1e-3]`.
    pub flagged: bool,
}

#[derive(Serialize)]
struct InvertReport {
    kind: &'static str,
    version: &'static str,
    model_hash: String,
    target: &'static str,
    order: usize,
    atom_at_zero: Option<f64>,
    rows: Vec<InvertRow>,
    quantiles: Vec<(f64, f64)>,
}

const RAW_SLACK: f64 = 1e-3;

pub fn cmd_invert(args: &InvertArgs) -> Result<()> {
    let model = load_model(&args.common.model)?;
    let ts = parse_grid(&args.t_grid)?;
    if ts[0] <= 0.0 {
        return Err(Error::Parameter("t values must be positive".into()));
    }
    let (kind, name) = match args.target {
        Target::Wn => (WaitKind::Particle, "wn"),
        Target::Customer => (WaitKind::Customer, "customer"),
        Target::W0 => (WaitKind::Workload, "w0"),
        Target::W0Excess => (WaitKind::WorkloadPlusExcess, "w0-excess"),
    };
    let f = ModelTransform::new(&model, kind)?;
    let rows: Vec<InvertRow> = ts
        .iter()
        .map(|&t| {
            let raw = inversion::invert_cdf_raw(&f, t, args.order)?;
            Ok(InvertRow {
                t,
                cdf: raw.clamp(0.0, 1.0),
                raw,
                flagged: !(-RAW_SLACK..=1.0 + RAW_SLACK).contains(&raw),
            })
        })
        .collect::<Result<_>>()?;
    let levels = match &args.quantiles {
        Some(q) => parse_grid(q)?,
        None => Vec::new(),
    };
    let quantiles = levels
        .iter()
        .map(|&p| Ok((p, inversion::quantile(&f, p, args.order)?)))
        .collect::<Result<Vec<_>>>()?;
    let hash = model.model_hash();
    let bytes = match args.common.format {
        Format::Json => to_json(&InvertReport {
            kind: "invert",
            version: VERSION,
            model_hash: hash,
            target: name,
            order: args.order,
            atom_at_zero: inversion::LstFunction::atom_at_zero(&f),
            rows,
            quantiles,
        })?,
        Format::Csv => {
            let mut s = csv_header(&hash);
            s.push_str(&format!("# target={name}\n# order={}\n", args.order));
            for (p, q) in &quantiles {
                s.push_str(&format!("# quantile p={p} value={q}\n"));
            }
            s.push_str("t,cdf,raw,flagged\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.t, r.cdf, r.raw, u8::from(r.flagged)));
            }
            s.into_bytes()
        }
    };
    emit(&args.common.out, &bytes)
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    kind: &'static str,
    version: &'static str,
    model_hash: String,
    settings: &'a report::SimulationSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_class: Option<report::KClass>,
    statistics: &'a [Statistic],
    details: &'a serde_json::Value,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = load_model(&args.common.model)?;
    let alphas = nonnegative(parse_grid(&args.alpha_grid)?, "alpha")?;
    let quantiles = parse_grid(&args.quantiles)?;
    let mode: Mode = args.mode.into();
    let replications = args.reps.unwrap_or(match mode {
        Mode::Des => 1_000_000,
        _ => 100_000,
    });
    let run = run_simulation(
        &model,
        &SimulationRequest {
            mode,
            alphas: &alphas,
            quantiles: &quantiles,
            replications,
            warmup: args.warmup,
            seed: args.seed,
            v: args.v,
            grid_step: args.grid_step,
            allow_unstable: args.allow_unstable,
        },
    )?;
    let hash = model.model_hash();
    if let Some(path) = &args.samples {
        let mut bytes = csv_header(&hash).into_bytes();
        bytes.extend_from_slice(&run.samples_csv);
        fs::write(path, bytes)?;
    }
    let bytes = match args.common.format {
        Format::Json => to_json(&SimulationReport {
            kind: "simulation",
            version: VERSION,
            model_hash: hash,
            settings: &run.settings,
            k_class: run.k_class,
            statistics: &run.statistics,
            details: &run.details,
        })?,
        Format::Csv => {
            let mut s = csv_header(&hash);
            s.push_str(&format!("# mode={}\n# seed={}\n", serde_json::to_string(&run.settings.mode)?, args.seed));
            if let Some(k) = run.k_class {
                s.push_str(&format!("# k_class={}\n", serde_json::to_string(&k)?));
            }
            s.push_str(&statistics_csv(&run.statistics));
            s.into_bytes()
        }
    };
    emit(&args.common.out, &bytes)
}

fn finish(report: &ComparisonReport, out: &Option<PathBuf>) -> Result<i32> {
    emit(out, &to_json(report)?)?;
    Ok(match report.status {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_FAIL,
        Verdict::NotRun | Verdict::Refused => EXIT_VALIDATION,
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    if let Some(path) = &args.model {
        return compare_pipeline(path, args);
    }
    let Some(analytic_path) = &args.analytic else {
        return Err(Error::Parameter("compare needs --model or --analytic with --simulation".into()));
    };
    if args.simulation.is_empty() {
        return Err(Error::Parameter("compare needs at least one --simulation report".into()));
    }
    let read = |p: &Path| -> Result<ReportFile> { Ok(serde_json::from_str(&fs::read_to_string(p)?)?) };
    let analytic = read(analytic_path)?;
    let mut sims = Vec::new();
    for p in &args.simulation {
        let sim = read(p)?;
        if let Err(e) = report::check_same_model(&analytic, &sim) {
            eprintln!("error: {e}");
            return finish(&ComparisonReport::refused(e.to_string()), &args.out);
        }
        sims.push((sim.statistics, sim.k_class));
    }
    let predicted = analytic.k_class.unwrap_or(report::KClass::Unobserved);
    let report = compare(&analytic.model_hash, &analytic.statistics, predicted, &sims);
    finish(&report, &args.out)
}

fn compare_pipeline(path: &Path, args: &CompareArgs) -> Result<i32> {
    let model = load_model(path)?;
    let hash = model.model_hash();
    let alphas = nonnegative(parse_grid(&args.alpha_grid)?, "alpha")?;
    let analytic = match analytic_statistics(&model, &alphas, args.v) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return finish(&ComparisonReport::not_run(Some(hash), e.to_string()), &args.out);
        }
    };
    let mut modes = Vec::new();
    if model.is_compound_poisson() {
        modes.push((Mode::Des, args.jobs));
    }
    let ot = model.overtaking_input();
    if ot.has_infinite_activity() {
        modes.push((Mode::FptGrid, args.reps));
    } else {
        modes.push((Mode::FptExact, args.reps));
    }
    let mut sims = Vec::new();
    for (mode, replications) in modes {
        let run = run_simulation(
            &model,
            &SimulationRequest {
                mode,
                alphas: &alphas,
                quantiles: &[],
                replications,
                warmup: None,
                seed: args.seed,
                v: args.v,
                grid_step: args.grid_step,
                allow_unstable: false,
            },
        )?;
        sims.push((run.statistics, run.k_class));
    }
    let report = compare(&hash, &analytic, predicted_k_class(&model), &sims);
    finish(&report, &args.out)
}
