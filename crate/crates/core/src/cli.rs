//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::complexity::Method;
use crate::config::Config;
use crate::error::DoaError;
use crate::experiments::{
    estimate_once, run_complexity, run_crlb_table, run_rmse_sweep, write_complexity, write_crlb_table, write_estimates,
    write_rmse_curve, ComplexityAxis, ExperimentSpec, OutputFormat, ScenarioPoint, SweepAxis, SMOKE_TRIALS,
};
use crate::frontend::SignalModel;
use crate::root_music::RootFilter;

pub const SEED_ENV: &str = "HYBRID_DOA_SEED";
pub const DEFAULT_SEED: u64 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "hybrid-doa",
    version,
    about = "DOA estimation for hybrid analog/digital subarrays"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to $HYBRID_DOA_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per point (default 200)
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format (default csv)
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
struct ScenarioArgs {
    /// Total elements N.
    #[arg(long)]
    n: Option<usize>,
    /// Subarrays (RF chains) K.
    #[arg(long)]
    k: Option<usize>,
    /// Elements per subarray M (alternative to --k).
    #[arg(long, conflicts_with = "k")]
    m: Option<usize>,
    /// Element spacing in wavelengths.
    #[arg(long)]
    spacing: Option<f64>,
    /// Source direction in degrees
    #[arg(long, allow_negative_numbers = true)]
    theta_deg: Option<f64>,
    /// Per-element SNR in dB; `inf` for noiseless
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Snapshots per block L.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Grid stepsize in degrees; must divide 180.
    #[arg(long)]
    step_deg: Option<f64>,
    /// repeated-frame or independent-blocks
    #[arg(long)]
    signal_model: Option<SignalModel>,
    /// Root-MUSIC root set: all or inside-unit-circle
    #[arg(long)]
    root_filter: Option<RootFilter>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Comma-separated methods (apa, hadpa, hdapa, rm-hdapa).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run each method once and print its report.
    Estimate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated methods (apa, hadpa, hdapa, rm-hdapa).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// RMSE versus SNR (dB).
    SweepSnr(SweepArgs),
    /// RMSE versus grid stepsize (degrees).
    SweepStepsize(SweepArgs),
    /// RMSE versus snapshots per block.
    SweepSnapshots(SweepArgs),
    /// RMSE versus total elements at fixed M.
    SweepN(SweepArgs),
    /// Cramér-Rao bound at one point or along a sweep.
    Crlb {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sweep axis; a single row at the base point when --values is absent
        #[arg(long, value_enum)]
        axis: Option<CrlbAxisArg>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// FLOP counts versus stepsize or N.
    Complexity {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sweep axis (default stepsize)
        #[arg(long, value_enum)]
        axis: Option<ComplexityAxisArg>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated methods (apa, hadpa, hdapa, rm-hdapa).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CrlbAxisArg {
    Snr,
    Stepsize,
    Snapshots,
    N,
    M,
}

impl From<CrlbAxisArg> for SweepAxis {
    fn from(a: CrlbAxisArg) -> Self {
        match a {
            CrlbAxisArg::Snr => SweepAxis::Snr,
            CrlbAxisArg::Stepsize => SweepAxis::Stepsize,
            CrlbAxisArg::Snapshots => SweepAxis::Snapshots,
            CrlbAxisArg::N => SweepAxis::Elements,
            CrlbAxisArg::M => SweepAxis::SubarraySize,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ComplexityAxisArg {
    Stepsize,
    N,
}

impl From<ComplexityAxisArg> for ComplexityAxis {
    fn from(a: ComplexityAxisArg) -> Self {
        match a {
            ComplexityAxisArg::Stepsize => ComplexityAxis::Stepsize,
            ComplexityAxisArg::N => ComplexityAxis::Elements,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<DoaError> for CliError {
    fn from(e: DoaError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Settings shared by every subcommand after merging defaults, the config
/// file, the environment and flags.
struct Resolved {
    config: Option<Config>,
    seed: u64,
    trials: usize,
    format: OutputFormat,
    out: Option<PathBuf>,
    methods: Vec<Method>,
}

fn resolve(cli: &Cli) -> CliResult<Resolved> {
    let config = match &cli.config {
        Some(p) => Some(Config::load(p).map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let run = config.as_ref().map(|c| &c.file.run);
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    let seed = cli
        .seed
        .or(run.and_then(|r| r.seed))
        .or(env_seed)
        .unwrap_or(DEFAULT_SEED);
    let config_trials = match &config {
        Some(c) => c.trials().map_err(|e| CliError::Usage(e.to_string()))?,
        None => None,
    };
    let trials = cli.trials.or(config_trials).unwrap_or(SMOKE_TRIALS);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let format = cli
        .format
        .map(OutputFormat::from)
        .or(run.and_then(|r| r.format))
        .unwrap_or(OutputFormat::Csv);
    let out = cli.out.clone().or(run.and_then(|r| r.out.clone()));
    let methods = match &config {
        Some(c) => c.methods().map_err(|e| CliError::Usage(e.to_string()))?,
        None => None,
    }
    .unwrap_or_else(|| Method::ALL.to_vec());
    Ok(Resolved {
        config,
        seed,
        trials,
        format,
        out,
        methods,
    })
}

fn scenario_point(res: &Resolved, args: &ScenarioArgs) -> CliResult<ScenarioPoint> {
    let mut p = ScenarioPoint::default();
    if let Some(c) = &res.config {
        c.apply_scenario(&mut p).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(n) = args.n {
        p.n_elements = n;
    }
    if let Some(k) = args.k {
        p.n_subarrays = k;
    } else if let Some(m) = args.m {
        if m == 0 || p.n_elements % m != 0 {
            return Err(CliError::Usage(format!("--m {m} does not divide N = {}", p.n_elements)));
        }
        p.n_subarrays = p.n_elements / m;
    }
    if let Some(v) = args.spacing {
        p.spacing = v;
    }
    if let Some(v) = args.theta_deg {
        p.theta_deg = v;
    }
    if let Some(v) = args.snr_db {
        p.snr_db = v;
    }
    if let Some(v) = args.snapshots {
        p.snapshots = v;
    }
    if let Some(v) = args.step_deg {
        p.step_deg = v;
    }
    if let Some(v) = args.signal_model {
        p.signal_model = v;
    }
    if let Some(v) = args.root_filter {
        p.root_filter = v;
    }
    p.validate()?;
    Ok(p)
}

fn open_output(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn run_sweep(res: &Resolved, axis: SweepAxis, args: &SweepArgs) -> CliResult<()> {
    let base = scenario_point(res, &args.scenario)?;
    let config_values = match &res.config {
        Some(c) => c
            .sweep_values(axis, &base)
            .map_err(|e| CliError::Usage(e.to_string()))?,
        None => None,
    };
    let values = args
        .values
        .clone()
        .or(config_values)
        .unwrap_or_else(|| vec![base.axis_value(axis)]);
    let spec = ExperimentSpec {
        methods: args.methods.clone().unwrap_or_else(|| res.methods.clone()),
        base,
        axis,
        values,
        trials: res.trials,
        seed: res.seed,
    };
    let curve = run_rmse_sweep(&spec)?;
    let mut w = open_output(&res.out)?;
    write_rmse_curve(&mut w, &curve, res.format)?;
    w.flush()?;
    if curve.has_undefined_point() {
        return Err(CliError::Numerical(
            "every trial failed at one or more sweep points".into(),
        ));
    }
    Ok(())
}

fn run_command(cli: &Cli) -> CliResult<()> {
    let res = resolve(cli)?;
    match &cli.command {
        Command::Estimate { scenario, methods } => {
            let point = scenario_point(&res, scenario)?;
            let methods = methods.clone().unwrap_or_else(|| res.methods.clone());
            let mut reports = Vec::new();
            let mut failure = None;
            for m in methods {
                match estimate_once(&point, m, res.seed) {
                    Ok(r) => reports.push(r),
                    Err(e) if e.is_numerical() => failure = Some(format!("{m}: {e}")),
                    Err(e) => return Err(e.into()),
                }
            }
            let mut w = open_output(&res.out)?;
            write_estimates(&mut w, point.theta_deg, &reports, res.format)?;
            w.flush()?;
            if let Some(f) = failure {
                return Err(CliError::Numerical(f));
            }
        }
        Command::SweepSnr(a) => run_sweep(&res, SweepAxis::Snr, a)?,
        Command::SweepStepsize(a) => run_sweep(&res, SweepAxis::Stepsize, a)?,
        Command::SweepSnapshots(a) => run_sweep(&res, SweepAxis::Snapshots, a)?,
        Command::SweepN(a) => run_sweep(&res, SweepAxis::Elements, a)?,
        Command::Crlb { scenario, axis, values } => {
            let base = scenario_point(&res, scenario)?;
            let from_config = match &res.config {
                Some(c) => c.crlb_sweep(&base).map_err(|e| CliError::Usage(e.to_string()))?,
                None => None,
            };
            let (axis, values) = match (axis, values, from_config) {
                (a, Some(v), cfg) => (
                    a.map(SweepAxis::from).or(cfg.map(|c| c.0)).unwrap_or(SweepAxis::Snr),
                    v.clone(),
                ),
                (Some(a), None, _) => ((*a).into(), Vec::new()),
                (None, None, Some((a, v))) => (a, v),
                (None, None, None) => (SweepAxis::Snr, Vec::new()),
            };
            let rows = run_crlb_table(&base, axis, &values)?;
            let mut w = open_output(&res.out)?;
            write_crlb_table(&mut w, &rows, res.format)?;
            w.flush()?;
        }
        Command::Complexity {
            scenario,
            axis,
            values,
            methods,
        } => {
            let base = scenario_point(&res, scenario)?;
            let (cfg_axis, cfg_values) = match &res.config {
                Some(c) => c.complexity_sweep(),
                None => (None, None),
            };
            let axis = axis
                .map(ComplexityAxis::from)
                .or(cfg_axis)
                .unwrap_or(ComplexityAxis::Stepsize);
            let values = match (values, cfg_values, &res.config) {
                (Some(v), _, _) => v.clone(),
                (None, Some(v), Some(c)) => {
                    let sweep = match axis {
                        ComplexityAxis::Stepsize => SweepAxis::Stepsize,
                        ComplexityAxis::Elements => SweepAxis::Elements,
                    };
                    c.checked_values(Some(v), sweep, &base)
                        .map_err(|e| CliError::Usage(e.to_string()))?
                        .unwrap_or_default()
                }
                _ => match axis {
                    ComplexityAxis::Stepsize => vec![base.step_deg],
                    ComplexityAxis::Elements => vec![base.n_elements as f64],
                },
            };
            let methods = methods.clone().unwrap_or_else(|| res.methods.clone());
            let curve = run_complexity(&base, axis, &values, &methods)?;
            let mut w = open_output(&res.out)?;
            write_complexity(&mut w, &curve, res.format)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
            };
            eprintln!("error: {msg}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["hybrid-doa", "crlb", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["hybrid-doa"]), EXIT_USAGE);
        assert_eq!(run(["hybrid-doa", "crlb", "--n", "30", "--k", "4"]), EXIT_USAGE);
        assert_eq!(run(["hybrid-doa", "estimate", "--step-deg", "0.7"]), EXIT_USAGE);
        assert_eq!(run(["hybrid-doa", "sweep-snr", "--methods", "music"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["hybrid-doa", "--help"]), EXIT_OK);
    }
}
