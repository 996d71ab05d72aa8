//! Monte Carlo sweeps, CRLB tables and complexity curves, with CSV/JSON
//! writers.
//!
//! Every trial owns a front end seeded from `(seed, trial)`; trials fan out
//! over the rayon pool and are reduced in trial order, so output is
//! independent of the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{Angle, ArrayGeometry};
use crate::complexity::{block_budget, complexity_model, Method};
use crate::crlb::{digital_crlb, hybrid_crlb, CrlbInputs, CrlbReport, FisherSource};
use crate::error::{DoaError, Result};
use crate::frontend::{EmitterScenario, HybridFrontend, RngStream, SignalModel};
use crate::grid::{estimate_apa, estimate_hadpa, estimate_hdapa, EstimateReport, SearchGrid};
use crate::root_music::{estimate_root_music_hdapa, RootFilter, RootMusicOptions};

pub const FORMAT_VERSION: u32 = 1;
pub const ACCEPTANCE_TRIALS: usize = 2000;
pub const SMOKE_TRIALS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(DoaError::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Quantity varied along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Per-element SNR in dB.
    Snr,
    /// Grid stepsize in degrees.
    Stepsize,
    /// Snapshots per block `L`.
    Snapshots,
    /// Total elements `N` at fixed `M`.
    #[serde(alias = "n")]
    Elements,
    /// Elements per subarray `M` at fixed `N`.
    #[serde(alias = "m")]
    SubarraySize,
}

impl SweepAxis {
    pub fn command(self) -> &'static str {
        match self {
            Self::Snr => "sweep-snr",
            Self::Stepsize => "sweep-stepsize",
            Self::Snapshots => "sweep-snapshots",
            Self::Elements => "sweep-n",
            Self::SubarraySize => "sweep-m",
        }
    }
}

/// One fully specified operating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPoint {
    pub n_elements: usize,
    pub n_subarrays: usize,
    pub spacing: f64,
    pub theta_deg: f64,
    pub snr_db: f64,
    pub snapshots: usize,
    pub step_deg: f64,
    pub signal_model: SignalModel,
    pub root_filter: RootFilter,
}

impl Default for ScenarioPoint {
    fn default() -> Self {
        Self {
            n_elements: 32,
            n_subarrays: 16,
            spacing: 0.5,
            theta_deg: 41.177,
            snr_db: 0.0,
            snapshots: 32,
            step_deg: 1.0,
            signal_model: SignalModel::default(),
            root_filter: RootFilter::default(),
        }
    }
}

impl ScenarioPoint {
    pub fn elements_per_subarray(&self) -> usize {
        self.n_elements.checked_div(self.n_subarrays).unwrap_or(0)
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::from_total(self.n_elements, self.n_subarrays, self.spacing)
    }

    pub fn angle(&self) -> Result<Angle> {
        Angle::from_degrees(self.theta_deg)
    }

    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        SearchGrid::from_step_degrees(self.step_deg)
    }

    pub fn scenario(&self) -> Result<EmitterScenario> {
        Ok(EmitterScenario::from_db(self.angle()?, self.snr_db, self.snapshots)?.with_signal_model(self.signal_model))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.angle()?;
        self.grid()?;
        self.scenario()?;
        Ok(())
    }

    pub fn axis_value(&self, axis: SweepAxis) -> f64 {
        match axis {
            SweepAxis::Snr => self.snr_db,
            SweepAxis::Stepsize => self.step_deg,
            SweepAxis::Snapshots => self.snapshots as f64,
            SweepAxis::Elements => self.n_elements as f64,
            SweepAxis::SubarraySize => self.elements_per_subarray() as f64,
        }
    }

    /// Copy of `self` with the swept quantity set to `x`.
    pub fn with_axis(&self, axis: SweepAxis, x: f64) -> Result<Self> {
        let mut p = *self;
        match axis {
            SweepAxis::Snr => p.snr_db = x,
            SweepAxis::Stepsize => p.step_deg = x,
            SweepAxis::Snapshots => p.snapshots = as_count("snapshots", x)?,
            SweepAxis::Elements => {
                let n = as_count("N", x)?;
                let m = self.elements_per_subarray();
                if m == 0 || n % m != 0 {
                    return Err(DoaError::InvalidGeometry(format!("N={n} is not a multiple of M={m}")));
                }
                p.n_elements = n;
                p.n_subarrays = n / m;
            }
            SweepAxis::SubarraySize => {
                let m = as_count("M", x)?;
                if !self.n_elements.is_multiple_of(m) {
                    return Err(DoaError::InvalidGeometry(format!(
                        "M={m} does not divide N={}",
                        self.n_elements
                    )));
                }
                p.n_subarrays = self.n_elements / m;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

fn as_count(what: &str, x: f64) -> Result<usize> {
    if x.is_finite() && x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(DoaError::InvalidParameter(format!(
            "{what} must be a positive integer, got {x}"
        )))
    }
}

/// Runs one estimator on a fresh front end and checks its block budget.
pub fn run_method(
    method: Method,
    frontend: &mut HybridFrontend,
    grid: &SearchGrid,
    opts: RootMusicOptions,
) -> Result<EstimateReport> {
    let report = match method {
        Method::Apa => estimate_apa(frontend, grid),
        Method::Hadpa => estimate_hadpa(frontend, grid),
        Method::Hdapa => estimate_hdapa(frontend, grid),
        Method::RootMusicHdapa => estimate_root_music_hdapa(frontend, opts),
    }?;
    let geom = frontend.geometry();
    if geom.spacing() == 0.5 {
        let budget = block_budget(method, grid.bins() as u64, geom.elements_per_subarray() as u64);
        assert_eq!(report.blocks_consumed, budget, "{method} block budget");
    }
    Ok(report)
}

/// Single estimate at `point` using trial 0 of `seed`.
pub fn estimate_once(point: &ScenarioPoint, method: Method, seed: u64) -> Result<EstimateReport> {
    let mut fe = HybridFrontend::new(point.geometry()?, point.scenario()?, RngStream::new(seed, 0));
    run_method(
        method,
        &mut fe,
        &point.grid()?,
        RootMusicOptions {
            root_filter: point.root_filter,
        },
    )
}

/// Errors (degrees) of `trials` independent runs, in trial order; `None`
/// marks a failed trial.
pub fn trial_errors(point: &ScenarioPoint, method: Method, trials: usize, seed: u64) -> Result<Vec<Option<f64>>> {
    let geom = point.geometry()?;
    let scenario = point.scenario()?;
    let grid = point.grid()?;
    let theta0 = point.angle()?.degrees();
    let opts = RootMusicOptions {
        root_filter: point.root_filter,
    };
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut fe = HybridFrontend::new(geom, scenario, RngStream::new(seed, t));
            match run_method(method, &mut fe, &grid, opts) {
                Ok(r) if r.theta_hat.is_finite() => Some(r.theta_hat_deg() - theta0),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("trial {t} of {method} failed: {e}");
                    None
                }
            }
        })
        .collect())
}

/// RMSE and its Monte Carlo standard error from per-trial errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseStats {
    pub rmse_deg: f64,
    pub rmse_se_deg: f64,
    pub trials: usize,
    pub failures: usize,
}

impl RmseStats {
    pub fn from_errors(errors: &[Option<f64>]) -> Self {
        let sq: Vec<f64> = errors.iter().flatten().map(|e| e * e).collect();
        let n = sq.len();
        let failures = errors.len() - n;
        if n == 0 {
            return Self {
                rmse_deg: f64::NAN,
                rmse_se_deg: f64::NAN,
                trials: errors.len(),
                failures,
            };
        }
        let mse = sq.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            sq.iter().map(|x| (x - mse).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let rmse = mse.sqrt();
        let se = if rmse > 0.0 {
            (var / n as f64).sqrt() / (2.0 * rmse)
        } else {
            0.0
        };
        Self {
            rmse_deg: rmse,
            rmse_se_deg: se,
            trials: errors.len(),
            failures,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub base: ScenarioPoint,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<Vec<ScenarioPoint>> {
        if self.trials == 0 {
            return Err(DoaError::InvalidParameter("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(DoaError::Empty("method list"));
        }
        if self.values.is_empty() {
            return Err(DoaError::Empty("sweep values"));
        }
        let points: Vec<ScenarioPoint> = self
            .values
            .iter()
            .map(|&x| self.base.with_axis(self.axis, x))
            .collect::<Result<_>>()?;
        if self.methods.contains(&Method::RootMusicHdapa) {
            if let Some(p) = points.iter().find(|p| p.n_subarrays < 2) {
                return Err(DoaError::InvalidGeometry(format!(
                    "rm-hdapa needs K >= 2 (N={}, K={})",
                    p.n_elements, p.n_subarrays
                )));
            }
        }
        Ok(points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub x: f64,
    pub method: Method,
    pub rmse_deg: f64,
    pub rmse_se_deg: f64,
    pub trials: usize,
    pub failures: usize,
    pub crlb_hybrid_deg: f64,
    pub crlb_digital_deg: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseCurve {
    pub axis: SweepAxis,
    pub rows: Vec<RmseRow>,
}

impl RmseCurve {
    pub fn row(&self, x: f64, method: Method) -> Option<&RmseRow> {
        self.rows.iter().find(|r| r.x == x && r.method == method)
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// Rows where every trial failed.
    pub fn has_undefined_point(&self) -> bool {
        self.rows.iter().any(|r| r.failures == r.trials)
    }
}

/// Hybrid and fully digital CRLB (degrees) at `point`; zero without noise.
pub fn crlb_overlay(point: &ScenarioPoint) -> Result<(f64, f64)> {
    if point.snr_db == f64::INFINITY {
        return Ok((0.0, 0.0));
    }
    let theta = point.angle()?;
    let hybrid = hybrid_crlb(&CrlbInputs::new(
        point.geometry()?,
        theta,
        point.snr(),
        point.snapshots,
    )?)?;
    let digital = digital_crlb(point.n_elements, point.snr(), point.snapshots, theta, point.spacing)?;
    Ok((hybrid.rmse_deg, digital.rmse_deg))
}

pub fn run_rmse_sweep(spec: &ExperimentSpec) -> Result<RmseCurve> {
    let points = spec.validate()?;
    let mut rows = Vec::with_capacity(points.len() * spec.methods.len());
    for (&x, point) in spec.values.iter().zip(&points) {
        let (crlb_hybrid_deg, crlb_digital_deg) = crlb_overlay(point)?;
        for &method in &spec.methods {
            let errors = trial_errors(point, method, spec.trials, spec.seed)?;
            let stats = RmseStats::from_errors(&errors);
            if stats.failures > 0 {
                log::warn!(
                    "{method} at x={x}: {} of {} trials failed",
                    stats.failures,
                    stats.trials
                );
            }
            rows.push(RmseRow {
                x,
                method,
                rmse_deg: stats.rmse_deg,
                rmse_se_deg: stats.rmse_se_deg,
                trials: stats.trials,
                failures: stats.failures,
                crlb_hybrid_deg,
                crlb_digital_deg,
                seed: spec.seed,
            });
        }
    }
    Ok(RmseCurve { axis: spec.axis, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbRow {
    pub x: f64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub snr_db: f64,
    pub theta_deg: f64,
    pub snapshots: usize,
    pub analytic_fisher: f64,
    pub numeric_fisher: f64,
    pub relative_deviation: f64,
    pub fisher_source: FisherSource,
    pub variance_rad2: f64,
    pub crlb_hybrid_deg: f64,
    pub crlb_digital_deg: f64,
}

impl CrlbRow {
    fn new(x: f64, point: &ScenarioPoint, hybrid: &CrlbReport, digital: &CrlbReport) -> Self {
        Self {
            x,
            n: point.n_elements,
            k: point.n_subarrays,
            m: point.elements_per_subarray(),
            snr_db: point.snr_db,
            theta_deg: point.theta_deg,
            snapshots: point.snapshots,
            analytic_fisher: hybrid.analytic_fisher,
            numeric_fisher: hybrid.numeric_fisher,
            relative_deviation: hybrid.relative_deviation,
            fisher_source: hybrid.fisher_source,
            variance_rad2: hybrid.variance,
            crlb_hybrid_deg: hybrid.rmse_deg,
            crlb_digital_deg: digital.rmse_deg,
        }
    }
}

/// Analytic and oracle bound at each sweep point; `values` empty means the
/// base point alone.
pub fn run_crlb_table(base: &ScenarioPoint, axis: SweepAxis, values: &[f64]) -> Result<Vec<CrlbRow>> {
    let points: Vec<(f64, ScenarioPoint)> = if values.is_empty() {
        base.validate()?;
        vec![(base.axis_value(axis), *base)]
    } else {
        values
            .iter()
            .map(|&x| Ok((x, base.with_axis(axis, x)?)))
            .collect::<Result<_>>()?
    };
    points
        .iter()
        .map(|(x, p)| {
            let theta = p.angle()?;
            let hybrid = hybrid_crlb(&CrlbInputs::new(p.geometry()?, theta, p.snr(), p.snapshots)?)?;
            let digital = digital_crlb(p.n_elements, p.snr(), p.snapshots, theta, p.spacing)?;
            if hybrid.fisher_source == FisherSource::Oracle {
                log::warn!(
                    "closed-form FIM deviates by {:.3e} from the oracle at N={} K={}; using the oracle",
                    hybrid.relative_deviation,
                    p.n_elements,
                    p.n_subarrays
                );
            }
            Ok(CrlbRow::new(*x, p, &hybrid, &digital))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityAxis {
    /// Number of grid bins `Q`, given as a stepsize in degrees.
    Stepsize,
    /// Total elements `N` at fixed `M`.
    #[serde(alias = "n")]
    Elements,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub q: u64,
    pub n: u64,
    pub k: u64,
    pub m: u64,
    pub l: u64,
    pub method: Method,
    pub flops: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCurve {
    pub axis: ComplexityAxis,
    pub values: Vec<f64>,
    pub rows: Vec<ComplexityRow>,
}

pub fn run_complexity(
    base: &ScenarioPoint,
    axis: ComplexityAxis,
    values: &[f64],
    methods: &[Method],
) -> Result<ComplexityCurve> {
    let sweep = match axis {
        ComplexityAxis::Stepsize => SweepAxis::Stepsize,
        ComplexityAxis::Elements => SweepAxis::Elements,
    };
    let mut rows = Vec::new();
    for &x in values {
        let p = base.with_axis(sweep, x)?;
        let q = p.grid()?.bins() as u64;
        let (n, k, m, l) = (
            p.n_elements as u64,
            p.n_subarrays as u64,
            p.elements_per_subarray() as u64,
            p.snapshots as u64,
        );
        for &method in methods {
            rows.push(ComplexityRow {
                q,
                n,
                k,
                m,
                l,
                method,
                flops: complexity_model(method, q, l, k, m),
            });
        }
    }
    Ok(ComplexityCurve {
        axis,
        values: values.to_vec(),
        rows,
    })
}

fn header(command: &str) -> String {
    format!("# hybrid-doa {command} v{FORMAT_VERSION}")
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    format: String,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<W: Write, T: Serialize>(mut w: W, command: &str, body: &T) -> std::io::Result<()> {
    let doc = JsonDoc {
        format: header(command).trim_start_matches("# ").to_string(),
        body,
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)
}

pub fn write_rmse_curve<W: Write>(mut w: W, curve: &RmseCurve, format: OutputFormat) -> std::io::Result<()> {
    let command = curve.axis.command();
    match format {
        OutputFormat::Json => write_json(w, command, curve),
        OutputFormat::Csv => {
            writeln!(w, "{}", header(command))?;
            writeln!(
                w,
                "x,method,rmse_deg,trials,failures,crlb_hybrid_deg,crlb_digital_deg,seed"
            )?;
            for r in &curve.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.x, r.method, r.rmse_deg, r.trials, r.failures, r.crlb_hybrid_deg, r.crlb_digital_deg, r.seed
                )?;
            }
            Ok(())
        }
    }
}

pub fn write_crlb_table<W: Write>(mut w: W, rows: &[CrlbRow], format: OutputFormat) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => write_json(w, "crlb", &serde_json::json!({ "rows": rows })),
        OutputFormat::Csv => {
            writeln!(w, "{}", header("crlb"))?;
            writeln!(
                w,
                "x,n,k,m,snr_db,theta_deg,snapshots,analytic_fisher,numeric_fisher,relative_deviation,fisher_source,variance_rad2,crlb_hybrid_deg,crlb_digital_deg"
            )?;
            for r in rows {
                let source = match r.fisher_source {
                    FisherSource::Analytic => "analytic",
                    FisherSource::Oracle => "oracle",
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.x,
                    r.n,
                    r.k,
                    r.m,
                    r.snr_db,
                    r.theta_deg,
                    r.snapshots,
                    r.analytic_fisher,
                    r.numeric_fisher,
                    r.relative_deviation,
                    source,
                    r.variance_rad2,
                    r.crlb_hybrid_deg,
                    r.crlb_digital_deg
                )?;
            }
            Ok(())
        }
    }
}

pub fn write_complexity<W: Write>(mut w: W, curve: &ComplexityCurve, format: OutputFormat) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => write_json(w, "complexity", curve),
        OutputFormat::Csv => {
            writeln!(w, "{}", header("complexity"))?;
            writeln!(w, "q,n,k,m,l,method,flops")?;
            for r in &curve.rows {
                writeln!(w, "{},{},{},{},{},{},{}", r.q, r.n, r.k, r.m, r.l, r.method, r.flops)?;
            }
            Ok(())
        }
    }
}

pub fn write_estimates<W: Write>(
    mut w: W,
    theta_deg: f64,
    reports: &[EstimateReport],
    format: OutputFormat,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => write_json(
            w,
            "estimate",
            &serde_json::json!({ "theta_deg": theta_deg, "reports": reports }),
        ),
        OutputFormat::Csv => {
            writeln!(w, "{}", header("estimate"))?;
            writeln!(
                w,
                "method,theta_hat_deg,theta_deg,coarse_deg,candidates,blocks_consumed,flops"
            )?;
            for r in reports {
                let coarse = r.coarse_angle.map(|c| c.to_degrees().to_string()).unwrap_or_default();
                let cands: Vec<String> = r
                    .candidates_examined
                    .iter()
                    .map(|c| c.to_degrees().to_string())
                    .collect();
                let cands = if r.method.uses_grid() && r.coarse_angle.is_none() {
                    cands.len().to_string()
                } else {
                    cands.join(";")
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.method,
                    r.theta_hat_deg(),
                    theta_deg,
                    coarse,
                    cands,
                    r.blocks_consumed,
                    r.flops
                )?;
            }
            Ok(())
        }
    }
}
