//! Root-MUSIC on the virtual array of subarray outputs, followed by analog
//! disambiguation of the grating aliases of the selected root.
//!
//! Pipeline for one estimate:
//! 1. acquire one block with all analog phases at zero,
//! 2. sample covariance, Hermitian eigendecomposition, noise subspace `E_N`,
//! 3. root the degree `2K-2` polynomial built from the diagonals of `E_N E_N^H`,
//! 4. keep the root whose direction maximizes the digital power on the stored block,
//! 5. expand it into its `M` aliases and pick the one with the largest
//!    analog+digital aligned power, one fresh block per alias.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::array::{Angle, ArrayGeometry, ComplexMatrix, ComplexVector, C64};
use crate::complexity::{complexity_model, Method};
use crate::error::{DoaError, Result};
use crate::frontend::HybridFrontend;
use crate::grid::{
    analog_stage, argmax_smallest_angle, candidate_set_from_phase, dpa_power, physically_distinct, CandidateSet,
    CandidateSource, EstimateReport,
};

const ROOT_DEDUP: f64 = 1e-8;
const PAIR_TOL: f64 = 1e-6;
const DEFLATE_TOL: f64 = 1e-12;

/// Sample covariance `R = Y Y^H / L` of a `K x L` block.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: ComplexMatrix,
    pub snapshots_used: usize,
}

pub fn sample_covariance(data: &ComplexMatrix) -> Result<CovarianceEstimate> {
    let (k, l) = data.shape();
    if l == 0 {
        return Err(DoaError::Empty("snapshot block"));
    }
    if l < k {
        log::warn!("covariance from {l} snapshots for {k} channels is rank deficient");
    }
    let mut r = data * data.adjoint() / C64::new(l as f64, 0.0);
    // Symmetrize to remove rounding asymmetry.
    let rh = r.adjoint();
    r = (r + rh) * C64::new(0.5, 0.0);
    Ok(CovarianceEstimate {
        matrix: r,
        snapshots_used: l,
    })
}

/// Signal/noise split of a covariance with one source.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceSplit {
    /// Eigenvector of the largest eigenvalue.
    pub signal: ComplexVector,
    /// `K x (K-1)` eigenvectors of the remaining eigenvalues.
    pub noise: ComplexMatrix,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

impl SubspaceSplit {
    /// Mean of the `K-1` smallest eigenvalues.
    pub fn noise_power_estimate(&self) -> f64 {
        let tail = &self.eigenvalues[1..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Largest eigenvalue above the noise floor.
    pub fn signal_power_estimate(&self) -> f64 {
        self.eigenvalues[0] - self.noise_power_estimate()
    }
}

pub fn noise_subspace(cov: &CovarianceEstimate) -> Result<SubspaceSplit> {
    let r = &cov.matrix;
    let k = r.nrows();
    if k == 0 || r.ncols() != k {
        return Err(DoaError::DimensionMismatch {
            expected: "square covariance".into(),
            actual: format!("{}x{}", r.nrows(), r.ncols()),
        });
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DoaError::NonFinite("covariance"));
    }
    let eig = SymmetricEigen::try_new(r.clone(), 1e-15, 10_000 * k.max(1))
        .ok_or(DoaError::Eigen("Hermitian eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let signal = eig.eigenvectors.column(order[0]).into_owned();
    let noise = DMatrix::from_fn(k, k - 1, |i, j| eig.eigenvectors[(i, order[j + 1])]);
    Ok(SubspaceSplit {
        signal,
        noise,
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// Coefficients `c_0 ..= c_{2K-2}` (ascending powers of `z`) of
/// `z^{K-1} * sum_{m,n} z^{n-m} C_{mn}` with `C = E_N E_N^H`; `c_l` is the sum
/// of the diagonal `n - m = l - (K-1)`.
pub fn rooting_polynomial(noise: &ComplexMatrix) -> Result<Vec<C64>> {
    let k = noise.nrows();
    if k < 2 || noise.ncols() != k - 1 {
        return Err(DoaError::DimensionMismatch {
            expected: format!("{k}x{} noise subspace", k.saturating_sub(1)),
            actual: format!("{}x{}", noise.nrows(), noise.ncols()),
        });
    }
    Ok(diagonal_sums(&(noise * noise.adjoint())))
}

pub(crate) fn diagonal_sums(c: &ComplexMatrix) -> Vec<C64> {
    let k = c.nrows();
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * k - 1];
    for m in 0..k {
        for n in 0..k {
            coeffs[n + k - 1 - m] += c[(m, n)];
        }
    }
    coeffs
}

/// Evaluates an ascending-order polynomial by Horner's rule.
pub fn poly_eval(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn poly_derivative(coeffs: &[C64]) -> Vec<C64> {
    coeffs.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect()
}

/// Backward-error style residual `|p(z)| / sum |c_l| |z|^l`.
pub fn scaled_residual(coeffs: &[C64], z: C64) -> f64 {
    let r = z.norm();
    let scale: f64 = coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm());
    if scale == 0.0 {
        return 0.0;
    }
    poly_eval(coeffs, z).norm() / scale
}

/// Polynomial roots with their `(z, 1/z*)` partners.
#[derive(Clone, Debug, PartialEq)]
pub struct RootSet {
    pub roots: Vec<C64>,
    /// Index of the root matching `1/conj(z)`, if one lies within `1e-6`.
    pub partners: Vec<Option<usize>>,
}

impl RootSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

fn pair_roots(roots: &[C64]) -> Vec<Option<usize>> {
    roots
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mirror = C64::new(1.0, 0.0) / z.conj();
            roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i || (z.norm() - 1.0).abs() < PAIR_TOL)
                .map(|(j, w)| (j, (w - mirror).norm() / mirror.norm().max(1.0)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .filter(|&(_, dist)| dist < PAIR_TOL)
                .map(|(j, _)| j)
        })
        .collect()
}

/// All roots of an ascending-order polynomial via the eigenvalues of its
/// companion matrix, refined by a few Newton steps.
pub fn solve_roots(coeffs: &[C64]) -> Result<RootSet> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(DoaError::DegeneratePolynomial);
    }
    let mut lo = 0;
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= DEFLATE_TOL * scale {
        hi -= 1;
    }
    while lo < hi && coeffs[lo].norm() <= DEFLATE_TOL * scale {
        lo += 1;
    }
    if hi < coeffs.len() || lo > 0 {
        log::warn!(
            "deflated {} leading and {} trailing negligible coefficients",
            coeffs.len() - hi,
            lo
        );
    }
    let trimmed = &coeffs[lo..hi];
    let degree = trimmed.len() - 1;
    let mut roots: Vec<C64> = vec![C64::new(0.0, 0.0); lo];
    if degree > 0 {
        let lead = trimmed[degree];
        let companion = DMatrix::from_fn(degree, degree, |i, j| {
            if i == 0 {
                -trimmed[degree - 1 - j] / lead
            } else if i == j + 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let schur = Schur::try_new(companion, 1e-15, 100_000 * degree)
            .ok_or(DoaError::Eigen("companion matrix Schur iteration did not converge"))?;
        let (_, t) = schur.unpack();
        let deriv = poly_derivative(trimmed);
        for i in 0..degree {
            roots.push(newton_polish(trimmed, &deriv, t[(i, i)]));
        }
    }
    let partners = pair_roots(&roots);
    Ok(RootSet { roots, partners })
}

fn newton_polish(p: &[C64], dp: &[C64], mut z: C64) -> C64 {
    let mut res = scaled_residual(p, z);
    for _ in 0..3 {
        let d = poly_eval(dp, z);
        if d.norm() == 0.0 {
            break;
        }
        let cand = z - poly_eval(p, z) / d;
        let cand_res = scaled_residual(p, cand);
        if cand_res.partial_cmp(&res) != Some(std::cmp::Ordering::Less) {
            break;
        }
        z = cand;
        res = cand_res;
    }
    z
}

/// Which roots enter the direction mapping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootFilter {
    /// Every root of the polynomial.
    #[default]
    All,
    /// Only roots on or inside the unit circle (one per `(z, 1/z*)` pair).
    InsideUnitCircle,
}

impl std::str::FromStr for RootFilter {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "inside-unit-circle" | "inside" => Ok(Self::InsideUnitCircle),
            other => Err(DoaError::InvalidParameter(format!("unknown root filter `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootMusicOptions {
    pub root_filter: RootFilter,
}

/// One root mapped to a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootDirection {
    pub root: C64,
    pub angle: Angle,
}

/// Maps each root to `arcsin(arg(z) / (2 pi M d))`; roots whose sine would
/// leave `[-1, 1]` are returned separately.
pub fn roots_to_angles(roots: &[C64], geom: &ArrayGeometry) -> (Vec<RootDirection>, Vec<C64>) {
    let denom = 2.0 * std::f64::consts::PI * geom.elements_per_subarray() as f64 * geom.spacing();
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for &z in roots {
        let u = z.arg() / denom;
        match Angle::from_sine(u) {
            Ok(angle) => kept.push(RootDirection { root: z, angle }),
            Err(_) => discarded.push(z),
        }
    }
    (kept, discarded)
}

fn dedup_roots(roots: &[C64]) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::with_capacity(roots.len());
    for &z in roots {
        if !out.iter().any(|w| (w - z).norm() < ROOT_DEDUP) {
            out.push(z);
        }
    }
    out
}

/// Everything the digital Root-MUSIC stage computes from the stored block.
#[derive(Clone, Debug)]
pub struct RootStage {
    pub covariance: CovarianceEstimate,
    pub subspace: SubspaceSplit,
    pub coefficients: Vec<C64>,
    pub roots: RootSet,
    pub directions: Vec<RootDirection>,
    pub discarded: Vec<C64>,
    /// Digital power of each entry of `directions` on the stored block.
    pub powers: Vec<f64>,
    pub selected: RootDirection,
}

impl RootStage {
    /// Grating aliases of the selected root.
    pub fn candidates(&self, geom: &ArrayGeometry) -> CandidateSet {
        candidate_set_from_phase(geom, self.selected.root.arg(), CandidateSource::RootMusic)
    }
}

/// Digital half of the estimator, on one stored `K x L` block.
pub fn root_music_stage(geom: &ArrayGeometry, data: &ComplexMatrix, opts: RootMusicOptions) -> Result<RootStage> {
    if geom.n_subarrays() < 2 {
        return Err(DoaError::InvalidGeometry(
            "Root-MUSIC needs at least two subarrays".into(),
        ));
    }
    if data.nrows() != geom.n_subarrays() {
        return Err(DoaError::DimensionMismatch {
            expected: format!("{} rows", geom.n_subarrays()),
            actual: format!("{} rows", data.nrows()),
        });
    }
    let covariance = sample_covariance(data)?;
    let subspace = noise_subspace(&covariance)?;
    let coefficients = rooting_polynomial(&subspace.noise)?;
    let roots = solve_roots(&coefficients)?;
    let pool: Vec<C64> = match opts.root_filter {
        RootFilter::All => roots.roots.clone(),
        RootFilter::InsideUnitCircle => roots
            .roots
            .iter()
            .copied()
            .filter(|z| z.norm() <= 1.0 + PAIR_TOL)
            .collect(),
    };
    let (directions, discarded) = roots_to_angles(&dedup_roots(&pool), geom);
    if directions.is_empty() {
        return Err(DoaError::EmptyRootSet);
    }
    let powers: Vec<f64> = directions.iter().map(|d| dpa_power(geom, data, d.angle)).collect();
    let mut best = 0;
    for i in 1..directions.len() {
        let (p, q) = (powers[i], powers[best]);
        let closer = |a: &RootDirection| (a.root.norm() - 1.0).abs();
        let wins = p > q
            || (p == q
                && (closer(&directions[i]) < closer(&directions[best])
                    || (closer(&directions[i]) == closer(&directions[best])
                        && directions[i].angle < directions[best].angle)));
        if wins {
            best = i;
        }
    }
    let selected = directions[best];
    Ok(RootStage {
        covariance,
        subspace,
        coefficients,
        roots,
        directions,
        discarded,
        powers,
        selected,
    })
}

/// Full Root-MUSIC estimator with analog disambiguation; consumes `M+1` blocks.
pub fn estimate_root_music_hdapa(frontend: &mut HybridFrontend, opts: RootMusicOptions) -> Result<EstimateReport> {
    let geom = *frontend.geometry();
    if geom.n_subarrays() < 2 {
        return Err(DoaError::InvalidGeometry(
            "Root-MUSIC needs at least two subarrays".into(),
        ));
    }
    let start = frontend.blocks_consumed();
    let stored = frontend.acquire_block(&vec![0.0; geom.n_elements()])?;
    let stage = root_music_stage(&geom, &stored.data, opts)?;

    let candidates = physically_distinct(&geom, &stage.candidates(&geom));
    if candidates.is_empty() {
        return Err(DoaError::EmptyCandidateSet);
    }
    let powers = analog_stage(frontend, &candidates, false)?;
    let best = argmax_smallest_angle(&candidates, &powers).ok_or(DoaError::EmptyCandidateSet)?;
    let used = frontend.blocks_consumed() - start;
    assert_eq!(used, 1 + candidates.len() as u64);

    Ok(EstimateReport {
        method: Method::RootMusicHdapa,
        theta_hat: candidates[best].radians(),
        candidates_examined: candidates.iter().map(|a| a.radians()).collect(),
        objective_values: powers,
        coarse_angle: Some(stage.selected.angle.radians()),
        blocks_consumed: used,
        flops: complexity_model(
            Method::RootMusicHdapa,
            0,
            frontend.snapshots_per_block() as u64,
            geom.n_subarrays() as u64,
            geom.elements_per_subarray() as u64,
        ),
    })
}

/// `sigma_s^2 |g|^2 / M * a_M a_M^H + sigma_w^2 I`, the covariance of a block
/// taken with zeroed analog phases.
pub fn model_covariance(geom: &ArrayGeometry, theta: Angle, signal_var: f64, noise_var: f64) -> ComplexMatrix {
    let a = crate::array::virtual_steering(geom, theta);
    let g2 = crate::array::subarray_gain(geom, theta).norm_sqr();
    let scale = signal_var * g2 / geom.elements_per_subarray() as f64;
    let k = geom.n_subarrays();
    &a * a.adjoint() * C64::new(scale, 0.0) + DMatrix::identity(k, k) * C64::new(noise_var, 0.0)
}

/// MUSIC pseudo-spectrum `1 / (|g|^2 a_M^H C a_M)`.
pub fn music_pseudospectrum(geom: &ArrayGeometry, noise: &ComplexMatrix, theta: Angle) -> f64 {
    let a = crate::array::virtual_steering(geom, theta);
    let proj: DVector<C64> = noise.adjoint() * a;
    let g2 = crate::array::subarray_gain(geom, theta).norm_sqr();
    1.0 / (g2 * proj.norm_squared())
}
