//! Cramér-Rao bound on the direction estimate of the hybrid array.
//!
//! Two routes to the per-snapshot Fisher information `F`:
//!
//! * [`hybrid_fim`] evaluates the closed-form expression in `g(theta)`,
//!   `eta` and the subarray offsets.
//! * [`numeric_fim_oracle`] builds the model covariance
//!   `R(theta) = gamma V_A^H a a^H V_A + I` (zeroed analog phases) directly
//!   and evaluates `Tr(R^-1 R' R^-1 R')` with a central difference for `R'`.
//!
//! The bound is `1 / (L F)`. When the two routes disagree by more than 1 %
//! the oracle value is used.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::array::{subarray_gain, Angle, ArrayGeometry, ComplexMatrix, C64};
use crate::error::{DoaError, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Largest analytic/oracle relative deviation at which the analytic value is trusted.
pub const ANALYTIC_TRUST_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbInputs {
    pub geom: ArrayGeometry,
    pub theta: Angle,
    /// Linear per-element SNR `gamma`.
    pub snr: f64,
    pub snapshots: usize,
}

impl CrlbInputs {
    pub fn new(geom: ArrayGeometry, theta: Angle, snr: f64, snapshots: usize) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(DoaError::InvalidParameter(format!(
                "SNR {snr} must be positive and finite"
            )));
        }
        if snapshots == 0 {
            return Err(DoaError::InvalidParameter("L must be at least 1".into()));
        }
        Ok(Self {
            geom,
            theta,
            snr,
            snapshots,
        })
    }
}

/// Intermediate quantities of the closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FimTerms {
    /// `a^H B a`, computed directly from the manifold.
    pub gamma_big: f64,
    pub gain: C64,
    /// `sum_m d_m exp(-j 2 pi d_m sin(theta))`.
    pub eta: C64,
    /// `sum_m d_m exp(+j 2 pi d_m sin(theta))`.
    pub zeta: C64,
    /// `(k-1) M d` for each subarray.
    pub subarray_offsets: Vec<f64>,
    pub offset_sum: f64,
    pub offset_sq_sum: f64,
    /// The four bracketed contributions, in order.
    pub bracket: [f64; 4],
    /// Per-snapshot Fisher information.
    pub fisher: f64,
    /// `cos(theta) = 0`: no information and an infinite bound.
    pub infinite_bound: bool,
}

pub fn hybrid_fim(inputs: &CrlbInputs) -> FimTerms {
    let geom = &inputs.geom;
    let (k, m) = (geom.n_subarrays(), geom.elements_per_subarray());
    let (kf, mf) = (k as f64, m as f64);
    let d = geom.spacing();
    let lambda = geom.wavelength();
    let theta = inputs.theta;
    let gamma = inputs.snr;

    let gain = subarray_gain(geom, theta);
    let g2 = gain.norm_sqr();
    let wave = 2.0 * PI / lambda * theta.sin();

    let (mut eta, mut zeta) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for i in 0..m {
        let dm = i as f64 * d;
        eta += C64::from_polar(dm, -wave * dm);
        zeta += C64::from_polar(dm, wave * dm);
    }

    // a^H B a = sum over subarrays of |sum of the subarray's phasors|^2.
    let step = geom.element_phase(theta);
    let gamma_big: f64 = (0..k)
        .map(|kk| {
            (0..m)
                .map(|mm| C64::from_polar(1.0, step * (kk * m + mm) as f64))
                .sum::<C64>()
                .norm_sqr()
        })
        .sum();

    let subarray_offsets: Vec<f64> = (0..k).map(|kk| kk as f64 * mf * d).collect();
    let offset_sum = subarray_offsets.iter().sum();
    let offset_sq_sum = subarray_offsets.iter().map(|x| x * x).sum();

    let cos2 = theta.cos().powi(2);
    let denom = mf + kf * gamma * g2;
    let prefactor = 8.0 * PI * PI * cos2 * gamma * gamma / (lambda * lambda * mf * denom);
    let bracket = [
        g2 * g2 / 6.0 * mf * mf * kf * kf * (kf - 1.0) * (2.0 * kf - 1.0) * d * d,
        -g2 * g2 / 4.0 * mf * mf * kf * kf * (kf - 1.0).powi(2) * d * d,
        g2 * mf * kf / denom * eta.norm_sqr(),
        mf * kf * kf / denom * (gain * gain * eta).re,
    ];
    let infinite_bound = theta.cos().abs() < 1e-15;
    let fisher = if infinite_bound {
        0.0
    } else {
        prefactor * bracket.iter().sum::<f64>()
    };

    FimTerms {
        gamma_big,
        gain,
        eta,
        zeta,
        subarray_offsets,
        offset_sum,
        offset_sq_sum,
        bracket,
        fisher,
        infinite_bound,
    }
}

/// Covariance of a zeroed-phase block at direction `theta` (radians, not
/// range checked so that finite-difference stencils may straddle `+-pi/2`).
fn oracle_covariance(geom: &ArrayGeometry, theta: f64, gamma: f64) -> ComplexMatrix {
    let (k, m) = (geom.n_subarrays(), geom.elements_per_subarray());
    let scale = 1.0 / (m as f64).sqrt();
    let step = 2.0 * PI * geom.spacing() / geom.wavelength() * theta.sin();
    let b: Vec<C64> = (0..k)
        .map(|kk| {
            (0..m)
                .map(|mm| C64::from_polar(scale, step * (kk * m + mm) as f64))
                .sum()
        })
        .collect();
    DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        b[i] * b[j].conj() * gamma + C64::new(diag, 0.0)
    })
}

/// Per-snapshot Fisher information `Tr(R^-1 R' R^-1 R')` with `R'` from a
/// central difference of step `fd_step` radians.
pub fn numeric_fim_oracle(inputs: &CrlbInputs, fd_step: f64) -> Result<f64> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(DoaError::InvalidParameter(format!("finite-difference step {fd_step}")));
    }
    let (geom, theta, gamma) = (&inputs.geom, inputs.theta.radians(), inputs.snr);
    let r = oracle_covariance(geom, theta, gamma);
    let plus = oracle_covariance(geom, theta + fd_step, gamma);
    let minus = oracle_covariance(geom, theta - fd_step, gamma);
    let dr = (plus - minus) / C64::new(2.0 * fd_step, 0.0);
    let r_inv = r
        .cholesky()
        .ok_or(DoaError::InvalidParameter("model covariance is singular".into()))?
        .inverse();
    let x = &r_inv * &dr;
    Ok((&x * &x).trace().re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherSource {
    Analytic,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub analytic_fisher: f64,
    pub numeric_fisher: f64,
    /// `|analytic - numeric| / numeric`.
    pub relative_deviation: f64,
    pub fisher_source: FisherSource,
    /// Bound on the variance, rad^2; infinite when no information is available.
    pub variance: f64,
    pub rmse_deg: f64,
    pub snapshots: usize,
}

impl CrlbReport {
    /// Bound computed from the oracle regardless of the analytic agreement.
    pub fn oracle_rmse_deg(&self) -> f64 {
        rmse_deg(self.numeric_fisher, self.snapshots)
    }

    pub fn is_infinite(&self) -> bool {
        !self.variance.is_finite()
    }
}

fn variance(fisher: f64, snapshots: usize) -> f64 {
    if fisher > 0.0 {
        1.0 / (snapshots as f64 * fisher)
    } else {
        f64::INFINITY
    }
}

fn rmse_deg(fisher: f64, snapshots: usize) -> f64 {
    variance(fisher, snapshots).sqrt().to_degrees()
}

pub fn hybrid_crlb(inputs: &CrlbInputs) -> Result<CrlbReport> {
    let analytic = hybrid_fim(inputs).fisher;
    let numeric = numeric_fim_oracle(inputs, DEFAULT_FD_STEP)?;
    let relative_deviation = if numeric > 0.0 {
        (analytic - numeric).abs() / numeric
    } else if analytic == numeric {
        0.0
    } else {
        f64::INFINITY
    };
    let (fisher_source, fisher) = if relative_deviation <= ANALYTIC_TRUST_TOL {
        (FisherSource::Analytic, analytic)
    } else {
        (FisherSource::Oracle, numeric)
    };
    let var = variance(fisher, inputs.snapshots);
    Ok(CrlbReport {
        analytic_fisher: analytic,
        numeric_fisher: numeric,
        relative_deviation,
        fisher_source,
        variance: var,
        rmse_deg: var.sqrt().to_degrees(),
        snapshots: inputs.snapshots,
    })
}

/// Bound of a fully digital `N`-element array: the hybrid bound with one
/// element per subarray.
pub fn digital_crlb(n_elements: usize, snr: f64, snapshots: usize, theta: Angle, spacing: f64) -> Result<CrlbReport> {
    let geom = ArrayGeometry::new(n_elements, 1, spacing)?;
    hybrid_crlb(&CrlbInputs::new(geom, theta, snr, snapshots)?)
}
