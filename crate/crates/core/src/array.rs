//! Uniform linear array partitioned into `K` contiguous subarrays of `M`
//! elements each, plus the analog/digital beamforming weights applied to it.
//!
//! Lengths are expressed in wavelengths: the wavelength is fixed at 1.0 and
//! the element spacing is stored as `d / lambda`. Element `n` (0-based) of the
//! full array sits at `n * d`, so element `m` of subarray `k` (both 0-based)
//! has index `k * M + m`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, DoaError, Result};

pub type C64 = Complex64;
pub type ComplexVector = DVector<C64>;
pub type ComplexMatrix = DMatrix<C64>;

/// Below this magnitude the geometric-series denominator of the subarray
/// gain is treated as singular and the gain is summed directly.
const GAIN_SINGULAR_TOL: f64 = 1e-9;

const ANGLE_SLACK: f64 = 1e-12;

/// Physical description of the sub-connected array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    n_subarrays: usize,
    elements_per_subarray: usize,
    spacing: f64,
}

impl ArrayGeometry {
    /// `spacing` is the element spacing in wavelengths.
    pub fn new(n_subarrays: usize, elements_per_subarray: usize, spacing: f64) -> Result<Self> {
        if n_subarrays == 0 || elements_per_subarray == 0 {
            return Err(DoaError::InvalidGeometry(format!(
                "K = {n_subarrays} and M = {elements_per_subarray} must both be positive"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(DoaError::InvalidGeometry(format!(
                "element spacing {spacing} must be positive"
            )));
        }
        Ok(Self {
            n_subarrays,
            elements_per_subarray,
            spacing,
        })
    }

    pub fn half_wavelength(n_subarrays: usize, elements_per_subarray: usize) -> Result<Self> {
        Self::new(n_subarrays, elements_per_subarray, 0.5)
    }

    /// Builds the geometry from the total element count, enforcing `N = K * M`.
    pub fn from_total(n_elements: usize, n_subarrays: usize, spacing: f64) -> Result<Self> {
        if n_subarrays == 0 || !n_elements.is_multiple_of(n_subarrays) {
            return Err(DoaError::InvalidGeometry(format!(
                "N = {n_elements} is not a multiple of K = {n_subarrays}"
            )));
        }
        Self::new(n_subarrays, n_elements / n_subarrays, spacing)
    }

    pub fn n_elements(&self) -> usize {
        self.n_subarrays * self.elements_per_subarray
    }

    pub fn n_subarrays(&self) -> usize {
        self.n_subarrays
    }

    pub fn elements_per_subarray(&self) -> usize {
        self.elements_per_subarray
    }

    /// Element spacing in wavelengths.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        1.0
    }

    /// Phase increment between adjacent elements, `2 pi d sin(theta) / lambda`.
    pub fn element_phase(&self, theta: Angle) -> f64 {
        2.0 * PI * self.spacing * theta.sin()
    }

    /// Phase increment between adjacent subarrays (virtual-array elements).
    pub fn virtual_phase(&self, theta: Angle) -> f64 {
        self.element_phase(theta) * self.elements_per_subarray as f64
    }
}

/// Direction of arrival in radians, confined to `[-pi/2, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn from_radians(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta.abs() > FRAC_PI_2 + ANGLE_SLACK {
            return Err(DoaError::InvalidAngle(theta));
        }
        Ok(Self(theta.clamp(-FRAC_PI_2, FRAC_PI_2)))
    }

    pub fn from_degrees(deg: f64) -> Result<Self> {
        Self::from_radians(deg.to_radians())
    }

    /// Angle whose sine is `u`; `u` must lie in `[-1, 1]` up to rounding.
    pub fn from_sine(u: f64) -> Result<Self> {
        if !u.is_finite() || u.abs() > 1.0 + ANGLE_SLACK {
            return Err(DoaError::InvalidParameter(format!("sine {u} outside [-1, 1]")));
        }
        Ok(Self(u.clamp(-1.0, 1.0).asin()))
    }

    pub const fn zero() -> Self {
        Self(0.0)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn sin(self) -> f64 {
        self.0.sin()
    }

    pub fn cos(self) -> f64 {
        self.0.cos()
    }
}

fn unit_phasors(len: usize, start: f64, step: f64) -> ComplexVector {
    DVector::from_iterator(len, (0..len).map(|i| C64::from_polar(1.0, start + step * i as f64)))
}

/// Full-array manifold `a(theta)`; element `n` is `exp(j 2 pi n d sin(theta))`.
pub fn steering_vector(geom: &ArrayGeometry, theta: Angle) -> ComplexVector {
    unit_phasors(geom.n_elements(), 0.0, geom.element_phase(theta))
}

/// Manifold of subarray `k` (1-based), i.e. rows `(k-1)M .. kM-1` of the full manifold.
pub fn subarray_steering(geom: &ArrayGeometry, theta: Angle, k: usize) -> Result<ComplexVector> {
    let kk = geom.n_subarrays();
    if k == 0 || k > kk {
        return Err(DoaError::IndexOutOfRange { index: k, max: kk });
    }
    let m = geom.elements_per_subarray();
    let step = geom.element_phase(theta);
    Ok(unit_phasors(m, step * ((k - 1) * m) as f64, step))
}

/// Manifold of the virtual array formed by the `K` subarray outputs.
pub fn virtual_steering(geom: &ArrayGeometry, theta: Angle) -> ComplexVector {
    unit_phasors(geom.n_subarrays(), 0.0, geom.virtual_phase(theta))
}

/// Coherent sum of one subarray's element phasors, `g(theta)`.
pub fn subarray_gain(geom: &ArrayGeometry, theta: Angle) -> C64 {
    let phase = geom.element_phase(theta);
    let m = geom.elements_per_subarray();
    let denom = C64::new(1.0, 0.0) - C64::from_polar(1.0, phase);
    if denom.norm() < GAIN_SINGULAR_TOL {
        return (0..m).map(|i| C64::from_polar(1.0, phase * i as f64)).sum();
    }
    (C64::new(1.0, 0.0) - C64::from_polar(1.0, phase * m as f64)) / denom
}

/// Per-element analog phases that steer every subarray toward `theta`:
/// `alpha_{k,m} = 2 pi ((k-1)M + (m-1)) d sin(theta)`, laid out element by element.
pub fn analog_phases(geom: &ArrayGeometry, theta: Angle) -> Vec<f64> {
    let step = geom.element_phase(theta);
    (0..geom.n_elements()).map(|n| step * n as f64).collect()
}

/// Intra-subarray phases `alpha_m` (M values), the analog half of the
/// `alpha_{k,m} = alpha_m + alpha_k` split.
pub fn element_phases(geom: &ArrayGeometry, theta: Angle) -> Vec<f64> {
    let step = geom.element_phase(theta);
    (0..geom.elements_per_subarray()).map(|m| step * m as f64).collect()
}

/// Inter-subarray phases `alpha_k` (K values), the digital half of the split.
pub fn subarray_phases(geom: &ArrayGeometry, theta: Angle) -> Vec<f64> {
    let step = geom.virtual_phase(theta);
    (0..geom.n_subarrays()).map(|k| step * k as f64).collect()
}

/// Repeats the `M` intra-subarray phases across all `K` subarrays.
pub fn tile_element_phases(geom: &ArrayGeometry, per_element: &[f64]) -> Result<Vec<f64>> {
    check_len(
        "intra-subarray phase vector",
        geom.elements_per_subarray(),
        per_element.len(),
    )?;
    Ok(per_element.iter().copied().cycle().take(geom.n_elements()).collect())
}

/// Digital beamforming vector `v_D = [exp(j alpha_1), ..., exp(j alpha_K)]`;
/// it combines as `r = v_D^H y`.
pub fn digital_weights(phases: &[f64]) -> ComplexVector {
    DVector::from_iterator(phases.len(), phases.iter().map(|&p| C64::from_polar(1.0, p)))
}

/// Block-diagonal analog combiner `V_A` held as its `N` phases.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalogWeights {
    geom: ArrayGeometry,
    phases: Vec<f64>,
}

impl AnalogWeights {
    pub fn from_phases(geom: &ArrayGeometry, phases: Vec<f64>) -> Result<Self> {
        check_len("analog phase vector", geom.n_elements(), phases.len())?;
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(DoaError::NonFinite("analog phases"));
        }
        Ok(Self { geom: *geom, phases })
    }

    /// Weights fully phase-aligned to `theta`.
    pub fn steered(geom: &ArrayGeometry, theta: Angle) -> Self {
        Self {
            geom: *geom,
            phases: analog_phases(geom, theta),
        }
    }

    /// All phase shifters at zero, `v_{A,k} = 1/sqrt(M) * ones`.
    pub fn zeroed(geom: &ArrayGeometry) -> Self {
        Self {
            geom: *geom,
            phases: vec![0.0; geom.n_elements()],
        }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `v_{A,k}` for subarray `k` (1-based), unit norm.
    pub fn subarray_vector(&self, k: usize) -> Result<ComplexVector> {
        let kk = self.geom.n_subarrays();
        if k == 0 || k > kk {
            return Err(DoaError::IndexOutOfRange { index: k, max: kk });
        }
        let m = self.geom.elements_per_subarray();
        let scale = 1.0 / (m as f64).sqrt();
        let slice = &self.phases[(k - 1) * m..k * m];
        Ok(DVector::from_iterator(
            m,
            slice.iter().map(|&p| C64::from_polar(scale, p)),
        ))
    }

    /// The `N x K` block-diagonal matrix `V_A`.
    pub fn matrix(&self) -> ComplexMatrix {
        let m = self.geom.elements_per_subarray();
        let scale = 1.0 / (m as f64).sqrt();
        let mut va = DMatrix::zeros(self.geom.n_elements(), self.geom.n_subarrays());
        for (n, &p) in self.phases.iter().enumerate() {
            va[(n, n / m)] = C64::from_polar(scale, p);
        }
        va
    }

    /// Per-subarray response `V_A^H x` for an `N`-vector `x`.
    pub fn combine(&self, x: &ComplexVector) -> Result<ComplexVector> {
        check_len("element-domain vector", self.geom.n_elements(), x.len())?;
        let m = self.geom.elements_per_subarray();
        let scale = 1.0 / (m as f64).sqrt();
        Ok(DVector::from_iterator(
            self.geom.n_subarrays(),
            (0..self.geom.n_subarrays()).map(|k| {
                (k * m..(k + 1) * m)
                    .map(|n| C64::from_polar(scale, -self.phases[n]) * x[n])
                    .sum::<C64>()
            }),
        ))
    }
}

/// Digital combining of post-ADC subarray outputs: `r(n) = v_D^H y(n)`.
pub fn combine_digital(v_d: &ComplexVector, y: &ComplexMatrix) -> Result<ComplexVector> {
    check_len("digital weight vector", y.nrows(), v_d.len())?;
    Ok(y.tr_mul(&v_d.conjugate()).column(0).into_owned())
}

/// Full hybrid chain on a raw `N x L` element-domain waveform:
/// `r(n) = v_D^H V_A^H x(n)`.
pub fn apply_hybrid(analog: &AnalogWeights, v_d: &ComplexVector, raw: &ComplexMatrix) -> Result<ComplexVector> {
    let geom = analog.geom;
    if raw.nrows() != geom.n_elements() {
        return Err(DoaError::DimensionMismatch {
            expected: format!("{} rows", geom.n_elements()),
            actual: format!("{} rows", raw.nrows()),
        });
    }
    check_len("digital weight vector", geom.n_subarrays(), v_d.len())?;
    let subarray_out = analog.matrix().adjoint() * raw;
    combine_digital(v_d, &subarray_out)
}
