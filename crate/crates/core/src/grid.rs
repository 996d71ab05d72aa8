//! Linear-search estimators: analog phase alignment (APA), hybrid
//! analog-then-digital alignment (HADPA) and digital-then-analog alignment
//! (HDAPA), together with the shared receive-power objective and the
//! grating-ambiguity candidate sets.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::array::{
    analog_phases, combine_digital, digital_weights, element_phases, subarray_phases, tile_element_phases, Angle,
    ArrayGeometry, ComplexMatrix, ComplexVector, C64,
};
use crate::complexity::{block_budget, complexity_model, Method};
use crate::error::{DoaError, Result};
use crate::frontend::HybridFrontend;

const CANDIDATE_DEDUP_RAD: f64 = 1e-9;

/// Uniform search grid over `[-pi/2, pi/2]` with `Q` bins and `Q+1` points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchGrid {
    bins: usize,
}

impl SearchGrid {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(DoaError::InvalidParameter("grid needs at least one bin".into()));
        }
        Ok(Self { bins })
    }

    /// `Q = 180 / step_deg`, which must be a whole number.
    pub fn from_step_degrees(step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0) {
            return Err(DoaError::InvalidParameter(format!(
                "stepsize {step_deg} must be positive"
            )));
        }
        let q = 180.0 / step_deg;
        let rounded = q.round();
        if (q - rounded).abs() > 1e-6 * q.max(1.0) || rounded < 1.0 {
            return Err(DoaError::InvalidParameter(format!(
                "stepsize {step_deg} deg does not divide 180 deg"
            )));
        }
        Self::new(rounded as usize)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.bins + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        PI / self.bins as f64
    }

    pub fn angle(&self, i: usize) -> Angle {
        let theta = if i == self.bins {
            FRAC_PI_2
        } else {
            -FRAC_PI_2 + i as f64 * self.step()
        };
        Angle::from_radians(theta).expect("grid point in range")
    }

    pub fn angles(&self) -> impl Iterator<Item = Angle> + '_ {
        (0..=self.bins).map(|i| self.angle(i))
    }

    /// Grid point closest to `theta`.
    pub fn nearest(&self, theta: Angle) -> Angle {
        let i = ((theta.radians() + FRAC_PI_2) / self.step()).round() as usize;
        self.angle(i.min(self.bins))
    }
}

/// Where a candidate set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    DpaGrid,
    RootMusic,
}

/// Directions that share one virtual-array phase modulo `2 pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub angles: Vec<Angle>,
    pub source: CandidateSource,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

fn enumerate_aliases(geom: &ArrayGeometry, base_sine: f64, exact: Option<Angle>) -> Vec<Angle> {
    let step = 1.0 / (geom.elements_per_subarray() as f64 * geom.spacing());
    let lo = ((-1.0 - base_sine) / step - 1e-12).ceil() as i64;
    let hi = ((1.0 - base_sine) / step + 1e-12).floor() as i64;
    let mut out: Vec<Angle> = (lo..=hi)
        .filter_map(|i| match (i, exact) {
            (0, Some(a)) => Some(a),
            _ => Angle::from_sine(base_sine + i as f64 * step).ok(),
        })
        .collect();
    out.sort_by(|a, b| a.radians().total_cmp(&b.radians()));
    out.dedup_by(|b, a| (b.radians() - a.radians()).abs() < CANDIDATE_DEDUP_RAD);
    out
}

/// All directions whose virtual-array phase equals `phase` modulo `2 pi`:
/// `sin(theta_i) = (phase + 2 pi i) / (2 pi M d)` for every integer `i`
/// keeping the sine in `[-1, 1]`. Sorted ascending.
pub fn candidate_set_from_phase(geom: &ArrayGeometry, phase: f64, source: CandidateSource) -> CandidateSet {
    let base = phase / (2.0 * PI * geom.elements_per_subarray() as f64 * geom.spacing());
    CandidateSet {
        angles: enumerate_aliases(geom, base, None),
        source,
    }
}

/// Same as [`candidate_set_from_phase`] but anchored on a direction, which is
/// returned unchanged as one of the members.
pub fn candidate_set_from_angle(geom: &ArrayGeometry, base: Angle, source: CandidateSource) -> CandidateSet {
    CandidateSet {
        angles: enumerate_aliases(geom, base.sin(), Some(base)),
        source,
    }
}

/// Drops candidates whose full-array manifold coincides with an earlier one
/// (sines differing by a multiple of `lambda / d`, e.g. `+-90 deg` at half
/// wavelength spacing). Such pairs cannot be told apart by any measurement.
pub fn physically_distinct(geom: &ArrayGeometry, set: &CandidateSet) -> Vec<Angle> {
    let d = geom.spacing();
    let mut kept: Vec<Angle> = Vec::with_capacity(set.len());
    for &a in &set.angles {
        let dup = kept.iter().any(|b| {
            let x = d * (a.sin() - b.sin());
            (x - x.round()).abs() < 1e-9
        });
        if !dup {
            kept.push(a);
        }
    }
    kept
}

/// Average output power `P = sum |r(n)|^2 / (L N^2)`.
pub fn receive_power(r: &ComplexVector, n_elements: usize) -> Result<f64> {
    if r.is_empty() {
        return Err(DoaError::Empty("combiner output"));
    }
    let n2 = (n_elements as f64).powi(2);
    Ok(r.iter().map(|z| z.norm_sqr()).sum::<f64>() / (r.len() as f64 * n2))
}

/// Digital phase-alignment power of a stored block steered to `theta`.
pub fn dpa_power(geom: &ArrayGeometry, data: &ComplexMatrix, theta: Angle) -> f64 {
    let weights: Vec<C64> = subarray_phases(geom, theta)
        .into_iter()
        .map(|p| C64::from_polar(1.0, -p))
        .collect();
    let total: f64 = data
        .column_iter()
        .map(|col| col.iter().zip(&weights).map(|(y, w)| y * w).sum::<C64>().norm_sqr())
        .sum();
    total / (data.ncols() as f64 * (geom.n_elements() as f64).powi(2))
}

/// Index of the largest value; exact ties go to the smallest angle.
pub(crate) fn argmax_smallest_angle(angles: &[Angle], values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if v > values[b] || (v == values[b] && angles[i] < angles[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// Result of one estimator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    /// Radians.
    pub theta_hat: f64,
    /// Candidates of the final (analog) stage, radians.
    pub candidates_examined: Vec<f64>,
    pub objective_values: Vec<f64>,
    /// Winner of the digital first stage, when there is one.
    pub coarse_angle: Option<f64>,
    pub blocks_consumed: u64,
    pub flops: u128,
}

impl EstimateReport {
    pub fn theta_hat_deg(&self) -> f64 {
        self.theta_hat.to_degrees()
    }
}

/// Acquires one block per candidate with analog `alpha_m` and digital
/// `alpha_k` both steered at the candidate, and returns the powers.
pub(crate) fn analog_stage(frontend: &mut HybridFrontend, candidates: &[Angle], full_analog: bool) -> Result<Vec<f64>> {
    let geom = *frontend.geometry();
    let ones = ComplexVector::from_element(geom.n_subarrays(), C64::new(1.0, 0.0));
    candidates
        .iter()
        .map(|&theta| {
            let (phases, v_d) = if full_analog {
                (analog_phases(&geom, theta), ones.clone())
            } else {
                (
                    tile_element_phases(&geom, &element_phases(&geom, theta))?,
                    digital_weights(&subarray_phases(&geom, theta)),
                )
            };
            let block = frontend.acquire_block(&phases)?;
            receive_power(&combine_digital(&v_d, &block.data)?, geom.n_elements())
        })
        .collect()
}

fn grid_sweep(frontend: &mut HybridFrontend, grid: &SearchGrid, method: Method) -> Result<EstimateReport> {
    let geom = *frontend.geometry();
    let start = frontend.blocks_consumed();
    let angles: Vec<Angle> = grid.angles().collect();
    let powers = analog_stage(frontend, &angles, method == Method::Apa)?;
    let best = argmax_smallest_angle(&angles, &powers).ok_or(DoaError::EmptyCandidateSet)?;
    let used = frontend.blocks_consumed() - start;
    let q = grid.bins() as u64;
    assert_eq!(used, block_budget(method, q, geom.elements_per_subarray() as u64));
    Ok(EstimateReport {
        method,
        theta_hat: angles[best].radians(),
        candidates_examined: angles.iter().map(|a| a.radians()).collect(),
        objective_values: powers,
        coarse_angle: None,
        blocks_consumed: used,
        flops: complexity_model(
            method,
            q,
            frontend.snapshots_per_block() as u64,
            geom.n_subarrays() as u64,
            geom.elements_per_subarray() as u64,
        ),
    })
}

/// Conventional analog phase alignment: one fresh block per grid point with
/// all `N` phase shifters steered and `v_D = 1`.
pub fn estimate_apa(frontend: &mut HybridFrontend, grid: &SearchGrid) -> Result<EstimateReport> {
    grid_sweep(frontend, grid, Method::Apa)
}

/// Analog `alpha_m` (shared by every subarray) plus digital `alpha_k`, one
/// fresh block per grid point.
pub fn estimate_hadpa(frontend: &mut HybridFrontend, grid: &SearchGrid) -> Result<EstimateReport> {
    grid_sweep(frontend, grid, Method::Hadpa)
}

/// Digital sweep over one stored block, then analog disambiguation among
/// the grating aliases of the digital winner.
pub fn estimate_hdapa(frontend: &mut HybridFrontend, grid: &SearchGrid) -> Result<EstimateReport> {
    let geom = *frontend.geometry();
    let start = frontend.blocks_consumed();

    let stored = frontend.acquire_block(&vec![0.0; geom.n_elements()])?;
    let angles: Vec<Angle> = grid.angles().collect();
    let dpa: Vec<f64> = angles.iter().map(|&a| dpa_power(&geom, &stored.data, a)).collect();
    let coarse = angles[argmax_smallest_angle(&angles, &dpa).ok_or(DoaError::EmptyCandidateSet)?];

    let set = candidate_set_from_angle(&geom, coarse, CandidateSource::DpaGrid);
    let candidates = physically_distinct(&geom, &set);
    if candidates.is_empty() {
        return Err(DoaError::EmptyCandidateSet);
    }
    let powers = analog_stage(frontend, &candidates, false)?;
    let best = argmax_smallest_angle(&candidates, &powers).ok_or(DoaError::EmptyCandidateSet)?;

    let used = frontend.blocks_consumed() - start;
    assert_eq!(used, 1 + candidates.len() as u64);
    Ok(EstimateReport {
        method: Method::Hdapa,
        theta_hat: candidates[best].radians(),
        candidates_examined: candidates.iter().map(|a| a.radians()).collect(),
        objective_values: powers,
        coarse_angle: Some(coarse.radians()),
        blocks_consumed: used,
        flops: complexity_model(
            Method::Hdapa,
            grid.bins() as u64,
            frontend.snapshots_per_block() as u64,
            geom.n_subarrays() as u64,
            geom.elements_per_subarray() as u64,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::subarray_gain;
    use crate::frontend::{EmitterScenario, RngStream};

    fn deg(x: f64) -> Angle {
        Angle::from_degrees(x).unwrap()
    }

    fn noiseless(geom: ArrayGeometry, theta_deg: f64) -> HybridFrontend {
        let sc = EmitterScenario::noiseless(deg(theta_deg), 16).unwrap();
        HybridFrontend::new(geom, sc, RngStream::new(1, 0))
    }

    #[test]
    fn grid_shape() {
        let g = SearchGrid::from_step_degrees(1.0).unwrap();
        assert_eq!(g.bins(), 180);
        assert_eq!(g.len(), 181);
        assert_eq!(g.angle(0).radians(), -FRAC_PI_2);
        assert_eq!(g.angle(180).radians(), FRAC_PI_2);
        assert!((g.angle(90).radians()).abs() < 1e-15);
        assert_eq!(SearchGrid::from_step_degrees(0.0625).unwrap().bins(), 2880);
        assert!(SearchGrid::from_step_degrees(0.7).is_err());
        assert!(SearchGrid::new(0).is_err());
        assert!((g.nearest(deg(41.177)).degrees() - 41.0).abs() < 1e-9);
    }

    #[test]
    fn receive_power_basics() {
        assert_eq!(receive_power(&ComplexVector::zeros(5), 8).unwrap(), 0.0);
        let r = ComplexVector::from_element(7, C64::new(8.0, 0.0));
        assert!((receive_power(&r, 8).unwrap() - 1.0).abs() < 1e-15);
        assert!(receive_power(&ComplexVector::zeros(0), 8).is_err());
    }

    #[test]
    fn matched_power_equals_frame_power_over_m() {
        // r = K sqrt(M) s  =>  P = K^2 M |s|^2 / N^2 = mean|s|^2 / M.
        let geom = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let theta = deg(41.177);
        let mut fe = noiseless(geom, 41.177);
        let block = fe.acquire_block(&analog_phases(&geom, theta)).unwrap();
        let ones = ComplexVector::from_element(4, C64::new(1.0, 0.0));
        let r = combine_digital(&ones, &block.data).unwrap();
        let p = receive_power(&r, 8).unwrap();
        let frame = fe.rng_stream();
        let mut rng = frame.generator(0, crate::frontend::StreamKind::Signal);
        use rand_distr::{Distribution, StandardNormal};
        let mean_s: f64 = (0..16)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (a * a + b * b) / 2.0
            })
            .sum::<f64>()
            / 16.0;
        assert!((p - mean_s / 2.0).abs() < 1e-12);
    }

    #[test]
    fn candidate_sets() {
        let g2 = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let set = candidate_set_from_phase(&g2, PI, CandidateSource::DpaGrid);
        let degs: Vec<f64> = set.angles.iter().map(|a| a.degrees()).collect();
        assert_eq!(degs.len(), 2);
        assert!((degs[0] + 30.0).abs() < 1e-9 && (degs[1] - 30.0).abs() < 1e-9);

        let g1 = ArrayGeometry::half_wavelength(8, 1).unwrap();
        let base = deg(-23.4);
        let set = candidate_set_from_angle(&g1, base, CandidateSource::DpaGrid);
        assert_eq!(set.angles, vec![base]);

        let g4 = ArrayGeometry::half_wavelength(4, 4).unwrap();
        let base = deg(41.177);
        let set = candidate_set_from_angle(&g4, base, CandidateSource::DpaGrid);
        assert_eq!(set.len(), 4);
        assert!(set.angles.contains(&base));
        let phasors: Vec<C64> = set
            .angles
            .iter()
            .map(|a| C64::from_polar(1.0, 2.0 * PI * 4.0 * 0.5 * a.sin()))
            .collect();
        for z in &phasors {
            assert!((z - phasors[0]).norm() < 1e-9);
        }
    }

    #[test]
    fn boundary_candidates_collapse() {
        let g = ArrayGeometry::half_wavelength(4, 4).unwrap();
        let set = candidate_set_from_angle(&g, Angle::zero(), CandidateSource::DpaGrid);
        assert_eq!(set.len(), 5);
        let distinct = physically_distinct(&g, &set);
        assert_eq!(distinct.len(), 4);
        assert_eq!(distinct[0].radians(), -FRAC_PI_2);
    }

    #[test]
    fn apa_noiseless_cases() {
        let geom = ArrayGeometry::half_wavelength(16, 2).unwrap();
        let grid = SearchGrid::from_step_degrees(1.0).unwrap();

        let mut fe = noiseless(geom, 41.177);
        let rep = estimate_apa(&mut fe, &grid).unwrap();
        assert!((rep.theta_hat_deg() - 41.0).abs() < 1e-9);
        assert_eq!(rep.blocks_consumed, 181);
        assert_eq!(fe.blocks_consumed(), 181);
        assert_eq!(rep.flops, 181 * 16 * 32);

        let mut fe = noiseless(geom, 30.0);
        let rep = estimate_apa(&mut fe, &grid).unwrap();
        assert_eq!(rep.theta_hat, grid.nearest(deg(30.0)).radians());
    }

    #[test]
    fn hadpa_agrees_with_apa_noiseless() {
        let geom = ArrayGeometry::half_wavelength(8, 4).unwrap();
        let grid = SearchGrid::from_step_degrees(0.5).unwrap();
        for t in [-63.3, 0.0, 17.9, 41.177] {
            let apa = estimate_apa(&mut noiseless(geom, t), &grid).unwrap();
            let hadpa = estimate_hadpa(&mut noiseless(geom, t), &grid).unwrap();
            assert_eq!(apa.theta_hat, hadpa.theta_hat);
            for (a, b) in apa.objective_values.iter().zip(&hadpa.objective_values) {
                assert!((a - b).abs() < 1e-12 * a.max(1e-3));
            }
        }
        let rep = estimate_hadpa(&mut noiseless(geom, 0.0), &grid).unwrap();
        assert_eq!(rep.theta_hat, 0.0);
        assert_eq!(complexity_model(Method::Hadpa, 1440, 32, 16, 8), 32 * 1441 * 24);
    }

    #[test]
    fn hdapa_resolves_thirty_degree_ambiguity() {
        let geom = ArrayGeometry::half_wavelength(8, 2).unwrap();
        let grid = SearchGrid::from_step_degrees(1.0).unwrap();
        let mut fe = noiseless(geom, 30.0);

        // Both aliases give the same digital power on a stored block.
        let stored = fe.acquire_block(&[0.0; 16]).unwrap();
        let p_pos = dpa_power(&geom, &stored.data, deg(30.0));
        let p_neg = dpa_power(&geom, &stored.data, deg(-30.0));
        assert!((p_pos - p_neg).abs() < 1e-12);
        fe.reset();

        let rep = estimate_hdapa(&mut fe, &grid).unwrap();
        assert!((rep.theta_hat_deg() - 30.0).abs() < 1e-9);
        assert_eq!(rep.candidates_examined.len(), 2);
        assert_eq!(rep.blocks_consumed, 3);
    }

    #[test]
    fn hdapa_block_budget_and_single_element_subarrays() {
        let geom = ArrayGeometry::half_wavelength(8, 4).unwrap();
        let grid = SearchGrid::from_step_degrees(0.25).unwrap();
        let mut fe = noiseless(geom, 12.25);
        let rep = estimate_hdapa(&mut fe, &grid).unwrap();
        assert_eq!(rep.blocks_consumed, 5);
        assert!((rep.theta_hat_deg() - 12.25).abs() < 1e-9);

        let geom = ArrayGeometry::half_wavelength(16, 1).unwrap();
        let mut fe = noiseless(geom, -20.0);
        let rep = estimate_hdapa(&mut fe, &grid).unwrap();
        assert_eq!(rep.candidates_examined.len(), 1);
        assert_eq!(rep.blocks_consumed, 2);
        assert!((rep.theta_hat_deg() + 20.0).abs() < 1e-9);
        assert_eq!(rep.coarse_angle, Some(rep.theta_hat));
    }

    #[test]
    fn dpa_power_is_alias_periodic() {
        let geom = ArrayGeometry::half_wavelength(6, 4).unwrap();
        let sc = EmitterScenario::new(deg(23.0), 1.0, 32).unwrap();
        let mut fe = HybridFrontend::new(geom, sc, RngStream::new(4, 4));
        let stored = fe.acquire_block(&[0.0; 24]).unwrap();
        for base in [-70.0, -5.0, 33.3] {
            let set = candidate_set_from_angle(&geom, deg(base), CandidateSource::DpaGrid);
            let p: Vec<f64> = set.angles.iter().map(|&a| dpa_power(&geom, &stored.data, a)).collect();
            for x in &p {
                assert!((x - p[0]).abs() < 1e-10 * p[0].max(1.0));
            }
        }
    }

    #[test]
    fn argmax_ties_go_to_smallest_angle() {
        let angles = [deg(10.0), deg(-5.0), deg(3.0)];
        assert_eq!(argmax_smallest_angle(&angles, &[1.0, 1.0, 0.5]), Some(1));
        assert_eq!(argmax_smallest_angle(&angles, &[1.0, 0.0, 2.0]), Some(2));
        assert_eq!(argmax_smallest_angle(&[], &[]), None);
    }

    #[test]
    fn gain_magnitude_bound() {
        let geom = ArrayGeometry::half_wavelength(2, 6).unwrap();
        let grid = SearchGrid::new(500).unwrap();
        for a in grid.angles() {
            assert!(subarray_gain(&geom, a).norm() <= 6.0 + 1e-9);
        }
        assert!((subarray_gain(&geom, Angle::zero()).norm() - 6.0).abs() < 1e-12);
    }
}
