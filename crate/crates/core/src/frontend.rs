//! Simulated hybrid receive front end.
//!
//! Analog phases are fixed per block and the element-domain waveform is never
//! exposed: every acquisition returns a fresh `K x L` post-ADC block
//! `y(n) = V_A^H a(theta0) s(n) + w(n)`.
//!
//! Random draws are addressed by `(master_seed, trial, block, stream)` so any
//! trial can be regenerated bit-for-bit regardless of scheduling.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, AnalogWeights, Angle, ArrayGeometry, ComplexMatrix, ComplexVector, C64};
use crate::error::{DoaError, Result};

/// How the emitter waveform relates across blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalModel {
    /// The emitter repeats the same `L`-sample frame in every block of a
    /// trial; only the receiver noise is fresh per block.
    #[default]
    RepeatedFrame,
    /// A new signal realization is drawn for every block.
    IndependentBlocks,
}

impl std::str::FromStr for SignalModel {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repeated-frame" => Ok(Self::RepeatedFrame),
            "independent-blocks" => Ok(Self::IndependentBlocks),
            other => Err(DoaError::InvalidParameter(format!("unknown signal model `{other}`"))),
        }
    }
}

/// Ground truth of a simulated acquisition. Signal power is fixed at 1, so
/// the noise variance is `1 / snr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterScenario {
    true_angle: Angle,
    snr: f64,
    snapshots_per_block: usize,
    signal_model: SignalModel,
}

impl EmitterScenario {
    /// `snr` is the linear per-element ratio `sigma_s^2 / sigma_w^2`;
    /// `f64::INFINITY` gives a noiseless front end.
    pub fn new(true_angle: Angle, snr: f64, snapshots_per_block: usize) -> Result<Self> {
        if snr.is_nan() || snr <= 0.0 {
            return Err(DoaError::InvalidParameter(format!("SNR {snr} must be positive")));
        }
        if snapshots_per_block == 0 {
            return Err(DoaError::InvalidParameter("L must be at least 1".into()));
        }
        Ok(Self {
            true_angle,
            snr,
            snapshots_per_block,
            signal_model: SignalModel::default(),
        })
    }

    pub fn from_db(true_angle: Angle, snr_db: f64, snapshots_per_block: usize) -> Result<Self> {
        Self::new(true_angle, 10f64.powf(snr_db / 10.0), snapshots_per_block)
    }

    pub fn noiseless(true_angle: Angle, snapshots_per_block: usize) -> Result<Self> {
        Self::new(true_angle, f64::INFINITY, snapshots_per_block)
    }

    pub fn with_signal_model(mut self, model: SignalModel) -> Self {
        self.signal_model = model;
        self
    }

    pub fn true_angle(&self) -> Angle {
        self.true_angle
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn snapshots_per_block(&self) -> usize {
        self.snapshots_per_block
    }

    pub fn signal_model(&self) -> SignalModel {
        self.signal_model
    }

    pub fn signal_variance(&self) -> f64 {
        1.0
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / self.snr
    }
}

/// Independent random streams drawn within one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Signal = 1,
    Noise = 2,
}

/// Counter-based addressing of the random draws of one Monte-Carlo trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub trial_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    /// Generator for `(block, stream)` within this trial.
    pub fn generator(&self, block_index: u64, stream: StreamKind) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut h = splitmix64(self.master_seed);
        for (chunk, word) in
            seed.chunks_exact_mut(8)
                .zip([self.trial_index, block_index, stream as u64, 0x6879_6272_6964_646f])
        {
            h = splitmix64(h ^ word);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * scale, im * scale)
}

/// One post-ADC acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBlock {
    /// 1-based acquisition counter of the front end that produced the block.
    pub block_index: u64,
    /// `K x L`, rows are subarrays and columns are snapshots.
    pub data: ComplexMatrix,
    pub analog_phases: Vec<f64>,
}

impl SnapshotBlock {
    pub fn n_subarrays(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Writes the block as text: two `#` header lines, then one line per
    /// subarray holding `re,im` pairs for each snapshot.
    pub fn write_csv<W: Write>(&self, mut w: W, seed: u64) -> std::io::Result<()> {
        writeln!(w, "# hybrid-doa block v1")?;
        writeln!(
            w,
            "# K={} L={} b={} seed={}",
            self.n_subarrays(),
            self.snapshots(),
            self.block_index,
            seed
        )?;
        for k in 0..self.n_subarrays() {
            let row: Vec<String> = (0..self.snapshots())
                .map(|l| {
                    let z = self.data[(k, l)];
                    format!("{:?},{:?}", z.re, z.im)
                })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the format written by [`SnapshotBlock::write_csv`]. Returns the
    /// block (without analog phases) and the recorded seed.
    pub fn read_csv<R: BufRead>(r: R) -> std::result::Result<(Self, u64), String> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> std::result::Result<String, String> {
            lines
                .next()
                .ok_or_else(|| format!("missing {what}"))?
                .map_err(|e| e.to_string())
        };
        let magic = next("version line")?;
        if magic.trim() != "# hybrid-doa block v1" {
            return Err(format!("unsupported header `{magic}`"));
        }
        let header = next("dimension line")?;
        let mut fields = std::collections::HashMap::new();
        for tok in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad header token `{tok}`"))?;
            let v: u64 = v.parse().map_err(|_| format!("bad header value `{tok}`"))?;
            fields.insert(k.to_string(), v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("header missing {k}"));
        let (kk, ll, b, seed) = (get("K")? as usize, get("L")? as usize, get("b")?, get("seed")?);
        let mut data = DMatrix::zeros(kk, ll);
        for k in 0..kk {
            let line = next("data row")?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("row {k}: {e}")))
                .collect::<std::result::Result<_, _>>()?;
            if vals.len() != 2 * ll {
                return Err(format!("row {k}: expected {} values, got {}", 2 * ll, vals.len()));
            }
            for l in 0..ll {
                data[(k, l)] = C64::new(vals[2 * l], vals[2 * l + 1]);
            }
        }
        Ok((
            Self {
                block_index: b,
                data,
                analog_phases: Vec::new(),
            },
            seed,
        ))
    }
}

/// A single-owner receive chain for one trial.
#[derive(Clone, Debug)]
pub struct HybridFrontend {
    geom: ArrayGeometry,
    scenario: EmitterScenario,
    stream: RngStream,
    manifold: ComplexVector,
    blocks: u64,
}

impl HybridFrontend {
    pub fn new(geom: ArrayGeometry, scenario: EmitterScenario, stream: RngStream) -> Self {
        let manifold = steering_vector(&geom, scenario.true_angle);
        Self {
            geom,
            scenario,
            stream,
            manifold,
            blocks: 0,
        }
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    pub fn snapshots_per_block(&self) -> usize {
        self.scenario.snapshots_per_block
    }

    pub fn rng_stream(&self) -> RngStream {
        self.stream
    }

    /// Number of `acquire_block` calls since construction or the last reset.
    pub fn blocks_consumed(&self) -> u64 {
        self.blocks
    }

    pub fn reset(&mut self) {
        self.blocks = 0;
    }

    /// Sets the `N` analog phase shifters and acquires one block.
    pub fn acquire_block(&mut self, analog_phases: &[f64]) -> Result<SnapshotBlock> {
        let weights = AnalogWeights::from_phases(&self.geom, analog_phases.to_vec())?;
        let response = weights.combine(&self.manifold)?;
        self.blocks += 1;
        let b = self.blocks;

        let l = self.scenario.snapshots_per_block;
        let signal_block = match self.scenario.signal_model {
            SignalModel::RepeatedFrame => 0,
            SignalModel::IndependentBlocks => b,
        };
        let mut srng = self.stream.generator(signal_block, StreamKind::Signal);
        let signal: Vec<C64> = (0..l)
            .map(|_| complex_gaussian(&mut srng, self.scenario.signal_variance()))
            .collect();

        let mut data = DMatrix::from_fn(self.geom.n_subarrays(), l, |k, n| response[k] * signal[n]);
        let noise_var = self.scenario.noise_variance();
        if noise_var > 0.0 {
            let mut nrng = self.stream.generator(b, StreamKind::Noise);
            // Column-major fill: snapshot by snapshot, subarray within.
            for z in data.iter_mut() {
                *z += complex_gaussian(&mut nrng, noise_var);
            }
        }
        Ok(SnapshotBlock {
            block_index: b,
            data,
            analog_phases: weights.phases().to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{analog_phases, subarray_gain};

    fn scenario(deg: f64, snr: f64, l: usize) -> EmitterScenario {
        EmitterScenario::new(Angle::from_degrees(deg).unwrap(), snr, l).unwrap()
    }

    #[test]
    fn scenario_validation() {
        let t = Angle::zero();
        assert!(EmitterScenario::new(t, 0.0, 4).is_err());
        assert!(EmitterScenario::new(t, -1.0, 4).is_err());
        assert!(EmitterScenario::new(t, 1.0, 0).is_err());
        let s = EmitterScenario::from_db(t, 10.0, 4).unwrap();
        assert!((s.noise_variance() - 0.1).abs() < 1e-15);
        assert_eq!(EmitterScenario::noiseless(t, 3).unwrap().noise_variance(), 0.0);
    }

    #[test]
    fn fresh_frontend_has_no_blocks() {
        let g = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let fe = HybridFrontend::new(g, scenario(10.0, 1.0, 4), RngStream::new(1, 0));
        assert_eq!(fe.blocks_consumed(), 0);
    }

    #[test]
    fn noiseless_matched_single_subarray() {
        let g = ArrayGeometry::half_wavelength(1, 4).unwrap();
        let theta = Angle::from_degrees(41.177).unwrap();
        let sc = EmitterScenario::noiseless(theta, 16).unwrap();
        let stream = RngStream::new(9, 3);
        let mut fe = HybridFrontend::new(g, sc, stream);
        let block = fe.acquire_block(&analog_phases(&g, theta)).unwrap();
        let mut srng = stream.generator(0, StreamKind::Signal);
        for n in 0..16 {
            let s = complex_gaussian(&mut srng, 1.0);
            assert!((block.data[(0, n)] - s * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn phase_vector_length_checked() {
        let g = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let mut fe = HybridFrontend::new(g, scenario(0.0, 1.0, 4), RngStream::new(1, 0));
        assert!(fe.acquire_block(&[0.0; 7]).is_err());
        assert_eq!(fe.blocks_consumed(), 0);
    }

    #[test]
    fn deterministic_blocks_and_counter() {
        let g = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let sc = scenario(20.0, 1.0, 8);
        let mut a = HybridFrontend::new(g, sc, RngStream::new(42, 7));
        let mut b = HybridFrontend::new(g, sc, RngStream::new(42, 7));
        let zeros = vec![0.0; 8];
        for i in 1..=3 {
            let x = a.acquire_block(&zeros).unwrap();
            let y = b.acquire_block(&zeros).unwrap();
            assert_eq!(x, y);
            assert_eq!(x.block_index, i);
        }
        assert_eq!(a.blocks_consumed(), 3);
        let mut c = HybridFrontend::new(g, sc, RngStream::new(42, 8));
        assert_ne!(
            c.acquire_block(&zeros).unwrap().data,
            b.acquire_block(&zeros).unwrap().data
        );
        a.reset();
        assert_eq!(a.blocks_consumed(), 0);
    }

    #[test]
    fn signal_models_differ_in_frame_reuse() {
        let g = ArrayGeometry::half_wavelength(2, 2).unwrap();
        let t = Angle::from_degrees(10.0).unwrap();
        let zeros = vec![0.0; 4];
        let sc = EmitterScenario::noiseless(t, 4).unwrap();
        let mut fe = HybridFrontend::new(g, sc, RngStream::new(5, 0));
        let b1 = fe.acquire_block(&zeros).unwrap();
        let b2 = fe.acquire_block(&zeros).unwrap();
        assert_eq!(b1.data, b2.data);

        let sc = sc.with_signal_model(SignalModel::IndependentBlocks);
        let mut fe = HybridFrontend::new(g, sc, RngStream::new(5, 0));
        let b1 = fe.acquire_block(&zeros).unwrap();
        let b2 = fe.acquire_block(&zeros).unwrap();
        assert_ne!(b1.data, b2.data);
    }

    #[test]
    fn per_subarray_power_matches_model() {
        // E|y_k|^2 = |g|^2 / M + sigma_w^2 with zeroed analog phases, gamma = 1.
        let g = ArrayGeometry::half_wavelength(4, 4).unwrap();
        let theta = Angle::from_degrees(12.0).unwrap();
        let sc = EmitterScenario::new(theta, 1.0, 1000)
            .unwrap()
            .with_signal_model(SignalModel::IndependentBlocks);
        let mut fe = HybridFrontend::new(g, sc, RngStream::new(11, 0));
        let zeros = vec![0.0; 16];
        let mut power = [0.0; 4];
        let blocks = 100;
        for _ in 0..blocks {
            let blk = fe.acquire_block(&zeros).unwrap();
            for (k, p) in power.iter_mut().enumerate() {
                *p += blk.data.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        let expected = subarray_gain(&g, theta).norm_sqr() / 4.0 + 1.0;
        for p in power {
            let p = p / (blocks as f64 * 1000.0);
            assert!((p / expected - 1.0).abs() < 0.02, "{p} vs {expected}");
        }
    }

    #[test]
    fn noise_is_uncorrelated_across_subarrays_and_blocks() {
        let g = ArrayGeometry::half_wavelength(3, 2).unwrap();
        let sc = EmitterScenario::new(Angle::zero(), 1e-12, 2000).unwrap();
        let mut fe = HybridFrontend::new(g, sc, RngStream::new(3, 1));
        let zeros = vec![0.0; 6];
        let b1 = fe.acquire_block(&zeros).unwrap();
        let b2 = fe.acquire_block(&zeros).unwrap();
        let corr = |x: Vec<C64>, y: Vec<C64>| {
            let num: C64 = x.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
            let px: f64 = x.iter().map(|a| a.norm_sqr()).sum();
            let py: f64 = y.iter().map(|a| a.norm_sqr()).sum();
            num.norm() / (px * py).sqrt()
        };
        let bound = 3.0 / 2000f64.sqrt();
        let row = |b: &SnapshotBlock, k: usize| b.data.row(k).iter().copied().collect::<Vec<_>>();
        assert!(corr(row(&b1, 0), row(&b1, 1)) < bound);
        assert!(corr(row(&b1, 1), row(&b1, 2)) < bound);
        assert!(corr(row(&b1, 0), row(&b2, 0)) < bound);
    }

    #[test]
    fn block_dump_round_trip() {
        let g = ArrayGeometry::half_wavelength(3, 2).unwrap();
        let mut fe = HybridFrontend::new(g, scenario(-33.0, 2.0, 5), RngStream::new(77, 2));
        let blk = fe.acquire_block(&[0.1; 6]).unwrap();
        let mut buf = Vec::new();
        blk.write_csv(&mut buf, 77).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# hybrid-doa block v1\n# K=3 L=5 b=1 seed=77\n"));
        let (back, seed) = SnapshotBlock::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back.data, blk.data);
        assert_eq!(back.block_index, 1);
        assert!(SnapshotBlock::read_csv(std::io::Cursor::new("garbage\n")).is_err());
    }
}
