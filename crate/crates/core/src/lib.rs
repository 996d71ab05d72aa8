//! Direction-of-arrival estimation for sub-connected hybrid analog/digital
//! uniform linear arrays.
//!
//! The crate models the hybrid receive chain ([`array`], [`frontend`]),
//! implements grid-search and polynomial-rooting estimators ([`grid`],
//! [`root_music`]), evaluates the Cramér-Rao bound ([`crlb`]) and drives
//! Monte Carlo sweeps ([`experiments`], [`cli`]).

pub mod array;
pub mod cli;
pub mod complexity;
pub mod config;
pub mod crlb;
pub mod error;
pub mod experiments;
pub mod frontend;
pub mod grid;
pub mod root_music;

pub use array::{AnalogWeights, Angle, ArrayGeometry, ComplexMatrix, ComplexVector, C64};
pub use complexity::{block_budget, complexity_model, Method};
pub use crlb::{digital_crlb, hybrid_crlb, CrlbInputs, CrlbReport};
pub use error::{DoaError, Result};
pub use experiments::{run_rmse_sweep, ExperimentSpec, OutputFormat, RmseCurve, ScenarioPoint, SweepAxis};
pub use frontend::{EmitterScenario, HybridFrontend, RngStream, SignalModel, SnapshotBlock};
pub use grid::{estimate_apa, estimate_hadpa, estimate_hdapa, CandidateSet, EstimateReport, SearchGrid};
pub use root_music::{estimate_root_music_hdapa, RootMusicOptions};
