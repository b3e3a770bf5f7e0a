//! Black-box characterization of lossy linear optical interferometers.
//!
//! The device is modelled as `T = D1 · U · D2` with unknown diagonal loss and
//! phase layers. The moduli `|U_ij|^2` come from single-input intensity data
//! ([`moduli`]), the internal phases from classical two-beam intensity
//! correlations ([`phases`]). [`simulator`] generates synthetic data and
//! two-photon reference quantities; [`pipeline`] ties the stages together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod model;
pub mod moduli;
pub mod phases;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result, Stage, StageExt};
pub use model::{
    canonicalize, fidelity_column, fidelity_probability, haar_random_unitary, wrap_phase,
    CanonicalUnitary, LossDiagonal, TransferMatrix, UnitaryMatrix, C64,
};
pub use moduli::{
    sinkhorn_decompose, IntensityMatrix, ProbabilityMatrix, SinkhornOptions, SinkhornResult,
};
pub use phases::{CorrelationSet, PhaseSolution};
pub use pipeline::{run_pipeline, PipelineConfig, ReconstructionReport};
pub use simulator::{NoiseModel, TwoBeamSeries};
