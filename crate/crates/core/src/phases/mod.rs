//! Internal phases from classical two-beam intensity correlations.
//!
//! For inputs `h, k` driven by two beams with a randomized relative phase, the
//! normalized cross-correlation between outputs `i, j` is
//! `C^{hk}_{ij} = cos(phi_ih - phi_ik - phi_jh + phi_jk)`, independent of the
//! losses and of the mutual coherence of the beams.

mod correlation;
mod refine;
mod solve;

pub use correlation::{
    all_output_pairs, estimate_correlations, CorrelationEntry, CorrelationKey, CorrelationSet,
    JACKKNIFE_BLOCKS, MIN_SAMPLES,
};
pub use refine::{refine_phases, RefineOptions, RefineOutcome};
pub use solve::{
    assemble_unitary, reduced_chi2, solve_phases, vanishing_probability, PhaseSolution,
    SolveOptions,
};
