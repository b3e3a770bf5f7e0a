//! Recovery of mode-dependent losses and the probability matrix `P_ij = |U_ij|^2`
//! from intensity data.
//!
//! Two routes are provided:
//! - [`sinkhorn_decompose`] factors a full single-input intensity matrix
//!   `M = D1 · P · D2` by alternating diagonal scaling.
//! - [`variance_weights`] / [`multi_input_weights`] find output weights that make
//!   the weighted total power constant across circuit settings, for setups where
//!   only some inputs are reachable but the circuit is reconfigurable.

mod sinkhorn;
mod variance;

pub use sinkhorn::{sinkhorn_decompose, structural_zeros, SinkhornOptions, SinkhornResult};
pub use variance::{
    multi_input_weights, recover_p_from_weights, variance_weights, MultiInputWeights,
    ProbabilityColumns, VarianceProblem, VarianceWeights,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DOUBLY_STOCHASTIC_TOL;

/// Measured single-input output powers: rows are outputs, columns inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix(DMatrix<f64>);

impl IntensityMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "intensity matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for row in 0..m.nrows() {
            for col in 0..m.ncols() {
                let value = m[(row, col)];
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(Error::NegativeEntry { row, col, value });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Doubly stochastic matrix of transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(DMatrix<f64>);

impl ProbabilityMatrix {
    /// Validates entries in `[0, 1]` and unit row/column sums at
    /// [`DOUBLY_STOCHASTIC_TOL`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let p = Self(m);
        let residual = p.stochastic_residual();
        if p.0
            .iter()
            .any(|&v| !(0.0..=1.0 + DOUBLY_STOCHASTIC_TOL).contains(&v))
        {
            return Err(Error::InvalidParameter(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(residual <= DOUBLY_STOCHASTIC_TOL) {
            return Err(Error::InvalidParameter(format!(
                "matrix is not doubly stochastic (max sum deviation {residual:e})"
            )));
        }
        Ok(p)
    }

    /// Skips validation; used for best-effort results on noisy data.
    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Max absolute deviation of any row or column sum from 1.
    pub fn stochastic_residual(&self) -> f64 {
        stochastic_residual(&self.0)
    }
}

pub(crate) fn stochastic_residual(m: &DMatrix<f64>) -> f64 {
    let rows = m.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = m.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}
