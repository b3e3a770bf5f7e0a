use nalgebra::{DMatrix, DVector};

use super::{stochastic_residual, IntensityMatrix, ProbabilityMatrix};
use crate::error::{Error, Result};

/// Entries below this fraction of the matrix maximum count as structural zeros.
const STRUCTURAL_ZERO_REL: f64 = 1e-12;

/// Minimum relative improvement of the best residual over one stall window.
const STALL_IMPROVEMENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Target max deviation of row/column sums from 1.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations without meaningful progress before returning best-so-far.
    pub stall_window: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            stall_window: 1000,
        }
    }
}

/// `M = diag(d1) · P · diag(d2)`, losses known up to one global scalar which is
/// fixed by `max(d1) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub p: ProbabilityMatrix,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub iterations: usize,
    /// Max deviation of the row and column sums of `P` from 1.
    pub residual: f64,
    /// Set when the iteration plateaued above `tol` and the best iterate was returned.
    pub stalled: bool,
}

/// Positions of entries treated as structural zeros.
pub fn structural_zeros(m: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let threshold = m.max() * STRUCTURAL_ZERO_REL;
    let mut zeros = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] <= threshold {
                zeros.push((i, j));
            }
        }
    }
    zeros
}

fn scaled(m: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| x[i] * m[(i, j)] * y[j])
}

/// Solves `x = 1/(M y)`, `y = 1/(M^T x)` by fixed-point iteration from `y = e`
/// and returns `P = diag(x) M diag(y)`, `d1 = 1/x`, `d2 = 1/y`.
pub fn sinkhorn_decompose(m: &IntensityMatrix, opts: &SinkhornOptions) -> Result<SinkhornResult> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 || opts.stall_window == 0 {
        return Err(Error::InvalidParameter(
            "tol must be positive, max_iter and stall_window non-zero".into(),
        ));
    }
    let m = m.entries();
    let n = m.nrows();
    let zeros = structural_zeros(m);
    let threshold = m.max() * STRUCTURAL_ZERO_REL;
    if m.max() <= 0.0 {
        return Err(Error::Infeasible {
            reason: "matrix is identically zero".into(),
            zeros,
        });
    }
    for i in 0..n {
        if m.row(i).iter().all(|&v| v <= threshold) {
            return Err(Error::Infeasible {
                reason: format!("row {i} is zero"),
                zeros,
            });
        }
        if m.column(i).iter().all(|&v| v <= threshold) {
            return Err(Error::Infeasible {
                reason: format!("column {i} is zero"),
                zeros,
            });
        }
    }

    let mt = m.transpose();
    let mut y = DVector::from_element(n, 1.0);
    let mut x = DVector::from_element(n, 1.0);
    let mut best = (f64::INFINITY, x.clone(), y.clone(), 0usize);
    let mut window_start = f64::INFINITY;
    let mut outcome = None;

    for it in 1..=opts.max_iter {
        x = (m * &y).map(|v| 1.0 / v);
        y = (&mt * &x).map(|v| 1.0 / v);
        let residual = stochastic_residual(&scaled(m, &x, &y));
        if !residual.is_finite() {
            break;
        }
        if residual < best.0 {
            best = (residual, x.clone(), y.clone(), it);
        }
        if residual < opts.tol {
            outcome = Some(false);
            break;
        }
        if it % opts.stall_window == 0 {
            if best.0 > window_start * (1.0 - STALL_IMPROVEMENT) {
                outcome = Some(true);
                break;
            }
            window_start = best.0;
        }
    }

    let (residual, x, y, iterations) = best;
    let Some(stalled) = outcome else {
        return Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual,
            zeros,
        });
    };

    let p = scaled(m, &x, &y);
    let mut d1: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
    let mut d2: Vec<f64> = y.iter().map(|v| 1.0 / v).collect();
    let scale = d1.iter().cloned().fold(f64::MIN, f64::max);
    d1.iter_mut().for_each(|v| *v /= scale);
    d2.iter_mut().for_each(|v| *v *= scale);

    Ok(SinkhornResult {
        p: ProbabilityMatrix::new_unchecked(p),
        d1,
        d2,
        iterations,
        residual,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn im(rows: usize, data: &[f64]) -> IntensityMatrix {
        IntensityMatrix::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    #[test]
    fn doubly_stochastic_is_a_fixed_point() {
        let m = im(3, &[1.0 / 3.0; 9]);
        let r = sinkhorn_decompose(&m, &SinkhornOptions::default()).unwrap();
        assert!(r.residual < 1e-12);
        assert!(!r.stalled);
        assert!((r.p.entries() - m.entries())
            .iter()
            .all(|v| v.abs() < 1e-15));
        assert!(r.d1.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(r.d2.iter().all(|v| (v - r.d2[0]).abs() < 1e-12));
    }

    #[test]
    fn recovers_scaled_matrix() {
        let p0 = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]);
        let d1 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let d2 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let m = IntensityMatrix::new(&d1 * &p0 * &d2).unwrap();
        let r = sinkhorn_decompose(&m, &SinkhornOptions::default()).unwrap();
        assert!((r.p.entries() - &p0).iter().all(|v| v.abs() < 1e-10));
        // max(d1) = 1 convention
        assert!((r.d1[0] - 1.0).abs() < 1e-10 && (r.d1[1] - 0.5).abs() < 1e-10);
        assert!((r.d2[1] / r.d2[0] - 3.0).abs() < 1e-10);
        // reconstruction identity
        let rebuilt = DMatrix::from_fn(2, 2, |i, j| r.d1[i] * r.p.entries()[(i, j)] * r.d2[j]);
        assert!((rebuilt - m.entries()).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn unscalable_pattern_does_not_converge() {
        let m = im(2, &[1.0, 1.0, 0.0, 1.0]);
        match sinkhorn_decompose(&m, &SinkhornOptions::default()) {
            Err(Error::NonConvergence { zeros, .. }) => assert_eq!(zeros, vec![(1, 0)]),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_row_is_infeasible() {
        let m = im(2, &[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            sinkhorn_decompose(&m, &SinkhornOptions::default()),
            Err(Error::Infeasible { .. })
        ));
        let m = im(2, &[0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            sinkhorn_decompose(&m, &SinkhornOptions::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn unreachable_tolerance_stalls_with_best_iterate() {
        let m = IntensityMatrix::new(DMatrix::from_fn(6, 6, |i, j| {
            1.0 + ((i * 6 + j) as f64 * 0.7315).sin()
        }))
        .unwrap();
        let opts = SinkhornOptions {
            tol: 1e-30,
            ..SinkhornOptions::default()
        };
        let r = sinkhorn_decompose(&m, &opts).unwrap();
        assert!(r.stalled);
        assert!(r.residual < 1e-13);
        assert!(r.iterations < opts.max_iter);
    }

    #[test]
    fn rejects_bad_options() {
        let m = im(1, &[1.0]);
        let opts = SinkhornOptions {
            tol: 0.0,
            ..SinkhornOptions::default()
        };
        assert!(sinkhorn_decompose(&m, &opts).is_err());
    }
}
