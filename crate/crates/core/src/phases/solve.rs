use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::correlation::CorrelationSet;
use crate::error::{Error, Result};
use crate::model::{wrap_phase, CanonicalUnitary, C64, ZERO_MODULUS_EPS};

/// Lower bound on the standard error used to weight a correlation.
pub(crate) const STDERR_FLOOR: f64 = 1e-9;

/// Whether a transition probability is small enough that the matrix element
/// carries no phase information.
pub fn vanishing_probability(p: f64) -> bool {
    !(p > ZERO_MODULUS_EPS * ZERO_MODULUS_EPS)
}

/// Internal phases in canonical gauge (first row and column zero).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSolution {
    pub phases: DMatrix<f64>,
    /// Per-entry confidence in the chosen sign, in `[0, 1]`.
    pub confidence: DMatrix<f64>,
    /// Reduced chi-square of all correlations against the phases.
    pub chi2: f64,
}

impl PhaseSolution {
    pub fn n(&self) -> usize {
        self.phases.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Magnitudes within this distance (rad) of 0 or pi have an unresolved sign.
    pub tol_sign: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol_sign: 0.05 }
    }
}

/// `phi_ih - phi_ik - phi_jh + phi_jk`.
pub(crate) fn phase_combination(
    phases: &DMatrix<f64>,
    h: usize,
    k: usize,
    i: usize,
    j: usize,
) -> f64 {
    phases[(i, h)] - phases[(i, k)] - phases[(j, h)] + phases[(j, k)]
}

/// Raw chi-square and the number of correlations it sums over.
pub(crate) fn chi2_sum(phases: &DMatrix<f64>, correlations: &CorrelationSet) -> (f64, usize) {
    let n = phases.nrows();
    let mut acc = 0.0;
    let mut count = 0;
    for (key, e) in correlations.iter() {
        if [key.h, key.k, key.i, key.j].iter().any(|&x| x >= n) {
            continue;
        }
        let model = phase_combination(phases, key.h, key.k, key.i, key.j).cos();
        let s = e.stderr.max(STDERR_FLOOR);
        acc += ((e.c - model) / s).powi(2);
        count += 1;
    }
    (acc, count)
}

/// Chi-square per degree of freedom; the `(n-1)^2` internal phases are the
/// fitted parameters.
pub fn reduced_chi2(phases: &DMatrix<f64>, correlations: &CorrelationSet) -> f64 {
    let (chi2, count) = chi2_sum(phases, correlations);
    let params = (phases.nrows().saturating_sub(1)).pow(2);
    chi2 / count.saturating_sub(params).max(1) as f64
}

/// Picks `±magnitude` so that `cos(base + s·magnitude)` best matches `measured`.
fn resolve_sign(measured: f64, base: f64, magnitude: f64, tol_sign: f64) -> (f64, f64) {
    let plus = (base + magnitude).cos();
    let minus = (base - magnitude).cos();
    let sign = if (measured - minus).abs() < (measured - plus).abs() {
        -1.0
    } else {
        1.0
    };
    let near_degenerate = magnitude < tol_sign || magnitude > std::f64::consts::PI - tol_sign;
    let confidence = if near_degenerate {
        0.0
    } else {
        ((plus - minus).abs() / 2.0).min(1.0)
    };
    (sign * magnitude, confidence)
}

/// Solves the cosine system for the internal phases with the canonical gauge
/// `phi_0j = phi_i0 = 0` and `phi_11 >= 0`.
///
/// Magnitudes come from `C^{0k}_{0j} = cos(phi_jk)`. Signs are fixed relative
/// to `phi_11` through `C^{01}_{1j} = cos(phi_j1 - phi_11)` and
/// `C^{1k}_{01} = cos(phi_1k - phi_11)`, then the remaining entries through
/// `C^{1k}_{1j} = cos(phi_11 - phi_1k - phi_j1 + phi_jk)`.
///
/// Equations that involve a vanishing matrix element are not required; the
/// phases they would fix are set to their magnitude (or 0) with confidence 0.
pub fn solve_phases(
    correlations: &CorrelationSet,
    moduli: &DMatrix<f64>,
    opts: &SolveOptions,
) -> Result<PhaseSolution> {
    let n = moduli.nrows();
    if moduli.ncols() != n || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "moduli must be square, got {}x{}",
            moduli.nrows(),
            moduli.ncols()
        )));
    }
    if !(opts.tol_sign >= 0.0) {
        return Err(Error::InvalidParameter(
            "tol_sign must be non-negative".into(),
        ));
    }
    // An equation exists only if all four elements it involves are non-zero.
    let usable = |h: usize, k: usize, i: usize, j: usize| {
        [(i, h), (i, k), (j, h), (j, k)]
            .iter()
            .all(|&(r, c)| !vanishing_probability(moduli[(r, c)]))
    };

    let mut required = Vec::new();
    for j in 1..n {
        for k in 1..n {
            let mut eqs = vec![(0, k, 0, j)];
            if j >= 2 && k == 1 {
                eqs.push((0, 1, 1, j));
            }
            if j == 1 && k >= 2 {
                eqs.push((1, k, 0, 1));
            }
            if j >= 2 && k >= 2 {
                eqs.push((1, k, 1, j));
            }
            required.extend(eqs.into_iter().filter(|&(h, k, i, j)| usable(h, k, i, j)));
        }
    }
    let missing: Vec<_> = required
        .iter()
        .copied()
        .filter(|&(h, k, i, j)| !correlations.contains(h, k, i, j))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteData { missing });
    }
    let c = |h, k, i, j| {
        usable(h, k, i, j)
            .then(|| correlations.get(h, k, i, j).map(|e| e.c.clamp(-1.0, 1.0)))
            .flatten()
    };
    let degenerate = |m: f64| m < opts.tol_sign || m > PI - opts.tol_sign;

    let mut phases = DMatrix::zeros(n, n);
    let mut confidence = DMatrix::from_element(n, n, 1.0);
    let mut magnitude = DMatrix::zeros(n, n);
    for j in 1..n {
        for k in 1..n {
            match c(0, k, 0, j) {
                Some(v) => magnitude[(j, k)] = v.acos(),
                None => confidence[(j, k)] = 0.0,
            }
        }
    }
    if n >= 2 {
        phases[(1, 1)] = magnitude[(1, 1)];
        if degenerate(magnitude[(1, 1)]) {
            confidence[(1, 1)] = 0.0;
        }
    }
    let mut resolve =
        |j: usize, k: usize, measured: Option<f64>, base: f64, phases: &mut DMatrix<f64>| {
            let m = magnitude[(j, k)];
            match measured {
                Some(v) if confidence[(j, k)] > 0.0 => {
                    let (phi, conf) = resolve_sign(v, base, m, opts.tol_sign);
                    phases[(j, k)] = phi;
                    confidence[(j, k)] = conf;
                }
                _ => {
                    phases[(j, k)] = m;
                    confidence[(j, k)] = 0.0;
                }
            }
        };
    let m11 = magnitude.get((1, 1)).copied().unwrap_or(0.0);
    for j in 2..n {
        resolve(j, 1, c(0, 1, 1, j), -m11, &mut phases);
    }
    for k in 2..n {
        resolve(1, k, c(1, k, 0, 1), -m11, &mut phases);
    }
    for j in 2..n {
        for k in 2..n {
            let base = phases[(1, 1)] - phases[(1, k)] - phases[(j, 1)];
            resolve(j, k, c(1, k, 1, j), base, &mut phases);
        }
    }
    phases.apply(|p| *p = wrap_phase(*p));
    // phi_11 = pi wraps to pi, so the gauge condition phi_11 in [0, pi] holds.
    let chi2 = reduced_chi2(&phases, correlations);
    Ok(PhaseSolution {
        phases,
        confidence,
        chi2,
    })
}

/// Combines moduli and phases into `U_jk = sqrt(P_jk) e^{i phi_jk}`. The result
/// is in canonical gauge but only approximately unitary on noisy data; see
/// [`CanonicalUnitary::unitarity_residual`].
pub fn assemble_unitary(moduli: &DMatrix<f64>, phases: &PhaseSolution) -> Result<CanonicalUnitary> {
    if moduli.shape() != phases.phases.shape() {
        return Err(Error::DimensionMismatch {
            expected: moduli.nrows(),
            found: phases.phases.nrows(),
        });
    }
    let u = DMatrix::from_fn(moduli.nrows(), moduli.ncols(), |j, k| {
        C64::from_polar(moduli[(j, k)].max(0.0).sqrt(), phases.phases[(j, k)])
    });
    Ok(CanonicalUnitary::from_parts(u, false))
}
