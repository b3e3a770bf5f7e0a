use nalgebra::{DMatrix, DVector};

use super::correlation::CorrelationSet;
use super::solve::{chi2_sum, phase_combination, reduced_chi2, PhaseSolution, STDERR_FLOOR};
use crate::error::{Error, Result};
use crate::model::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Levenberg-Marquardt iteration budget per starting point.
    pub max_iter: usize,
    /// Entries with sign confidence below this are tried with both signs.
    pub confidence_threshold: f64,
    /// At most this many of the least confident entries are enumerated.
    pub max_enumerated: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            confidence_threshold: 0.5,
            max_enumerated: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub solution: PhaseSolution,
    /// False when the optimizer ran out of budget; the solution is then the
    /// best point reached, never worse than the input.
    pub converged: bool,
}

/// Weighted least-squares problem over the internal phases `phi_jk`, `j, k >= 1`.
struct Problem {
    n: usize,
    rows: Vec<([usize; 4], f64, f64)>,
}

impl Problem {
    fn new(n: usize, correlations: &CorrelationSet) -> Self {
        let rows = correlations
            .iter()
            .filter(|(key, _)| [key.h, key.k, key.i, key.j].iter().all(|&x| x < n))
            .map(|(key, e)| {
                (
                    [key.h, key.k, key.i, key.j],
                    e.c,
                    e.stderr.max(STDERR_FLOOR),
                )
            })
            .collect();
        Self { n, rows }
    }

    fn n_params(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    fn param_index(&self, row: usize, col: usize) -> Option<usize> {
        (row >= 1 && col >= 1).then(|| (row - 1) * (self.n - 1) + (col - 1))
    }

    fn to_phases(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut phases = DMatrix::zeros(self.n, self.n);
        for j in 1..self.n {
            for k in 1..self.n {
                phases[(j, k)] = x[self.param_index(j, k).unwrap()];
            }
        }
        phases
    }

    fn to_params(&self, phases: &DMatrix<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_params());
        for j in 1..self.n {
            for k in 1..self.n {
                x[self.param_index(j, k).unwrap()] = phases[(j, k)];
            }
        }
        x
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        let phases = self.to_phases(x);
        self.rows
            .iter()
            .map(|&([h, k, i, j], c, s)| {
                ((c - phase_combination(&phases, h, k, i, j).cos()) / s).powi(2)
            })
            .sum()
    }

    fn residual_and_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let phases = self.to_phases(x);
        let mut r = DVector::zeros(self.rows.len());
        let mut jac = DMatrix::zeros(self.rows.len(), self.n_params());
        for (m, &([h, k, i, j], c, s)) in self.rows.iter().enumerate() {
            let arg = phase_combination(&phases, h, k, i, j);
            r[m] = (c - arg.cos()) / s;
            let d = arg.sin() / s;
            for (row, col, sign) in [(i, h, 1.0), (i, k, -1.0), (j, h, -1.0), (j, k, 1.0)] {
                if let Some(p) = self.param_index(row, col) {
                    jac[(m, p)] += sign * d;
                }
            }
        }
        (r, jac)
    }

    /// Returns the final parameters, their cost and whether a stopping
    /// criterion was met inside the budget.
    fn levenberg_marquardt(
        &self,
        mut x: DVector<f64>,
        max_iter: usize,
    ) -> (DVector<f64>, f64, bool) {
        let mut cost = self.cost(&x);
        let mut lambda = 1e-3;
        for _ in 0..max_iter {
            if cost == 0.0 {
                return (x, cost, true);
            }
            let (r, jac) = self.residual_and_jacobian(&x);
            let g = jac.transpose() * &r;
            if g.amax() < 1e-12 * (1.0 + cost) {
                return (x, cost, true);
            }
            let a = jac.transpose() * &jac;
            let scale = a.diagonal().amax().max(1.0);
            let mut improved = false;
            while lambda < 1e12 {
                let mut damped = a.clone();
                for p in 0..damped.nrows() {
                    damped[(p, p)] += lambda * (a[(p, p)] + 1e-9 * scale);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let candidate = &x + &step;
                let new_cost = self.cost(&candidate);
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost;
                    x = candidate;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if rel < 1e-14 || step.amax() < 1e-13 {
                        return (x, cost, true);
                    }
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                // No descent direction left at any damping: a (numerical) minimum.
                return (x, cost, true);
            }
        }
        (x, cost, false)
    }
}

/// Global weighted least-squares refinement of the internal phases over every
/// measured correlation, with both signs tried for low-confidence entries.
///
/// The returned chi-square is never larger than that of `initial`.
pub fn refine_phases(
    initial: &PhaseSolution,
    correlations: &CorrelationSet,
    opts: &RefineOptions,
) -> Result<RefineOutcome> {
    let n = initial.n();
    if n < 2 || initial.phases.ncols() != n || initial.confidence.shape() != (n, n) {
        return Err(Error::InvalidDimension(format!(
            "phase solution must be square with n >= 2, got {}x{}",
            initial.phases.nrows(),
            initial.phases.ncols()
        )));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be non-zero".into()));
    }
    let problem = Problem::new(n, correlations);
    let (initial_chi2, _) = chi2_sum(&initial.phases, correlations);

    let mut uncertain: Vec<(usize, usize)> = (1..n)
        .flat_map(|j| (1..n).map(move |k| (j, k)))
        .filter(|&(j, k)| initial.confidence[(j, k)] < opts.confidence_threshold)
        .collect();
    uncertain.sort_by(|a, b| {
        initial.confidence[*a]
            .total_cmp(&initial.confidence[*b])
            .then(a.cmp(b))
    });
    uncertain.truncate(opts.max_enumerated);

    // (flip mask, params, cost, converged) for every sign combination.
    let mut runs = Vec::with_capacity(1 << uncertain.len());
    for mask in 0u32..(1u32 << uncertain.len()) {
        let mut start = initial.phases.clone();
        for (bit, &(j, k)) in uncertain.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                start[(j, k)] = -start[(j, k)];
            }
        }
        let (mut x, cost, converged) =
            problem.levenberg_marquardt(problem.to_params(&start), opts.max_iter);
        x.apply(|p| *p = wrap_phase(*p));
        // Conjugate solutions fit equally well; compare runs in the phi_11 >= 0 gauge.
        if x[0] < 0.0 {
            x.apply(|p| *p = wrap_phase(-*p));
        }
        runs.push((mask, x, cost, converged));
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .expect("at least one sign combination");

    if !(best.2 <= initial_chi2) {
        return Ok(RefineOutcome {
            solution: initial.clone(),
            converged: false,
        });
    }

    let phases = problem.to_phases(&best.1);

    // Sign confidence from the chi-square penalty of the opposite sign: the
    // cheaper of flipping the entry at the optimum and the best run that
    // ended on the other sign.
    let mut confidence = initial.confidence.clone();
    for j in 1..n {
        for k in 1..n {
            let sign = phases[(j, k)].signum();
            let mut flipped = phases.clone();
            flipped[(j, k)] = -flipped[(j, k)];
            let alternative = runs
                .iter()
                .filter(|r| r.1[problem.param_index(j, k).unwrap()].signum() != sign)
                .map(|r| r.2)
                .fold(chi2_sum(&flipped, correlations).0, f64::min);
            let delta = (alternative - best.2).max(0.0);
            confidence[(j, k)] = 1.0 - (-delta / 2.0).exp();
        }
    }

    let chi2 = reduced_chi2(&phases, correlations);
    Ok(RefineOutcome {
        solution: PhaseSolution {
            phases,
            confidence,
            chi2,
        },
        converged: best.3,
    })
}
