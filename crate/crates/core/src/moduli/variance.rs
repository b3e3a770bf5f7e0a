use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative spectral gap below which the minimizer is considered ambiguous.
const DEGENERACY_REL: f64 = 1e-9;

/// Quadratic form `xi^2(alpha) = alpha^T Q alpha`: the variance across
/// settings of the weighted output sum `S(alpha, theta) = sum_j alpha_j M_j(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProblem {
    /// Symmetric positive semi-definite, `n x n` over outputs.
    pub q: DMatrix<f64>,
    pub n_settings: usize,
}

impl VarianceProblem {
    /// Builds `Q` from one output-intensity vector per circuit setting.
    pub fn from_measurements(measurements: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = measurements.first() else {
            return Err(Error::InvalidParameter("no settings measured".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidDimension("empty intensity vector".into()));
        }
        if measurements.len() < 2 {
            return Err(Error::InvalidParameter("need at least 2 settings".into()));
        }
        for m in measurements {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.len(),
                });
            }
        }
        let count = measurements.len() as f64;
        let mean: Vec<f64> = (0..n)
            .map(|h| measurements.iter().map(|m| m[h]).sum::<f64>() / count)
            .collect();
        // Centered form of (1/N) sum M_ih M_ik - (1/N^2) sum_i M_ih sum_j M_jk.
        let mut q = DMatrix::zeros(n, n);
        for m in measurements {
            for h in 0..n {
                let dh = m[h] - mean[h];
                for k in 0..n {
                    q[(h, k)] += dh * (m[k] - mean[k]);
                }
            }
        }
        q /= count;
        q = (&q + q.transpose()) * 0.5;
        Ok(Self {
            q,
            n_settings: measurements.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn xi2(&self, alpha: &[f64]) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.q[(i, j)] * alpha[i] * alpha[j];
            }
        }
        acc
    }
}

/// Output weights `alpha ∝ 1/D1` that flatten the weighted output sum.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceWeights {
    pub alpha: Vec<f64>,
    /// Smallest eigenvalue of `Q` (unit-norm eigenvector).
    pub eigenvalue: f64,
    /// Distance to the second-smallest eigenvalue.
    pub spectral_gap: f64,
    /// `xi^2` at the returned (normalized) `alpha`.
    pub xi2: f64,
}

fn smallest_eigenpair(q: &DMatrix<f64>) -> (f64, Vec<f64>, f64) {
    let eig = SymmetricEigen::new(q.clone());
    let mut order: Vec<usize> = (0..q.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lo = order[0];
    let gap = if order.len() > 1 {
        eig.eigenvalues[order[1]] - eig.eigenvalues[lo]
    } else {
        f64::INFINITY
    };
    let v = eig.eigenvectors.column(lo).iter().copied().collect();
    (eig.eigenvalues[lo], v, gap)
}

fn weights_from_problem(
    problem: &VarianceProblem,
    normalization: Option<&[f64]>,
) -> Result<VarianceWeights> {
    let n = problem.n();
    let (eigenvalue, mut v, gap) = smallest_eigenpair(&problem.q);
    let scale = problem.q.iter().fold(0.0f64, |a, b| a.max(b.abs())) * n as f64;
    if n > 1 && !(gap > DEGENERACY_REL * scale) {
        return Err(Error::AmbiguousSolution { gap });
    }
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::InfeasibleWeights { index, value });
    }
    let default_norm = vec![1.0 / n as f64; n];
    let norm = normalization.unwrap_or(&default_norm);
    if norm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: norm.len(),
        });
    }
    let dot: f64 = norm.iter().zip(&v).map(|(a, b)| a * b).sum();
    if !(dot > 0.0) {
        return Err(Error::InvalidParameter(
            "normalization vector is orthogonal to the solution".into(),
        ));
    }
    let alpha: Vec<f64> = v.iter().map(|x| x / dot).collect();
    Ok(VarianceWeights {
        xi2: problem.xi2(&alpha),
        alpha,
        eigenvalue,
        spectral_gap: gap,
    })
}

/// Minimizes the variance of the weighted output sum over settings for a
/// single input. `normalization` is the constraint vector `N` with
/// `N · alpha = 1`; the default `N = e/n` makes the mean weight 1.
pub fn variance_weights(
    measurements: &[Vec<f64>],
    normalization: Option<&[f64]>,
) -> Result<VarianceWeights> {
    let problem = VarianceProblem::from_measurements(measurements)?;
    weights_from_problem(&problem, normalization)
}

/// Shared output weights for several inputs plus relative input losses.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiInputWeights {
    pub weights: VarianceWeights,
    /// Input modes, ascending.
    pub inputs: Vec<usize>,
    /// Mean weighted sum per input.
    pub mean_sums: Vec<f64>,
    /// `D2_k / D2_{k0}` for each input relative to the first one.
    pub input_ratios: Vec<f64>,
}

/// Minimizes the summed variance over all input groups; the mean weighted sum
/// of each group then gives the input losses up to a common factor.
pub fn multi_input_weights(groups: &BTreeMap<usize, Vec<Vec<f64>>>) -> Result<MultiInputWeights> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 input groups".into(),
        ));
    }
    let mut total: Option<VarianceProblem> = None;
    for measurements in groups.values() {
        let p = VarianceProblem::from_measurements(measurements)?;
        total = Some(match total {
            None => p,
            Some(acc) => {
                if acc.n() != p.n() {
                    return Err(Error::DimensionMismatch {
                        expected: acc.n(),
                        found: p.n(),
                    });
                }
                VarianceProblem {
                    q: acc.q + p.q,
                    n_settings: acc.n_settings + p.n_settings,
                }
            }
        });
    }
    let total = total.expect("at least two groups");
    let weights = weights_from_problem(&total, None)?;
    let mean_sums: Vec<f64> = groups
        .values()
        .map(|ms| {
            ms.iter()
                .map(|m| {
                    m.iter()
                        .zip(&weights.alpha)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / ms.len() as f64
        })
        .collect();
    let reference = mean_sums[0];
    let input_ratios = mean_sums.iter().map(|s| s / reference).collect();
    Ok(MultiInputWeights {
        weights,
        inputs: groups.keys().copied().collect(),
        mean_sums,
        input_ratios,
    })
}

/// Column-normalized probability columns for a subset of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityColumns {
    pub inputs: Vec<usize>,
    /// `n_outputs x inputs.len()`.
    pub entries: DMatrix<f64>,
}

impl ProbabilityColumns {
    /// The full square matrix when every input `0..n` is present.
    pub fn to_square(&self) -> Option<DMatrix<f64>> {
        let n = self.entries.nrows();
        (self.inputs.len() == n && self.inputs.iter().enumerate().all(|(a, &b)| a == b))
            .then(|| self.entries.clone())
    }
}

/// Applies the weights to one output vector per input and normalizes each
/// column to unit sum: `P_jk ∝ alpha_j M_jk`.
pub fn recover_p_from_weights(
    columns: &BTreeMap<usize, Vec<f64>>,
    alpha: &[f64],
) -> Result<ProbabilityColumns> {
    if let Some((index, &value)) = alpha.iter().enumerate().find(|(_, &a)| !(a > 0.0)) {
        return Err(Error::InfeasibleWeights { index, value });
    }
    let n = alpha.len();
    let mut entries = DMatrix::zeros(n, columns.len());
    for (c, (&input, m)) in columns.iter().enumerate() {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.len(),
            });
        }
        let weighted: Vec<f64> = m.iter().zip(alpha).map(|(a, b)| a * b).collect();
        let sum: f64 = weighted.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::ZeroColumn { column: input });
        }
        for (j, w) in weighted.iter().enumerate() {
            entries[(j, c)] = w / sum;
        }
    }
    Ok(ProbabilityColumns {
        inputs: columns.keys().copied().collect(),
        entries,
    })
}
