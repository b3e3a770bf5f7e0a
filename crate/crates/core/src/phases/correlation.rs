use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::simulator::TwoBeamSeries;

/// Number of leave-one-out blocks for the jackknife.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Minimum series length accepted by the estimator.
pub const MIN_SAMPLES: usize = 100;

/// Self-correlations below this fraction of the squared mean count as zero.
const VANISHING_REL: f64 = 1e-14;

/// Input pair `(h, k)` and output pair `(i, j)`, stored with `h < k` and
/// `i < j`. The normalized correlation is symmetric under both swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CorrelationKey {
    pub h: usize,
    pub k: usize,
    pub i: usize,
    pub j: usize,
}

impl CorrelationKey {
    pub fn new(h: usize, k: usize, i: usize, j: usize) -> Self {
        Self {
            h: h.min(k),
            k: h.max(k),
            i: i.min(j),
            j: i.max(j),
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.h, self.k, self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEntry {
    /// Normalized cross-correlation, clamped to `[-1, 1]`.
    pub c: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Normalized cross-correlations `C^{hk}_{ij}` keyed by input and output pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrelationSet {
    entries: BTreeMap<CorrelationKey, CorrelationEntry>,
}

impl CorrelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, h: usize, k: usize, i: usize, j: usize, entry: CorrelationEntry) {
        self.entries.insert(CorrelationKey::new(h, k, i, j), entry);
    }

    pub fn get(&self, h: usize, k: usize, i: usize, j: usize) -> Option<&CorrelationEntry> {
        self.entries.get(&CorrelationKey::new(h, k, i, j))
    }

    pub fn contains(&self, h: usize, k: usize, i: usize, j: usize) -> bool {
        self.get(h, k, i, j).is_some()
    }

    pub fn extend(&mut self, other: CorrelationSet) {
        self.entries.extend(other.entries);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CorrelationKey, &CorrelationEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Running sums of centered intensities of one block.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    si: f64,
    sj: f64,
    sii: f64,
    sjj: f64,
    sij: f64,
}

impl Moments {
    fn add(&mut self, x: f64, y: f64) {
        self.count += 1.0;
        self.si += x;
        self.sj += y;
        self.sii += x * x;
        self.sjj += y * y;
        self.sij += x * y;
    }

    fn minus(&self, o: &Moments) -> Moments {
        Moments {
            count: self.count - o.count,
            si: self.si - o.si,
            sj: self.sj - o.sj,
            sii: self.sii - o.sii,
            sjj: self.sjj - o.sjj,
            sij: self.sij - o.sij,
        }
    }

    /// (sigma_ij, sigma_ii, sigma_jj)
    fn covariances(&self) -> (f64, f64, f64) {
        let n = self.count;
        let mi = self.si / n;
        let mj = self.sj / n;
        (
            self.sij / n - mi * mj,
            (self.sii / n - mi * mi).max(0.0),
            (self.sjj / n - mj * mj).max(0.0),
        )
    }

    fn correlation(&self) -> f64 {
        let (ij, ii, jj) = self.covariances();
        let denom = (ii * jj).sqrt();
        if denom > 0.0 {
            ij / denom
        } else {
            0.0
        }
    }
}

/// Normalized second-order cross-correlations `sigma_ij / sqrt(sigma_ii sigma_jj)`
/// of the outputs pairs in `pairs`, with a block-jackknife standard error.
pub fn estimate_correlations(
    series: &TwoBeamSeries,
    pairs: &[(usize, usize)],
) -> Result<CorrelationSet> {
    let len = series.len();
    if len < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "series has {len} samples, at least {MIN_SAMPLES} required"
        )));
    }
    let n = series.n_outputs();
    let mut out = CorrelationSet::new();
    for &(i, j) in pairs {
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidIndices(format!(
                "output pair ({i}, {j}) invalid for {n} outputs"
            )));
        }
        let xi = series.output(i);
        let xj = series.output(j);
        let mean_i = xi.iter().sum::<f64>() / len as f64;
        let mean_j = xj.iter().sum::<f64>() / len as f64;

        let mut blocks = vec![Moments::default(); JACKKNIFE_BLOCKS];
        let mut total = Moments::default();
        for t in 0..len {
            let (x, y) = (xi[t] - mean_i, xj[t] - mean_j);
            blocks[t * JACKKNIFE_BLOCKS / len].add(x, y);
            total.add(x, y);
        }

        let (_, var_i, var_j) = total.covariances();
        for (output, var, mean) in [(i, var_i, mean_i), (j, var_j, mean_j)] {
            if !(var > VANISHING_REL * mean * mean) || var <= f64::MIN_POSITIVE {
                return Err(Error::UndefinedCorrelation {
                    h: series.h,
                    k: series.k,
                    i,
                    j,
                    output,
                });
            }
        }

        let c = total.correlation();
        let loo: Vec<f64> = blocks
            .iter()
            .map(|b| total.minus(b).correlation())
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / loo.len() as f64;
        let b = JACKKNIFE_BLOCKS as f64;
        let variance = (b - 1.0) / b * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();

        out.insert(
            series.h,
            series.k,
            i,
            j,
            CorrelationEntry {
                c: c.clamp(-1.0, 1.0),
                stderr: variance.sqrt(),
                samples: len,
            },
        );
    }
    Ok(out)
}

/// All unordered output pairs `(i, j)`, `i < j`.
pub fn all_output_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TransferMatrix, UnitaryMatrix};
    use crate::simulator::{simulate_two_beam, tritter3, NoiseModel, TwoBeamSample};

    #[test]
    fn key_is_symmetric() {
        assert_eq!(
            CorrelationKey::new(2, 0, 3, 1),
            CorrelationKey::new(0, 2, 1, 3)
        );
    }

    #[test]
    fn dft_tritter_correlation() {
        let t = TransferMatrix::lossless(tritter3());
        let s = simulate_two_beam(&t, 0, 1, &NoiseModel::default(), 10_000, 17).unwrap();
        let set = estimate_correlations(&s, &[(1, 2)]).unwrap();
        let e = set.get(0, 1, 1, 2).unwrap();
        assert!(
            (e.c + 0.5).abs() < 3.0 * e.stderr,
            "c {} stderr {}",
            e.c,
            e.stderr
        );
        assert_eq!(e.samples, 10_000);
    }

    #[test]
    fn short_series_rejected() {
        let t = TransferMatrix::lossless(tritter3());
        let s = simulate_two_beam(&t, 0, 1, &NoiseModel::default(), 99, 1).unwrap();
        assert!(matches!(
            estimate_correlations(&s, &[(0, 1)]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn flat_output_is_undefined() {
        // Identity: no light from beam k reaches output h, so no fringe anywhere.
        let t = TransferMatrix::lossless(UnitaryMatrix::identity(3));
        let s = simulate_two_beam(&t, 0, 1, &NoiseModel::noiseless(), 300, 1).unwrap();
        assert!(matches!(
            estimate_correlations(&s, &[(0, 1)]),
            Err(Error::UndefinedCorrelation { .. })
        ));
    }

    #[test]
    fn perfectly_correlated_synthetic_series() {
        let samples = (0..400)
            .map(|t| {
                let x = (t as f64 * 0.37).sin();
                TwoBeamSample {
                    t,
                    intensities: vec![1.0 + x, 2.0 + 3.0 * x],
                    modulator_phase: 0.0,
                }
            })
            .collect();
        let s = TwoBeamSeries {
            h: 0,
            k: 1,
            samples,
        };
        let e = *estimate_correlations(&s, &[(0, 1)])
            .unwrap()
            .get(0, 1, 0, 1)
            .unwrap();
        assert!((e.c - 1.0).abs() < 1e-12);
        assert!(e.stderr < 1e-10);
    }
}
