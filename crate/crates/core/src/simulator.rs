//! Synthetic measurement data and two-photon oracles.
//!
//! Everything here is a pure function of its inputs and an explicit seed.
//! Random streams use ChaCha8 so that series are reproducible across platforms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TransferMatrix, UnitaryMatrix, C64, ZERO_MODULUS_EPS};
use crate::moduli::IntensityMatrix;

/// Mixes a master seed with a stream label (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn default_modulator_phases() -> Vec<f64> {
    vec![0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]
}

/// Measurement imperfections applied by the simulator.
///
/// Defaults: relative intensity noise `1e-3`, thermal random-walk step
/// `0.05` rad per sample, modulator cycling through `{0, 2pi/3, 4pi/3}`,
/// full first-order coherence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Std-dev of the multiplicative Gaussian noise on each measured power.
    pub relative_intensity_sigma: f64,
    /// Std-dev (rad) of the per-sample random-walk increment of the thermal phase.
    pub thermal_phase_step_sigma: f64,
    /// Modulator phases (rad), cycled deterministically one per sample.
    pub modulator_phases: Vec<f64>,
    /// First-order coherence `<E1 E2* E1* E2> / (I1 I2)`, in `[0, 1]`.
    pub gamma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            relative_intensity_sigma: 1e-3,
            thermal_phase_step_sigma: 0.05,
            modulator_phases: default_modulator_phases(),
            gamma: 1.0,
        }
    }
}

impl NoiseModel {
    /// No intensity noise, no thermal drift, default modulator, full coherence.
    pub fn noiseless() -> Self {
        Self {
            relative_intensity_sigma: 0.0,
            thermal_phase_step_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_intensity_sigma >= 0.0) || !(self.thermal_phase_step_sigma >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise sigmas must be non-negative".into(),
            ));
        }
        if self.modulator_phases.is_empty() || self.modulator_phases.iter().any(|p| !p.is_finite())
        {
            return Err(Error::InvalidParameter(
                "modulator phase set must be non-empty and finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Fringe contrast applied to the interference term. Equivalent to a phase
    /// jitter uniform on `[-a, a]` inside each detector window with
    /// `sin(a)/a = sqrt(gamma)`.
    fn fringe_contrast(&self) -> f64 {
        self.gamma.sqrt()
    }

    fn intensity_noise(&self) -> Normal<f64> {
        Normal::new(0.0, self.relative_intensity_sigma).expect("validated sigma")
    }
}

/// One time sample of a two-beam measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBeamSample {
    pub t: usize,
    pub intensities: Vec<f64>,
    pub modulator_phase: f64,
}

/// Output intensities over time for light injected in inputs `h` and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBeamSeries {
    pub h: usize,
    pub k: usize,
    pub samples: Vec<TwoBeamSample>,
}

impl TwoBeamSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.samples.first().map_or(0, |s| s.intensities.len())
    }

    /// Intensity trace of output `i`.
    pub fn output(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.intensities[i]).collect()
    }
}

/// Heater phases of the 3-mode reconfigurable chip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipConfig {
    pub theta: [f64; 3],
}

/// Ideal tritter: the 3-point discrete Fourier transform, `U_jk = w^(jk)/sqrt(3)`.
pub fn tritter3() -> UnitaryMatrix {
    let s = 1.0 / 3f64.sqrt();
    let m = DMatrix::from_fn(3, 3, |j, k| {
        C64::from_polar(s, 2.0 * PI * ((j * k) % 3) as f64 / 3.0)
    });
    UnitaryMatrix::new(m).expect("DFT is unitary")
}

/// `tritter · diag(e^{i theta}) · tritter`.
pub fn chip_unitary(cfg: &ChipConfig) -> UnitaryMatrix {
    let t = tritter3();
    let phases = DMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            C64::from_polar(1.0, cfg.theta[i])
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let m = t.matrix() * phases * t.matrix();
    UnitaryMatrix::with_tolerance(m, 1e-12).expect("product of unitaries")
}

/// Single-input intensity matrix `M_ij = |d1_i|^2 |U_ij|^2 |d2_j|^2` with
/// multiplicative Gaussian noise; negative noisy values are clamped to zero.
pub fn intensity_matrix(
    t: &TransferMatrix,
    noise: &NoiseModel,
    seed: u64,
) -> Result<IntensityMatrix> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = noise.intensity_noise();
    let composite = t.composite();
    let n = t.n();
    let mut m = DMatrix::zeros(n, n);
    // Row-major draw order keeps the stream stable if the storage order changes.
    for i in 0..n {
        for j in 0..n {
            let eta: f64 = dist.sample(&mut rng);
            m[(i, j)] = (composite[(i, j)].norm_sqr() * (1.0 + eta)).max(0.0);
        }
    }
    IntensityMatrix::new(m)
}

/// Input powers of the two beams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamPowers {
    pub first: f64,
    pub second: f64,
}

impl Default for BeamPowers {
    fn default() -> Self {
        Self {
            first: 1.0,
            second: 1.0,
        }
    }
}

/// Two-beam intensity series with unit input powers.
pub fn simulate_two_beam(
    t: &TransferMatrix,
    h: usize,
    k: usize,
    noise: &NoiseModel,
    n_samples: usize,
    seed: u64,
) -> Result<TwoBeamSeries> {
    simulate_two_beam_with_powers(t, h, k, BeamPowers::default(), noise, n_samples, seed)
}

/// Two-beam intensity series. Beam `h` carries `sqrt(I1)`, beam `k` carries
/// `sqrt(I2) e^{i(phi_T + phi_M)}` where `phi_T` is a Gaussian random walk and
/// `phi_M` cycles through the modulator set.
///
/// Random draws per sample are made in a fixed order (thermal step, then one
/// noise value per output) regardless of losses or coherence, so runs with the
/// same seed are paired.
pub fn simulate_two_beam_with_powers(
    t: &TransferMatrix,
    h: usize,
    k: usize,
    powers: BeamPowers,
    noise: &NoiseModel,
    n_samples: usize,
    seed: u64,
) -> Result<TwoBeamSeries> {
    noise.validate()?;
    let n = t.n();
    if h == k || h >= n || k >= n {
        return Err(Error::InvalidIndices(format!(
            "two-beam inputs must be distinct modes below {n}, got ({h}, {k})"
        )));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    if !(powers.first >= 0.0 && powers.second >= 0.0) {
        return Err(Error::InvalidParameter(
            "beam powers must be non-negative".into(),
        ));
    }

    let composite = t.composite();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thermal = Normal::new(0.0, noise.thermal_phase_step_sigma).expect("validated sigma");
    let intensity_noise = noise.intensity_noise();
    let contrast = noise.fringe_contrast();
    let amp_h = powers.first.sqrt();
    let amp_k = powers.second.sqrt();

    let mut phi_thermal: f64 = rng.random::<f64>() * 2.0 * PI;
    let mut samples = Vec::with_capacity(n_samples);
    for step in 0..n_samples {
        if step > 0 {
            phi_thermal += thermal.sample(&mut rng);
        }
        let phi_mod = noise.modulator_phases[step % noise.modulator_phases.len()];
        let rel = C64::from_polar(1.0, phi_thermal + phi_mod);
        let intensities = (0..n)
            .map(|i| {
                let a = composite[(i, h)] * amp_h;
                let b = composite[(i, k)] * amp_k * rel;
                let clean = a.norm_sqr() + b.norm_sqr() + 2.0 * contrast * (a * b.conj()).re;
                let eta: f64 = intensity_noise.sample(&mut rng);
                (clean.max(0.0) * (1.0 + eta)).max(0.0)
            })
            .collect();
        samples.push(TwoBeamSample {
            t: step,
            intensities,
            modulator_phase: phi_mod,
        });
    }
    Ok(TwoBeamSeries { h, k, samples })
}

fn check_two_photon_indices(n: usize, h: usize, k: usize, i: usize, j: usize) -> Result<()> {
    if h == k || i == j {
        return Err(Error::InvalidIndices(format!(
            "need distinct inputs and outputs, got inputs ({h}, {k}) outputs ({i}, {j})"
        )));
    }
    if [h, k, i, j].iter().any(|&x| x >= n) {
        return Err(Error::InvalidIndices(format!(
            "index out of range for {n} modes"
        )));
    }
    Ok(())
}

fn check_overlap(overlap: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap {overlap} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Probability of one photon in each of outputs `i != j` for photons injected
/// in `h != k`, with `overlap = |<phi|psi>|^2`.
pub fn two_photon_output_probability(
    u: &DMatrix<C64>,
    h: usize,
    k: usize,
    i: usize,
    j: usize,
    overlap: f64,
) -> Result<f64> {
    check_two_photon_indices(u.nrows(), h, k, i, j)?;
    check_overlap(overlap)?;
    let direct = u[(i, h)] * u[(j, k)];
    let exchange = u[(j, h)] * u[(i, k)];
    Ok(direct.norm_sqr() + exchange.norm_sqr() + 2.0 * (direct * exchange.conj()).re * overlap)
}

/// Probability that both photons leave through output `i`.
pub fn two_photon_bunching_probability(
    u: &DMatrix<C64>,
    h: usize,
    k: usize,
    i: usize,
    overlap: f64,
) -> Result<f64> {
    let n = u.nrows();
    if h == k || [h, k, i].iter().any(|&x| x >= n) {
        return Err(Error::InvalidIndices(format!(
            "inputs ({h}, {k}), output {i} invalid for {n} modes"
        )));
    }
    check_overlap(overlap)?;
    Ok((1.0 + overlap) * (u[(i, h)] * u[(i, k)]).norm_sqr())
}

/// HOM visibility `V = -2 t_jk t_ih t_ik t_jh / (t_jk^2 t_ih^2 + t_ik^2 t_jh^2)
/// · cos(p_jk + p_ih - p_ik - p_jh) · overlap`.
pub fn hom_visibility(
    u: &DMatrix<C64>,
    h: usize,
    k: usize,
    i: usize,
    j: usize,
    overlap: f64,
) -> Result<f64> {
    check_two_photon_indices(u.nrows(), h, k, i, j)?;
    check_overlap(overlap)?;
    let (t_ih, t_ik, t_jh, t_jk) = (
        u[(i, h)].norm(),
        u[(i, k)].norm(),
        u[(j, h)].norm(),
        u[(j, k)].norm(),
    );
    let denom = t_jk * t_jk * t_ih * t_ih + t_ik * t_ik * t_jh * t_jh;
    if !(denom > 0.0) {
        return Err(Error::UndefinedVisibility);
    }
    let phase = u[(j, k)].arg() + u[(i, h)].arg() - u[(i, k)].arg() - u[(j, h)].arg();
    Ok(-2.0 * t_jk * t_ih * t_ik * t_jh / denom * phase.cos() * overlap)
}

/// `cos(p_ih - p_ik - p_jh + p_jk)`: the phase-only quantity obtained by
/// normalizing the two-photon interference term with bunching probabilities.
pub fn bunching_normalized_t(
    u: &DMatrix<C64>,
    h: usize,
    k: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_two_photon_indices(u.nrows(), h, k, i, j)?;
    for (row, col) in [(i, h), (i, k), (j, h), (j, k)] {
        let modulus = u[(row, col)].norm();
        if !(modulus > ZERO_MODULUS_EPS) {
            return Err(Error::VanishingModulus { row, col, modulus });
        }
    }
    let z = u[(i, h)] * u[(i, k)].conj() * u[(j, h)].conj() * u[(j, k)];
    Ok((z.re / z.norm()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{unitarity_deviation, LossDiagonal};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn splitter() -> UnitaryMatrix {
        let s = FRAC_1_SQRT_2;
        UnitaryMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(s, 0.0),
                C64::new(s, 0.0),
                C64::new(s, 0.0),
                C64::new(-s, 0.0),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn tritter_is_balanced() {
        let t = tritter3();
        assert!(unitarity_deviation(t.matrix()) < 1e-12);
        for p in t.probabilities().iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chip_is_unitary() {
        for theta in [[0.0, 0.0, 0.0], [0.3, -1.2, 2.9], [5.0, 1.0, -3.0]] {
            let u = chip_unitary(&ChipConfig { theta });
            assert!(unitarity_deviation(u.matrix()) < 1e-12);
        }
        let t = tritter3();
        let square = t.matrix() * t.matrix();
        let u = chip_unitary(&ChipConfig { theta: [0.0; 3] });
        assert!((u.matrix() - square).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn intensity_matrix_noiseless() {
        let t = TransferMatrix::lossless(tritter3());
        let m = intensity_matrix(&t, &NoiseModel::noiseless(), 1).unwrap();
        assert!(m.entries().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let d1 = LossDiagonal::from_polar(&[0.5, 1.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        let t = TransferMatrix::new(UnitaryMatrix::identity(3), d1, LossDiagonal::unit(3)).unwrap();
        let m = intensity_matrix(&t, &NoiseModel::noiseless(), 1).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.25, 1.0, 1.0]));
        assert!((m.entries() - expected).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn attenuator_scales_one_row() {
        let u = chip_unitary(&ChipConfig {
            theta: [0.4, 1.3, 2.0],
        });
        let base = TransferMatrix::lossless(u.clone());
        let d1 = LossDiagonal::from_intensity(&[0.3, 1.0, 1.0]).unwrap();
        let att = TransferMatrix::new(u, d1, LossDiagonal::unit(3)).unwrap();
        let a = intensity_matrix(&base, &NoiseModel::noiseless(), 0).unwrap();
        let b = intensity_matrix(&att, &NoiseModel::noiseless(), 0).unwrap();
        for j in 0..3 {
            assert!((b.entries()[(0, j)] - 0.3 * a.entries()[(0, j)]).abs() < 1e-15);
            for i in 1..3 {
                assert_eq!(b.entries()[(i, j)], a.entries()[(i, j)]);
            }
        }
    }

    #[test]
    fn two_beam_identity_has_no_interference() {
        let d1 = LossDiagonal::from_polar(&[0.7, 0.9], &[0.2, 0.0]).unwrap();
        let d2 = LossDiagonal::from_polar(&[0.8, 1.0], &[0.0, 1.0]).unwrap();
        let t = TransferMatrix::new(UnitaryMatrix::identity(2), d1, d2).unwrap();
        let noise = NoiseModel {
            relative_intensity_sigma: 0.0,
            ..NoiseModel::default()
        };
        let s = simulate_two_beam(&t, 0, 1, &noise, 50, 3).unwrap();
        let expected = (0.7f64 * 0.8).powi(2);
        assert!(s.output(0).iter().all(|v| (v - expected).abs() < 1e-14));
    }

    #[test]
    fn two_beam_splitter_fringe_extremes() {
        let t = TransferMatrix::lossless(splitter());
        let noise = NoiseModel {
            relative_intensity_sigma: 0.0,
            thermal_phase_step_sigma: 0.0,
            modulator_phases: (0..200).map(|m| 2.0 * PI * m as f64 / 200.0).collect(),
            gamma: 1.0,
        };
        let s = simulate_two_beam(&t, 0, 1, &noise, 200, 9).unwrap();
        let out = s.output(0);
        let max = out.iter().cloned().fold(f64::MIN, f64::max);
        let min = out.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max <= 2.0 + 1e-12 && max > 2.0 - 1e-3, "max {max}");
        assert!((-1e-12..1e-3).contains(&min), "min {min}");
    }

    #[test]
    fn modulator_average_removes_cross_terms() {
        let u = chip_unitary(&ChipConfig {
            theta: [0.4, 1.3, 2.0],
        });
        let t = TransferMatrix::lossless(u.clone());
        let noise = NoiseModel {
            relative_intensity_sigma: 0.0,
            ..NoiseModel::default()
        };
        let s = simulate_two_beam(&t, 0, 2, &noise, 30_000, 4).unwrap();
        let p = u.probabilities();
        for i in 0..3 {
            let mean = s.output(i).iter().sum::<f64>() / s.len() as f64;
            assert!(
                (mean - (p[(i, 0)] + p[(i, 2)])).abs() < 5e-3,
                "output {i}: {mean}"
            );
        }
    }

    #[test]
    fn two_beam_rejects_bad_arguments() {
        let t = TransferMatrix::lossless(tritter3());
        let noise = NoiseModel::default();
        assert!(matches!(
            simulate_two_beam(&t, 1, 1, &noise, 10, 0),
            Err(Error::InvalidIndices(_))
        ));
        assert!(matches!(
            simulate_two_beam(&t, 0, 1, &noise, 1, 0),
            Err(Error::InvalidParameter(_))
        ));
        let bad = NoiseModel {
            gamma: 1.5,
            ..NoiseModel::default()
        };
        assert!(simulate_two_beam(&t, 0, 1, &bad, 10, 0).is_err());
    }

    #[test]
    fn hom_dip_of_balanced_splitter() {
        let u = splitter();
        let m = u.matrix();
        assert!(
            two_photon_output_probability(m, 0, 1, 0, 1, 1.0)
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!((two_photon_output_probability(m, 0, 1, 0, 1, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((hom_visibility(m, 0, 1, 0, 1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(hom_visibility(m, 0, 1, 0, 1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn two_photon_index_errors() {
        let m = tritter3().into_inner();
        assert!(two_photon_output_probability(&m, 0, 0, 1, 2, 1.0).is_err());
        assert!(two_photon_output_probability(&m, 0, 1, 2, 2, 1.0).is_err());
        assert!(hom_visibility(&m, 0, 1, 1, 1, 1.0).is_err());
        assert!(bunching_normalized_t(&m, 0, 1, 0, 3).is_err());
    }

    #[test]
    fn visibility_undefined_without_coincidences() {
        // Photons from inputs 0, 1 never reach output 2.
        let m = DMatrix::<C64>::identity(3, 3);
        assert!(matches!(
            hom_visibility(&m, 0, 1, 0, 2, 1.0),
            Err(Error::UndefinedVisibility)
        ));
    }

    #[test]
    fn bunching_t_examples() {
        let real = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.6, 0.0),
                C64::new(0.8, 0.0),
                C64::new(0.8, 0.0),
                C64::new(0.6, 0.0),
            ],
        );
        assert!((bunching_normalized_t(&real, 0, 1, 0, 1).unwrap() - 1.0).abs() < 1e-15);
        let dft = tritter3().into_inner();
        assert!((bunching_normalized_t(&dft, 0, 1, 1, 2).unwrap() + 0.5).abs() < 1e-12);
        let id = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(
            bunching_normalized_t(&id, 0, 1, 0, 1),
            Err(Error::VanishingModulus { .. })
        ));
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
