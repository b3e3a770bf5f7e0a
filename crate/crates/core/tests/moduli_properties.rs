use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lochar_core::model::{haar_random_unitary, LossDiagonal, TransferMatrix, C64};
use lochar_core::moduli::{
    multi_input_weights, sinkhorn_decompose, variance_weights, IntensityMatrix, SinkhornOptions,
    VarianceProblem,
};
use lochar_core::simulator::{chip_unitary, intensity_matrix, ChipConfig, NoiseModel};

fn lossy(n: usize, seed: u64, d1: &[f64], d2: &[f64]) -> TransferMatrix {
    TransferMatrix::new(
        haar_random_unitary(n, seed).unwrap(),
        LossDiagonal::from_intensity(&d1[..n]).unwrap(),
        LossDiagonal::from_intensity(&d2[..n]).unwrap(),
    )
    .unwrap()
}

/// Output powers for each reachable input under random chip settings.
fn chip_settings(
    d1: &[f64],
    d2: &[f64],
    inputs: &[usize],
    settings: usize,
    sigma: f64,
    seed: u64,
) -> BTreeMap<usize, Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for _ in 0..settings {
        let theta = [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ];
        let t = TransferMatrix::new(
            chip_unitary(&ChipConfig { theta }),
            LossDiagonal::from_intensity(d1).unwrap(),
            LossDiagonal::from_intensity(d2).unwrap(),
        )
        .unwrap();
        for &k in inputs {
            let mut e = vec![C64::new(0.0, 0.0); 3];
            e[k] = C64::new(1.0, 0.0);
            let out: Vec<f64> = t
                .apply(&e)
                .unwrap()
                .iter()
                .map(|z| {
                    let noise: f64 = rng.sample(StandardNormal);
                    z.norm_sqr() * (1.0 + sigma * noise)
                })
                .collect();
            groups.entry(k).or_default().push(out);
        }
    }
    groups
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinkhorn_ignores_diagonal_scaling(
        n in 2usize..8,
        seed in any::<u64>(),
        d1 in prop::collection::vec(0.1f64..=1.0, 8),
        d2 in prop::collection::vec(0.1f64..=1.0, 8),
        r in prop::collection::vec(0.2f64..5.0, 8),
        c in prop::collection::vec(0.2f64..5.0, 8),
    ) {
        let m = intensity_matrix(&lossy(n, seed, &d1, &d2), &NoiseModel::noiseless(), 0).unwrap();
        let scaled = DMatrix::from_fn(n, n, |i, j| r[i] * m.entries()[(i, j)] * c[j]);
        let opts = SinkhornOptions::default();
        let a = sinkhorn_decompose(&m, &opts).unwrap();
        let b = sinkhorn_decompose(&IntensityMatrix::new(scaled).unwrap(), &opts).unwrap();
        prop_assert!((a.p.entries() - b.p.entries()).amax() < 1e-9);
    }

    #[test]
    fn sinkhorn_recovers_relative_losses(
        n in 2usize..8,
        seed in any::<u64>(),
        d1 in prop::collection::vec(0.1f64..=1.0, 8),
        d2 in prop::collection::vec(0.1f64..=1.0, 8),
    ) {
        let t = lossy(n, seed, &d1, &d2);
        let m = intensity_matrix(&t, &NoiseModel::noiseless(), 0).unwrap();
        let r = sinkhorn_decompose(&m, &SinkhornOptions::default()).unwrap();
        let p = haar_random_unitary(n, seed).unwrap().probabilities();
        prop_assert!((r.p.entries() - &p).amax() < 1e-8);
        let max_d1 = d1[..n].iter().cloned().fold(0.0, f64::max);
        for (got, want) in r.d1.iter().zip(&d1[..n]) {
            prop_assert!((got - want / max_d1).abs() < 1e-7);
        }
        for k in 0..n {
            for i in 0..n {
                let rebuilt = r.d1[i] * r.p.entries()[(i, k)] * r.d2[k];
                prop_assert!((rebuilt - m.entries()[(i, k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn intensity_matrix_conserves_or_loses_energy(
        n in 2usize..8,
        seed in any::<u64>(),
        d1 in prop::collection::vec(0.0f64..=1.0, 8),
        d2 in prop::collection::vec(0.0f64..=1.0, 8),
    ) {
        let m = intensity_matrix(&lossy(n, seed, &d1, &d2), &NoiseModel::noiseless(), 0).unwrap();
        for (k, &loss) in d2[..n].iter().enumerate() {
            let total: f64 = m.entries().column(k).sum();
            let bound = loss * d1[..n].iter().cloned().fold(0.0, f64::max);
            let floor = loss * d1[..n].iter().cloned().fold(1.0, f64::min);
            prop_assert!(total <= bound + 1e-12);
            prop_assert!(total >= floor - 1e-12);
        }
    }

    #[test]
    fn variance_form_is_psd_and_minimized_by_weights(
        seed in any::<u64>(),
        settings in 5usize..40,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d1: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..=1.0)).collect();
        let groups = chip_settings(&d1, &[1.0, 1.0, 1.0], &[0], settings, 0.0, seed);
        let measurements = &groups[&0];
        let problem = VarianceProblem::from_measurements(measurements).unwrap();
        let eig = SymmetricEigen::new(problem.q.clone());
        let min = eig.eigenvalues.min();
        let scale = problem.q.amax().max(1e-300);
        prop_assert!(min >= -1e-12 * scale);
        if let Ok(w) = variance_weights(measurements, None) {
            let norm: f64 = w.alpha.iter().map(|a| a * a).sum::<f64>();
            prop_assert!((problem.xi2(&w.alpha) / norm - min).abs() <= 1e-9 * scale);
            prop_assert!((w.eigenvalue - min).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn noiseless_settings_give_exact_inverse_losses() {
    let d1 = [0.9, 0.45, 0.7];
    let groups = chip_settings(&d1, &[1.0, 1.0, 1.0], &[0], 20, 0.0, 3);
    let w = variance_weights(&groups[&0], None).unwrap();
    let ratio: Vec<f64> = w.alpha.iter().zip(&d1).map(|(a, d)| a * d).collect();
    for r in &ratio {
        assert!((r / ratio[0] - 1.0).abs() < 1e-8, "{ratio:?}");
    }
}

#[test]
fn input_ratios_noiseless() {
    let d2 = [1.0, 0.7, 0.9];
    let groups = chip_settings(&[0.8, 1.0, 0.6], &d2, &[0, 1, 2], 30, 0.0, 17);
    let w = multi_input_weights(&groups).unwrap();
    assert_eq!(w.inputs, vec![0, 1, 2]);
    for (r, d) in w.input_ratios.iter().zip(&d2) {
        assert!((r - d).abs() < 1e-6, "{:?}", w.input_ratios);
    }
}

#[test]
fn input_ratios_with_intensity_noise() {
    let d2 = [1.0, 0.7, 0.9];
    for seed in 0..5 {
        let groups = chip_settings(&[0.8, 1.0, 0.6], &d2, &[0, 1, 2], 100, 1e-3, 100 + seed);
        let w = multi_input_weights(&groups).unwrap();
        for (r, d) in w.input_ratios.iter().zip(&d2) {
            assert!((r - d).abs() < 1e-2, "seed {seed}: {:?}", w.input_ratios);
        }
    }
}

#[test]
fn simulator_is_deterministic_per_seed() {
    let t = lossy(4, 9, &[1.0, 0.5, 0.8, 0.9], &[0.7, 1.0, 0.3, 0.6]);
    let noise = NoiseModel::default();
    let a = intensity_matrix(&t, &noise, 42).unwrap();
    let b = intensity_matrix(&t, &noise, 42).unwrap();
    let c = intensity_matrix(&t, &noise, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
