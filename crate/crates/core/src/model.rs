//! Complex-matrix domain model for lossy linear optical networks.
//!
//! A physical interferometer is described by `T = D1 · U · D2`, where `U` is
//! unitary and `D1`, `D2` are diagonal layers carrying mode-dependent losses
//! (moduli) and unstable phases (arguments) at the output and input side.
//! Intensity and correlation measurements cannot see the phases in `D1`, `D2`,
//! nor distinguish `U` from `U*`, so reconstructions are compared through a
//! canonical representative of the equivalence class.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Moduli at or below this value count as zero.
pub const ZERO_MODULUS_EPS: f64 = 1e-9;

/// Max-entry tolerance on `U^H U - I` for a matrix to count as unitary.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Tolerance on column sums for probability-like matrices.
pub const COLUMN_SUM_TOL: f64 = 1e-6;

/// Tolerance on row and column sums of a doubly stochastic matrix.
pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-8;

/// `|Im U11| / |U11|` below which `phi_11` counts as 0 or pi in the canonical form.
pub const PHASE_TIE_TOL: f64 = 1e-12;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Max absolute entry of `M^H M - I`.
pub fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..g.ncols() {
            let target = if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

fn ensure_square<T: nalgebra::Scalar>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidDimension(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidDimension(
            "mode count must be at least 1".into(),
        ));
    }
    Ok(m.nrows())
}

/// An `n x n` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<C64>);

impl UnitaryMatrix {
    /// Validates unitarity at [`UNITARITY_TOL`].
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        Self::with_tolerance(m, UNITARITY_TOL)
    }

    pub fn with_tolerance(m: DMatrix<C64>, tol: f64) -> Result<Self> {
        ensure_square(&m)?;
        let deviation = unitarity_deviation(&m);
        if !(deviation <= tol) {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    /// Element-wise complex conjugate, still unitary.
    pub fn conjugate(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    /// `P_ij = |U_ij|^2`, a doubly stochastic matrix.
    pub fn probabilities(&self) -> DMatrix<f64> {
        self.0.map(|z| z.norm_sqr())
    }
}

impl AsRef<DMatrix<C64>> for UnitaryMatrix {
    fn as_ref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

/// Diagonal loss-and-phase layer. Modulus is the amplitude transmission in
/// `(0, 1]`, argument the (possibly unstable) phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDiagonal(Vec<C64>);

impl LossDiagonal {
    pub fn unit(n: usize) -> Self {
        Self(vec![C64::new(1.0, 0.0); n])
    }

    /// Builds the layer from moduli and phases. A zero modulus is replaced by
    /// [`ZERO_MODULUS_EPS`] so the layer stays invertible.
    pub fn from_polar(moduli: &[f64], phases: &[f64]) -> Result<Self> {
        if moduli.len() != phases.len() {
            return Err(Error::DimensionMismatch {
                expected: moduli.len(),
                found: phases.len(),
            });
        }
        let mut out = Vec::with_capacity(moduli.len());
        for (idx, (&r, &phi)) in moduli.iter().zip(phases).enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&r) || !phi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "loss entry {idx}: modulus {r} must lie in [0, 1] with a finite phase"
                )));
            }
            out.push(C64::from_polar(r.clamp(ZERO_MODULUS_EPS, 1.0), phi));
        }
        Ok(Self(out))
    }

    /// Layer with the given intensity transmissions (`|d|^2`) and zero phases.
    pub fn from_intensity(transmissions: &[f64]) -> Result<Self> {
        let moduli: Vec<f64> = transmissions.iter().map(|t| t.max(0.0).sqrt()).collect();
        Self::from_polar(&moduli, &vec![0.0; moduli.len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[C64] {
        &self.0
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    /// Intensity transmissions `|d_i|^2`.
    pub fn transmissions(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Lossy transfer matrix `T = D1 · U · D2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub unitary: UnitaryMatrix,
    /// Output-side layer.
    pub d1: LossDiagonal,
    /// Input-side layer.
    pub d2: LossDiagonal,
}

impl TransferMatrix {
    pub fn new(unitary: UnitaryMatrix, d1: LossDiagonal, d2: LossDiagonal) -> Result<Self> {
        let n = unitary.n();
        for layer in [&d1, &d2] {
            if layer.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: layer.len(),
                });
            }
        }
        Ok(Self { unitary, d1, d2 })
    }

    pub fn lossless(unitary: UnitaryMatrix) -> Self {
        let n = unitary.n();
        Self {
            unitary,
            d1: LossDiagonal::unit(n),
            d2: LossDiagonal::unit(n),
        }
    }

    pub fn n(&self) -> usize {
        self.unitary.n()
    }

    /// Dense `D1 · U · D2`.
    pub fn composite(&self) -> DMatrix<C64> {
        let u = self.unitary.matrix();
        let d1 = self.d1.entries();
        let d2 = self.d2.entries();
        DMatrix::from_fn(self.n(), self.n(), |i, j| d1[i] * u[(i, j)] * d2[j])
    }

    /// Propagates input field amplitudes to the outputs.
    pub fn apply(&self, input: &[C64]) -> Result<Vec<C64>> {
        if input.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: input.len(),
            });
        }
        let t = self.composite();
        Ok((0..self.n())
            .map(|i| (0..self.n()).map(|j| t[(i, j)] * input[j]).sum())
            .collect())
    }
}

/// Representative of a unitary's equivalence class: real non-negative first
/// row and column, and entry (1,1) with phase in `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalUnitary {
    entries: DMatrix<C64>,
    conjugated: bool,
}

impl CanonicalUnitary {
    /// Wraps a matrix already known to be in canonical gauge.
    pub(crate) fn from_parts(entries: DMatrix<C64>, conjugated: bool) -> Self {
        Self {
            entries,
            conjugated,
        }
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Whether the conjugate branch was taken.
    pub fn conjugated(&self) -> bool {
        self.conjugated
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        self.entries.column(k).iter().copied().collect()
    }

    pub fn phases(&self) -> DMatrix<f64> {
        self.entries.map(|z| wrap_phase(z.arg()))
    }

    pub fn probabilities(&self) -> DMatrix<f64> {
        self.entries.map(|z| z.norm_sqr())
    }

    /// `max |U^H U - I|`; zero for an exact unitary.
    pub fn unitarity_residual(&self) -> f64 {
        unitarity_deviation(&self.entries)
    }
}

/// Brings a square complex matrix to the canonical representative of its
/// `F1 · U · F2` / conjugation class.
pub fn canonicalize(m: &DMatrix<C64>) -> Result<CanonicalUnitary> {
    let n = ensure_square(m)?;
    for i in 0..n {
        let modulus = m[(i, 0)].norm();
        if !(modulus > ZERO_MODULUS_EPS) {
            return Err(Error::CannotCanonicalize {
                row: i,
                col: 0,
                modulus,
            });
        }
    }
    for j in 1..n {
        let modulus = m[(0, j)].norm();
        if !(modulus > ZERO_MODULUS_EPS) {
            return Err(Error::CannotCanonicalize {
                row: 0,
                col: j,
                modulus,
            });
        }
    }

    let mut out = m.clone();
    for i in 0..n {
        let z = out[(i, 0)];
        let rot = (z / z.norm()).conj();
        for j in 0..n {
            out[(i, j)] *= rot;
        }
        out[(i, 0)] = C64::new(z.norm(), 0.0);
    }
    for j in 1..n {
        let z = out[(0, j)];
        let rot = (z / z.norm()).conj();
        for i in 0..n {
            out[(i, j)] *= rot;
        }
        out[(0, j)] = C64::new(z.norm(), 0.0);
    }

    // Ties at phase 0 or pi keep the unconjugated branch.
    let u11 = out[(1.min(n - 1), 1.min(n - 1))];
    let conjugated = n > 1 && u11.norm() > ZERO_MODULUS_EPS && u11.im < -PHASE_TIE_TOL * u11.norm();
    if conjugated {
        out.apply(|z| *z = z.conj());
    } else if n > 1 && u11.im < 0.0 {
        out[(1, 1)].im = 0.0;
    }
    Ok(CanonicalUnitary {
        entries: out,
        conjugated,
    })
}

/// Classical similarity `(1/n · sum_ij sqrt(P_ij P'_ij))^2` between two
/// column-normalized probability matrices.
pub fn fidelity_probability(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            found: q.nrows(),
        });
    }
    let n = ensure_square(p)?;
    for m in [p, q] {
        for row in 0..n {
            for col in 0..n {
                let value = m[(row, col)];
                if value < 0.0 || !value.is_finite() {
                    return Err(Error::NegativeEntry { row, col, value });
                }
            }
        }
        for (column, col) in m.column_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::NotColumnNormalized { column, sum });
            }
        }
    }
    let overlap: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a * b).sqrt()).sum();
    Ok((overlap / n as f64).powi(2).min(1.0))
}

/// `|<v|u>|^2` for two unit vectors.
pub fn fidelity_column(u: &[C64], v: &[C64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    for w in [u, v] {
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(Error::NotNormalized { norm });
        }
    }
    let inner: C64 = u.iter().zip(v).map(|(a, b)| a * b.conj()).sum();
    Ok(inner.norm_sqr().min(1.0))
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` pushed back into `Q`.
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "mode count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    // QR output is unitary to rounding; no need to re-validate.
    Ok(UnitaryMatrix(q))
}
