//! End-to-end orchestration: simulate, reconstruct moduli and phases, compare.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, StageExt};
use crate::io::{
    self, CanonicalUnitaryJson, ComplexMatrixJson, LossJson, MatrixDocument, PhaseSolutionJson,
    SettingRecord, SettingsDataset, SinkhornJson, VarianceJson,
};
use crate::model::{
    canonicalize, fidelity_column, fidelity_probability, haar_random_unitary, wrap_phase,
    CanonicalUnitary, LossDiagonal, TransferMatrix, UnitaryMatrix, C64, ZERO_MODULUS_EPS,
};
use crate::moduli::{
    multi_input_weights, recover_p_from_weights, sinkhorn_decompose, stochastic_residual,
    IntensityMatrix, SinkhornOptions,
};
use crate::phases::{
    all_output_pairs, assemble_unitary, estimate_correlations, reduced_chi2, refine_phases,
    solve_phases, vanishing_probability, CorrelationSet, PhaseSolution, RefineOptions,
    SolveOptions, MIN_SAMPLES,
};
use crate::simulator::{
    bunching_normalized_t, chip_unitary, derive_seed, intensity_matrix, simulate_two_beam,
    ChipConfig, NoiseModel, TwoBeamSeries,
};

/// Heater phases of the default chip setting. All moduli are well above zero
/// and all internal phases well away from 0 and pi.
pub const DEFAULT_CHIP_THETA: [f64; 3] = [0.0, 0.4, 2.5];

const STREAM_INTENSITY: u64 = 1;
const STREAM_SETTINGS: u64 = 2;
const STREAM_PLOT_SWEEP: u64 = 3;
const STREAM_SERIES: u64 = 0x1_0000;
const STREAM_PLOT_SERIES: u64 = 0x2_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircuitSpec {
    Haar {
        seed: u64,
    },
    Chip {
        theta: [f64; 3],
    },
    Matrix {
        re: Vec<Vec<f64>>,
        im: Vec<Vec<f64>>,
    },
    MatrixFile {
        path: PathBuf,
    },
}

impl Default for CircuitSpec {
    fn default() -> Self {
        CircuitSpec::Chip {
            theta: DEFAULT_CHIP_THETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sinkhorn,
    Variance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub d1: Option<LossJson>,
    pub d2: Option<LossJson>,
}

/// Pipeline configuration. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n: usize,
    pub circuit: CircuitSpec,
    pub losses: LossConfig,
    pub noise: NoiseModel,
    pub samples_per_series: usize,
    /// Circuit settings per input for the variance method, including the target setting.
    pub settings_count: usize,
    /// Moduli methods; the first one feeds the phase reconstruction.
    pub methods: Vec<Method>,
    pub phases: bool,
    pub refine: bool,
    /// Measure every input pair instead of the minimal schedule.
    pub all_pairs: bool,
    pub tol_sign: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sinkhorn = SinkhornOptions::default();
        Self {
            n: 3,
            circuit: CircuitSpec::default(),
            losses: LossConfig::default(),
            noise: NoiseModel::default(),
            samples_per_series: 10_000,
            settings_count: 50,
            methods: vec![Method::Sinkhorn],
            phases: true,
            refine: true,
            all_pairs: false,
            tol_sign: SolveOptions::default().tol_sign,
            sinkhorn_tol: sinkhorn.tol,
            sinkhorn_max_iter: sinkhorn.max_iter,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 modes, got {n}"
            )));
        }
        if let CircuitSpec::Chip { .. } = self.circuit {
            if n != 3 {
                return Err(Error::InvalidDimension(format!(
                    "the chip has 3 modes, config says {n}"
                )));
            }
        }
        for (name, loss) in [("d1", &self.losses.d1), ("d2", &self.losses.d2)] {
            if let Some(l) = loss {
                if l.modulus.len() != n || !(l.phase.is_empty() || l.phase.len() == n) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must have {n} entries"
                    )));
                }
            }
        }
        self.noise.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one moduli method is required".into(),
            ));
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return Err(Error::InvalidParameter("methods must not repeat".into()));
        }
        if self.methods.contains(&Method::Variance) {
            if !matches!(self.circuit, CircuitSpec::Chip { .. }) {
                return Err(Error::InvalidParameter(
                    "the variance method needs a reconfigurable (chip) circuit".into(),
                ));
            }
            if self.settings_count < self.n.max(2) {
                return Err(Error::InvalidParameter(format!(
                    "settings_count must be at least n = {}",
                    self.n
                )));
            }
        }
        if self.phases && self.samples_per_series < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "samples_per_series must be at least {MIN_SAMPLES} when phases are requested"
            )));
        }
        if !(self.tol_sign >= 0.0) {
            return Err(Error::InvalidParameter(
                "tol_sign must be non-negative".into(),
            ));
        }
        if !(self.sinkhorn_tol > 0.0) || self.sinkhorn_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "sinkhorn_tol must be positive and max_iter non-zero".into(),
            ));
        }
        Ok(())
    }

    pub fn sinkhorn_options(&self) -> SinkhornOptions {
        SinkhornOptions {
            tol: self.sinkhorn_tol,
            max_iter: self.sinkhorn_max_iter,
            ..SinkhornOptions::default()
        }
    }

    fn chip_theta(&self) -> Option<[f64; 3]> {
        match self.circuit {
            CircuitSpec::Chip { theta } => Some(theta),
            _ => None,
        }
    }

    /// The bare unitary of the configured circuit.
    pub fn unitary(&self) -> Result<UnitaryMatrix> {
        let m = match &self.circuit {
            CircuitSpec::Haar { seed } => return haar_random_unitary(self.n, *seed),
            CircuitSpec::Chip { theta } => return Ok(chip_unitary(&ChipConfig { theta: *theta })),
            CircuitSpec::Matrix { re, im } => ComplexMatrixJson {
                re: re.clone(),
                im: im.clone(),
            }
            .to_matrix()?,
            CircuitSpec::MatrixFile { path } => {
                io::read_json::<ComplexMatrixJson>(path)?.to_matrix()?
            }
        };
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: m.nrows(),
            });
        }
        UnitaryMatrix::new(m)
    }

    fn loss(&self, spec: &Option<LossJson>) -> Result<LossDiagonal> {
        match spec {
            None => Ok(LossDiagonal::unit(self.n)),
            Some(l) if l.phase.is_empty() => {
                LossDiagonal::from_polar(&l.modulus, &vec![0.0; self.n])
            }
            Some(l) => LossDiagonal::from_polar(&l.modulus, &l.phase),
        }
    }

    fn transfer(&self, unitary: UnitaryMatrix) -> Result<TransferMatrix> {
        TransferMatrix::new(
            unitary,
            self.loss(&self.losses.d1)?,
            self.loss(&self.losses.d2)?,
        )
    }

    /// Input pairs measured for the phases: `(0, k)` for `k >= 1` and `(1, k)`
    /// for `k >= 2`, or every pair with `all_pairs`.
    pub fn input_pairs(&self) -> Vec<(usize, usize)> {
        if self.all_pairs {
            return all_output_pairs(self.n);
        }
        let first = (1..self.n).map(|k| (0, k));
        let second = (2..self.n).map(|k| (1, k));
        first.chain(second).collect()
    }
}

/// The simulated device.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub transfer: TransferMatrix,
    pub unitary: UnitaryMatrix,
}

impl GroundTruth {
    pub fn document(&self) -> MatrixDocument {
        MatrixDocument {
            p: self.unitary.probabilities(),
            unitary: Some(self.unitary.matrix().clone()),
        }
    }

    pub fn document_json(&self) -> GroundTruthJson {
        GroundTruthJson {
            p: io::rows_of(&self.unitary.probabilities()),
            unitary: ComplexMatrixJson::from_matrix(self.unitary.matrix()),
        }
    }
}

/// Measurements feeding the reconstruction.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub intensity: Option<IntensityMatrix>,
    pub settings: Option<SettingsDataset>,
    pub series: Vec<TwoBeamSeries>,
}

/// Output powers for light in each input over `settings_count` chip settings.
/// The first setting is the configured one; the others are uniform in `[0, 2pi)^3`.
fn simulate_settings(cfg: &PipelineConfig, theta0: [f64; 3], seed: u64) -> Result<SettingsDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise.relative_intensity_sigma)
        .map_err(|e| Error::InvalidParameter(format!("intensity noise: {e}")))?;
    let mut thetas = vec![theta0];
    for _ in 1..cfg.settings_count {
        thetas.push([0.0; 3].map(|_: f64| rng.random::<f64>() * 2.0 * PI));
    }
    let mut dataset = SettingsDataset::default();
    for theta in &thetas {
        let t = cfg
            .transfer(chip_unitary(&ChipConfig { theta: *theta }))?
            .composite();
        for k in 0..cfg.n {
            let intensities = (0..cfg.n)
                .map(|i| (t[(i, k)].norm_sqr() * (1.0 + noise.sample(&mut rng))).max(0.0))
                .collect();
            dataset.inputs.entry(k).or_default().push(SettingRecord {
                theta: theta.to_vec(),
                intensities,
            });
        }
    }
    Ok(dataset)
}

/// Simulates every measurement the configuration asks for.
pub fn simulate_dataset(cfg: &PipelineConfig) -> Result<(GroundTruth, Dataset)> {
    cfg.validate().stage(Stage::Config)?;
    let unitary = cfg.unitary().stage(Stage::Config)?;
    let transfer = cfg.transfer(unitary.clone()).stage(Stage::Config)?;
    let run = || -> Result<Dataset> {
        let mut data = Dataset::default();
        if cfg.methods.contains(&Method::Sinkhorn) {
            data.intensity = Some(intensity_matrix(
                &transfer,
                &cfg.noise,
                derive_seed(cfg.seed, STREAM_INTENSITY),
            )?);
        }
        if cfg.methods.contains(&Method::Variance) {
            let theta0 = cfg.chip_theta().expect("validated chip circuit");
            data.settings = Some(simulate_settings(
                cfg,
                theta0,
                derive_seed(cfg.seed, STREAM_SETTINGS),
            )?);
        }
        if cfg.phases {
            for (h, k) in cfg.input_pairs() {
                let stream = STREAM_SERIES + (h as u64) * 0x100 + k as u64;
                data.series.push(simulate_two_beam(
                    &transfer,
                    h,
                    k,
                    &cfg.noise,
                    cfg.samples_per_series,
                    derive_seed(cfg.seed, stream),
                )?);
            }
        }
        Ok(data)
    };
    let data = run().stage(Stage::Simulate)?;
    Ok((GroundTruth { transfer, unitary }, data))
}

/// Result of one moduli method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModuliResult {
    Sinkhorn(SinkhornJson),
    Variance(VarianceJson),
}

impl ModuliResult {
    /// The reconstructed probability matrix, if square.
    pub fn p(&self) -> Option<DMatrix<f64>> {
        let rows = match self {
            ModuliResult::Sinkhorn(s) => Some(&s.p),
            ModuliResult::Variance(v) => v.p.as_ref(),
        };
        rows.and_then(|r| io::matrix_from_rows(r).ok())
    }
}

pub fn reconstruct_sinkhorn(m: &IntensityMatrix, opts: &SinkhornOptions) -> Result<SinkhornJson> {
    Ok(SinkhornJson::from(&sinkhorn_decompose(m, opts)?))
}

/// Variance-minimization weights from all input groups, and the probability
/// columns of each input's first (target) setting.
pub fn reconstruct_variance(settings: &SettingsDataset) -> Result<VarianceJson> {
    let groups = settings.groups();
    let (alpha, eigenvalue, spectral_gap, input_ratios) = if groups.len() >= 2 {
        let w = multi_input_weights(&groups)?;
        let ratios = w
            .inputs
            .iter()
            .copied()
            .zip(w.input_ratios.iter().copied())
            .collect();
        (
            w.weights.alpha,
            w.weights.eigenvalue,
            w.weights.spectral_gap,
            ratios,
        )
    } else {
        let (&k, measurements) = groups
            .iter()
            .next()
            .ok_or_else(|| Error::InvalidParameter("settings dataset has no inputs".into()))?;
        let w = crate::moduli::variance_weights(measurements, None)?;
        (
            w.alpha,
            w.eigenvalue,
            w.spectral_gap,
            [(k, 1.0)].into_iter().collect(),
        )
    };
    let cols = recover_p_from_weights(&settings.target_columns(), &alpha)?;
    let p = cols.to_square();
    let columns = cols
        .inputs
        .iter()
        .enumerate()
        .map(|(c, &k)| (k, cols.entries.column(c).iter().copied().collect()))
        .collect();
    Ok(VarianceJson {
        method: "variance".into(),
        alpha,
        input_ratios,
        eigenvalue,
        spectral_gap,
        columns,
        residual: p.as_ref().map(stochastic_residual),
        p: p.as_ref().map(io::rows_of),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    pub tol_sign: f64,
    pub refine: bool,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            tol_sign: SolveOptions::default().tol_sign,
            refine: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub correlations: CorrelationSet,
    pub solution: PhaseSolution,
    pub refine_converged: Option<bool>,
    pub unitary: CanonicalUnitary,
}

/// Estimates correlations from the series, solves (and optionally refines)
/// the phases and assembles the canonical unitary. Output pairs whose
/// interference term vanishes according to `p` are skipped.
pub fn reconstruct_phases(
    series: &[TwoBeamSeries],
    p: &DMatrix<f64>,
    opts: &PhaseOptions,
) -> Result<PhaseOutcome> {
    let n = p.nrows();
    let mut correlations = CorrelationSet::new();
    for s in series {
        if s.n_outputs() != n || s.h >= n || s.k >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.n_outputs(),
            });
        }
        let pairs: Vec<_> = all_output_pairs(n)
            .into_iter()
            .filter(|&(i, j)| {
                [(i, s.h), (i, s.k), (j, s.h), (j, s.k)]
                    .iter()
                    .all(|&rc| !vanishing_probability(p[rc]))
            })
            .collect();
        correlations.extend(estimate_correlations(s, &pairs)?);
    }
    let mut solution = solve_phases(
        &correlations,
        p,
        &SolveOptions {
            tol_sign: opts.tol_sign,
        },
    )?;
    let mut refine_converged = None;
    if opts.refine && n >= 2 {
        let out = refine_phases(&solution, &correlations, &RefineOptions::default())?;
        solution = out.solution;
        refine_converged = Some(out.converged);
    }
    let unitary = assemble_unitary(p, &solution)?;
    Ok(PhaseOutcome {
        correlations,
        solution,
        refine_converged,
        unitary,
    })
}

/// Fidelities and phase deviation between two reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub fidelity_probability: f64,
    /// Per-column `|<u_k|v_k>|^2` of the canonical representatives.
    pub column_fidelity: Option<Vec<f64>>,
    /// Largest wrapped phase difference over elements non-zero in both.
    pub max_phase_deviation: Option<f64>,
    pub chi2_a: Option<f64>,
    pub chi2_b: Option<f64>,
}

pub fn compare(
    a: &MatrixDocument,
    b: &MatrixDocument,
    correlations: Option<&CorrelationSet>,
) -> Result<Comparison> {
    let n = a.p.nrows();
    if a.p.shape() != b.p.shape() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.p.nrows(),
        });
    }
    let fidelity = fidelity_probability(&a.p, &b.p)?;
    let canon = |d: &MatrixDocument| d.unitary.as_ref().and_then(|u| canonicalize(u).ok());
    let (ca, cb) = (canon(a), canon(b));
    let mut column_fidelity = None;
    let mut max_phase_deviation = None;
    if let (Some(ua), Some(ub)) = (&ca, &cb) {
        if ua.n() != ub.n() {
            return Err(Error::DimensionMismatch {
                expected: ua.n(),
                found: ub.n(),
            });
        }
        column_fidelity = Some(
            (0..n)
                .map(|k| fidelity_column(&ua.column(k), &ub.column(k)))
                .collect::<Result<Vec<_>>>()?,
        );
        let (ea, eb) = (ua.entries(), ub.entries());
        let mut dev = 0.0f64;
        for (za, zb) in ea.iter().zip(eb.iter()) {
            if za.norm() > ZERO_MODULUS_EPS && zb.norm() > ZERO_MODULUS_EPS {
                dev = dev.max(wrap_phase(za.arg() - zb.arg()).abs());
            }
        }
        max_phase_deviation = Some(dev);
    }
    let chi2 = |c: &Option<CanonicalUnitary>| -> Option<f64> {
        Some(reduced_chi2(&c.as_ref()?.phases(), correlations?))
    };
    Ok(Comparison {
        n,
        fidelity_probability: fidelity,
        column_fidelity,
        max_phase_deviation,
        chi2_a: chi2(&ca),
        chi2_b: chi2(&cb),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthJson {
    pub p: Vec<Vec<f64>>,
    pub unitary: ComplexMatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub n: usize,
    pub seed: u64,
    /// One entry per configured method, in configuration order.
    pub moduli: Vec<ModuliResult>,
    /// Probability matrix of the first method.
    pub p: Vec<Vec<f64>>,
    pub d1: Option<Vec<f64>>,
    pub d2: Option<Vec<f64>>,
    pub unitary: Option<CanonicalUnitaryJson>,
    pub phases: Option<PhaseSolutionJson>,
    pub refine_converged: Option<bool>,
    pub chi2: Option<f64>,
    pub unitarity_residual: Option<f64>,
    /// Against ground truth.
    pub fidelity_probability: Option<f64>,
    pub column_fidelity: Option<Vec<f64>>,
    pub max_phase_deviation: Option<f64>,
    /// Between the first two methods, when both produce a full matrix.
    pub cross_method_fidelity: Option<f64>,
    pub ground_truth: Option<GroundTruthJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl ReconstructionReport {
    pub fn document(&self) -> Result<MatrixDocument> {
        Ok(MatrixDocument {
            p: io::matrix_from_rows(&self.p)?,
            unitary: self
                .unitary
                .as_ref()
                .map(|u| {
                    ComplexMatrixJson {
                        re: u.re.clone(),
                        im: u.im.clone(),
                    }
                    .to_matrix()
                })
                .transpose()?,
        })
    }
}

/// Reconstructs from a dataset and compares against `truth` when given.
pub fn reconstruct(
    cfg: &PipelineConfig,
    data: &Dataset,
    truth: Option<&GroundTruth>,
) -> Result<ReconstructionReport> {
    cfg.validate().stage(Stage::Config)?;
    let mut moduli = Vec::new();
    for method in &cfg.methods {
        let result = match method {
            Method::Sinkhorn => {
                let m = data
                    .intensity
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("no intensity matrix in dataset".into()))
                    .stage(Stage::Moduli)?;
                ModuliResult::Sinkhorn(
                    reconstruct_sinkhorn(m, &cfg.sinkhorn_options()).stage(Stage::Moduli)?,
                )
            }
            Method::Variance => {
                let s = data
                    .settings
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("no settings in dataset".into()))
                    .stage(Stage::Moduli)?;
                ModuliResult::Variance(reconstruct_variance(s).stage(Stage::Moduli)?)
            }
        };
        moduli.push(result);
    }
    let p = moduli[0]
        .p()
        .ok_or_else(|| Error::InvalidParameter("first method did not produce a full matrix".into()))
        .stage(Stage::Moduli)?;
    let (d1, d2) = match &moduli[0] {
        ModuliResult::Sinkhorn(s) => (Some(s.d1.clone()), Some(s.d2.clone())),
        ModuliResult::Variance(_) => (None, None),
    };
    let cross_method_fidelity = match (
        moduli.first().and_then(ModuliResult::p),
        moduli.get(1).and_then(ModuliResult::p),
    ) {
        (Some(a), Some(b)) => Some(fidelity_probability(&a, &b).stage(Stage::Compare)?),
        _ => None,
    };

    let phases = if cfg.phases {
        let opts = PhaseOptions {
            tol_sign: cfg.tol_sign,
            refine: cfg.refine,
        };
        Some(reconstruct_phases(&data.series, &p, &opts).stage(Stage::Phases)?)
    } else {
        None
    };

    let recovered = MatrixDocument {
        p: p.clone(),
        unitary: phases.as_ref().map(|ph| ph.unitary.entries().clone()),
    };
    let comparison = truth
        .map(|t| {
            compare(
                &recovered,
                &t.document(),
                phases.as_ref().map(|ph| &ph.correlations),
            )
        })
        .transpose()
        .stage(Stage::Compare)?;

    Ok(ReconstructionReport {
        n: cfg.n,
        seed: cfg.seed,
        p: io::rows_of(&p),
        d1,
        d2,
        unitary: phases
            .as_ref()
            .map(|ph| CanonicalUnitaryJson::from(&ph.unitary)),
        phases: phases
            .as_ref()
            .map(|ph| PhaseSolutionJson::from(&ph.solution)),
        refine_converged: phases.as_ref().and_then(|ph| ph.refine_converged),
        chi2: phases.as_ref().map(|ph| ph.solution.chi2),
        unitarity_residual: phases.as_ref().map(|ph| ph.unitary.unitarity_residual()),
        fidelity_probability: comparison.as_ref().map(|c| c.fidelity_probability),
        column_fidelity: comparison.as_ref().and_then(|c| c.column_fidelity.clone()),
        max_phase_deviation: comparison.as_ref().and_then(|c| c.max_phase_deviation),
        cross_method_fidelity,
        ground_truth: truth.map(GroundTruth::document_json),
        moduli,
        timing_ms: None,
    })
}

/// Simulate, reconstruct and compare against ground truth. Deterministic per seed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ReconstructionReport> {
    let (truth, data) = simulate_dataset(cfg)?;
    reconstruct(cfg, &data, Some(&truth))
}

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Data behind the intensity-sweep, reweighted-sum and correlation-vs-setting plots.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// `theta1, I_0..I_{n-1}, sum` for light in input 0.
    pub intensity_sweep: Table,
    /// `theta1, alpha_j I_j..., weighted_sum` with variance-method weights.
    pub reweighted_sweep: Table,
    /// `theta1, i, j, c, stderr, closed_form` for inputs `(0, 1)`.
    pub correlation_sweep: Table,
}

/// Sweeps `theta1` over `points` equally spaced values in `[0, 2pi)` with the
/// other heaters at their configured values. Requires the chip circuit.
pub fn plot_data(cfg: &PipelineConfig, points: usize) -> Result<PlotData> {
    cfg.validate().stage(Stage::Config)?;
    let theta0 = cfg
        .chip_theta()
        .ok_or_else(|| Error::InvalidParameter("plot data needs the chip circuit".into()))
        .stage(Stage::Config)?;
    if points == 0 {
        return Err(Error::InvalidParameter("need at least one point".into())).stage(Stage::Config);
    }
    let build = || -> Result<PlotData> {
        let n = cfg.n;
        let thetas: Vec<[f64; 3]> = (0..points)
            .map(|p| [theta0[0], 2.0 * PI * p as f64 / points as f64, theta0[2]])
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PLOT_SWEEP));
        let noise = Normal::new(0.0, cfg.noise.relative_intensity_sigma)
            .map_err(|e| Error::InvalidParameter(format!("intensity noise: {e}")))?;
        let mut sweep = Vec::with_capacity(points);
        for theta in &thetas {
            let t = cfg
                .transfer(chip_unitary(&ChipConfig { theta: *theta }))?
                .composite();
            let row: Vec<f64> = (0..n)
                .map(|i| (t[(i, 0)].norm_sqr() * (1.0 + noise.sample(&mut rng))).max(0.0))
                .collect();
            sweep.push(row);
        }

        let settings = simulate_settings(cfg, theta0, derive_seed(cfg.seed, STREAM_SETTINGS))?;
        let alpha = reconstruct_variance(&settings)?.alpha;

        let mut header: Vec<String> = vec!["theta1".into()];
        header.extend((0..n).map(|i| format!("I_{i}")));
        header.push("sum".into());
        let intensity_sweep = Table {
            header,
            rows: thetas
                .iter()
                .zip(&sweep)
                .map(|(th, row)| {
                    let mut r = vec![th[1]];
                    r.extend(row);
                    r.push(row.iter().sum());
                    r
                })
                .collect(),
        };

        let mut header: Vec<String> = vec!["theta1".into()];
        header.extend((0..n).map(|i| format!("aI_{i}")));
        header.push("weighted_sum".into());
        let reweighted_sweep = Table {
            header,
            rows: thetas
                .iter()
                .zip(&sweep)
                .map(|(th, row)| {
                    let weighted: Vec<f64> = row.iter().zip(&alpha).map(|(a, b)| a * b).collect();
                    let mut r = vec![th[1]];
                    r.extend(&weighted);
                    r.push(weighted.iter().sum());
                    r
                })
                .collect(),
        };

        let mut rows = Vec::new();
        for (idx, theta) in thetas.iter().enumerate() {
            let u = chip_unitary(&ChipConfig { theta: *theta });
            let t = cfg.transfer(u.clone())?;
            let seed = derive_seed(cfg.seed, STREAM_PLOT_SERIES + idx as u64);
            let series = simulate_two_beam(&t, 0, 1, &cfg.noise, cfg.samples_per_series, seed)?;
            let pairs = all_output_pairs(n);
            let set = estimate_correlations(&series, &pairs)?;
            for (i, j) in pairs {
                let e = set.get(0, 1, i, j).expect("estimated pair");
                let exact = bunching_normalized_t(u.matrix(), 0, 1, i, j)?;
                rows.push(vec![theta[1], i as f64, j as f64, e.c, e.stderr, exact]);
            }
        }
        let correlation_sweep = Table {
            header: ["theta1", "i", "j", "c", "stderr", "closed_form"]
                .map(String::from)
                .to_vec(),
            rows,
        };
        Ok(PlotData {
            intensity_sweep,
            reweighted_sweep,
            correlation_sweep,
        })
    };
    build().stage(Stage::PlotData)
}

/// `sum ((c - closed_form) / stderr)^2 / rows` over a correlation sweep table.
pub fn correlation_sweep_chi2(table: &Table) -> f64 {
    let terms: Vec<f64> = table
        .rows
        .iter()
        .map(|r| ((r[3] - r[5]) / r[4].max(1e-12)).powi(2))
        .collect();
    terms.iter().sum::<f64>() / terms.len().max(1) as f64
}

/// Complex matrix helper for callers building explicit circuits.
pub fn circuit_from_matrix(m: &DMatrix<C64>) -> CircuitSpec {
    let json = ComplexMatrixJson::from_matrix(m);
    CircuitSpec::Matrix {
        re: json.re,
        im: json.im,
    }
}
