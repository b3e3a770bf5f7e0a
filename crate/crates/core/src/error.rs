use thiserror::Error;

/// Errors produced by the characterization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not unitary (max |U^H U - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("cannot canonicalize: entry ({row}, {col}) has modulus {modulus:e}, below the zero threshold")]
    CannotCanonicalize {
        row: usize,
        col: usize,
        modulus: f64,
    },

    #[error("column {column} sums to {sum}, expected 1")]
    NotColumnNormalized { column: usize, sum: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid indices: {0}")]
    InvalidIndices(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("visibility undefined: distinguishable coincidence probability is zero")]
    UndefinedVisibility,

    #[error("vanishing modulus |U[{row},{col}]| = {modulus:e}")]
    VanishingModulus {
        row: usize,
        col: usize,
        modulus: f64,
    },

    #[error("correlation undefined for inputs ({h},{k}) outputs ({i},{j}): output {output} shows no intensity fluctuation")]
    UndefinedCorrelation {
        h: usize,
        k: usize,
        i: usize,
        j: usize,
        output: usize,
    },

    #[error(
        "matrix is not scalable to doubly stochastic form: {reason}; structural zeros at {zeros:?}"
    )]
    Infeasible {
        reason: String,
        zeros: Vec<(usize, usize)>,
    },

    #[error("matrix scaling did not converge after {iterations} iterations (residual {residual:e}); structural zeros at {zeros:?}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        zeros: Vec<(usize, usize)>,
    },

    #[error("ambiguous solution: smallest eigenvalues of Q are separated by only {gap:e}; measure more settings")]
    AmbiguousSolution { gap: f64 },

    #[error("infeasible data: weight {index} is {value} after sign fixing")]
    InfeasibleWeights { index: usize, value: f64 },

    #[error("column {column} vanishes after reweighting")]
    ZeroColumn { column: usize },

    #[error("incomplete correlation data, missing (h,k,i,j): {missing:?}")]
    IncompleteData {
        missing: Vec<(usize, usize, usize, usize)>,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage an error originated in. Each stage has its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Moduli,
    Phases,
    Compare,
    PlotData,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Simulate => 10,
            Stage::Moduli => 11,
            Stage::Phases => 12,
            Stage::Compare => 13,
            Stage::PlotData => 14,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Moduli => "moduli",
            Stage::Phases => "phases",
            Stage::Compare => "compare",
            Stage::PlotData => "plot-data",
        };
        f.write_str(name)
    }
}

/// Attaches a stage label to errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
