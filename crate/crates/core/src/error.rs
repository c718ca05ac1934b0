use thiserror::Error;

/// Errors raised by parameter validation, the solvers and the closed-form routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GemError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("far-detuned regime violated: |omega_rabi / delta| = {ratio:.3} exceeds 0.1")]
    NotFarDetuned { ratio: f64 },

    #[error("gradient required for write phase")]
    ZeroWriteGradient,

    #[error("write correction factor singular (denominator {denominator:.3e})")]
    WriteCorrectionSingular { denominator: f64 },

    #[error("alpha prefactor singular (argument {argument:.3e})")]
    AlphaPrefactorSingular { argument: f64 },

    #[error("phase formula singular: eta*L*t_in + beta = {value:.3e}")]
    PhaseSingular { value: f64 },

    #[error("closed form requires the (0,0) mode, got ({m},{n}); use hg_efficiency")]
    NonGaussianMode { m: u32, n: u32 },

    #[error("quadrature did not converge on [{a:.3e}, {b:.3e}]: estimate {estimate:.6e}, error {error:.3e} after {intervals} intervals")]
    QuadratureFailed {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    #[error("spin wave reached the guard band during the {phase} phase (relative amplitude {relative:.2e})")]
    GuardBand { phase: &'static str, relative: f64 },

    #[error("input pulse has zero norm")]
    ZeroInputNorm,

    #[error("no spectrum frames recorded")]
    EmptyFrames,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("inhomogeneous control field: use the real-space solver")]
    InhomogeneousControl,

    #[error("grid: {0}")]
    Grid(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, GemError>;
