use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("not a multi-well: found {found} minima with positive curvature")]
    NotMultiWell { found: usize },
    #[error("not same-level: well bottoms differ by {spread:.3e} (allowed {allowed:.3e})")]
    NotSameLevel { spread: f64, allowed: f64 },
    #[error("wells not same-level / potential dips below zero near x = {x}")]
    PotentialDipsBelowZero { x: f64 },
    #[error("window too large for float range: {0}")]
    WindowTooLarge(String),
    #[error("window not asymptotic: fit residual {residual:.3e}")]
    WindowNotAsymptotic { residual: f64 },
    #[error("negative eigenvalue present: not a 1-instanton operator (sign change at tau = {tau})")]
    NegativeMode { tau: f64 },
    #[error("zero-mode sign inconsistency: {0}")]
    ZeroModeSign(String),
    #[error("mixed amplitude signs: nodeless assumption violated")]
    MixedAmplitudeSigns,
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
    #[error("K-factor forms disagree by {relative:.3e}: upstream amplitude error")]
    KayFormsDisagree { relative: f64 },
    #[error("resolvent pole at E = {energy}")]
    ResolventPole { energy: f64 },
    #[error("grid too narrow: edge amplitude {edge:.3e} for level {level}")]
    GridTooNarrow { level: usize, edge: f64 },
    #[error("grid too coarse: Richardson estimate {estimate:.3e} for level {level}")]
    GridTooCoarse { level: usize, estimate: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NotMultiWell { .. } => "not_multi_well",
            Error::NotSameLevel { .. } => "not_same_level",
            Error::PotentialDipsBelowZero { .. } => "potential_dips_below_zero",
            Error::WindowTooLarge(_) => "window_too_large",
            Error::WindowNotAsymptotic { .. } => "window_not_asymptotic",
            Error::NegativeMode { .. } => "negative_mode",
            Error::ZeroModeSign(_) => "zero_mode_sign",
            Error::MixedAmplitudeSigns => "mixed_amplitude_signs",
            Error::Inconsistent(_) => "inconsistent_inputs",
            Error::KayFormsDisagree { .. } => "kay_forms_disagree",
            Error::ResolventPole { .. } => "resolvent_pole",
            Error::GridTooNarrow { .. } => "grid_too_narrow",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::NoConvergence(_) => "no_convergence",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
