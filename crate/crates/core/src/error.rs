use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("clamp K = {k} must exceed the flux slope at zero ({slope_at_zero})")]
    InvalidClamp { k: f64, slope_at_zero: f64 },

    #[error("singular tridiagonal system (zero pivot at row {row})")]
    SingularSystem { row: usize },

    #[error("step matrix is not an M-matrix: {0}")]
    NotMMatrix(String),

    #[error("Newton iteration failed at t = {t} after dt halvings")]
    NewtonFailed { t: f64 },

    #[error("blow-up verdict inconclusive: t* estimates {estimates:?} do not stabilize")]
    Inconclusive { estimates: Vec<f64> },

    #[error("need at least {needed} samples in the fit window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("K-schedule is not Cauchy: gaps {gaps:?}")]
    ScheduleNotCauchy { gaps: Vec<Vec<f64>> },

    #[error("equilibrium Newton iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("trajectory did not settle before T = {t_max} (last change rate {rate:e})")]
    NotSettled { t_max: f64, rate: f64 },

    #[error("unexpected blow-up at t = {t}")]
    UnexpectedBlowup { t: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
