use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("incompatible domains: operands are sampled on different grids")]
    IncompatibleGrids,

    #[error("point {x} lies outside the grid [{x_min}, {x_max}]")]
    OutsideGrid { x: f64, x_min: f64, x_max: f64 },

    #[error("function is +inf everywhere")]
    AllInfinite,

    #[error("min-plus combination needs at least one term")]
    EmptyCombination,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("focal point (caustic) of the harmonic potential at t = {times:?}: the extremal path is not unique")]
    Caustic { times: Vec<f64> },

    #[error("shooting did not converge after {iterations} Newton iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{clamped} of {total} particles left the grid; enlarge the grid")]
    ParticlesEscaped { clamped: usize, total: usize },

    #[error("{count} of {total} particles entered regions where the density is below threshold; lower eps_rho or refine the grid")]
    ParticlesMasked { count: usize, total: usize },

    #[error("grid too small: need [{need_min}, {need_max}] inside [{x_min}, {x_max}]")]
    GridTooSmall {
        need_min: f64,
        need_max: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("spectral tail mass {mass:e} exceeds 1e-10; use a finer grid")]
    SpectralTail { mass: f64 },

    #[error("density is below threshold everywhere")]
    EmptyMask,

    #[error("at hbar = {hbar}: {source}")]
    AtHbar { hbar: f64, source: Box<Error> },
}
