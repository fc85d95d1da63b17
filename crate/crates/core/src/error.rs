use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integrand is not finite at facet {index} (centroid {centroid:?})")]
    NonFiniteIntegrand { index: usize, centroid: [f64; 3] },

    #[error("quadrature did not converge after {cells} cells (estimate {estimate:e}, tolerance {tol:e}); worst cell near {location:?}")]
    Quadrature {
        cells: usize,
        estimate: f64,
        tol: f64,
        location: [f64; 3],
    },

    #[error("fixed-point solver failed at {point:?} after {iterations} iterations (residual {residual:e})")]
    Solver {
        point: [f64; 3],
        iterations: usize,
        residual: f64,
    },

    #[error("ill-conditioned implicit gradient at {point:?}: 1 - dG/dtau = {denominator}")]
    Conditioning { point: [f64; 3], denominator: f64 },

    #[error("atom at {point:?} lies {distance:e} from the boundary of a sampled set; membership cannot be decided, use a descriptor with an exact boundary")]
    AmbiguousAtom { point: [f64; 3], distance: f64 },

    #[error("only {good} good epsilon values in the schedule, at least 2 are required")]
    InsufficientSchedule { good: usize },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("the shell {{0 < d < {eps}}} is empty")]
    EmptyShell { eps: f64 },

    #[error("face {axis}={coordinate} passes through the singular locus at {point:?}")]
    SingularFace {
        axis: usize,
        coordinate: f64,
        point: [f64; 3],
    },

    #[error("flux evaluation failed at s = {bad_s:?}")]
    FaceFailures { bad_s: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
