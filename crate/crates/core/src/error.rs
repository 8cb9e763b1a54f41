use thiserror::Error;

/// Errors raised by the solvers, the verification harness and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not positive definite at grid point {point} (smallest eigenvalue {eigenvalue:e})")]
    NonSpdMetric { point: usize, eigenvalue: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("kernel tables were built for different metrics, grids or source times")]
    MetricMismatch,

    #[error("point at distance {distance:e} from the target left the tubular neighbourhood (radius {radius:e})")]
    OutsideTube { distance: f64, radius: f64 },

    #[error("point is off the target manifold (distance {distance:e})")]
    OffManifold { distance: f64 },

    #[error("chart singularity at polar angle {theta:e}; rotate the chart")]
    ChartSingularity { theta: f64 },

    #[error("time step {dt:e} at t = {t} exceeds the stability limit {limit:e}")]
    UnstableStep { t: f64, dt: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Picard iteration did not converge after {iterations} sweeps (last difference {last_difference:e})")]
    NoConvergence { iterations: usize, last_difference: f64 },

    #[error("candidate is not a supersolution at point {point}, t = {time}: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotASupersolution {
        point: usize,
        time: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("cutoff parameter chi = {0} must lie in (0, 1/8)")]
    InvalidChi(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("scenario `{scenario}` failed: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
