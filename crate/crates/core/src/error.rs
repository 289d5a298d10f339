use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({0}, {1}) lies outside the computational domain")]
    OutsideDomain(f64, f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported Hölder order m = {0} (at most 3)")]
    UnsupportedOrder(usize),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("trajectory from ({x0}, {y0}) left the domain by {overshoot:.3e} at t = {t:.4}")]
    FlowBlowup {
        x0: f64,
        y0: f64,
        t: f64,
        overshoot: f64,
    },

    #[error("flush violation: {0}")]
    FlushViolation(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("Neumann compatibility defect {defect:.3e} exceeds {limit:.3e}")]
    Compatibility { defect: f64, limit: f64 },

    #[error("terminal cancellation failed: {what} = {value:.3e} exceeds {limit:.3e}")]
    Cancellation {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("no contraction: ratio >= 1 for 3 consecutive iterates (last ratios {ratios:?}); increase k, then decrease the data norm")]
    NoContraction { ratios: Vec<f64> },

    #[error("iteration did not reach tolerance {tol:.1e} within {max_iter} iterates (last distance {last:.3e})")]
    NotConverged { tol: f64, max_iter: usize, last: f64 },

    #[error("linear solver stalled after {iters} iterations (relative residual {residual:.3e})")]
    SolverStalled { iters: usize, residual: f64 },

    #[error("data not admitted after {halvings} halvings of eps (smallest eps {eps:.3e}, scaled data norm {data_norm:.3e}, threshold {delta:.3e}): {cause}")]
    NotAdmitted {
        halvings: usize,
        eps: f64,
        data_norm: f64,
        delta: f64,
        cause: String,
    },

    #[error("data rejected: {0}")]
    DataRejected(String),

    #[error("snapshot format error in {path:?}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
