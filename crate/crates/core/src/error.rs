use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GedgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GedgError {
    /// Invalid parameters: cutoffs, cell counts, tolerances.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite or out-of-domain arguments to a kernel or envelope.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data that cannot be used (non-finite quadrature, malformed tables).
    #[error("data error: {0}")]
    Data(String),

    /// A caller broke an API contract (mismatched grids, zero-rate sampling).
    #[error("logic error: {0}")]
    Logic(String),

    #[error("stiffness: {rejections} consecutive step rejections at t = {t:e} (last dt = {dt:e}); {dump}")]
    Stiffness {
        t: f64,
        dt: f64,
        rejections: usize,
        dump: String,
    },

    #[error("conservation breach at t = {t:e}: {quantity} drifted by {relative_drift:e} (tolerance {tolerance:e})")]
    ConservationBreach {
        t: f64,
        quantity: &'static str,
        relative_drift: f64,
        tolerance: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GedgError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GedgError::Io {
            path: path.into(),
            source,
        }
    }

    /// Runtime aborts (as opposed to bad input) are reported with a distinct exit code.
    pub fn is_runtime_abort(&self) -> bool {
        matches!(
            self,
            GedgError::Stiffness { .. } | GedgError::ConservationBreach { .. }
        )
    }
}
