use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("kinematic error: hip-to-foot distance {distance:.6} m outside ({min:.6}, {max:.6})")]
    Kinematic { distance: f64, min: f64, max: f64 },

    #[error("singular leg configuration (|det J| = {det:e})")]
    Singular { det: f64 },

    #[error("point ({0:.4}, {1:.4}) deg lies outside the sampled grid")]
    Domain(f64, f64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
