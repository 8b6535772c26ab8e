use thiserror::Error;

/// Errors raised by the numeric core, the networks and the training loop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged: non-finite value in {what} (layer {layer})")]
    Diverged { what: &'static str, layer: usize },
    #[error("replay buffer is empty")]
    NotReady,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
