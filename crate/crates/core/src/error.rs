use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two tables or models disagree on a dimension.
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A model, policy or grid violates its construction invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// An operation argument is out of its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Estimation was attempted on a dataset without any steps.
    #[error("cannot estimate from an empty dataset")]
    EmptyDataset,
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
