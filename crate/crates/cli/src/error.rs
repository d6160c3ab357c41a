//! Failures the driver distinguishes, and their exit codes.

use laqg_anneval::AnnevalError;
use laqg_core::ModelError;
use laqg_data::DataError;
use laqg_metrics::MetricError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    /// Upstream artifacts disagree with each other or with their manifests.
    #[error("refusing to continue: {0}")]
    Mismatch(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

pub fn data(msg: impl Into<String>) -> anyhow::Error {
    CliError::Data(msg.into()).into()
}

pub fn mismatch(msg: impl Into<String>) -> anyhow::Error {
    CliError::Mismatch(msg.into()).into()
}

/// Exit code for an error: the first classifiable cause in the chain wins;
/// anything unrecognised is internal.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) | CliError::Mismatch(_) => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return match e {
                ModelError::Config(_) => EXIT_USAGE,
                ModelError::Data(_) | ModelError::Checkpoint(_) => EXIT_DATA,
                _ => EXIT_INTERNAL,
            };
        }
        if cause.is::<DataError>() || cause.is::<MetricError>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<AnnevalError>() {
            return match e {
                AnnevalError::Io(_) => EXIT_INTERNAL,
                _ => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData => EXIT_DATA,
                _ => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INTERNAL
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_cause() {
        assert_eq!(exit_code(&usage("x")), EXIT_USAGE);
        assert_eq!(exit_code(&mismatch("vocab")), EXIT_DATA);
        let e = Err::<(), _>(ModelError::Config("heads".into())).context("building").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
        let e = Err::<(), _>(DataError::Malformed("line 3".into())).context("reading").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("boom")), EXIT_INTERNAL);
    }
}
