//! Error kinds that pick the process exit code.

use thiserror::Error;

/// Bad invocation or configuration: exit code 1.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A verification check failed: exit code 3.
#[derive(Debug, Error)]
#[error("verification failed: {0}")]
pub struct VerificationFailed(pub String);

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

/// Maps an error chain to the documented exit code. Anything not
/// recognized as a usage or verification problem counts as a data error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return EXIT_USAGE;
        }
        if cause.is::<VerificationFailed>() {
            return EXIT_VERIFY;
        }
        if let Some(e) = cause.downcast_ref::<costfolio::Error>() {
            return match e {
                costfolio::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}
