//! Command implementations behind the `rgb2point` binary.

pub mod commands;
pub mod config;
pub mod report;

use rgb2point::Error;

/// Process exit status for a failed command: 2 for configuration and usage
/// problems, 3 for missing or unreadable inputs, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::UnknownStrategy { .. }
        | Error::NonpositiveThreshold(_)
        | Error::ResolutionMismatch { .. }
        | Error::BackboneMismatch { .. } => 2,
        Error::FileMissing(_)
        | Error::MissingFile { .. }
        | Error::MissingPretrainedWeights(_)
        | Error::UnreadableImage { .. }
        | Error::CorruptArchive { .. }
        | Error::VersionMismatch { .. }
        | Error::MalformedRecord { .. } => 3,
        _ => 1,
    }
}
