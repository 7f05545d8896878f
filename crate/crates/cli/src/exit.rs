//! Exit codes: 0 success, 2 usage or configuration, 3 numerical failure,
//! 4 I/O failure.

use mri_uq::model::TrainError;
use mri_uq::Error;

pub const USAGE: i32 = 2;
pub const NUMERICAL: i32 = 3;
pub const IO: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            error: anyhow::anyhow!(message.into()),
        }
    }

    pub fn io(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: IO,
            error: error.into(),
        }
    }

    pub fn context(mut self, context: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(context);
        self
    }
}

pub fn code_of(error: &Error) -> i32 {
    match error {
        Error::NonFinite(_) | Error::NonFiniteLoss(_) => NUMERICAL,
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) | Error::Csv(_) => IO,
        _ => USAGE,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            code: code_of(&error),
            error: error.into(),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(error: TrainError) -> Self {
        match error {
            TrainError::Invalid(e) => e.into(),
            e @ TrainError::Diverged { .. } => Self {
                code: NUMERICAL,
                error: e.into(),
            },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(error: std::io::Error) -> Self {
        Self::io(error)
    }
}
