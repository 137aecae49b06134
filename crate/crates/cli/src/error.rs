use genscl::data::DataError;
use genscl::loss::LossError;
use genscl::model::ModelError;
use genscl::trainer::TrainError;
use std::fmt;
use std::path::Path;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }

    pub fn property(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PROPERTY,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Input files must exist before any work starts.
pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", path.display())))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Shape(_) | DataError::BatchTooLarge { .. } => CliError::usage(e.to_string()),
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_)
            | ModelError::BadMagic(_)
            | ModelError::UnsupportedVersion(_)
            | ModelError::Truncated
            | ModelError::Checkpoint(_)
            | ModelError::ParamCount { .. } => CliError::io(e.to_string()),
            ModelError::NonFinite | ModelError::DegenerateProjection | ModelError::Numerics(_) => {
                CliError::numeric(e.to_string())
            }
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Numerics(_) => CliError::numeric(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::usage(m),
            TrainError::Diverged { ref last_record, .. } => {
                let last = match last_record {
                    Some(r) => format!("; last complete epoch: {}", r.csv_row()),
                    None => "; no epoch completed".to_string(),
                };
                CliError::numeric(format!("{e}{last}"))
            }
            TrainError::Data(d) => d.into(),
            TrainError::Model(m) => m.into(),
            TrainError::Loss(l) => l.into(),
            TrainError::Mix(m) => CliError::usage(m.to_string()),
            TrainError::Numerics(n) => CliError::numeric(n.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}
