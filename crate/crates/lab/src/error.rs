use std::path::{Path, PathBuf};

use roadlab_core::datalog::LogError;
use roadlab_core::metrics::MetricError;
use roadlab_core::numerics::tnsr::FormatError;
use roadlab_core::pilotnet::NetError;
use roadlab_core::preprocess::PreprocError;
use roadlab_core::simulator::SimError;
use roadlab_core::study::StudyError;
use roadlab_core::trainer::TrainError;

/// Every failure the tool reports, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl std::fmt::Display) -> Self {
        LabError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) => 1,
            LabError::Io { .. } | LabError::Format { .. } | LabError::Data(_) => 2,
            LabError::Numeric(_) => 3,
        }
    }
}

impl From<SimError> for LabError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFinite | SimError::PolicyFault { .. } => LabError::Numeric(e.to_string()),
            SimError::Config(_) => LabError::Usage(e.to_string()),
            _ => LabError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for LabError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => LabError::Numeric(e.to_string()),
            TrainError::Config(_) => LabError::Usage(e.to_string()),
            _ => LabError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for LabError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Degenerate(_) => LabError::Numeric(e.to_string()),
            _ => LabError::Data(e.to_string()),
        }
    }
}

impl From<StudyError> for LabError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Sim(e) => e.into(),
            StudyError::Train(e) => e.into(),
            StudyError::Metric(e) => e.into(),
            StudyError::Config(m) => LabError::Usage(m),
            other => LabError::Data(other.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for LabError {
            fn from(e: $t) -> Self {
                LabError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(LogError, NetError, PreprocError, FormatError);
