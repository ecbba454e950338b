use regio_forecast_core::knn::KnnError;
use regio_forecast_core::mtl::{ArtifactError, MtlError};
use regio_forecast_core::ppe::PpeError;
use regio_forecast_core::synth::SynthError;
use regio_forecast_core::IngestError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config file.
    #[error("config error: {0}")]
    Config(String),
    /// Missing or malformed input data, or data the pipeline cannot use.
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MtlError> for CliError {
    fn from(e: MtlError) -> Self {
        match e {
            MtlError::NegativeWeight(_) | MtlError::Knn(KnnError::ZeroK) => CliError::Config(e.to_string()),
            MtlError::Knn(KnnError::DimensionMismatch { .. }) | MtlError::CaseStudyLeak(_) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PpeError> for CliError {
    fn from(e: PpeError) -> Self {
        match e {
            PpeError::InvalidCapacity(_) => CliError::Config(e.to_string()),
            PpeError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}
