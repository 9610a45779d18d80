use thiserror::Error;

use crate::datasets::DatasetError;
use crate::eval::EvalError;
use crate::fdct::FdctError;
use crate::features::FeatureError;
use crate::image_io::ImageError;
use crate::robust_stats::StatsError;
use crate::svm::SvmError;
use crate::two_stage::ProtocolError;

/// Crate-wide error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Fdct(#[from] FdctError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
