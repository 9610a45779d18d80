//! Process exit codes and the mapping from library errors onto them.

use std::fmt;
use std::process::ExitCode;

use curviqa::datasets::DatasetError;
use curviqa::eval::EvalError;
use curviqa::fdct::FdctError;
use curviqa::features::FeatureError;
use curviqa::image_io::ImageError;
use curviqa::svm::SvmError;
use curviqa::two_stage::ProtocolError;

pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const NO_INPUTS: u8 = 3;
pub const IO: u8 = 4;
pub const DATA: u8 = 5;
pub const MODEL_VERSION: u8 = 6;
pub const SELFTEST: u8 = 7;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Prefixes the message with what was being attempted.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| e.into().context(what))
    }
}

fn image_code(e: &ImageError) -> u8 {
    match e {
        ImageError::TooSmall { .. } => DATA,
        _ => IO,
    }
}

fn dataset_code(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Image(i) => image_code(i),
        DatasetError::Io(_) => IO,
        _ => DATA,
    }
}

fn svm_code(e: &SvmError) -> u8 {
    match e {
        SvmError::VersionMismatch { .. } => MODEL_VERSION,
        SvmError::Format(_) | SvmError::Io(_) => IO,
        SvmError::InvalidParameter(_) => USAGE,
        _ => DATA,
    }
}

fn feature_code(e: &FeatureError) -> u8 {
    match e {
        FeatureError::Transform(_) | FeatureError::ScaleOutOfRange { .. } => OTHER,
        _ => DATA,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Table(_) | EvalError::UnpairedRounds(_) => DATA,
        _ => OTHER,
    }
}

fn protocol_code(e: &ProtocolError) -> u8 {
    match e {
        ProtocolError::Svm(s) => svm_code(s),
        ProtocolError::Features(f) => feature_code(f),
        ProtocolError::Dataset(d) => dataset_code(d),
        ProtocolError::Eval(v) => eval_code(v),
        ProtocolError::Io(_) => IO,
        ProtocolError::InvalidConfig { .. } | ProtocolError::InvalidGrid(_) => USAGE,
        _ => DATA,
    }
}

pub fn code_for(e: &curviqa::Error) -> u8 {
    use curviqa::Error as E;
    match e {
        E::Image(i) => image_code(i),
        E::Fdct(_) | E::Stats(_) => OTHER,
        E::Feature(f) => feature_code(f),
        E::Svm(s) => svm_code(s),
        E::Dataset(d) => dataset_code(d),
        E::Eval(v) => eval_code(v),
        E::Protocol(p) => protocol_code(p),
        E::Io(_) => IO,
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                curviqa::Error::from(e).into()
            }
        }
    )*};
}

failure_from!(
    ImageError,
    FdctError,
    DatasetError,
    SvmError,
    FeatureError,
    EvalError,
    ProtocolError,
    std::io::Error
);

impl From<curviqa::Error> for Failure {
    fn from(e: curviqa::Error) -> Self {
        Self {
            code: code_for(&e),
            message: e.to_string(),
        }
    }
}
