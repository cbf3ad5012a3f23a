//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("unsupported camera model `{0}` (expected PINHOLE or SIMPLE_PINHOLE)")]
    UnsupportedCameraModel(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate image name `{0}` in reconstruction")]
    DuplicateImage(String),

    #[error("frame `{0}` is not registered in the reconstruction")]
    FrameUnregistered(String),

    #[error("reconstruction declares {0} cameras, expected exactly one per sequence")]
    MultipleCameras(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("no usable training pairs (all frames unregistered or sequence too short)")]
    NoTrainingPairs,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 i/o, 4 numerical, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) => 2,
            Error::Io(_) | Error::Image(_) => 3,
            Error::NonFiniteGradient(_) => 4,
            _ => 1,
        }
    }
}
