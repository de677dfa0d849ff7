use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("utterance too short: {samples} samples, window needs {window}")]
    UtteranceTooShort { samples: usize, window: usize },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("infeasible alignment: {labels} labels need at least {required} frames, got {frames}")]
    InfeasibleAlignment {
        labels: usize,
        required: usize,
        frames: usize,
    },

    #[error("instance too large for exhaustive enumeration: {paths} paths")]
    InstanceTooLarge { paths: f64 },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("loss function is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("unknown initialization scheme `{0}`")]
    UnknownInitScheme(String),

    #[error("wrong model kind: expected {expected}, found {found}")]
    WrongModelKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("malformed file: {reason} at byte offset {offset}")]
    Malformed { offset: u64, reason: String },

    #[error("tokens not in vocabulary: {}", .0.join(", "))]
    UnknownTokens(Vec<String>),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("{} utterance(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    Utterances(Vec<String>),

    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),

    #[error("replay differs from the recorded run: {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
