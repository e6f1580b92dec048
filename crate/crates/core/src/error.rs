use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} does not fit in a 4-bit nibble")]
    NibbleOutOfRange { value: u8 },

    #[error("unsupported key width {0} (expected 80 or 128 bits)")]
    UnsupportedKeyWidth(u32),

    #[error("key value does not fit in {width} bits")]
    KeyOverflow { width: u32 },

    #[error("round count {0} outside 1..=31")]
    InvalidRounds(usize),

    #[error("value {value:#x} does not fit in {width} bits")]
    WidthOverflow { value: u64, width: u32 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("invalid frequency band {lo}..{hi} Hz (Nyquist {nyquist} Hz)")]
    InvalidBand { lo: f64, hi: f64, nyquist: f64 },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?} (expected \"CEMT\")")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported trace file version {found}")]
    VersionMismatch { path: PathBuf, found: u32 },

    #[error("{path}: expected {expected} bytes from header, file has {actual}")]
    LengthMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: corrupt trace file: {msg}")]
    Corrupt { path: PathBuf, msg: String },
}
