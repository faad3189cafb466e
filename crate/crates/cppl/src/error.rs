//! Error types for every pipeline stage.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("type error: {0}")]
pub struct TypeError(pub String);

impl TypeError {
    pub fn new(msg: impl Into<String>) -> TypeError {
        TypeError(msg.into())
    }
}

/// A compile error tagged with the stage that produced it.
#[derive(Debug, Clone, Error)]
pub enum CompileError {
    #[error("[parse] {0}")]
    Parse(#[from] ParseError),
    #[error("[typecheck] {0}")]
    Type(#[from] TypeError),
    #[error("[codegen] {0}")]
    Codegen(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistError {
    #[error("{dist}: {msg}")]
    BadParam { dist: &'static str, msg: String },
}

impl DistError {
    pub fn bad(dist: &'static str, msg: impl Into<String>) -> DistError {
        DistError::BadParam {
            dist,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VmError {
    #[error("stack overflow: particle stack needs {needed} cells but capacity is {capacity}")]
    StackOverflow { needed: usize, capacity: usize },
    #[error("invalid block index {0}")]
    InvalidBlock(usize),
    #[error("log-weight became NaN (model or parameter bug)")]
    NanWeight,
    #[error("distribution parameter error: {0}")]
    Dist(#[from] DistError),
    #[error("sequence index {idx} out of bounds (length {len})")]
    SeqOutOfBounds { idx: i64, len: usize },
    #[error("checkpoint fired inside a non-decomposed call")]
    CheckpointInDirectCall,
    #[error("forced-choice tape exhausted after {0} draws")]
    TapeExhausted(usize),
    #[error("forced-choice tape value has wrong type for {0}")]
    TapeTypeMismatch(&'static str),
    #[error("read of uninitialised cell (compiler bug)")]
    UninitRead,
    #[error("ill-typed cell access (compiler bug): expected {0}")]
    CellType(&'static str),
}

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("all particles rejected (logZ = -inf)")]
    AllParticlesRejected,
    #[error("particle {particle}: {source}")]
    Particle {
        particle: usize,
        #[source]
        source: VmError,
    },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Top-level error for the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
