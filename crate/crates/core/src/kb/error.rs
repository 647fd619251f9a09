use std::fmt;

use thiserror::Error;

/// 1-based source position of a statement or token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

fn at(pos: &Option<Pos>) -> String {
    match pos {
        Some(p) => format!(" at {p}"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },

    #[error("undeclared sort `{name}`{}", at(.pos))]
    UndeclaredSort { name: String, pos: Option<Pos> },

    #[error("undeclared attribute `{name}`{}", at(.pos))]
    UndeclaredAttribute { name: String, pos: Option<Pos> },

    #[error("duplicate declaration of `{name}`{}", at(.pos))]
    Duplicate { name: String, pos: Option<Pos> },

    #[error("probability {value} outside [0,1]{}", at(.pos))]
    ProbabilityOutOfRange { value: f64, pos: Option<Pos> },

    #[error("invalid declaration{}: {message}", at(.pos))]
    InvalidDeclaration { message: String, pos: Option<Pos> },

    #[error("type error{}: {message}", at(.pos))]
    Type { message: String, pos: Option<Pos> },

    #[error("attribute `{name}` is not random{}", at(.pos))]
    NotRandom { name: String, pos: Option<Pos> },

    #[error("negation not allowed{}: {message}", at(.pos))]
    Negation { message: String, pos: Option<Pos> },

    #[error("probability mass {mass} exceeds 1 for `{term}`")]
    MassExceeded { term: String, mass: f64 },

    #[error("grounding exceeds limit of {limit} instances")]
    GroundingLimit { limit: usize },

    #[error("world count {count} exceeds cap {cap}")]
    WorldCap { count: u128, cap: u64 },

    #[error("knowledge base is inconsistent: {0}")]
    Inconsistent(String),

    #[error("evidence has probability zero")]
    ZeroEvidence,

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
}

impl KbError {
    /// Resource errors are the ones a caller may recover from by raising a cap.
    pub fn is_resource(&self) -> bool {
        matches!(self, KbError::GroundingLimit { .. } | KbError::WorldCap { .. })
    }
}

pub type KbResult<T> = Result<T, KbError>;
