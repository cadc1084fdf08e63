use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug)]
pub enum Error {
    /// Model parameters outside their admissible ranges.
    InvalidParams(String),
    /// A geometric quantity is undefined for the given input.
    DegenerateGeometry(String),
    /// Negative radicand in the placement-radius formula.
    InfeasiblePlacement { radicand: f64 },
    /// No admissible position was found within the attempt budget.
    PlacementExhausted { attempts: usize },
    /// Restart budget used up while building a cluster or aggregate.
    GenerationFailed { restarts: usize, reason: String },
    LabelAbsent(u8),
    FieldOfViewOverflow { particle: usize, extent_nm: f64, half_width_nm: f64 },
    ConstantImage,
    SplitInfeasible { config: String, train: usize, eval: usize, min: usize },
    InsufficientEntries { config: String, available: usize, needed: usize },
    ConstantTruth,
    Parse { path: Option<PathBuf>, line: usize, message: String },
    Config(String),
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: None, line, message: message.into() }
    }

    /// Attaches a file path to a parse error.
    pub fn in_file(self, file: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { path: None, line, message } => {
                Error::Parse { path: Some(file.into()), line, message }
            }
            other => other,
        }
    }

    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::InfeasiblePlacement { .. } => "infeasible_placement",
            Error::PlacementExhausted { .. } => "placement_exhausted",
            Error::GenerationFailed { .. } => "generation_failed",
            Error::LabelAbsent(_) => "label_absent",
            Error::FieldOfViewOverflow { .. } => "field_of_view_overflow",
            Error::ConstantImage => "constant_image",
            Error::SplitInfeasible { .. } => "split_infeasible",
            Error::InsufficientEntries { .. } => "insufficient_entries",
            Error::ConstantTruth => "constant_truth",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid model parameters: {msg}"),
            Error::DegenerateGeometry(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::InfeasiblePlacement { radicand } => {
                write!(f, "placement radius infeasible (radicand {radicand:e} < 0)")
            }
            Error::PlacementExhausted { attempts } => {
                write!(f, "no admissible placement after {attempts} attempts")
            }
            Error::GenerationFailed { restarts, reason } => {
                write!(f, "generation failed after {restarts} restarts: {reason}")
            }
            Error::LabelAbsent(label) => write!(f, "no particles with label {label}"),
            Error::FieldOfViewOverflow { particle, extent_nm, half_width_nm } => write!(
                f,
                "particle {particle} reaches {extent_nm:.3} nm from the image center, \
                 field of view half-width is {half_width_nm:.3} nm"
            ),
            Error::ConstantImage => write!(f, "image is constant"),
            Error::SplitInfeasible { config, train, eval, min } => write!(
                f,
                "configuration {config} cannot be split: {train} train / {eval} eval, \
                 need at least {min} on each side"
            ),
            Error::InsufficientEntries { config, available, needed } => write!(
                f,
                "configuration {config} has {available} entries, batch needs {needed}"
            ),
            Error::ConstantTruth => write!(f, "ground truth is constant, R² undefined"),
            Error::Parse { path: Some(path), line, message } => {
                write!(f, "{}:{line}: {message}", path.display())
            }
            Error::Parse { path: None, line, message } => write!(f, "line {line}: {message}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
