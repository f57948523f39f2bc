use std::fmt;

use thiserror::Error;

/// Standing hypotheses a problem instance is audited against.
///
/// The solver needs the first three to hold (convexity and growth are
/// load-bearing); the remaining ones are reported as warnings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    /// `m0 >= 0`, `j >= 0`, bounded data.
    DataSign,
    /// `H` strictly convex, differentiable, growth of order `r > 1`.
    HamiltonianGrowth,
    /// `f` strictly increasing in `m`, growth of order `q - 1`, `q > 1`.
    CouplingGrowth,
    /// The state space is a product of intervals.
    RectangularDomain,
    /// `H` even in every coordinate.
    EvenHamiltonian,
    /// `r > N (q - 1)`.
    ExponentGap,
    /// `m0 > 0` and `j > 0`.
    StrictPositivity,
    /// `r > N q / (N q + q - 2)`.
    UniquenessExponent,
}

impl Assumption {
    pub fn key(self) -> &'static str {
        match self {
            Assumption::DataSign => "data-sign",
            Assumption::HamiltonianGrowth => "hamiltonian-growth",
            Assumption::CouplingGrowth => "coupling-growth",
            Assumption::RectangularDomain => "rectangular-domain",
            Assumption::EvenHamiltonian => "even-hamiltonian",
            Assumption::ExponentGap => "exponent-gap",
            Assumption::StrictPositivity => "strict-positivity",
            Assumption::UniquenessExponent => "uniqueness-exponent",
        }
    }

    pub fn statement(self) -> &'static str {
        match self {
            Assumption::DataSign => "m0 >= 0 and j >= 0",
            Assumption::HamiltonianGrowth => {
                "H strictly convex, differentiable, C^-1|p|^r - C <= H(p) <= C(|p|^r + 1), r > 1"
            }
            Assumption::CouplingGrowth => {
                "f strictly increasing in m, C^-1 m^(q-1) - C <= f <= C(m^(q-1) + 1), q > 1"
            }
            Assumption::RectangularDomain => "domain is a product of intervals (a_i, b_i)",
            Assumption::EvenHamiltonian => "H even in each coordinate",
            Assumption::ExponentGap => "r > N (q - 1)",
            Assumption::StrictPositivity => "m0 > 0 and j > 0",
            Assumption::UniquenessExponent => "r > N q / (N q + q - 2)",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.key(), self.statement())
    }
}

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("assumption violated: {assumption}: {detail}")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        history: Vec<crate::solver::HistoryEntry>,
    },

    #[error("refusing request: {0}")]
    Refused(String),

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("format version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl MfgError {
    /// Short machine-readable tag used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            MfgError::Config(_) => "config",
            MfgError::Assumption { .. } => "assumption",
            MfgError::Shape(_) => "shape",
            MfgError::Numerical(_) => "numerical",
            MfgError::Divergence { .. } => "divergence",
            MfgError::Refused(_) => "refused",
            MfgError::Checksum(_) => "checksum",
            MfgError::Version { .. } => "version",
            MfgError::Format(_) => "format",
            MfgError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, MfgError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(MfgError::Shape(msg.into()))
}
