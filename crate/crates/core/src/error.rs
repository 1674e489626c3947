use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input: bad dimensions, invalid probabilities, bad parameters.
    Input,
    /// Well-formed input that the requested method cannot handle.
    OutOfScope,
    /// A numerical consistency check failed inside a solver.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("chi-square reference has zero mass at index {0}")]
    ZeroReference(usize),
    #[error("posterior mixture does not reproduce the marginal (max deviation {0:.3e})")]
    MarginalMismatch(f64),
    #[error("leakage matrix has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("no invertible |X|x|X| column block found in the leakage matrix")]
    HeadSingular,
    #[error("omega {omega:?} is not a feasible base point")]
    InfeasibleOmega { omega: Vec<usize> },
    #[error("perturbed vertex for omega {omega:?} has negative entry {value:.3e} at position {index}")]
    NegativeEntry {
        omega: Vec<usize>,
        index: usize,
        value: f64,
    },
    #[error("no omega produces a strictly positive base point")]
    NoFeasibleOmega,
    #[error("omega {omega:?} has a zero entry in its base point")]
    ZeroBasePoint { omega: Vec<usize> },
    #[error("instance is not admissible for the entropy expansion (a base point lies on the simplex boundary); use force to override")]
    NotInHxy,
    #[error("no combination of vertices admits a feasible program")]
    NoFeasibleCombination,
    #[error("{count} combinations exceed the configured cap of {cap}; raise the cap or shrink the instance")]
    CombinationCap { count: u128, cap: u128 },
    #[error("linear program: {0}")]
    Lp(#[from] crate::simplex::LpError),
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),
    #[error("leakage matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("leakage matrix is singular")]
    Singular,
    #[error("search would evaluate about {estimated} candidates, above the cap of {cap}")]
    TooLarge { estimated: u128, cap: u128 },
    #[error("numeric labels are missing for {0}")]
    MissingValues(&'static str),
    #[error("expected a binary alphabet, got {0} symbols")]
    NotBinary(usize),
    #[error("labels are not zero-mean (mean {0:.3e})")]
    NotZeroMean(f64),
    #[error("eta_sq must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            DimensionMismatch(_)
            | InvalidDistribution(_)
            | InvalidChannel(_)
            | InvalidInstance(_)
            | ZeroReference(_)
            | MarginalMismatch(_)
            | MissingValues(_)
            | NotBinary(_)
            | NotZeroMean(_)
            | InvalidEta(_)
            | InvalidParameter(_)
            | UnknownSolver(_) => ErrorKind::Input,
            RankDeficient { .. }
            | HeadSingular
            | InfeasibleOmega { .. }
            | NegativeEntry { .. }
            | NoFeasibleOmega
            | ZeroBasePoint { .. }
            | NotInHxy
            | CombinationCap { .. }
            | NotSquare { .. }
            | Singular
            | TooLarge { .. } => ErrorKind::OutOfScope,
            NoFeasibleCombination | Lp(_) | NumericalInconsistency(_) => ErrorKind::Numerical,
        }
    }
}
