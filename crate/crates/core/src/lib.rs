//! Design of disclosure mechanisms that maximize the information an output
//! carries about useful data `Y` while every posterior stays within an l1
//! ball around the prior of the private data `X`.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod entcoef;
pub mod error;
pub mod invsolver;
pub mod lp;
pub mod metrics;
pub mod oracle;
pub mod probkit;
pub mod rowspace;
pub mod simplex;
pub mod solver;
pub mod tol;
pub mod watermark;

pub use error::{Error, ErrorKind, Result};
pub use lp::{solve_approx, solve_perfect_privacy, DesignResult, Diagnostics, SolveOptions};
pub use probkit::{
    check_privacy, mutual_information, Channel, Disclosure, Distribution, LogBase, Mechanism,
    PrivacyReport, ProblemInstance,
};
pub use solver::{SolveContext, Solver, SolverRegistry};
