//! Numerical tolerances shared across modules.

/// Entries down to `-TOL_NONNEG` are accepted as probabilities and clamped to zero.
pub const TOL_NONNEG: f64 = 1e-9;

/// Allowed deviation of a probability vector's sum from one.
pub const TOL_SUM: f64 = 1e-9;

/// Marginal and Markov consistency of mechanisms.
pub const TOL_CONSISTENCY: f64 = 1e-7;

/// Base-point entries within this distance of zero are treated as zero.
pub const TOL_POS: f64 = 1e-9;

/// Smallest singular value accepted for matrices that must be inverted.
pub const TOL_SINGULAR: f64 = 1e-10;

/// Output symbols with less mass than this carry no perturbation.
pub const TOL_PROB: f64 = 1e-9;

/// Pivot tolerance of the simplex method.
pub const TOL_PIVOT: f64 = 1e-9;

/// Slack on the l1 privacy test.
pub const TOL_PRIVACY: f64 = 1e-9;
