//! Discrete probability types, divergences and information measures.
//!
//! Alphabets are index sets `0..n`. Distributions are dense vectors and
//! channels are column-stochastic matrices: column `y` of a channel
//! `P_{X|Y}` is the conditional distribution of `X` given `Y = y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::{TOL_CONSISTENCY, TOL_NONNEG, TOL_PRIVACY, TOL_SINGULAR, TOL_SUM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    Natural,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::Natural => x.ln(),
        }
    }

    /// Converts a quantity measured in nats into this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Two => nats / std::f64::consts::LN_2,
            LogBase::Natural => nats,
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2" | "two" | "bits" => Ok(LogBase::Two),
            "e" | "natural" | "nats" => Ok(LogBase::Natural),
            other => Err(Error::InvalidParameter(format!(
                "log base must be \"2\" or \"e\", got \"{other}\""
            ))),
        }
    }
}

impl std::fmt::Display for LogBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogBase::Two => f.write_str("2"),
            LogBase::Natural => f.write_str("e"),
        }
    }
}

/// A probability vector over `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates `probs`; entries in `[-TOL_NONNEG, 0)` are clamped to zero.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -TOL_NONNEG {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is {p}"
                )));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > TOL_SUM {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on `index`.
    pub fn degenerate(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.probs)
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// A column-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    matrix: DMatrix<f64>,
}

impl Channel {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidChannel("empty matrix".into()));
        }
        for (j, col) in matrix.column_iter().enumerate() {
            if let Some(v) = col
                .iter()
                .find(|v| !v.is_finite() || **v < -TOL_NONNEG || **v > 1.0 + TOL_NONNEG)
            {
                return Err(Error::InvalidChannel(format!(
                    "column {j} has entry {v} outside [0, 1]"
                )));
            }
            let sum = col.sum();
            if (sum - 1.0).abs() > TOL_SUM {
                return Err(Error::InvalidChannel(format!(
                    "column {j} sums to {sum}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Builds a channel from row-major rows (one row per output symbol).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch("ragged channel rows".into()));
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Pushes a distribution over the columns through the channel.
    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(d))
            .iter()
            .copied()
            .collect()
    }
}

/// The design input: leakage channel `P_{X|Y}` and marginal `P_Y`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    leakage: Channel,
    p_y: Distribution,
    p_x: Distribution,
    pub x_values: Option<Vec<f64>>,
    pub y_values: Option<Vec<f64>>,
    pub log_base: LogBase,
}

impl ProblemInstance {
    /// Requires `|X| <= |Y|`, strictly positive marginals and full row rank.
    pub fn new(leakage: Channel, p_y: Distribution, log_base: LogBase) -> Result<Self> {
        let (nx, ny) = (leakage.nrows(), leakage.ncols());
        if p_y.len() != ny {
            return Err(Error::DimensionMismatch(format!(
                "leakage has {ny} columns but p_y has {} entries",
                p_y.len()
            )));
        }
        if nx > ny {
            return Err(Error::InvalidInstance(format!(
                "|X| = {nx} exceeds |Y| = {ny}"
            )));
        }
        if let Some(i) = p_y.probs().iter().position(|&p| p <= 0.0) {
            return Err(Error::InvalidInstance(format!("p_y({i}) is zero")));
        }
        let p_x = Distribution::new(leakage.apply(p_y.probs()))?;
        if let Some(i) = p_x.probs().iter().position(|&p| p <= 0.0) {
            return Err(Error::InvalidInstance(format!("p_x({i}) is zero")));
        }
        let rank = numerical_rank(leakage.matrix());
        if rank < nx {
            return Err(Error::RankDeficient { rank, expected: nx });
        }
        Ok(Self {
            leakage,
            p_y,
            p_x,
            x_values: None,
            y_values: None,
            log_base,
        })
    }

    pub fn with_values(mut self, x_values: Vec<f64>, y_values: Vec<f64>) -> Result<Self> {
        if x_values.len() != self.nx() || y_values.len() != self.ny() {
            return Err(Error::DimensionMismatch(
                "label vectors must match the alphabet sizes".into(),
            ));
        }
        self.x_values = Some(x_values);
        self.y_values = Some(y_values);
        Ok(self)
    }

    /// Labels `1..=n` on both alphabets.
    pub fn with_default_values(self) -> Self {
        let xs = (1..=self.nx()).map(|v| v as f64).collect();
        let ys = (1..=self.ny()).map(|v| v as f64).collect();
        self.with_values(xs, ys).expect("sizes match by construction")
    }

    pub fn leakage(&self) -> &Channel {
        &self.leakage
    }

    pub fn p_y(&self) -> &Distribution {
        &self.p_y
    }

    pub fn p_x(&self) -> &Distribution {
        &self.p_x
    }

    pub fn nx(&self) -> usize {
        self.leakage.nrows()
    }

    pub fn ny(&self) -> usize {
        self.leakage.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nx() == self.ny()
    }

    pub fn entropy_y(&self) -> f64 {
        entropy(&self.p_y, self.log_base)
    }
}

pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|s| **s > TOL_SINGULAR)
        .count()
}

/// A disclosure kernel seen through its output marginal and posteriors.
pub trait Disclosure {
    fn p_u(&self) -> &[f64];
    fn posteriors(&self) -> &[Distribution];
}

/// Output marginal, per-output posteriors over `Y` and perturbations `J_u`.
#[derive(Debug, Clone, Serialize)]
pub struct Mechanism {
    pub p_u: Distribution,
    pub posteriors: Vec<Distribution>,
    pub perturbations: Vec<Vec<f64>>,
}

impl Disclosure for Mechanism {
    fn p_u(&self) -> &[f64] {
        self.p_u.probs()
    }

    fn posteriors(&self) -> &[Distribution] {
        &self.posteriors
    }
}

impl Mechanism {
    pub fn new(
        p_u: Distribution,
        posteriors: Vec<Distribution>,
        perturbations: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if posteriors.len() != p_u.len() || perturbations.len() != p_u.len() {
            return Err(Error::DimensionMismatch(format!(
                "|U| = {} but {} posteriors and {} perturbations",
                p_u.len(),
                posteriors.len(),
                perturbations.len()
            )));
        }
        Ok(Self {
            p_u,
            posteriors,
            perturbations,
        })
    }

    /// Derives `J_u = (P_{X|Y} P_{Y|U=u} - P_X) / eps`; all zero when `eps == 0`.
    pub fn from_posteriors(
        inst: &ProblemInstance,
        p_u: Distribution,
        posteriors: Vec<Distribution>,
        eps: f64,
    ) -> Result<Self> {
        let perturbations = posteriors
            .iter()
            .map(|post| {
                let px_u = inst.leakage().apply(post.probs());
                px_u.iter()
                    .zip(inst.p_x().probs())
                    .map(|(a, b)| if eps > 0.0 { (a - b) / eps } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(p_u, posteriors, perturbations)
    }

    pub fn size(&self) -> usize {
        self.p_u.len()
    }

    /// Checks marginal consistency, the Markov relation between posteriors and
    /// perturbations, and the three perturbation properties.
    pub fn validate(&self, inst: &ProblemInstance, eps: f64, tol: f64) -> Result<()> {
        let (nx, ny) = (inst.nx(), inst.ny());
        let mut mix = vec![0.0; ny];
        let mut weighted_j = vec![0.0; nx];
        for u in 0..self.size() {
            let post = &self.posteriors[u];
            let j = &self.perturbations[u];
            if post.len() != ny || j.len() != nx {
                return Err(Error::DimensionMismatch(format!(
                    "output {u} has posterior of size {} and perturbation of size {}",
                    post.len(),
                    j.len()
                )));
            }
            let pu = self.p_u[u];
            for (m, p) in mix.iter_mut().zip(post.probs()) {
                *m += pu * p;
            }
            for (w, v) in weighted_j.iter_mut().zip(j) {
                *w += pu * v;
            }
            let px_u = inst.leakage().apply(post.probs());
            for x in 0..nx {
                let expected = inst.p_x()[x] + eps * j[x];
                if (px_u[x] - expected).abs() > tol {
                    return Err(Error::NumericalInconsistency(format!(
                        "P(X={x}|U={u}) = {} but P_X + eps*J gives {expected}",
                        px_u[x]
                    )));
                }
            }
            let sum: f64 = j.iter().sum();
            if sum.abs() > tol {
                return Err(Error::NumericalInconsistency(format!(
                    "J_{u} sums to {sum}"
                )));
            }
            let l1: f64 = j.iter().map(|v| v.abs()).sum();
            if l1 > 1.0 + TOL_PRIVACY.max(tol * 1e-2) {
                return Err(Error::NumericalInconsistency(format!(
                    "J_{u} has l1 norm {l1}"
                )));
            }
        }
        let dev = max_abs_diff(&mix, inst.p_y().probs());
        if dev > tol {
            return Err(Error::MarginalMismatch(dev));
        }
        if let Some(w) = weighted_j.iter().find(|w| w.abs() > tol) {
            return Err(Error::NumericalInconsistency(format!(
                "sum_u P_u J_u has entry {w}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy(d: &Distribution, base: LogBase) -> f64 {
    entropy_of(d.probs(), base)
}

pub(crate) fn entropy_of(p: &[f64], base: LogBase) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * base.log(v))
        .sum::<f64>()
}

/// `I(U;Y) = H(Y) - sum_u P_U(u) H(Y|U=u)`.
pub fn mutual_information(
    p_u: &[f64],
    posteriors: &[Distribution],
    p_y: &Distribution,
    base: LogBase,
) -> Result<f64> {
    if p_u.len() != posteriors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} posteriors",
            p_u.len(),
            posteriors.len()
        )));
    }
    let mut mix = vec![0.0; p_y.len()];
    for (w, post) in p_u.iter().zip(posteriors) {
        if post.len() != p_y.len() {
            return Err(Error::DimensionMismatch("posterior alphabet".into()));
        }
        for (m, p) in mix.iter_mut().zip(post.probs()) {
            *m += w * p;
        }
    }
    let dev = max_abs_diff(&mix, p_y.probs());
    if dev > TOL_CONSISTENCY {
        return Err(Error::MarginalMismatch(dev));
    }
    let conditional: f64 = p_u
        .iter()
        .zip(posteriors)
        .map(|(w, post)| w * entropy(post, base))
        .sum();
    Ok(entropy(p_y, base) - conditional)
}

fn check_dims(p: &Distribution, q: &Distribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "alphabets of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(p, q)?;
    Ok(l1_of(p.probs(), q.probs()))
}

pub(crate) fn l1_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    Ok(0.5 * l1_distance(p, q)?)
}

/// `sum (p - q)^2 / q`; `q` must be strictly positive.
pub fn chi2_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(p, q)?;
    if let Some(i) = q.probs().iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroReference(i));
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b) * (a - b) / b)
        .sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    /// `||P_{X|U=u} - P_X||_1` per output symbol.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub passes: bool,
    pub violating: Vec<usize>,
    /// Leakage level `eps / sqrt(min P_X)` implied for the chi-square criterion.
    pub chi2_epsilon: f64,
}

/// Evaluates the per-output l1 criterion of `m` at leakage `eps`.
pub fn check_privacy(m: &impl Disclosure, inst: &ProblemInstance, eps: f64) -> PrivacyReport {
    let deviations: Vec<f64> = m
        .posteriors()
        .iter()
        .map(|post| l1_of(&inst.leakage().apply(post.probs()), inst.p_x().probs()))
        .collect();
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let violating: Vec<usize> = deviations
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > eps + TOL_PRIVACY)
        .map(|(u, _)| u)
        .collect();
    PrivacyReport {
        epsilon: eps,
        passes: violating.is_empty(),
        deviations,
        max_deviation,
        violating,
        chi2_epsilon: eps / inst.p_x().min().sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    fn example2() -> ProblemInstance {
        let leak = Channel::from_rows(&[vec![0.3, 0.8, 0.5, 0.4], vec![0.7, 0.2, 0.5, 0.6]])
            .unwrap();
        ProblemInstance::new(leak, d(&[0.5, 0.25, 0.125, 0.125]), LogBase::Two).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_close!(entropy(&d(&[0.5, 0.25, 0.125, 0.125]), LogBase::Two), 1.75, 1e-12);
        assert_eq!(entropy(&d(&[1.0, 0.0, 0.0]), LogBase::Two), 0.0);
        assert_eq!(entropy(&d(&[1.0, 0.0, 0.0]), LogBase::Natural), 0.0);
        // Direct summation: -(0.3567 ln 0.3567 + 0.3933 ln 0.3933 + 0.11 ln 0.11 + 0.14 ln 0.14).
        let h = entropy(&d(&[0.3567, 0.3933, 0.11, 0.14]), LogBase::Natural);
        assert_close!(h, 1.252785, 1e-6);
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![1.1, -0.1]).is_err());
        assert!(Distribution::new(vec![]).is_err());
        let clamped = Distribution::new(vec![1.0 + 5e-10, -5e-10]).unwrap();
        assert_eq!(clamped[1], 0.0);
    }

    #[test]
    fn channel_validation() {
        assert!(Channel::from_rows(&[vec![0.3, 0.8], vec![0.6, 0.2]]).is_err());
        assert!(Channel::from_rows(&[vec![0.3, 0.8], vec![0.7]]).is_err());
        assert!(Channel::from_rows(&[vec![1.3, 0.8], vec![-0.3, 0.2]]).is_err());
    }

    #[test]
    fn instance_validation() {
        let inst = example2();
        assert_close!(inst.p_x()[0], 0.4625, 1e-12);
        // Rank one leakage.
        let leak = Channel::from_rows(&[vec![0.5, 0.5, 0.5], vec![0.5, 0.5, 0.5]]).unwrap();
        assert!(matches!(
            ProblemInstance::new(leak, d(&[0.2, 0.3, 0.5]), LogBase::Two),
            Err(Error::RankDeficient { rank: 1, .. })
        ));
        let leak = Channel::from_rows(&[vec![0.3, 0.8, 0.5], vec![0.7, 0.2, 0.5]]).unwrap();
        assert!(ProblemInstance::new(leak, d(&[0.0, 0.5, 0.5]), LogBase::Two).is_err());
    }

    #[test]
    fn mutual_information_extremes() {
        let inst = example2();
        let p_y = inst.p_y().clone();
        let indep = mutual_information(&[0.3, 0.7], &[p_y.clone(), p_y.clone()], &p_y, LogBase::Two)
            .unwrap();
        assert_close!(indep, 0.0, 1e-12);
        let copies: Vec<_> = (0..4).map(|y| Distribution::degenerate(4, y)).collect();
        let full = mutual_information(p_y.probs(), &copies, &p_y, LogBase::Two).unwrap();
        assert_close!(full, 1.75, 1e-12);
        let bad = mutual_information(&[1.0], &[Distribution::uniform(4)], &p_y, LogBase::Two);
        assert!(matches!(bad, Err(Error::MarginalMismatch(_))));
    }

    #[test]
    fn divergences() {
        let p = d(&[0.6, 0.4]);
        let q = d(&[0.4, 0.6]);
        assert_close!(l1_distance(&p, &q).unwrap(), 0.4, 1e-12);
        assert_close!(tv_distance(&p, &q).unwrap(), 0.2, 1e-12);
        assert_close!(chi2_divergence(&p, &q).unwrap(), 0.04 / 0.4 + 0.04 / 0.6, 1e-12);
        for f in [l1_distance, tv_distance, chi2_divergence] {
            assert_eq!(f(&p, &p).unwrap(), 0.0);
        }
        assert!(matches!(
            l1_distance(&p, &d(&[0.2, 0.3, 0.5])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            chi2_divergence(&p, &d(&[1.0, 0.0])),
            Err(Error::ZeroReference(1))
        ));
    }

    #[test]
    fn privacy_report_names_violator() {
        let inst = example2();
        let eps = 0.01;
        let p_y = inst.p_y().clone();
        let m = Mechanism::from_posteriors(&inst, d(&[1.0]), vec![p_y.clone()], eps).unwrap();
        let rep = check_privacy(&m, &inst, 0.0);
        assert!(rep.passes);
        assert_eq!(rep.max_deviation, 0.0);

        // Move mass inside column 1 vs 2 so that P_{X|U} shifts by 2*eps in l1.
        // Shift delta between y=0 (P(x=0)=0.3) and y=1 (0.8): dX = 0.5*delta per coordinate.
        let delta = 2.0 * eps;
        let shifted = d(&[0.5 - delta, 0.25 + delta, 0.125, 0.125]);
        let mirrored = d(&[0.5 + delta, 0.25 - delta, 0.125, 0.125]);
        let m = Mechanism::from_posteriors(&inst, d(&[0.5, 0.5]), vec![shifted, mirrored], eps)
            .unwrap();
        let rep = check_privacy(&m, &inst, eps);
        assert_close!(rep.max_deviation, 2.0 * eps, 1e-12);
        assert!(!rep.passes);
        assert_eq!(rep.violating, vec![0, 1]);
        assert_close!(rep.chi2_epsilon, eps / 0.4625f64.sqrt(), 1e-12);
        // The mechanism itself is consistent, but its J has l1 norm 2.
        assert!(m.validate(&inst, eps, 1e-7).is_err());
    }
}
