//! Estimation-based utility and privacy measures and the erasure baseline.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::probkit::{mutual_information, Disclosure, Distribution, ProblemInstance};

/// Probability that the MAP guess of `Y` from `U` is wrong.
pub fn map_error(m: &impl Disclosure) -> f64 {
    let hit: f64 = m
        .p_u()
        .iter()
        .zip(m.posteriors())
        .map(|(pu, post)| pu * post.probs().iter().copied().fold(0.0, f64::max))
        .sum();
    (1.0 - hit).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    X,
    Y,
}

fn labels(inst: &ProblemInstance, target: Target) -> Result<&[f64]> {
    match target {
        Target::X => inst.x_values.as_deref().ok_or(Error::MissingValues("X")),
        Target::Y => inst.y_values.as_deref().ok_or(Error::MissingValues("Y")),
    }
}

pub fn variance(p: &[f64], values: &[f64]) -> f64 {
    let mean: f64 = p.iter().zip(values).map(|(p, v)| p * v).sum();
    p.iter().zip(values).map(|(p, v)| p * (v - mean) * (v - mean)).sum()
}

/// `sum_u P_U(u) Var(target | U = u)`
pub fn mmse(m: &impl Disclosure, inst: &ProblemInstance, target: Target) -> Result<f64> {
    let values = labels(inst, target)?;
    Ok(m.p_u()
        .iter()
        .zip(m.posteriors())
        .map(|(pu, post)| {
            let cond = match target {
                Target::Y => post.probs().to_vec(),
                Target::X => inst.leakage().apply(post.probs()),
            };
            pu * variance(&cond, values)
        })
        .sum())
}

/// MMSE divided by the marginal variance of the target.
pub fn normalized_mmse(m: &impl Disclosure, inst: &ProblemInstance, target: Target) -> Result<f64> {
    let values = labels(inst, target)?;
    let marginal = match target {
        Target::Y => inst.p_y(),
        Target::X => inst.p_x(),
    };
    let var = variance(marginal.probs(), values);
    if var <= 0.0 {
        return Err(Error::InvalidParameter(format!("{target:?} has zero variance")));
    }
    Ok(mmse(m, inst, target)? / var)
}

/// Lower bound on `MMSE(X|U)` for a binary, zero-mean `X` under the l1
/// criterion: `Var(X) - eps^2 (x1 - x2)^2 / 4`.
pub fn mmse_lower_bound(p_x: &Distribution, x_values: &[f64], eps: f64) -> Result<f64> {
    if p_x.len() != 2 {
        return Err(Error::NotBinary(p_x.len()));
    }
    if x_values.len() != 2 {
        return Err(Error::DimensionMismatch("expected two labels".into()));
    }
    let mean: f64 = p_x.probs().iter().zip(x_values).map(|(p, x)| p * x).sum();
    if mean.abs() > 1e-9 {
        return Err(Error::NotZeroMean(mean));
    }
    let spread = x_values[0] - x_values[1];
    Ok(variance(p_x.probs(), x_values) - 0.25 * eps * eps * spread * spread)
}

/// Second singular value of `diag(P_X)^-1/2 P_XY diag(P_Y)^-1/2`, squared.
/// Offered as one reading of the `eta^2` parameter of the erasure baseline.
pub fn squared_maximal_correlation(inst: &ProblemInstance) -> f64 {
    let (nx, ny) = (inst.nx(), inst.ny());
    let leak = inst.leakage().matrix();
    let (p_x, p_y) = (inst.p_x(), inst.p_y());
    let b = DMatrix::from_fn(nx, ny, |x, y| leak[(x, y)] * p_y[y] / (p_x[x] * p_y[y]).sqrt());
    let mut sv: Vec<f64> = b.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.get(1).map_or(0.0, |s| s * s)
}

/// Reveals `Y` with probability `1 - delta` and an erasure symbol otherwise.
/// Outputs `0..|Y|` are the revealed symbols; the last output is the erasure.
#[derive(Debug, Clone, Serialize)]
pub struct ErasureMechanism {
    pub delta: f64,
    p_u: Vec<f64>,
    posteriors: Vec<Distribution>,
}

impl ErasureMechanism {
    pub fn new(p_y: &Distribution, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
        }
        let ny = p_y.len();
        let mut p_u: Vec<f64> = p_y.probs().iter().map(|p| (1.0 - delta) * p).collect();
        p_u.push(delta);
        let mut posteriors: Vec<Distribution> = (0..ny).map(|y| Distribution::degenerate(ny, y)).collect();
        posteriors.push(p_y.clone());
        Ok(Self {
            delta,
            p_u,
            posteriors,
        })
    }
}

impl Disclosure for ErasureMechanism {
    fn p_u(&self) -> &[f64] {
        &self.p_u
    }

    fn posteriors(&self) -> &[Distribution] {
        &self.posteriors
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErasureBaseline {
    pub bound: f64,
    pub mechanism: ErasureMechanism,
}

/// `bound = (1 - 1/eta_sq) min(eps, eta_sq)` with erasure probability
/// `1 - min(eps, eta_sq) / eta_sq`. Callers comparing against l1 designs pass
/// the squared leakage level.
pub fn erasure_baseline(inst: &ProblemInstance, eps: f64, eta_sq: f64) -> Result<ErasureBaseline> {
    if !(eta_sq > 0.0 && eta_sq <= 1.0) {
        return Err(Error::InvalidEta(eta_sq));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {eps}")));
    }
    let level = eps.min(eta_sq);
    let bound = (1.0 - 1.0 / eta_sq) * level;
    let delta = 1.0 - level / eta_sq;
    Ok(ErasureBaseline {
        bound,
        mechanism: ErasureMechanism::new(inst.p_y(), delta)?,
    })
}

/// One row of a trade-off curve.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffPoint {
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub utility_mi: f64,
    pub map_error: f64,
    pub mmse_y_norm: Option<f64>,
    pub mmse_x_norm: Option<f64>,
}

impl TradeoffPoint {
    /// Normalized MMSEs are left empty when labels are missing.
    pub fn evaluate(m: &impl Disclosure, inst: &ProblemInstance) -> Result<Self> {
        let utility_mi = mutual_information(m.p_u(), m.posteriors(), inst.p_y(), inst.log_base)?;
        let norm = |t| match normalized_mmse(m, inst, t) {
            Ok(v) => Ok(Some(v)),
            Err(Error::MissingValues(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            epsilon: None,
            alpha: None,
            utility_mi,
            map_error: map_error(m),
            mmse_y_norm: norm(Target::Y)?,
            mmse_x_norm: norm(Target::X)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkit::{Channel, LogBase, Mechanism};

    fn example2() -> ProblemInstance {
        ProblemInstance::new(
            Channel::from_rows(&[vec![0.3, 0.8, 0.5, 0.4], vec![0.7, 0.2, 0.5, 0.6]]).unwrap(),
            Distribution::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap(),
            LogBase::Two,
        )
        .unwrap()
        .with_default_values()
    }

    fn copy_mechanism(inst: &ProblemInstance) -> Mechanism {
        let ny = inst.ny();
        Mechanism::from_posteriors(
            inst,
            inst.p_y().clone(),
            (0..ny).map(|y| Distribution::degenerate(ny, y)).collect(),
            1.0,
        )
        .unwrap()
    }

    fn silent_mechanism(inst: &ProblemInstance) -> Mechanism {
        Mechanism::from_posteriors(inst, Distribution::uniform(1), vec![inst.p_y().clone()], 0.0)
            .unwrap()
    }

    #[test]
    fn map_error_extremes() {
        let inst = example2();
        assert_close!(map_error(&copy_mechanism(&inst)), 0.0, 1e-15);
        assert_close!(map_error(&silent_mechanism(&inst)), 0.5, 1e-15);
    }

    #[test]
    fn mmse_extremes() {
        let inst = example2();
        assert_close!(mmse(&copy_mechanism(&inst), &inst, Target::Y).unwrap(), 0.0, 1e-15);
        let silent = silent_mechanism(&inst);
        let var_x = variance(inst.p_x().probs(), &[1.0, 2.0]);
        assert_close!(mmse(&silent, &inst, Target::X).unwrap(), var_x, 1e-15);
        assert_close!(normalized_mmse(&silent, &inst, Target::X).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn missing_labels() {
        let mut inst = example2();
        inst.y_values = None;
        assert!(matches!(
            mmse(&silent_mechanism(&inst), &inst, Target::Y),
            Err(Error::MissingValues("Y"))
        ));
    }

    #[test]
    fn mmse_bound_cases() {
        let p = Distribution::uniform(2);
        assert_close!(mmse_lower_bound(&p, &[1.0, -1.0], 0.0).unwrap(), 1.0, 1e-15);
        assert_close!(mmse_lower_bound(&p, &[1.0, -1.0], 0.3).unwrap(), 1.0 - 0.09, 1e-15);
        assert!(matches!(mmse_lower_bound(&p, &[1.0, 2.0], 0.1), Err(Error::NotZeroMean(_))));
        assert!(matches!(
            mmse_lower_bound(&Distribution::uniform(3), &[1.0, 0.0, -1.0], 0.1),
            Err(Error::NotBinary(3))
        ));
    }

    #[test]
    fn erasure_endpoints() {
        let inst = example2();
        let full = erasure_baseline(&inst, 0.4, 0.4).unwrap();
        assert_eq!(full.mechanism.delta, 0.0);
        assert_close!(map_error(&full.mechanism), 0.0, 1e-15);
        let none = erasure_baseline(&inst, 0.0, 0.4).unwrap();
        assert_eq!(none.mechanism.delta, 1.0);
        assert_eq!(none.bound, 0.0);
        assert_close!(normalized_mmse(&none.mechanism, &inst, Target::Y).unwrap(), 1.0, 1e-12);
        assert!(matches!(erasure_baseline(&inst, 0.1, 0.0), Err(Error::InvalidEta(_))));
        assert!(matches!(erasure_baseline(&inst, 0.1, 1.5), Err(Error::InvalidEta(_))));
        // Past eta_sq the erasure probability stays at zero.
        assert_eq!(erasure_baseline(&inst, 0.9, 0.4).unwrap().mechanism.delta, 0.0);
    }

    #[test]
    fn maximal_correlation_lies_in_unit_interval() {
        let inst = ProblemInstance::new(
            Channel::from_rows(&[vec![0.3, 0.8, 0.5], vec![0.7, 0.2, 0.5]]).unwrap(),
            Distribution::uniform(3),
            LogBase::Two,
        )
        .unwrap();
        let rho = squared_maximal_correlation(&inst);
        assert!(rho > 0.0 && rho < 1.0);
    }
}
