//! Closed-form design for a square, invertible leakage matrix.
//!
//! With `W = diag(P_Y)^-1/2 P^-1 diag(P_X)^1/2`, a binary output with
//! perturbations `J = +/- sqrt(P_X) * l / ||sqrt(P_X) * l||_1` reveals about
//! `eps^2 sigma^2 / (2 scale^2)` nats, where `l` is the top right singular
//! vector of `W` apart from the trivial direction `sqrt(P_X)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{DesignResult, Diagnostics};
use crate::probkit::{check_privacy, mutual_information, Distribution, Mechanism, ProblemInstance};
use crate::rowspace::min_singular;
use crate::tol::{TOL_NONNEG, TOL_PRIVACY, TOL_SINGULAR};

#[derive(Debug, Clone, Serialize)]
pub struct InvertibleSolution {
    #[serde(skip)]
    pub w: DMatrix<f64>,
    pub sigma_max: f64,
    pub l_star: Vec<f64>,
    /// `||sqrt(P_X) * l_star||_1`
    pub scale: f64,
    /// Second-order utility estimate in the instance's log base.
    pub approx_utility: f64,
    pub mechanism: Mechanism,
}

pub fn solve_invertible(inst: &ProblemInstance, eps: f64) -> Result<InvertibleSolution> {
    let leak = inst.leakage().matrix();
    let (nx, ny) = (inst.nx(), inst.ny());
    if nx != ny {
        return Err(Error::NotSquare { rows: nx, cols: ny });
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {eps}")));
    }
    if min_singular(leak) <= TOL_SINGULAR {
        return Err(Error::Singular);
    }
    let inv = leak.clone().try_inverse().ok_or(Error::Singular)?;
    let sqrt_px = DVector::from_iterator(nx, inst.p_x().probs().iter().map(|p| p.sqrt()));
    let inv_sqrt_py = DVector::from_iterator(ny, inst.p_y().probs().iter().map(|p| 1.0 / p.sqrt()));
    let w = DMatrix::from_diagonal(&inv_sqrt_py) * &inv * DMatrix::from_diagonal(&sqrt_px);

    let svd = w.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    // Skip the trivial singular pair (value 1, vector sqrt(P_X)).
    let (k, sigma_max) = (0..nx)
        .filter(|&i| v_t.row(i).transpose().dot(&sqrt_px).abs() < 0.5)
        .map(|i| (i, svd.singular_values[i]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NumericalInconsistency("no non-trivial singular vector".into()))?;
    let mut l_star: Vec<f64> = v_t.row(k).iter().copied().collect();
    if l_star.iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0) {
        l_star.iter_mut().for_each(|v| *v = -*v);
    }

    let direction: Vec<f64> = l_star.iter().zip(sqrt_px.iter()).map(|(l, s)| l * s).collect();
    let scale: f64 = direction.iter().map(|v| v.abs()).sum();
    let j: Vec<f64> = direction.iter().map(|v| v / scale).collect();
    let shift = &inv * DVector::from_column_slice(&j);
    let all: Vec<usize> = (0..ny).collect();
    let mut posteriors = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let post: Vec<f64> = inst
            .p_y()
            .probs()
            .iter()
            .zip(shift.iter())
            .map(|(p, s)| p + sign * eps * s)
            .collect();
        if let Some((index, &value)) = post.iter().enumerate().find(|(_, v)| **v < -TOL_NONNEG) {
            return Err(Error::NegativeEntry {
                omega: all,
                index,
                value,
            });
        }
        posteriors.push(Distribution::new(post)?);
    }
    let minus_j = j.iter().map(|v| -v).collect();
    let mechanism = Mechanism::new(Distribution::uniform(2), posteriors, vec![j, minus_j])?;
    let approx_utility = inst
        .log_base
        .from_nats(0.5 * eps * eps * sigma_max * sigma_max / (scale * scale));
    Ok(InvertibleSolution {
        w,
        sigma_max,
        l_star,
        scale,
        approx_utility,
        mechanism,
    })
}

impl InvertibleSolution {
    pub fn exact_utility(&self, inst: &ProblemInstance) -> Result<f64> {
        mutual_information(
            self.mechanism.p_u.probs(),
            &self.mechanism.posteriors,
            inst.p_y(),
            inst.log_base,
        )
    }

    pub fn into_design_result(self, inst: &ProblemInstance, eps: f64) -> Result<DesignResult> {
        let report = check_privacy(&self.mechanism, inst, eps + TOL_PRIVACY);
        if !report.passes {
            return Err(Error::NumericalInconsistency(format!(
                "invertible-case mechanism violates the privacy constraint at outputs {:?}",
                report.violating
            )));
        }
        let exact_utility = self.exact_utility(inst)?;
        Ok(DesignResult {
            solver: "invertible".into(),
            epsilon: eps,
            log_base: inst.log_base,
            mechanism: self.mechanism,
            combination: Vec::new(),
            approx_objective: Some(inst.entropy_y() - self.approx_utility),
            approx_utility: Some(self.approx_utility),
            exact_utility,
            diagnostics: Diagnostics::default(),
        })
    }
}
