//! Linear program over the scaled vertices `eta_u = P_u t_u + eps H_u (P_u J_u)`,
//! enumeration of index-set combinations and recovery of the mechanism.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::entcoef::EntropyCoefficients;
use crate::error::{Error, Result};
use crate::probkit::{
    check_privacy, mutual_information, Distribution, LogBase, Mechanism, ProblemInstance,
};
use crate::rowspace::{
    enumerate_omegas, epsilon_range, extreme_point, EpsilonRange, Omega, OmegaRecord, OmegaSet,
    RowSpaceBasis,
};
use crate::simplex::{LinearProgram, LpError, LpSolution, Relation};
use crate::tol::{TOL_PRIVACY, TOL_PROB};

/// Tolerance used when re-validating a recovered mechanism.
pub const RECOVERY_TOL: f64 = 1e-6;

/// Ties in the enumeration are broken by combination order below this gap.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Proceed even when some base point lies on the simplex boundary.
    pub force_hxy: bool,
    pub combination_cap: u64,
    /// Enumerate ordered tuples instead of multisets.
    pub ordered: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            force_hxy: false,
            combination_cap: 1_000_000,
            ordered: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub epsilon_range: Option<EpsilonRange>,
    pub in_hxy: Option<bool>,
    pub combinations: u64,
    pub feasible_combinations: u64,
    pub lp_iterations: usize,
    /// Estimated distance to the true optimum for grid searches.
    pub grid_gap: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    pub solver: String,
    pub epsilon: f64,
    pub log_base: LogBase,
    pub mechanism: Mechanism,
    /// Index set used by each output symbol; empty for solvers without one.
    pub combination: Vec<Omega>,
    /// Approximated minimum of `H(Y|U)`.
    pub approx_objective: Option<f64>,
    pub approx_utility: Option<f64>,
    /// `I(U;Y)` of the mechanism, evaluated directly.
    pub exact_utility: f64,
    pub diagnostics: Diagnostics,
}

/// The eta program for one combination. Variables per output `u` are the
/// `|X|` entries of `eta_u` followed by `|X|` absolute-value auxiliaries.
#[derive(Debug, Clone)]
pub struct LpModel {
    pub program: LinearProgram,
    nx: usize,
    nu: usize,
}

impl LpModel {
    pub fn eta_index(&self, u: usize, i: usize) -> usize {
        u * 2 * self.nx + i
    }

    pub fn aux_index(&self, u: usize, i: usize) -> usize {
        u * 2 * self.nx + self.nx + i
    }

    pub fn num_outputs(&self) -> usize {
        self.nu
    }

    pub fn eta(&self, x: &[f64], u: usize) -> Vec<f64> {
        (0..self.nx).map(|i| x[self.eta_index(u, i)]).collect()
    }

    pub fn to_text(&self) -> String {
        self.program.to_text()
    }
}

/// `G (I - t 1^T)`: maps `eta_u` to `eps P_u J_u`.
fn perturbation_operator(rec: &OmegaRecord) -> DMatrix<f64> {
    let n = rec.base_point.len();
    let t = DVector::from_column_slice(&rec.base_point);
    let centering = DMatrix::identity(n, n) - &t * DVector::repeat(n, 1.0).transpose();
    &rec.perturbation_inverse * centering
}

pub fn build_eta_lp(
    combination: &[&OmegaRecord],
    coefs: &[&EntropyCoefficients],
    inst: &ProblemInstance,
    eps: f64,
) -> Result<LpModel> {
    let (nx, ny) = (inst.nx(), inst.ny());
    let nu = combination.len();
    if coefs.len() != nu {
        return Err(Error::DimensionMismatch(format!(
            "{nu} index sets but {} coefficient sets",
            coefs.len()
        )));
    }
    let nvars = 2 * nx * nu;
    let eta = |u: usize, i: usize| u * 2 * nx + i;
    let aux = |u: usize, i: usize| u * 2 * nx + nx + i;

    let mut objective = vec![0.0; nvars];
    let operators: Vec<DMatrix<f64>> = combination.iter().map(|r| perturbation_operator(r)).collect();
    for (u, (rec, c)) in combination.iter().zip(coefs).enumerate() {
        // -(b (1^T eta) + a G (eta - (1^T eta) t)), coefficient by coefficient.
        let ag = DVector::from_column_slice(&c.slope).transpose() * &rec.perturbation_inverse;
        let ag_t: f64 = ag.iter().zip(&rec.base_point).map(|(a, t)| a * t).sum();
        for k in 0..nx {
            objective[eta(u, k)] = -(c.constant + ag[k] - ag_t);
        }
        let col_sums = DVector::repeat(nx, 1.0).transpose() * &operators[u];
        if let Some(v) = col_sums.iter().find(|v| v.abs() > 1e-9) {
            return Err(Error::NumericalInconsistency(format!(
                "perturbation of output {u} does not sum to zero ({v:.3e})"
            )));
        }
    }
    let mut lp = LinearProgram::new(objective);

    for y in 0..ny {
        let mut row = vec![0.0; nvars];
        for (u, rec) in combination.iter().enumerate() {
            for (i, &w) in rec.omega.indices().iter().enumerate() {
                if w == y {
                    row[eta(u, i)] = 1.0;
                }
            }
        }
        lp.add(row, Relation::Eq, inst.p_y()[y]);
    }
    for x in 0..nx {
        let mut row = vec![0.0; nvars];
        for (u, k) in operators.iter().enumerate() {
            for i in 0..nx {
                row[eta(u, i)] = k[(x, i)];
            }
        }
        lp.add(row, Relation::Eq, 0.0);
    }
    for (u, k) in operators.iter().enumerate() {
        let mut mass = vec![0.0; nvars];
        for i in 0..nx {
            mass[eta(u, i)] = 1.0;
        }
        lp.add(mass, Relation::Ge, 0.0);
        for x in 0..nx {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; nvars];
                row[aux(u, x)] = 1.0;
                for i in 0..nx {
                    row[eta(u, i)] = -sign * k[(x, i)];
                }
                lp.add(row, Relation::Ge, 0.0);
            }
        }
        let mut budget = vec![0.0; nvars];
        for i in 0..nx {
            budget[aux(u, i)] = 1.0;
            budget[eta(u, i)] = -eps;
        }
        lp.add(budget, Relation::Le, 0.0);
    }
    Ok(LpModel {
        program: lp,
        nx,
        nu,
    })
}

pub fn solve_lp(model: &LpModel) -> std::result::Result<LpSolution, LpError> {
    model.program.solve()
}

/// Scaled vertex for a given output mass and perturbation.
pub fn eta_from(rec: &OmegaRecord, mass: f64, j: &[f64], eps: f64) -> Vec<f64> {
    rec.vertex_entries(j, eps).iter().map(|v| mass * v).collect()
}

pub fn recover_mechanism(
    sol: &LpSolution,
    model: &LpModel,
    combination: &[&OmegaRecord],
    inst: &ProblemInstance,
    eps: f64,
) -> Result<Mechanism> {
    let nx = inst.nx();
    let mut masses = Vec::with_capacity(model.num_outputs());
    let mut posteriors = Vec::with_capacity(model.num_outputs());
    let mut perturbations = Vec::with_capacity(model.num_outputs());
    for (u, rec) in combination.iter().enumerate() {
        let eta = model.eta(&sol.x, u);
        let mass: f64 = eta.iter().sum();
        let mut j = vec![0.0; nx];
        if mass > TOL_PROB && eps > 0.0 {
            let centered: Vec<f64> = eta
                .iter()
                .zip(&rec.base_point)
                .map(|(e, t)| e - mass * t)
                .collect();
            let g = &rec.perturbation_inverse * DVector::from_column_slice(&centered);
            for (jx, gx) in j.iter_mut().zip(g.iter()) {
                *jx = gx / (eps * mass);
            }
            // Rounding in the division by a small mass can push the norm
            // just past the unit ball.
            let norm: f64 = j.iter().map(|v| v.abs()).sum();
            if norm > 1.0 {
                j.iter_mut().for_each(|v| *v /= norm);
            }
        }
        posteriors.push(extreme_point(rec, &j, eps, inst.ny())?);
        masses.push(mass.max(0.0));
        perturbations.push(j);
    }
    let total: f64 = masses.iter().sum();
    let p_u = Distribution::new(masses.iter().map(|m| m / total).collect())?;
    let mech = Mechanism::new(p_u, posteriors, perturbations)?;
    mech.validate(inst, eps, RECOVERY_TOL).map_err(|e| {
        Error::NumericalInconsistency(format!("recovered mechanism fails validation: {e}"))
    })?;
    Ok(mech)
}

/// Number of combinations `solve_approx` would evaluate over `n` index sets.
pub fn combination_count(n: usize, size: usize, ordered: bool) -> u128 {
    if ordered {
        (n as u128).saturating_pow(size as u32)
    } else if n == 0 {
        0
    } else {
        // C(n + size - 1, size)
        let (top, k) = ((n + size - 1) as u128, size as u128);
        (0..k).fold(1u128, |acc, i| acc.saturating_mul(top - i) / (i + 1))
    }
}

fn checked_epsilon(eps: f64) -> Result<f64> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(eps)
    } else {
        Err(Error::InvalidParameter(format!("epsilon must be a finite non-negative number, got {eps}")))
    }
}

/// Index sets and admissibility information shared by the LP solvers.
pub struct Preparation {
    pub set: OmegaSet,
    pub range: EpsilonRange,
    pub warnings: Vec<String>,
}

pub fn prepare(inst: &ProblemInstance, eps: f64, force_hxy: bool) -> Result<Preparation> {
    let basis = RowSpaceBasis::new(inst)?;
    let set = enumerate_omegas(&basis, inst)?;
    let mut warnings = Vec::new();
    if !set.skipped.is_empty() {
        warnings.push(format!(
            "skipped {} index sets with singular column blocks",
            set.skipped.len()
        ));
    }
    if !set.in_hxy() {
        if !force_hxy {
            return Err(Error::NotInHxy);
        }
        warnings.push("instance is not admissible; boundary base points are ignored".into());
    }
    let range = epsilon_range(&set)?;
    if eps > 0.0 && !range.contains(eps) {
        let msg = format!(
            "epsilon {eps} is outside the validity range (limit {:.6e}); the approximation guarantee does not apply",
            range.limit()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Preparation {
        set,
        range,
        warnings,
    })
}

pub fn solve_approx(inst: &ProblemInstance, eps: f64, opts: &SolveOptions) -> Result<DesignResult> {
    let eps = checked_epsilon(eps)?;
    let prep = prepare(inst, eps, opts.force_hxy)?;
    let records: Vec<&OmegaRecord> = prep.set.feasible().collect();
    let coefs: Vec<EntropyCoefficients> = records
        .iter()
        .map(|r| EntropyCoefficients::new(r, inst.log_base))
        .collect::<Result<_>>()?;

    let ny = inst.ny();
    let count = combination_count(records.len(), ny, opts.ordered);
    if count > opts.combination_cap as u128 {
        return Err(Error::CombinationCap {
            count,
            cap: opts.combination_cap as u128,
        });
    }
    let combos: Vec<Vec<usize>> = if opts.ordered {
        (0..ny).map(|_| 0..records.len()).multi_cartesian_product().collect()
    } else {
        (0..records.len()).combinations_with_replacement(ny).collect()
    };

    let outcomes: Vec<Option<(LpSolution, LpModel)>> = combos
        .par_iter()
        .map(|combo| {
            let recs: Vec<&OmegaRecord> = combo.iter().map(|&i| records[i]).collect();
            let cs: Vec<&EntropyCoefficients> = combo.iter().map(|&i| &coefs[i]).collect();
            let model = build_eta_lp(&recs, &cs, inst, eps)?;
            match solve_lp(&model) {
                Ok(sol) => Ok(Some((sol, model))),
                Err(LpError::Infeasible) => Ok(None),
                Err(e) => Err(Error::Lp(e)),
            }
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, &LpSolution, &LpModel)> = None;
    let mut iterations = 0;
    let mut feasible = 0;
    for (idx, outcome) in outcomes.iter().enumerate() {
        let Some((sol, model)) = outcome else { continue };
        feasible += 1;
        iterations += sol.iterations;
        if best.is_none_or(|(_, b, _)| sol.objective < b.objective - TIE_TOL) {
            best = Some((idx, sol, model));
        }
    }
    let (idx, sol, model) = best.ok_or(Error::NoFeasibleCombination)?;
    let chosen: Vec<&OmegaRecord> = combos[idx].iter().map(|&i| records[i]).collect();
    let mechanism = recover_mechanism(sol, model, &chosen, inst, eps)?;
    let report = check_privacy(&mechanism, inst, eps + TOL_PRIVACY);
    if !report.passes {
        return Err(Error::NumericalInconsistency(format!(
            "recovered mechanism violates the privacy constraint at outputs {:?}",
            report.violating
        )));
    }
    let exact_utility =
        mutual_information(mechanism.p_u.probs(), &mechanism.posteriors, inst.p_y(), inst.log_base)?;
    Ok(DesignResult {
        solver: "approx".into(),
        epsilon: eps,
        log_base: inst.log_base,
        combination: chosen.iter().map(|r| r.omega.clone()).collect(),
        approx_objective: Some(sol.objective),
        approx_utility: Some(inst.entropy_y() - sol.objective),
        exact_utility,
        mechanism,
        diagnostics: Diagnostics {
            epsilon_range: Some(prep.range),
            in_hxy: Some(prep.set.in_hxy()),
            combinations: combos.len() as u64,
            feasible_combinations: feasible,
            lp_iterations: iterations,
            grid_gap: None,
            warnings: prep.warnings,
        },
    })
}

/// The zero-leakage design: only null-space disclosure is allowed.
pub fn solve_perfect_privacy(inst: &ProblemInstance, opts: &SolveOptions) -> Result<DesignResult> {
    let mut res = solve_approx(inst, 0.0, opts)?;
    res.solver = "perfect".into();
    Ok(res)
}
