//! Sweep orchestration: solves every (instance, epsilon) point, re-validates
//! each mechanism and assembles the result document and table rows.

use std::collections::BTreeMap;

use l1priv::lp::RECOVERY_TOL;
use l1priv::metrics::TradeoffPoint;
use l1priv::oracle::{sandwich_check, SandwichReport};
use l1priv::rowspace::{enumerate_omegas, epsilon_range, EpsilonRange, OmegaClass, RowSpaceBasis};
use l1priv::tol::TOL_PRIVACY;
use l1priv::{
    check_privacy, DesignResult, Error, ErrorKind, ProblemInstance, SolveContext, SolverRegistry,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LabeledInstance, RunConfig};
use crate::table::Row;
use crate::CliError;

/// Column priority when picking the mechanism that metrics describe.
const PRIMARY_ORDER: [&str; 5] = ["approx", "invertible", "oracle", "oracle-raw", "perfect"];

pub struct Plan {
    pub instances: Vec<LabeledInstance>,
    pub epsilons: Vec<f64>,
    pub solvers: Vec<String>,
    /// Record out-of-scope solver failures instead of aborting.
    pub lenient: bool,
    pub sandwich: bool,
    pub ctx: SolveContext,
}

impl Plan {
    pub fn from_config(cfg: &RunConfig, registry: &SolverRegistry) -> Result<Self, CliError> {
        let mut ctx = SolveContext::default();
        ctx.options.force_hxy = cfg.force_hxy;
        ctx.options.ordered = cfg.ordered;
        if let Some(cap) = cfg.combination_cap {
            ctx.options.combination_cap = cap;
        }
        ctx.search = cfg.search();
        Ok(Self {
            instances: cfg.instances()?,
            epsilons: cfg.epsilons()?,
            solvers: cfg.solver.names(registry)?,
            lenient: cfg.solver.is_all(),
            sandwich: false,
            ctx,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct PointReport {
    pub point: usize,
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub epsilon_range: Option<EpsilonRange>,
    pub in_hxy: Option<bool>,
    pub results: BTreeMap<String, DesignResult>,
    /// Solvers that declined the point, with the reason.
    pub skipped: BTreeMap<String, String>,
    pub metrics: Option<TradeoffPoint>,
    pub sandwich: Option<SandwichReport>,
}

#[derive(Debug, Serialize)]
pub struct RunDocument<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub points: Vec<PointReport>,
}

fn context(alpha: Option<f64>, eps: f64) -> String {
    match alpha {
        Some(a) => format!("alpha {a}, epsilon {eps}"),
        None => format!("epsilon {eps}"),
    }
}

/// Range and admissibility when the row-space decomposition applies.
fn geometry(inst: &ProblemInstance) -> (Option<EpsilonRange>, Option<bool>) {
    let Ok(basis) = RowSpaceBasis::new(inst) else {
        return (None, None);
    };
    let Ok(set) = enumerate_omegas(&basis, inst) else {
        return (None, None);
    };
    (epsilon_range(&set).ok(), Some(set.in_hxy()))
}

fn revalidate(res: &DesignResult, inst: &ProblemInstance, eps: f64) -> Result<(), Error> {
    res.mechanism.validate(inst, eps, RECOVERY_TOL)?;
    let report = check_privacy(&res.mechanism, inst, eps + TOL_PRIVACY);
    if !report.passes {
        return Err(Error::NumericalInconsistency(format!(
            "{} mechanism violates the privacy constraint at outputs {:?}",
            res.solver, report.violating
        )));
    }
    Ok(())
}

fn solve_point(
    point: usize,
    item: &LabeledInstance,
    eps: f64,
    plan: &Plan,
    registry: &SolverRegistry,
) -> Result<(PointReport, Row), CliError> {
    let inst = &item.instance;
    let ctx_text = context(item.alpha, eps);
    let core = |source: Error| CliError::Core {
        context: ctx_text.clone(),
        source,
    };
    let (range, in_hxy) = geometry(inst);
    let mut results = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for name in &plan.solvers {
        let solver = registry.get(name).map_err(core)?;
        match solver.solve(inst, eps, &plan.ctx) {
            Ok(res) => {
                revalidate(&res, inst, eps).map_err(core)?;
                results.insert(name.clone(), res);
            }
            Err(e) if plan.lenient && e.kind() != ErrorKind::Numerical => {
                skipped.insert(name.clone(), e.to_string());
            }
            Err(e) => return Err(core(e)),
        }
    }
    let sandwich = if plan.sandwich {
        Some(sandwich_check(inst, eps, &plan.ctx.search, 5e-3).map_err(core)?)
    } else {
        None
    };
    let primary = PRIMARY_ORDER.iter().find_map(|name| results.get(*name));
    let metrics = primary
        .map(|r: &DesignResult| {
            TradeoffPoint::evaluate(&r.mechanism, inst).map(|mut m| {
                m.epsilon = Some(eps);
                m.alpha = item.alpha;
                m
            })
        })
        .transpose()
        .map_err(core)?;
    let utility = |name: &str| results.get(name).map(|r| r.exact_utility);
    let row = Row {
        point,
        epsilon: eps,
        alpha: item.alpha,
        approx_utility: results.get("approx").and_then(|r| r.approx_utility),
        exact_utility: primary.map(|r| r.exact_utility),
        perfect_utility: utility("perfect"),
        oracle_utility: utility("oracle").or(utility("oracle-raw")),
        invertible_utility: utility("invertible"),
        map_error: metrics.as_ref().map(|m| m.map_error),
        mmse_y_norm: metrics.as_ref().and_then(|m| m.mmse_y_norm),
        mmse_x_norm: metrics.as_ref().and_then(|m| m.mmse_x_norm),
        eps1: range.map(|r| r.eps1),
        eps2: range.map(|r| r.eps2),
        in_hxy,
    };
    log::info!(
        "point {point} ({ctx_text}): {} solved, {} skipped",
        results.len(),
        skipped.len()
    );
    Ok((
        PointReport {
            point,
            alpha: item.alpha,
            epsilon: eps,
            epsilon_range: range,
            in_hxy,
            results,
            skipped,
            metrics,
            sandwich,
        },
        row,
    ))
}

/// Points are instances in order, each crossed with every epsilon. Results
/// come back in point order regardless of scheduling.
pub fn run_plan(plan: &Plan, registry: &SolverRegistry) -> Result<(Vec<PointReport>, Vec<Row>), CliError> {
    let points: Vec<(usize, &LabeledInstance, f64)> = plan
        .instances
        .iter()
        .flat_map(|inst| plan.epsilons.iter().map(move |&eps| (inst, eps)))
        .enumerate()
        .map(|(k, (inst, eps))| (k, inst, eps))
        .collect();
    let solved: Vec<(PointReport, Row)> = points
        .par_iter()
        .map(|&(k, inst, eps)| solve_point(k, inst, eps, plan, registry))
        .collect::<Result<_, _>>()?;
    Ok(solved.into_iter().unzip())
}

#[derive(Debug, Serialize)]
pub struct OmegaSummary {
    /// 1-based symbol indices.
    pub omega: String,
    pub base_point: Vec<f64>,
    pub class: OmegaClass,
    pub sigma_max: f64,
    pub radius: f64,
}

#[derive(Debug, Serialize)]
pub struct RangeReport {
    pub alpha: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub limit: Option<f64>,
    pub in_hxy: bool,
    pub omegas: Vec<OmegaSummary>,
    pub skipped: Vec<String>,
}

pub fn range_report(item: &LabeledInstance) -> Result<RangeReport, CliError> {
    let inst = &item.instance;
    let core = |source: Error| CliError::Core {
        context: item.alpha.map_or("instance".into(), |a| format!("alpha {a}")),
        source,
    };
    let basis = RowSpaceBasis::new(inst).map_err(core)?;
    let set = enumerate_omegas(&basis, inst).map_err(core)?;
    let range = epsilon_range(&set).ok();
    Ok(RangeReport {
        alpha: item.alpha,
        eps1: range.map(|r| r.eps1),
        eps2: range.map(|r| r.eps2),
        limit: range.map(|r| r.limit()),
        in_hxy: set.in_hxy(),
        omegas: set
            .records
            .iter()
            .map(|r| OmegaSummary {
                omega: r.omega.to_string(),
                base_point: r.base_point.clone(),
                class: r.class,
                sigma_max: r.sigma_max,
                radius: r.radius,
            })
            .collect(),
        skipped: set.skipped.iter().map(|o| o.to_string()).collect(),
    })
}
