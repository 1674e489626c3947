//! Grid-search reference solvers for small instances.
//!
//! The main search pools candidate posteriors `t + eps H j` for every index set
//! with an invertible block and every `j` on a grid over the perturbation
//! ball, then picks output weights by an LP over the exact entropies. Every
//! candidate is a valid posterior, so the result is feasible and its utility
//! is a lower bound on the optimum. A second search walks a coarse grid of
//! raw kernels `P_{U|Y}` without using the vertex reduction at all.

use std::collections::BTreeSet;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{DesignResult, Diagnostics};
use crate::probkit::{
    check_privacy, entropy_of, mutual_information, Distribution, Mechanism, ProblemInstance,
};
use crate::rowspace::{enumerate_omegas, Omega, OmegaRecord, RowSpaceBasis};
use crate::simplex::{LinearProgram, Relation};
use crate::tol::TOL_PRIVACY;

/// Shape of the per-output privacy constraint on `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ball {
    /// `||J||_1 <= 1`
    #[default]
    L1,
    /// `sum J^2 / P_X <= 1`
    ChiSquare,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Grid points per free coordinate of `J`.
    pub grid_resolution: usize,
    pub refinement_rounds: usize,
    /// Output alphabet size; defaults to `|Y|`.
    pub u_cardinality: Option<usize>,
    /// Upper bound on the number of candidate posteriors evaluated.
    pub cap: u64,
    pub ball: Ball,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 21,
            refinement_rounds: 3,
            u_cardinality: None,
            cap: 20_000_000,
            ball: Ball::L1,
        }
    }
}

type Point = Vec<f64>;

fn ball_norm(j: &[f64], ball: Ball, p_x: &[f64]) -> f64 {
    match ball {
        Ball::L1 => j.iter().map(|v| v.abs()).sum(),
        Ball::ChiSquare => j.iter().zip(p_x).map(|(v, p)| v * v / p).sum::<f64>().sqrt(),
    }
}

/// Completes the free coordinates with a last entry so that `1^T J = 0`.
fn complete(free: &[f64]) -> Point {
    let mut j = free.to_vec();
    j.push(-free.iter().sum::<f64>());
    j
}

fn key(j: &[f64]) -> Vec<i64> {
    j.iter().map(|v| (v * 1e12).round() as i64).collect()
}

/// Points of the ball from free coordinates; points outside are replaced by
/// their radial projection onto the boundary, and nonzero interior points
/// also contribute their projection.
fn admit(free: Vec<Vec<f64>>, ball: Ball, p_x: &[f64], seen: &mut BTreeSet<Vec<i64>>) -> Vec<Point> {
    let mut out = Vec::new();
    let mut push = |j: Point, out: &mut Vec<Point>| {
        if seen.insert(key(&j)) {
            out.push(j);
        }
    };
    for f in free {
        let j = complete(&f);
        let norm = ball_norm(&j, ball, p_x);
        if norm > 1e-15 {
            push(j.iter().map(|v| v / norm).collect(), &mut out);
        }
        if norm <= 1.0 + 1e-12 {
            push(j, &mut out);
        }
    }
    out
}

fn radius(ball: Ball, p_x: &[f64]) -> f64 {
    match ball {
        Ball::L1 => 0.5,
        Ball::ChiSquare => p_x.iter().fold(0.0_f64, |m, p| m.max(p.sqrt())),
    }
}

fn base_grid(nx: usize, cfg: &SearchConfig, p_x: &[f64], seen: &mut BTreeSet<Vec<i64>>) -> Vec<Point> {
    let r = radius(cfg.ball, p_x);
    let step = 2.0 * r / (cfg.grid_resolution - 1) as f64;
    let axis: Vec<f64> = (0..cfg.grid_resolution).map(|k| -r + k as f64 * step).collect();
    let free = (0..nx - 1).map(|_| axis.iter().copied()).multi_cartesian_product().collect();
    admit(free, cfg.ball, p_x, seen)
}

fn refine_around(
    centers: &[Point],
    step: f64,
    cfg: &SearchConfig,
    p_x: &[f64],
    seen: &mut BTreeSet<Vec<i64>>,
) -> Vec<Point> {
    let offsets: Vec<f64> = (-4..=4).map(|m| m as f64 * step).collect();
    let mut free = Vec::new();
    for c in centers {
        let head = &c[..c.len() - 1];
        for d in (0..head.len()).map(|_| offsets.iter().copied()).multi_cartesian_product() {
            free.push(head.iter().zip(&d).map(|(a, b)| a + b).collect());
        }
    }
    admit(free, cfg.ball, p_x, seen)
}

struct Candidate {
    omega: usize,
    j: Point,
    posterior: Vec<f64>,
    cost: f64,
}

fn candidates(
    records: &[OmegaRecord],
    points: &[Point],
    inst: &ProblemInstance,
    eps: f64,
) -> Vec<Candidate> {
    let ny = inst.ny();
    records
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, rec)| {
            points.iter().filter_map(move |j| {
                let v = rec.vertex(j, eps, ny);
                if v.iter().any(|x| *x < 0.0) {
                    return None;
                }
                Some(Candidate {
                    omega: k,
                    j: j.clone(),
                    cost: entropy_of(&v, inst.log_base),
                    posterior: v,
                })
            })
        })
        .collect()
}

/// Weights over the pooled candidates minimizing expected entropy.
fn pooled_lp(cands: &[Candidate], inst: &ProblemInstance) -> Result<(f64, Vec<(usize, f64)>)> {
    let mut lp = LinearProgram::new(cands.iter().map(|c| c.cost).collect());
    for y in 0..inst.ny() {
        lp.add(
            cands.iter().map(|c| c.posterior[y]).collect(),
            Relation::Eq,
            inst.p_y()[y],
        );
    }
    let sol = lp.solve()?;
    let support = sol
        .x
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| (i, *w))
        .collect();
    Ok((sol.objective, support))
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {eps}")))
    }
}

/// Best mechanism over the pooled grid of posteriors, with local refinement.
pub fn exact_search(inst: &ProblemInstance, eps: f64, cfg: &SearchConfig) -> Result<DesignResult> {
    check_epsilon(eps)?;
    if cfg.grid_resolution < 2 {
        return Err(Error::InvalidParameter("grid_resolution must be at least 2".into()));
    }
    let (nx, ny) = (inst.nx(), inst.ny());
    let u_card = cfg.u_cardinality.unwrap_or(ny);
    if u_card == 0 || u_card > ny {
        return Err(Error::InvalidParameter(format!(
            "u_cardinality must lie in 1..={ny}, got {u_card}"
        )));
    }
    let basis = RowSpaceBasis::new(inst)?;
    let records = enumerate_omegas(&basis, inst)?.records;
    let p_x = inst.p_x().probs();

    let per_round = (cfg.grid_resolution as u128).saturating_pow(nx as u32 - 1) * 2;
    let estimated = per_round * records.len() as u128 * (cfg.refinement_rounds as u128 + 1);
    if estimated > cfg.cap as u128 {
        return Err(Error::TooLarge {
            estimated,
            cap: cfg.cap as u128,
        });
    }

    let mut seen = BTreeSet::new();
    let mut points = if eps == 0.0 {
        vec![vec![0.0; nx]]
    } else {
        base_grid(nx, cfg, p_x, &mut seen)
    };
    let mut cands = candidates(&records, &points, inst, eps);
    let (mut cost, mut support) = pooled_lp(&cands, inst)?;
    let mut gap = 0.0;
    if eps > 0.0 {
        let mut step = 2.0 * radius(cfg.ball, p_x) / (cfg.grid_resolution - 1) as f64;
        for _ in 0..cfg.refinement_rounds {
            step /= 2.0;
            let centers: Vec<Point> = support.iter().map(|(i, _)| cands[*i].j.clone()).collect();
            points = refine_around(&centers, step, cfg, p_x, &mut seen);
            cands.extend(candidates(&records, &points, inst, eps));
            let (c, s) = pooled_lp(&cands, inst)?;
            gap = (cost - c).max(0.0);
            cost = c;
            support = s;
        }
    }
    if support.len() > u_card {
        return Err(Error::InvalidParameter(format!(
            "best grid design uses {} outputs, above u_cardinality {u_card}",
            support.len()
        )));
    }

    let total: f64 = support.iter().map(|(_, w)| w).sum();
    let mut masses: Vec<f64> = support.iter().map(|(_, w)| w / total).collect();
    let mut posteriors = Vec::with_capacity(u_card);
    let mut perturbations = Vec::with_capacity(u_card);
    let mut combination = Vec::with_capacity(u_card);
    for (i, _) in &support {
        let c = &cands[*i];
        posteriors.push(Distribution::new(c.posterior.clone())?);
        perturbations.push(if eps > 0.0 { c.j.clone() } else { vec![0.0; nx] });
        combination.push(records[c.omega].omega.clone());
    }
    // Pad to the requested alphabet with unused outputs.
    while masses.len() < u_card {
        masses.push(0.0);
        posteriors.push(inst.p_y().clone());
        perturbations.push(vec![0.0; nx]);
        combination.push(Omega::new(Vec::new()));
    }
    let mechanism = Mechanism::new(Distribution::new(masses)?, posteriors, perturbations)?;
    finish(inst, eps, mechanism, combination, Some(gap), cands.len())
}

fn finish(
    inst: &ProblemInstance,
    eps: f64,
    mechanism: Mechanism,
    combination: Vec<Omega>,
    grid_gap: Option<f64>,
    evaluated: usize,
) -> Result<DesignResult> {
    mechanism.validate(inst, eps, 1e-7).map_err(|e| {
        Error::NumericalInconsistency(format!("grid-search mechanism fails validation: {e}"))
    })?;
    let report = check_privacy(&mechanism, inst, eps + TOL_PRIVACY);
    if !report.passes {
        return Err(Error::NumericalInconsistency(format!(
            "grid-search mechanism violates privacy at outputs {:?}",
            report.violating
        )));
    }
    let exact_utility =
        mutual_information(mechanism.p_u.probs(), &mechanism.posteriors, inst.p_y(), inst.log_base)?;
    Ok(DesignResult {
        solver: "oracle".into(),
        epsilon: eps,
        log_base: inst.log_base,
        mechanism,
        combination,
        approx_objective: None,
        approx_utility: None,
        exact_utility,
        diagnostics: Diagnostics {
            combinations: evaluated as u64,
            feasible_combinations: evaluated as u64,
            grid_gap,
            ..Diagnostics::default()
        },
    })
}

/// Brute force over kernels whose columns lie on a simplex grid with
/// `resolution` steps; no use of the vertex structure.
pub fn raw_kernel_search(
    inst: &ProblemInstance,
    eps: f64,
    u_cardinality: usize,
    resolution: usize,
    cap: u64,
) -> Result<DesignResult> {
    check_epsilon(eps)?;
    let ny = inst.ny();
    if u_cardinality < 1 || resolution < 1 {
        return Err(Error::InvalidParameter("u_cardinality and resolution must be positive".into()));
    }
    let columns: Vec<Vec<f64>> = compositions(resolution, u_cardinality)
        .into_iter()
        .map(|c| c.iter().map(|&k| k as f64 / resolution as f64).collect())
        .collect();
    let estimated = (columns.len() as u128).saturating_pow(ny as u32);
    if estimated > cap as u128 {
        return Err(Error::TooLarge {
            estimated,
            cap: cap as u128,
        });
    }
    let p_y = inst.p_y().probs();
    let leak = inst.leakage();
    let p_x = inst.p_x().probs();
    let count = columns.len();

    // Minus the conditional entropy H(Y|U) of a private kernel; the kernel
    // index encodes one grid column per Y symbol.
    let evaluate = |code: usize| -> Option<f64> {
        let mut joint = vec![vec![0.0; ny]; u_cardinality];
        let mut rest = code;
        for y in 0..ny {
            let col = &columns[rest % count];
            rest /= count;
            for u in 0..u_cardinality {
                joint[u][y] = col[u] * p_y[y];
            }
        }
        let mut info = 0.0;
        for row in &joint {
            let pu: f64 = row.iter().sum();
            if pu <= 0.0 {
                continue;
            }
            let post: Vec<f64> = row.iter().map(|v| v / pu).collect();
            let px_u = leak.apply(&post);
            let dev: f64 = px_u.iter().zip(p_x).map(|(a, b)| (a - b).abs()).sum();
            if dev > eps + TOL_PRIVACY {
                return None;
            }
            info -= pu * entropy_of(&post, inst.log_base);
        }
        Some(info)
    };
    let total = count.pow(ny as u32);
    let best = (0..total)
        .into_par_iter()
        .filter_map(|code| evaluate(code).map(|v| (v, code)))
        .reduce_with(|a, b| {
            if b.0 > a.0 + 1e-12 || ((b.0 - a.0).abs() <= 1e-12 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .ok_or(Error::NoFeasibleCombination)?;

    let mut rest = best.1;
    let mut joint = vec![vec![0.0; ny]; u_cardinality];
    for y in 0..ny {
        let col = &columns[rest % count];
        rest /= count;
        for u in 0..u_cardinality {
            joint[u][y] = col[u] * p_y[y];
        }
    }
    let mut masses = Vec::new();
    let mut posteriors = Vec::new();
    let mut perturbations = Vec::new();
    for row in joint {
        let pu: f64 = row.iter().sum();
        let post = if pu > 0.0 {
            row.iter().map(|v| v / pu).collect()
        } else {
            p_y.to_vec()
        };
        let px_u = leak.apply(&post);
        perturbations.push(
            px_u.iter()
                .zip(p_x)
                .map(|(a, b)| if eps > 0.0 { (a - b) / eps } else { 0.0 })
                .collect(),
        );
        masses.push(pu);
        posteriors.push(Distribution::new(post)?);
    }
    let mechanism = Mechanism::new(Distribution::new(masses)?, posteriors, perturbations)?;
    let mut res = finish(inst, eps, mechanism, Vec::new(), None, total)?;
    res.solver = "oracle-raw".into();
    Ok(res)
}

/// All vectors of `parts` non-negative integers summing to `total`, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    /// Chi-square constraint at `epsilon`.
    pub chi2_at_eps: f64,
    /// l1 constraint at `epsilon`.
    pub l1_at_eps: f64,
    /// Chi-square constraint at `epsilon_prime = epsilon / sqrt(min P_X)`.
    pub chi2_at_eps_prime: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub fn sandwich_check(
    inst: &ProblemInstance,
    eps: f64,
    cfg: &SearchConfig,
    tolerance: f64,
) -> Result<SandwichReport> {
    let eps_prime = eps / inst.p_x().min().sqrt();
    let chi2 = SearchConfig {
        ball: Ball::ChiSquare,
        ..cfg.clone()
    };
    let l1 = SearchConfig {
        ball: Ball::L1,
        ..cfg.clone()
    };
    let g = exact_search(inst, eps, &chi2)?.exact_utility;
    let f = exact_search(inst, eps, &l1)?.exact_utility;
    let g_prime = exact_search(inst, eps_prime, &chi2)?.exact_utility;
    Ok(SandwichReport {
        epsilon: eps,
        epsilon_prime: eps_prime,
        chi2_at_eps: g,
        l1_at_eps: f,
        chi2_at_eps_prime: g_prime,
        tolerance,
        holds: g <= f + tolerance && f <= g_prime + tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_approx, solve_perfect_privacy, SolveOptions};
    use crate::probkit::{Channel, LogBase};

    fn example2() -> ProblemInstance {
        ProblemInstance::new(
            Channel::from_rows(&[vec![0.3, 0.8, 0.5, 0.4], vec![0.7, 0.2, 0.5, 0.6]]).unwrap(),
            Distribution::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap(),
            LogBase::Two,
        )
        .unwrap()
    }

    #[test]
    fn zero_leakage_matches_perfect_privacy() {
        let inst = example2();
        let oracle = exact_search(&inst, 0.0, &SearchConfig::default()).unwrap();
        let lp = solve_perfect_privacy(&inst, &SolveOptions::default()).unwrap();
        assert_close!(oracle.exact_utility, lp.exact_utility, 1e-3);
        assert_close!(oracle.exact_utility, 0.91526, 1e-4);
    }

    #[test]
    fn dominates_the_approximation() {
        let inst = example2();
        let oracle = exact_search(&inst, 1e-2, &SearchConfig::default()).unwrap();
        let approx = solve_approx(&inst, 1e-2, &SolveOptions::default()).unwrap();
        assert!(oracle.exact_utility >= approx.exact_utility - 1e-9);
        assert!(oracle.diagnostics.grid_gap.unwrap() >= 0.0);
    }

    #[test]
    fn refinement_never_hurts() {
        let inst = example2();
        let coarse = SearchConfig {
            grid_resolution: 5,
            refinement_rounds: 0,
            ..SearchConfig::default()
        };
        let fine = SearchConfig {
            grid_resolution: 5,
            refinement_rounds: 3,
            ..SearchConfig::default()
        };
        let a = exact_search(&inst, 2e-2, &coarse).unwrap().exact_utility;
        let b = exact_search(&inst, 2e-2, &fine).unwrap().exact_utility;
        assert!(b >= a - 1e-12);
    }

    #[test]
    fn too_large_is_reported() {
        let cfg = SearchConfig {
            cap: 10,
            ..SearchConfig::default()
        };
        assert!(matches!(exact_search(&example2(), 0.01, &cfg), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn raw_kernel_search_stays_below_pooled() {
        let inst = ProblemInstance::new(
            Channel::from_rows(&[vec![0.3, 0.8, 0.5], vec![0.7, 0.2, 0.5]]).unwrap(),
            Distribution::new(vec![2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]).unwrap(),
            LogBase::Two,
        )
        .unwrap();
        let eps = 0.2;
        let raw = raw_kernel_search(&inst, eps, 3, 8, 10_000_000).unwrap();
        let pooled = exact_search(&inst, eps, &SearchConfig::default()).unwrap();
        assert!(raw.exact_utility > 0.0);
        assert!(raw.exact_utility <= pooled.exact_utility + 1e-9);
    }

    #[test]
    fn compositions_enumerate_simplex_grid() {
        let c = compositions(3, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 0, 3]);
        assert!(c.iter().all(|v| v.iter().sum::<usize>() == 3));
    }

    #[test]
    fn sandwich_at_zero_collapses() {
        let r = sandwich_check(&example2(), 0.0, &SearchConfig::default(), 1e-9).unwrap();
        assert_close!(r.chi2_at_eps, r.l1_at_eps, 1e-12);
        assert_close!(r.l1_at_eps, r.chi2_at_eps_prime, 1e-12);
        assert!(r.holds);
    }
}
