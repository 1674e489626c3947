//! Named solvers behind a common interface, for front ends that pick a
//! method by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::invsolver::solve_invertible;
use crate::lp::{solve_approx, solve_perfect_privacy, DesignResult, SolveOptions};
use crate::oracle::{exact_search, raw_kernel_search, SearchConfig};
use crate::probkit::ProblemInstance;

/// Settings shared by every solver call.
#[derive(Debug, Clone)]
pub struct SolveContext {
    pub options: SolveOptions,
    pub search: SearchConfig,
    /// Grid steps per kernel column for the raw-kernel search.
    pub raw_resolution: usize,
}

impl Default for SolveContext {
    fn default() -> Self {
        Self {
            options: SolveOptions::default(),
            search: SearchConfig::default(),
            raw_resolution: 6,
        }
    }
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, inst: &ProblemInstance, eps: f64, ctx: &SolveContext) -> Result<DesignResult>;
}

struct Approx;
struct Perfect;
struct Oracle;
struct RawOracle;
struct Invertible;

impl Solver for Approx {
    fn name(&self) -> &'static str {
        "approx"
    }
    fn description(&self) -> &'static str {
        "first-order entropy expansion solved as a linear program per vertex combination"
    }
    fn solve(&self, inst: &ProblemInstance, eps: f64, ctx: &SolveContext) -> Result<DesignResult> {
        solve_approx(inst, eps, &ctx.options)
    }
}

impl Solver for Perfect {
    fn name(&self) -> &'static str {
        "perfect"
    }
    fn description(&self) -> &'static str {
        "zero-leakage design; ignores epsilon"
    }
    fn solve(&self, inst: &ProblemInstance, _eps: f64, ctx: &SolveContext) -> Result<DesignResult> {
        solve_perfect_privacy(inst, &ctx.options)
    }
}

impl Solver for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn description(&self) -> &'static str {
        "grid search over perturbed vertices with exact entropies"
    }
    fn solve(&self, inst: &ProblemInstance, eps: f64, ctx: &SolveContext) -> Result<DesignResult> {
        exact_search(inst, eps, &ctx.search)
    }
}

impl Solver for RawOracle {
    fn name(&self) -> &'static str {
        "oracle-raw"
    }
    fn description(&self) -> &'static str {
        "coarse brute force over kernels P(U|Y)"
    }
    fn solve(&self, inst: &ProblemInstance, eps: f64, ctx: &SolveContext) -> Result<DesignResult> {
        let u = ctx.search.u_cardinality.unwrap_or(inst.ny());
        raw_kernel_search(inst, eps, u, ctx.raw_resolution, ctx.search.cap)
    }
}

impl Solver for Invertible {
    fn name(&self) -> &'static str {
        "invertible"
    }
    fn description(&self) -> &'static str {
        "closed-form binary design for square invertible leakage"
    }
    fn solve(&self, inst: &ProblemInstance, eps: f64, _ctx: &SolveContext) -> Result<DesignResult> {
        solve_invertible(inst, eps)?.into_design_result(inst, eps)
    }
}

#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn Solver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Approx));
        r.register(Arc::new(Perfect));
        r.register(Arc::new(Oracle));
        r.register(Arc::new(RawOracle));
        r.register(Arc::new(Invertible));
        r
    }

    pub fn register(&mut self, solver: Arc<dyn Solver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Solver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
