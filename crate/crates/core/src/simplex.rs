//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Solves `min c·x` subject to linear rows and `x >= 0`. The problems built in
//! this crate have at most a few hundred columns and a few dozen rows, so a
//! dense tableau is adequate and keeps pivoting fully deterministic.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tol::TOL_PIVOT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn keyword(self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Ge => "ge",
            Relation::Eq => "eq",
        }
    }

    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// `min objective·x` subject to `constraints` and `x >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(LpError::Malformed("no variables".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.check()?;
        Tableau::build(self).run(&self.objective)
    }

    /// Plain-text dump: a header, the objective, then one line per row.
    /// Coefficients use the shortest decimal that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lp v1");
        let _ = writeln!(out, "vars {}", self.num_vars());
        let _ = writeln!(out, "min {}", join(&self.objective));
        for c in &self.constraints {
            let _ = writeln!(out, "{} {} rhs {}", c.relation.keyword(), join(&c.coeffs), c.rhs);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LpError> {
        let bad = |msg: &str| LpError::Malformed(msg.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("lp v1") {
            return Err(bad("missing header"));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("vars "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("missing vars line"))?;
        let objective = lines
            .next()
            .and_then(|l| l.strip_prefix("min"))
            .map(parse_floats)
            .ok_or_else(|| bad("missing objective"))??;
        let mut lp = LinearProgram::new(objective);
        for line in lines {
            let (kw, rest) = line.split_once(' ').ok_or_else(|| bad(line))?;
            let relation = match kw {
                "le" => Relation::Le,
                "ge" => Relation::Ge,
                "eq" => Relation::Eq,
                _ => return Err(bad(line)),
            };
            let (coeffs, rhs) = rest.rsplit_once(" rhs ").ok_or_else(|| bad(line))?;
            let rhs: f64 = rhs.trim().parse().map_err(|_| bad(line))?;
            lp.add(parse_floats(coeffs)?, relation, rhs);
        }
        if lp.num_vars() != n {
            return Err(bad("objective length disagrees with vars"));
        }
        lp.check()?;
        Ok(lp)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_floats(s: &str) -> Result<Vec<f64>, LpError> {
    s.split_whitespace()
        .map(|t| t.parse().map_err(|_| LpError::Malformed(format!("bad number {t}"))))
        .collect()
}

struct Tableau {
    /// Row-major `rows x (cols + 1)`; the last entry of each row is the rhs.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    num_original: usize,
    artificial_start: usize,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        // Flip rows so every rhs is non-negative. A `>= 0` row becomes `<= 0`,
        // which its slack can cover without an artificial variable.
        let rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                let flip = c.rhs < 0.0 || (c.rhs == 0.0 && c.relation == Relation::Ge);
                if flip {
                    (
                        c.coeffs.iter().map(|v| -v).collect(),
                        c.relation.flipped(),
                        -c.rhs,
                    )
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs)
                }
            })
            .collect();
        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let m = rows.len();
        let cols = n + num_slack + num_art;
        let width = cols + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, n + num_slack);
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            row[..n].copy_from_slice(&coeffs);
            row[cols] = rhs;
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            data,
            rows: m,
            cols,
            num_original: n,
            artificial_start: n + num_slack,
            basis,
            iterations: 0,
        }
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    /// Reduced-cost row for `cost` (indexed by column); the last cell holds `-z`.
    fn cost_row(&self, cost: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut obj = vec![0.0; w];
        obj[..self.cols].copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * w..(i + 1) * w];
                for (o, a) in obj.iter_mut().zip(row) {
                    *o -= cb * a;
                }
            }
        }
        obj
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let w = self.width();
        let p = self.at(r, c);
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (o, pr) in obj.iter_mut().zip(&pivot_row) {
                *o -= f * pr;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Bland's rule: lowest-index improving column, then lowest-index basic
    /// variable among the tied ratio rows.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize, limit: usize) -> Result<(), LpError> {
        loop {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -TOL_PIVOT) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > TOL_PIVOT {
                    let ratio = self.rhs(i).max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(LpError::Unbounded);
            };
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            self.pivot(r, c, obj);
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width();
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }

    fn run(mut self, objective: &[f64]) -> Result<LpSolution, LpError> {
        let limit = 10_000 + 50 * (self.rows + self.cols);
        let scale = (0..self.rows).map(|i| self.rhs(i).abs()).fold(1.0, f64::max);

        if self.artificial_start < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            phase1[self.artificial_start..].fill(1.0);
            let mut obj = self.cost_row(&phase1);
            self.optimize(&mut obj, self.cols, limit)?;
            let infeasibility = -obj[self.cols];
            if infeasibility > 1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // Drive remaining (zero-level) artificials out of the basis; a row
            // with no usable pivot is linearly dependent on the others.
            let mut r = 0;
            while r < self.rows {
                if self.basis[r] >= self.artificial_start {
                    let col = (0..self.artificial_start)
                        .filter(|&j| self.at(r, j).abs() > TOL_PIVOT)
                        .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
                    match col {
                        Some(c) => {
                            self.pivot(r, c, &mut obj);
                            r += 1;
                        }
                        None => self.remove_row(r),
                    }
                } else {
                    r += 1;
                }
            }
        }

        let mut cost = vec![0.0; self.cols];
        cost[..self.num_original].copy_from_slice(objective);
        let mut obj = self.cost_row(&cost);
        let allowed = self.artificial_start;
        self.optimize(&mut obj, allowed, limit)?;

        let mut x = vec![0.0; self.num_original];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_original {
                x[b] = self.rhs(i).max(0.0);
            }
        }
        let objective_value = x.iter().zip(objective).map(|(a, c)| a * c).sum();
        Ok(LpSolution {
            x,
            objective: objective_value,
            iterations: self.iterations,
        })
    }
}
