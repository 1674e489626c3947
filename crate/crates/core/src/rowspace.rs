//! Row-space basis of the leakage matrix, index sets `Omega` and the extreme
//! points of the per-output posterior polytopes.
//!
//! For an index set `Omega` of `|X|` columns, the base point is
//! `t = M_Omega^-1 M P_Y` and the perturbation map is
//! `H = M_Omega^-1 M_head P_head^-1`, where `head` is a set of leakage columns
//! with an invertible block. Both are invariant under a change of row basis.

use std::fmt;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::probkit::{Distribution, ProblemInstance};
use crate::tol::{TOL_NONNEG, TOL_POS, TOL_SINGULAR};

pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

pub(crate) fn min_singular(m: &DMatrix<f64>) -> f64 {
    singular_values(m).min()
}

pub(crate) fn max_singular(m: &DMatrix<f64>) -> f64 {
    singular_values(m).max()
}

/// Sorted set of `|X|` column indices (0-based). Displays 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Omega(Vec<usize>);

impl Omega {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Omega {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().map(|i| i + 1).join(","))
    }
}

fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_columns(idx)
}

/// Orthonormal basis `M` of the leakage row space plus an invertible head block.
#[derive(Debug, Clone)]
pub struct RowSpaceBasis {
    m: DMatrix<f64>,
    column_perm: Vec<usize>,
    head_inverse: DMatrix<f64>,
    m_head: DMatrix<f64>,
    m_head_inverse: DMatrix<f64>,
}

impl RowSpaceBasis {
    /// Right singular vectors of the leakage matrix, ordered by decreasing
    /// singular value, with a greedy max-volume choice of head columns.
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let leak = inst.leakage().matrix();
        let nx = inst.nx();
        let svd = leak.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let rank = svd.singular_values.iter().filter(|s| **s > TOL_SINGULAR).count();
        if rank < nx {
            return Err(Error::RankDeficient { rank, expected: nx });
        }
        let order: Vec<usize> = (0..svd.singular_values.len())
            .sorted_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]))
            .take(nx)
            .collect();
        let m = v_t.select_rows(&order);
        Self::with_basis(inst, m)
    }

    /// Uses `m` as the basis; its rows must span the leakage row space.
    pub fn with_basis(inst: &ProblemInstance, m: DMatrix<f64>) -> Result<Self> {
        let leak = inst.leakage().matrix();
        let (nx, ny) = (inst.nx(), inst.ny());
        if m.nrows() != nx || m.ncols() != ny {
            return Err(Error::DimensionMismatch(format!(
                "basis is {}x{}, expected {nx}x{ny}",
                m.nrows(),
                m.ncols()
            )));
        }
        let head = max_volume_columns(leak, nx);
        let p_head = columns(leak, &head);
        if min_singular(&p_head) <= TOL_SINGULAR {
            return Err(Error::HeadSingular);
        }
        let m_head = columns(&m, &head);
        if min_singular(&m_head) <= TOL_SINGULAR {
            return Err(Error::HeadSingular);
        }
        let head_inverse = p_head.try_inverse().ok_or(Error::HeadSingular)?;
        let m_head_inverse = m_head.clone().try_inverse().ok_or(Error::HeadSingular)?;
        let column_perm = head
            .iter()
            .copied()
            .chain((0..ny).filter(|y| !head.contains(y)))
            .collect();
        Ok(Self {
            m,
            column_perm,
            head_inverse,
            m_head,
            m_head_inverse,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Column order of `Y` whose first `|X|` entries form the head block.
    pub fn column_perm(&self) -> &[usize] {
        &self.column_perm
    }

    pub fn head(&self) -> &[usize] {
        &self.column_perm[..self.m.nrows()]
    }

    pub fn head_inverse(&self) -> &DMatrix<f64> {
        &self.head_inverse
    }

    pub fn m_head(&self) -> &DMatrix<f64> {
        &self.m_head
    }

    pub fn m_head_inverse(&self) -> &DMatrix<f64> {
        &self.m_head_inverse
    }

    /// Builds the record for one index set, or `None` when `M_Omega` is singular.
    pub fn record(&self, inst: &ProblemInstance, omega: Omega) -> Result<Option<OmegaRecord>> {
        let nx = inst.nx();
        if omega.len() != nx || omega.indices().iter().any(|&i| i >= inst.ny()) {
            return Err(Error::InvalidParameter(format!(
                "omega {omega} must hold {nx} distinct indices below {}",
                inst.ny()
            )));
        }
        let m_omega = columns(&self.m, omega.indices());
        if min_singular(&m_omega) < TOL_SINGULAR {
            return Ok(None);
        }
        let Some(m_omega_inverse) = m_omega.try_inverse() else {
            return Ok(None);
        };
        let t = &m_omega_inverse * (&self.m * inst.p_y().to_dvector());
        let h = &m_omega_inverse * &self.m_head * &self.head_inverse;
        let Some(g) = h.clone().try_inverse() else {
            return Ok(None);
        };
        let base_point: Vec<f64> = t.iter().copied().collect();
        let min_t = base_point.iter().copied().fold(f64::INFINITY, f64::min);
        let class = if min_t > TOL_POS {
            OmegaClass::FeasiblePositive
        } else if min_t < -TOL_POS {
            OmegaClass::Infeasible
        } else {
            OmegaClass::BoundaryZero
        };
        let sigma_max = max_singular(&h);
        let radius = perturbation_radius(&h);
        Ok(Some(OmegaRecord {
            omega,
            m_omega_inverse,
            base_point,
            perturbation_map: h,
            perturbation_inverse: g,
            class,
            sigma_max,
            radius,
        }))
    }
}

/// Greedy max-volume selection: repeatedly take the column with the largest
/// residual norm and project it out of the rest. Returned ascending.
fn max_volume_columns(a: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let mut residual = a.clone();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let best = (0..residual.ncols())
            .filter(|j| !chosen.contains(j))
            .max_by(|&i, &j| {
                residual.column(i).norm().total_cmp(&residual.column(j).norm()).then(j.cmp(&i))
            });
        let Some(best) = best else { break };
        chosen.push(best);
        let norm = residual.column(best).norm();
        if norm <= TOL_SINGULAR {
            continue;
        }
        let q = residual.column(best) / norm;
        for j in 0..residual.ncols() {
            let proj = q.dot(&residual.column(j));
            let mut col = residual.column_mut(j);
            col.axpy(-proj, &q, 1.0);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OmegaClass {
    FeasiblePositive,
    BoundaryZero,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct OmegaRecord {
    pub omega: Omega,
    pub m_omega_inverse: DMatrix<f64>,
    /// `t = M_Omega^-1 M P_Y`
    pub base_point: Vec<f64>,
    /// `H = M_Omega^-1 M_head P_head^-1`
    pub perturbation_map: DMatrix<f64>,
    /// `H^-1`, mapping vertex offsets back to perturbations.
    pub perturbation_inverse: DMatrix<f64>,
    pub class: OmegaClass,
    pub sigma_max: f64,
    pub radius: f64,
}

impl OmegaRecord {
    pub fn is_feasible(&self) -> bool {
        self.class == OmegaClass::FeasiblePositive
    }

    /// `t + eps H j` on the positions of `omega`, unchecked.
    pub fn vertex_entries(&self, j: &[f64], eps: f64) -> Vec<f64> {
        let hj = &self.perturbation_map * DVector::from_column_slice(j);
        self.base_point
            .iter()
            .zip(hj.iter())
            .map(|(t, d)| t + eps * d)
            .collect()
    }

    /// The full vertex over `Y` with zeros outside `omega`, unchecked.
    pub fn vertex(&self, j: &[f64], eps: f64, ny: usize) -> Vec<f64> {
        let mut v = vec![0.0; ny];
        for (&y, e) in self.omega.indices().iter().zip(self.vertex_entries(j, eps)) {
            v[y] = e;
        }
        v
    }
}

/// Extreme point of the posterior polytope for perturbation `j` at leakage `eps`.
pub fn extreme_point(rec: &OmegaRecord, j: &[f64], eps: f64, ny: usize) -> Result<Distribution> {
    if j.len() != rec.base_point.len() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation has {} entries, expected {}",
            j.len(),
            rec.base_point.len()
        )));
    }
    if rec.class == OmegaClass::Infeasible {
        return Err(Error::InfeasibleOmega {
            omega: rec.omega.indices().to_vec(),
        });
    }
    let v = rec.vertex(j, eps, ny);
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, v)| **v < -TOL_NONNEG) {
        return Err(Error::NegativeEntry {
            omega: rec.omega.indices().to_vec(),
            index,
            value,
        });
    }
    Distribution::new(v)
}

/// Maximum column absolute sum: the l1-induced norm of `h`.
pub fn perturbation_radius(h: &DMatrix<f64>) -> f64 {
    h.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// All index sets with invertible `M_Omega`, in lexicographic order.
#[derive(Debug, Clone)]
pub struct OmegaSet {
    pub records: Vec<OmegaRecord>,
    /// Sets skipped because `M_Omega` is numerically singular.
    pub skipped: Vec<Omega>,
}

impl OmegaSet {
    pub fn feasible(&self) -> impl Iterator<Item = &OmegaRecord> {
        self.records.iter().filter(|r| r.is_feasible())
    }

    pub fn infeasible(&self) -> impl Iterator<Item = &OmegaRecord> {
        self.records.iter().filter(|r| r.class == OmegaClass::Infeasible)
    }

    /// Admissibility for the entropy expansion: no base point on the simplex boundary.
    pub fn in_hxy(&self) -> bool {
        self.records.iter().all(|r| r.class != OmegaClass::BoundaryZero)
    }

    pub fn find(&self, omega: &Omega) -> Option<&OmegaRecord> {
        self.records.iter().find(|r| &r.omega == omega)
    }
}

pub fn enumerate_omegas(basis: &RowSpaceBasis, inst: &ProblemInstance) -> Result<OmegaSet> {
    let subsets: Vec<Omega> = (0..inst.ny())
        .combinations(inst.nx())
        .map(Omega::new)
        .collect();
    let built: Vec<(Omega, Option<OmegaRecord>)> = subsets
        .into_par_iter()
        .map(|omega| basis.record(inst, omega.clone()).map(|r| (omega, r)))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (omega, rec) in built {
        match rec {
            Some(r) => records.push(r),
            None => {
                log::debug!("skipping omega {omega}: singular column block");
                skipped.push(omega);
            }
        }
    }
    Ok(OmegaSet { records, skipped })
}

/// Leakage levels below `min(eps1, eps2)` keep every feasible vertex positive
/// and every infeasible one infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonRange {
    /// `+inf` when no base point has a negative entry.
    pub eps1: f64,
    pub eps2: f64,
}

impl EpsilonRange {
    pub fn limit(&self) -> f64 {
        self.eps1.min(self.eps2)
    }

    pub fn contains(&self, eps: f64) -> bool {
        eps < self.limit()
    }
}

pub fn epsilon_range(set: &OmegaSet) -> Result<EpsilonRange> {
    let feasible: Vec<&OmegaRecord> = set.feasible().collect();
    if feasible.is_empty() {
        return Err(Error::NoFeasibleOmega);
    }
    let min_t = feasible
        .iter()
        .flat_map(|r| r.base_point.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let sigma1 = feasible.iter().map(|r| r.sigma_max).fold(0.0, f64::max);
    let eps2 = min_t / sigma1;

    let infeasible: Vec<&OmegaRecord> = set.infeasible().collect();
    let eps1 = if infeasible.is_empty() {
        f64::INFINITY
    } else {
        let depth = infeasible
            .iter()
            .map(|r| {
                r.base_point
                    .iter()
                    .filter(|t| **t < 0.0)
                    .map(|t| t.abs())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let sigma2 = infeasible.iter().map(|r| r.sigma_max).fold(0.0, f64::max);
        depth / sigma2
    };
    Ok(EpsilonRange { eps1, eps2 })
}
