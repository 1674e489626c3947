//! Shared instances and randomized property suites.

#![allow(dead_code)]

use l1priv::lp::{solve_approx, SolveOptions, RECOVERY_TOL};
use l1priv::metrics::{mmse, mmse_lower_bound, Target};
use l1priv::probkit::{chi2_divergence, l1_distance};
use l1priv::rowspace::{
    enumerate_omegas, epsilon_range, extreme_point, OmegaClass, OmegaSet, RowSpaceBasis,
};
use l1priv::entcoef::EntropyCoefficients;
use l1priv::invsolver::solve_invertible;
use l1priv::watermark::{watermark_instance, WatermarkParams};
use l1priv::{check_privacy, Channel, Distribution, Error, LogBase, Mechanism, ProblemInstance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn instance(rows: &[Vec<f64>], p_y: &[f64], base: LogBase) -> ProblemInstance {
    ProblemInstance::new(
        Channel::from_rows(rows).unwrap(),
        Distribution::new(p_y.to_vec()).unwrap(),
        base,
    )
    .unwrap()
}

pub fn example2() -> ProblemInstance {
    instance(
        &[vec![0.3, 0.8, 0.5, 0.4], vec![0.7, 0.2, 0.5, 0.6]],
        &[0.5, 0.25, 0.125, 0.125],
        LogBase::Two,
    )
}

pub fn watermark(alpha: f64) -> ProblemInstance {
    watermark_instance(WatermarkParams::new(alpha).unwrap(), LogBase::Natural)
        .unwrap()
        .instance
}

pub fn omegas(inst: &ProblemInstance) -> OmegaSet {
    enumerate_omegas(&RowSpaceBasis::new(inst).unwrap(), inst).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut impl Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Full-rank leakage with strictly positive marginals.
pub fn random_instance(rng: &mut impl Rng, nx: usize, ny: usize) -> ProblemInstance {
    loop {
        let cols: Vec<Vec<f64>> = (0..ny).map(|_| random_simplex(rng, nx, 0.02)).collect();
        let rows: Vec<Vec<f64>> = (0..nx).map(|x| cols.iter().map(|c| c[x]).collect()).collect();
        let p_y = random_simplex(rng, ny, 0.1);
        if let Ok(inst) = ProblemInstance::new(
            Channel::from_rows(&rows).unwrap(),
            Distribution::new(p_y).unwrap(),
            LogBase::Two,
        ) {
            if full_rank(&inst) {
                return inst;
            }
        }
    }
}

fn full_rank(inst: &ProblemInstance) -> bool {
    let sv = inst.leakage().matrix().clone().svd(false, false).singular_values;
    sv.min() > 1e-3
}

/// Random `J` with `1^T J = 0` and `||J||_1 <= 1`.
pub fn random_perturbation(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let norm: f64 = centered.iter().map(|v| v.abs()).sum();
    let radius = rng.random::<f64>();
    centered.iter().map(|v| v / norm * radius).collect()
}

fn random_shape(rng: &mut impl Rng) -> (usize, usize) {
    let nx = rng.random_range(2..=3);
    (nx, rng.random_range(nx + 1..=5))
}

pub type Suite = fn(u64) -> Result<usize, String>;

pub const SUITES: [(&str, Suite); 10] = [
    ("l1/chi-square sandwich", sandwich_inequalities),
    ("base-point and perturbation sums", vertex_sums),
    ("null-space equivalence", null_space_equivalence),
    ("basis invariance", basis_invariance),
    ("unit-sum polytope points", unit_sum_points),
    ("perturbation radius bound", radius_bound),
    ("MMSE lower bound", mmse_bound),
    ("first-order entropy error", first_order_error),
    ("recovered mechanism feasibility", recovered_feasibility),
    ("epsilon-range validity", epsilon_range_validity),
];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Both directions between the l1 and chi-square criteria on 10^4 pairs.
pub fn sandwich_inequalities(seed: u64) -> Result<usize, String> {
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let config = Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &seed_bytes));
    let strategy = (2usize..6).prop_flat_map(|n| (distribution(n), distribution(n), 0.0f64..1.0));
    runner
        .run(&strategy, |(p, q, eps)| {
            let (p, q) = (Distribution::new(p).unwrap(), Distribution::new(q).unwrap());
            let l1 = l1_distance(&p, &q).unwrap();
            let chi2 = chi2_divergence(&p, &q).unwrap();
            prop_assert!(chi2 <= l1 * l1 / q.min() + 1e-12);
            prop_assert!(l1 <= chi2.sqrt() + 1e-12);
            if l1 <= eps {
                prop_assert!(chi2 <= eps * eps / q.min() + 1e-12);
            }
            if chi2 <= eps * eps {
                prop_assert!(l1 <= eps + 1e-12);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(10_000)
}

pub fn vertex_sums(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    for _ in 0..200 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        for rec in omegas(&inst).records {
            let s: f64 = rec.base_point.iter().sum();
            ensure((s - 1.0).abs() <= 1e-9, || format!("1^T t = {s} for {}", rec.omega))?;
            for _ in 0..5 {
                let j = random_perturbation(&mut rng, nx);
                let hj = &rec.perturbation_map * DVector::from_column_slice(&j);
                ensure(hj.sum().abs() <= 1e-9, || format!("1^T H J = {}", hj.sum()))?;
                cases += 1;
            }
        }
    }
    Ok(cases)
}

pub fn null_space_equivalence(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for _ in 0..1000 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        let leak = inst.leakage().matrix();
        let m = RowSpaceBasis::new(&inst).unwrap().matrix().clone();
        // Null vectors of the leakage from its full SVD.
        let full = leak.clone().insert_rows(nx, ny - nx, 0.0).svd(false, true);
        let v_t = full.v_t.unwrap();
        let null: Vec<usize> = (0..ny).filter(|&i| full.singular_values[i] < 1e-10).collect();
        let coeffs = DVector::from_fn(null.len(), |_, _| rng.random::<f64>() - 0.5);
        let beta = v_t.select_rows(&null).transpose() * coeffs;
        ensure((&m * &beta).amax() < 1e-9, || "M misses a null vector".into())?;
        // Conversely, vectors killed by M are killed by the leakage.
        let proj = DMatrix::identity(ny, ny) - m.transpose() * &m;
        let gamma = proj * DVector::from_fn(ny, |_, _| rng.random::<f64>() - 0.5);
        ensure((leak * &gamma).amax() < 1e-9, || "leakage misses a null vector of M".into())?;
    }
    Ok(1000)
}

pub fn basis_invariance(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for _ in 0..1000 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        let basis = RowSpaceBasis::new(&inst).unwrap();
        let t = loop {
            let t = DMatrix::from_fn(nx, nx, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            if t.clone().svd(false, false).singular_values.min() > 0.1 {
                break t;
            }
        };
        let other = RowSpaceBasis::with_basis(&inst, &t * basis.matrix()).unwrap();
        let a = enumerate_omegas(&basis, &inst).unwrap();
        let b = enumerate_omegas(&other, &inst).unwrap();
        ensure(a.records.len() == b.records.len(), || "record counts differ".into())?;
        let j = random_perturbation(&mut rng, nx);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            let dt = ra.base_point.iter().zip(&rb.base_point).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let dh = (&ra.perturbation_map - &rb.perturbation_map).amax();
            let va = ra.vertex(&j, 0.01, ny);
            let vb = rb.vertex(&j, 0.01, ny);
            let dv = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            ensure(dt < 1e-8 && dh < 1e-8 && dv < 1e-8, || {
                format!("basis change moved {} by {dt:e}/{dh:e}/{dv:e}", ra.omega)
            })?;
        }
        match (epsilon_range(&a), epsilon_range(&b)) {
            (Ok(x), Ok(y)) => {
                ensure((x.eps2 - y.eps2).abs() < 1e-8, || "eps2 changed".into())?;
                ensure(
                    x.eps1 == y.eps1 || (x.eps1 - y.eps1).abs() < 1e-8,
                    || "eps1 changed".into(),
                )?;
            }
            (Err(_), Err(_)) => {}
            _ => return Err("epsilon range defined for only one basis".into()),
        }
    }
    Ok(1000)
}

pub fn unit_sum_points(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    while cases < 1000 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        let set = omegas(&inst);
        let Ok(range) = epsilon_range(&set) else { continue };
        let eps = 0.99 * range.limit().min(1.0) * rng.random::<f64>();
        for rec in set.feasible() {
            let j = random_perturbation(&mut rng, nx);
            let v = extreme_point(rec, &j, eps, ny).map_err(|e| e.to_string())?;
            let s: f64 = v.probs().iter().sum();
            ensure((s - 1.0).abs() <= 1e-9, || format!("vertex sums to {s}"))?;
            cases += 1;
        }
    }
    Ok(cases)
}

pub fn radius_bound(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    for rec in omegas(&example2()).feasible() {
        for _ in 0..10_000 {
            let j = random_perturbation(&mut rng, 2);
            let hj = &rec.perturbation_map * DVector::from_column_slice(&j);
            let l1: f64 = hj.iter().map(|v| v.abs()).sum();
            ensure(l1 <= rec.radius + 1e-12, || format!("|HJ|_1 = {l1} > r = {}", rec.radius))?;
            cases += 1;
        }
    }
    for _ in 0..200 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        for rec in omegas(&inst).records {
            let j = random_perturbation(&mut rng, nx);
            let hj = &rec.perturbation_map * DVector::from_column_slice(&j);
            let l1: f64 = hj.iter().map(|v| v.abs()).sum();
            ensure(l1 <= rec.radius + 1e-12, || format!("|HJ|_1 = {l1} > r = {}", rec.radius))?;
            // The vertex moves only inside omega, by at most eps r.
            let moved: f64 = rec.vertex(&j, 0.01, ny).iter().zip(rec.vertex(&vec![0.0; nx], 0.01, ny)).map(|(a, b)| (a - b).abs()).sum();
            ensure(moved <= 0.01 * rec.radius + 1e-12, || "vertex moved too far".into())?;
            cases += 1;
        }
    }
    Ok(cases)
}

/// Random kernels on binary-X instances with zero-mean labels; the leakage
/// level is set to each kernel's own maximal deviation.
pub fn mmse_bound(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for _ in 0..10_000 {
        let ny = rng.random_range(3..=5);
        let inst = random_instance(&mut rng, 2, ny);
        let p_x = inst.p_x().clone();
        let scale = 0.5 + rng.random::<f64>() * 3.0;
        let xs = vec![scale * p_x[1], -scale * p_x[0]];
        let ys: Vec<f64> = (1..=ny).map(|v| v as f64).collect();
        let inst = inst.with_values(xs.clone(), ys).unwrap();
        let nu = rng.random_range(1..=ny);
        let kernel: Vec<Vec<f64>> = (0..ny).map(|_| random_simplex(&mut rng, nu, 0.0)).collect();
        let mut p_u = vec![0.0; nu];
        let mut posts = vec![vec![0.0; ny]; nu];
        for y in 0..ny {
            for u in 0..nu {
                let joint = kernel[y][u] * inst.p_y()[y];
                p_u[u] += joint;
                posts[u][y] = joint;
            }
        }
        let posteriors: Vec<Distribution> = posts
            .iter()
            .zip(&p_u)
            .map(|(row, pu)| Distribution::new(row.iter().map(|v| v / pu).collect()).unwrap())
            .collect();
        let probe = Mechanism::from_posteriors(&inst, Distribution::new(p_u.clone()).unwrap(), posteriors.clone(), 0.0)
            .unwrap();
        let eps = check_privacy(&probe, &inst, 0.0).max_deviation;
        let m = Mechanism::from_posteriors(&inst, Distribution::new(p_u).unwrap(), posteriors, eps)
            .unwrap();
        ensure(check_privacy(&m, &inst, eps + 1e-12).passes, || "probe not private".into())?;
        let value = mmse(&m, &inst, Target::X).map_err(|e| e.to_string())?;
        let bound = mmse_lower_bound(&p_x, &xs, eps).map_err(|e| e.to_string())?;
        ensure(value >= bound - 1e-9, || format!("MMSE {value} below bound {bound} at eps {eps}"))?;
    }
    Ok(10_000)
}

pub fn first_order_error(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    while cases < 1000 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        for rec in omegas(&inst).feasible() {
            let j = random_perturbation(&mut rng, nx);
            if rec.vertex_entries(&j, 1e-2).iter().any(|v| *v <= 0.0) {
                continue;
            }
            let c = EntropyCoefficients::new(rec, LogBase::Two).map_err(|e| e.to_string())?;
            let ratio = |eps: f64| {
                let v = rec.vertex_entries(&j, eps);
                let exact: f64 = -v.iter().map(|p| p * p.log2()).sum::<f64>();
                (exact - c.approx_entropy(&j, eps)).abs() / eps
            };
            let (r2, r3, r4) = (ratio(1e-2), ratio(1e-3), ratio(1e-4));
            ensure(r3 <= r2 + 1e-11 && r4 <= r3 + 1e-11, || {
                format!("error ratios {r2:e}, {r3:e}, {r4:e} not decreasing")
            })?;
            cases += 1;
        }
    }
    Ok(cases)
}

pub fn recovered_feasibility(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    while cases < 1000 {
        let ny = rng.random_range(3..=4);
        let inst = random_instance(&mut rng, 2, ny);
        let set = omegas(&inst);
        let Ok(range) = epsilon_range(&set) else { continue };
        let eps = range.limit().min(0.2) * rng.random::<f64>();
        let res = match solve_approx(&inst, eps, &SolveOptions::default()) {
            Ok(r) => r,
            Err(Error::NotInHxy) => continue,
            Err(e) => return Err(format!("solver failed: {e}")),
        };
        let m = &res.mechanism;
        m.validate(&inst, eps, RECOVERY_TOL).map_err(|e| e.to_string())?;
        ensure(check_privacy(m, &inst, eps + 1e-9).passes, || "privacy violated".into())?;
        cases += 1;
    }
    // The closed-form square-case design as well.
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 2, 2);
        let Ok(sol) = solve_invertible(&inst, 1e-3) else { continue };
        sol.mechanism.validate(&inst, 1e-3, RECOVERY_TOL).map_err(|e| e.to_string())?;
        ensure(check_privacy(&sol.mechanism, &inst, 1e-3 + 1e-9).passes, || "privacy violated".into())?;
        cases += 1;
    }
    Ok(cases)
}

pub fn epsilon_range_validity(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut cases = 0;
    let mut instances = 0;
    while instances < 20 {
        let (nx, ny) = random_shape(&mut rng);
        let inst = random_instance(&mut rng, nx, ny);
        let set = omegas(&inst);
        let Ok(range) = epsilon_range(&set) else { continue };
        instances += 1;
        let eps = 0.999 * range.limit();
        for rec in &set.records {
            for _ in 0..1000 {
                let j = random_perturbation(&mut rng, nx);
                match rec.class {
                    OmegaClass::FeasiblePositive => {
                        extreme_point(rec, &j, eps, ny).map_err(|e| e.to_string())?;
                    }
                    OmegaClass::Infeasible => {
                        let v = rec.vertex_entries(&j, eps);
                        ensure(v.iter().any(|x| *x < 0.0), || {
                            format!("{} became feasible at eps {eps}", rec.omega)
                        })?;
                    }
                    OmegaClass::BoundaryZero => {}
                }
                cases += 1;
            }
        }
    }
    Ok(cases)
}
