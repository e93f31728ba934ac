//! Damped, preconditioned pseudo-time iteration for `L u = f` in a box with
//! prescribed exterior data.
//!
//! Each step is `u <- u - tau P^{-1} (L u - f)` at the interior nodes, where
//! `P` is a frozen linear fractional-Laplacian stencil (Cholesky-factored
//! once). The step length adapts: it is halved when the residual grows and
//! stretched by 1.1 after every accepted step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Exterior, Grid, GridFunction, Interp};
use crate::operator::{check_preconditions, evaluate_nodes, QuadratureSpec};
use crate::params::{norm, sphere_measure, ProblemParams};
use crate::quad::{adaptive, Tol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Box `[-half_width, half_width]^n`.
    pub half_width: f64,
    pub nodes: usize,
    pub interp: Interp,
    pub exterior: Exterior,
    /// Initial step length.
    pub damping: f64,
    /// Stop when `max |L u - f|` over interior nodes is at most this.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Optional `(p, q)` homotopy schedule ending at the target exponents.
    pub continuation: Vec<[f64; 2]>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            half_width: 2.0,
            nodes: 256,
            interp: Interp::Cubic,
            exterior: Exterior::Constant { value: 0.0 },
            damping: 1.0,
            residual_tol: 1e-8,
            max_iters: 500,
            continuation: Vec::new(),
        }
    }
}

/// Discrete maximum-principle envelope of a converged solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsCheck {
    /// `(sup|f| / k_min)^{1/(p-1)}` with `k_min` the smallest exterior kernel mass.
    pub source_bound: f64,
    pub exterior_inf: f64,
    pub exterior_sup: f64,
    pub lower: f64,
    pub upper: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub operator_applications: usize,
    pub residual: f64,
    pub initial_residual: f64,
    pub residual_history: Vec<f64>,
    pub final_step: f64,
    /// Largest quadrature error estimate at the last residual evaluation.
    pub quadrature_error: f64,
    pub bounds: BoundsCheck,
    pub stages: Vec<[f64; 2]>,
}

/// Solves `L u = f` and returns the grid solution with its report.
pub fn solve(params: &ProblemParams, cfg: &SolveConfig, q: &QuadratureSpec) -> Result<(GridFunction, SolveReport)> {
    solve_from(params, cfg, q, None)
}

/// As [`solve`], warm-started from `initial` node values when given.
pub fn solve_from(
    params: &ProblemParams,
    cfg: &SolveConfig,
    q: &QuadratureSpec,
    initial: Option<&[f64]>,
) -> Result<(GridFunction, SolveReport)> {
    params.validate()?;
    let n = params.n();
    let grid = Grid::centered(n, cfg.half_width, cfg.nodes)?;
    if !(cfg.residual_tol > 0.0) || !(cfg.damping > 0.0) {
        return Err(Error::InvalidParams("residual_tol and damping must be positive".into()));
    }
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| !grid.is_boundary(k)).collect();
    let mut values: Vec<f64> = match initial {
        Some(v) if v.len() == grid.len() => v.to_vec(),
        Some(_) => return Err(Error::InvalidParams("initial guess has the wrong length".into())),
        None => {
            let m = boundary_mean(&grid, &cfg.exterior);
            vec![m; grid.len()]
        }
    };
    for k in 0..grid.len() {
        if grid.is_boundary(k) {
            values[k] = cfg.exterior.eval(&grid.node(k), n);
        }
    }
    let probe = GridFunction::from_values(grid.clone(), values.clone(), cfg.exterior.clone(), cfg.interp)?;
    check_preconditions(&probe, params)?;

    let mut stages: Vec<[f64; 2]> = cfg.continuation.clone();
    let target = [params.exponents.p, params.exponents.q];
    if stages.last() != Some(&target) {
        stages.push(target);
    }
    let mut history = Vec::new();
    let mut total_iters = 0;
    let mut applications = 0;
    let mut last = None;
    for (si, st) in stages.iter().enumerate() {
        let mut sp = params.clone();
        sp.exponents.p = st[0];
        sp.exponents.q = st[1];
        sp.kernel_sp.p = st[0];
        sp.kernel_tq.p = st[1];
        if si + 1 < stages.len() {
            sp.validate()?;
        }
        let final_stage = si + 1 == stages.len();
        let tol = if final_stage { cfg.residual_tol } else { (cfg.residual_tol * 1e3).max(1e-6) };
        let out = iterate(&sp, cfg, q, &grid, &interior, &mut values, tol, &mut history)?;
        total_iters += out.iterations;
        applications += out.applications;
        last = Some(out);
    }
    let out = last.expect("at least one stage");
    let u = GridFunction::from_values(grid.clone(), values, cfg.exterior.clone(), cfg.interp)?;
    let bounds = bounds_check(&u, params, q);
    let report = SolveReport {
        converged: out.converged,
        iterations: total_iters,
        operator_applications: applications,
        residual: out.residual,
        initial_residual: history.first().copied().unwrap_or(out.residual),
        residual_history: history,
        final_step: out.tau,
        quadrature_error: out.quad_error,
        bounds,
        stages,
    };
    Ok((u, report))
}

/// `max |L u - f|` over interior nodes.
pub fn residual(u: &GridFunction, params: &ProblemParams, q: &QuadratureSpec) -> f64 {
    let g = u.grid();
    let interior: Vec<usize> = (0..g.len()).filter(|&k| !g.is_boundary(k)).collect();
    let ev = evaluate_nodes(u, &interior, params, q);
    interior.iter().zip(&ev).fold(0.0, |m, (&k, e)| m.max((e.value - params.source.eval(&g.node(k))).abs()))
}

struct StageOutcome {
    converged: bool,
    iterations: usize,
    applications: usize,
    residual: f64,
    tau: f64,
    quad_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    params: &ProblemParams,
    cfg: &SolveConfig,
    q: &QuadratureSpec,
    grid: &Grid,
    interior: &[usize],
    values: &mut [f64],
    tol: f64,
    history: &mut Vec<f64>,
) -> Result<StageOutcome> {
    let f: Vec<f64> = interior.iter().map(|&k| params.source.eval(&grid.node(k))).collect();
    let residual_of = |vals: &[f64]| -> Result<(Vec<f64>, f64)> {
        let u = GridFunction::from_values(grid.clone(), vals.to_vec(), cfg.exterior.clone(), cfg.interp)?;
        let ev = evaluate_nodes(&u, interior, params, q);
        let qerr = ev.iter().fold(0.0, |m: f64, e| m.max(e.error));
        Ok((ev.iter().zip(&f).map(|(e, fi)| e.value - fi).collect(), qerr))
    };
    let (mut r, mut qerr) = residual_of(values)?;
    let mut applications = 1;
    let mut res = max_abs(&r);
    let res0 = res;
    history.push(res);
    let mut tau = cfg.damping;
    if res <= tol {
        return Ok(StageOutcome { converged: true, iterations: 0, applications, residual: res, tau, quad_error: qerr });
    }
    let pre = Preconditioner::new(params, grid, interior, &cfg.exterior)?;
    let mut halvings = 0;
    let mut iters = 0;
    while iters < cfg.max_iters {
        let z = pre.solve(&r);
        let mut trial = values.to_vec();
        for (i, &k) in interior.iter().enumerate() {
            trial[k] -= tau * z[i];
        }
        let (rt, qt) = residual_of(&trial)?;
        applications += 1;
        let rest = max_abs(&rt);
        let better = rest.is_finite() && l2(&rt) < l2(&r);
        if better {
            values.copy_from_slice(&trial);
            r = rt;
            qerr = qt;
            res = rest;
            iters += 1;
            history.push(res);
            halvings = 0;
            tau = (tau * 1.1).min(1e3 * cfg.damping);
            log::debug!("iteration {iters}: residual {res:.3e}, step {tau:.3e}");
            if res <= tol {
                return Ok(StageOutcome { converged: true, iterations: iters, applications, residual: res, tau, quad_error: qerr });
            }
        } else {
            if !rest.is_finite() || rest > 1e6 * res0 && tau < 1e-12 {
                return Err(Error::Diverged { residual: rest, initial: res0 });
            }
            tau *= 0.5;
            halvings += 1;
            if halvings >= 200 {
                return Err(Error::Stalled { iterations: iters, halvings });
            }
        }
    }
    Ok(StageOutcome { converged: false, iterations: iters, applications, residual: res, tau, quad_error: qerr })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn boundary_mean(grid: &Grid, ext: &Exterior) -> f64 {
    let b: Vec<f64> = (0..grid.len()).filter(|&k| grid.is_boundary(k)).map(|k| ext.eval(&grid.node(k), grid.dim)).collect();
    b.iter().sum::<f64>() / b.len() as f64
}

/// Dense SPD model of the linearised operator on interior nodes.
struct Preconditioner {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Preconditioner {
    fn new(params: &ProblemParams, grid: &Grid, interior: &[usize], ext: &Exterior) -> Result<Self> {
        let e = &params.exponents;
        let scale = exterior_spread(grid, ext).max(1e-3);
        let mut phases = vec![(e.sp(), (e.p - 1.0) * scale.powf(e.p - 2.0) / params.kernel_sp.lambda())];
        if params.m_hat() > 0.0 {
            let w = 0.5 * params.m_hat() * (e.q - 1.0) * scale.powf(e.q - 2.0) / params.kernel_tq.lambda();
            phases.push((e.tq(), w));
        }
        let m = interior.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let pos: std::collections::HashMap<usize, usize> = interior.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let h = grid.h;
        for &(alpha, weight) in &phases {
            if grid.dim == 1 {
                let nn = grid.counts[0];
                let wk = |k: usize| -> f64 {
                    let kf = k as f64;
                    let mut w = (((kf - 0.5) * h).powf(-alpha) - ((kf + 0.5) * h).powf(-alpha)) / alpha;
                    if k == 1 {
                        w += (0.5 * h).powf(2.0 - alpha) / ((2.0 - alpha) * h * h);
                    }
                    w
                };
                let table: Vec<f64> = (0..nn).map(|k| if k == 0 { 0.0 } else { wk(k) }).collect();
                for (i, &ki) in interior.iter().enumerate() {
                    let mut diag = 0.0;
                    for kj in 0..nn {
                        if kj == ki {
                            continue;
                        }
                        let w = weight * table[ki.abs_diff(kj)];
                        diag += w;
                        if let Some(&j) = pos.get(&kj) {
                            a[(i, j)] -= w;
                        }
                    }
                    let x = grid.node(ki)[0];
                    let hi = grid.hi()[0];
                    for d in [x - grid.lo[0], hi - x] {
                        diag += weight * (d + 0.5 * h).powf(-alpha) / alpha;
                    }
                    a[(i, i)] += diag;
                }
            } else {
                let n0 = grid.counts[0] as isize;
                let n1 = grid.counts[1] as isize;
                let near = std::f64::consts::PI * (0.5 * h).powf(2.0 - alpha) / (2.0 * (2.0 - alpha) * h * h);
                let half_plane = {
                    let mut g = |t: f64| (1.0 + t * t).powf(-1.0 - 0.5 * alpha);
                    2.0 * crate::quad::half_line(&mut g, 1.0, Tol::new(1e-10, 1e-14), 400).estimate.value
                        + 2.0 * adaptive(&mut g, 0.0, 1.0, Tol::new(1e-10, 1e-14)).value
                };
                for (i, &ki) in interior.iter().enumerate() {
                    let (i0, i1) = ((ki % grid.counts[0]) as isize, (ki / grid.counts[0]) as isize);
                    let mut diag = 0.0;
                    for j1 in 0..n1 {
                        for j0 in 0..n0 {
                            let (d0, d1) = (j0 - i0, j1 - i1);
                            if d0 == 0 && d1 == 0 {
                                continue;
                            }
                            let r = h * ((d0 * d0 + d1 * d1) as f64).sqrt();
                            let mut w = h * h * r.powf(-2.0 - alpha);
                            if d0.abs() + d1.abs() == 1 {
                                w += near;
                            }
                            w *= weight;
                            diag += w;
                            let kj = (j0 + n0 * j1) as usize;
                            if let Some(&j) = pos.get(&kj) {
                                a[(i, j)] -= w;
                            }
                        }
                    }
                    let x = grid.node(ki);
                    let hi = grid.hi();
                    for d in [x[0] - grid.lo[0], hi[0] - x[0], x[1] - grid.lo[1], hi[1] - x[1]] {
                        diag += weight * half_plane * (d + 0.5 * h).powf(-alpha) / alpha;
                    }
                    a[(i, i)] += diag;
                }
            }
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::InvalidParams("preconditioner is not positive definite".into()))?;
        Ok(Self { chol })
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(r);
        self.chol.solve(&b).as_slice().to_vec()
    }
}

/// Range of the exterior datum sampled just outside the box.
fn exterior_spread(grid: &Grid, ext: &Exterior) -> f64 {
    let (lo, hi) = exterior_range(grid, ext, 2.0 * grid.extent());
    hi - lo
}

/// Inf and sup of the exterior over shells between the box and `r_max`.
pub fn exterior_range(grid: &Grid, ext: &Exterior, r_max: f64) -> (f64, f64) {
    let n = grid.dim;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |v: f64| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    let r0 = grid.extent();
    let eps = 1e-9 * grid.h;
    let mut r = r0;
    while r <= r_max.max(r0) * 1.000001 {
        if n == 1 {
            push(ext.eval(&[grid.lo[0] - eps - (r - r0), 0.0], 1));
            push(ext.eval(&[grid.hi()[0] + eps + (r - r0), 0.0], 1));
        } else {
            for j in 0..64 {
                let th = std::f64::consts::TAU * j as f64 / 64.0;
                let rr = r * std::f64::consts::SQRT_2 + eps;
                push(ext.eval(&[rr * th.cos(), rr * th.sin()], 2));
            }
        }
        r = if r == r0 { r0 + grid.h } else { r * 1.5 };
    }
    (lo, hi)
}

fn bounds_check(u: &GridFunction, params: &ProblemParams, q: &QuadratureSpec) -> BoundsCheck {
    let e = &params.exponents;
    let g = u.grid();
    let lam = params.kernel_sp.lambda();
    // smallest mass of K_sp over offsets leaving the box, over interior nodes
    let mut kmin = f64::INFINITY;
    for k in 0..g.len() {
        if g.is_boundary(k) {
            continue;
        }
        let x = g.node(k);
        let m = if g.dim == 1 {
            [x[0] - g.lo[0], g.hi()[0] - x[0]].iter().map(|d| d.powf(-e.sp()) / e.sp()).sum::<f64>()
        } else {
            let hi = g.hi();
            let far = [g.lo, hi, [g.lo[0], hi[1]], [hi[0], g.lo[1]]]
                .iter()
                .map(|c| norm(&[c[0] - x[0], c[1] - x[1]], 2))
                .fold(0.0, f64::max);
            sphere_measure(2) * far.powf(-e.sp()) / e.sp()
        };
        kmin = kmin.min(m / lam);
    }
    let fsup = params.source.sup_norm();
    let source_bound = (fsup / kmin).powf(1.0 / (e.p - 1.0));
    let (ext_inf, ext_sup) = exterior_range(g, u.exterior(), q.r_far(u));
    let lower = ext_inf - source_bound;
    let upper = ext_sup + source_bound;
    let u_min = u.values().iter().copied().fold(f64::INFINITY, f64::min);
    let u_max = u.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-6 * (1.0 + upper.abs().max(lower.abs()));
    BoundsCheck {
        source_bound,
        exterior_inf: ext_inf,
        exterior_sup: ext_sup,
        lower,
        upper,
        u_min,
        u_max,
        ok: u_min >= lower - slack && u_max <= upper + slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CoefficientField, Exponents, SourceField};

    #[test]
    fn constant_data_is_a_fixed_point() {
        let mut pp = ProblemParams::model(Exponents::new(1, 0.6, 0.5, 2.0, 2.2));
        pp.source = SourceField::zero();
        let cfg = SolveConfig { nodes: 33, exterior: Exterior::Constant { value: 0.3 }, ..Default::default() };
        let (u, rep) = solve(&pp, &cfg, &QuadratureSpec::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(u.values().iter().all(|v| (*v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn linear_problem_converges_quickly() {
        let mut pp = ProblemParams::model(Exponents::new(1, 0.6, 0.4, 2.0, 2.0));
        pp.coefficient = CoefficientField::constant(0.0);
        pp.source = SourceField::constant(1.0);
        let cfg = SolveConfig { nodes: 65, half_width: 1.0, residual_tol: 1e-9, ..Default::default() };
        let (_, rep) = solve(&pp, &cfg, &QuadratureSpec::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.iterations < 60, "{}", rep.iterations);
        assert!(rep.bounds.ok, "{:?}", rep.bounds);
    }
}
