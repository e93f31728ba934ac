//! Principal-value evaluation of the double-phase nonlocal operator
//!
//! `L u(x) = PV int psi_p(u(x) - u(x+y)) K_sp(x,y) + c_hat a(x,y) psi_q(u(x) - u(x+y)) K_tq(x,y) dy`
//!
//! on grid functions, together with the one-sided, truncated and energy
//! variants. The integral over `y` is folded onto `|y| > 0`; near the origin
//! the two sides are combined from Taylor expansions of the interpolant so
//! the leading odd terms cancel exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{horner, GridFunction, Interp};
use crate::params::{psi, CoefficientField, KernelField, Point, ProblemParams};
use crate::quad::{adaptive, half_line, singular_left, Estimate, Tol};

/// Quadrature controls for operator evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Near-field radius and minimum margin; defaults to `4h`.
    pub rho_near: Option<f64>,
    /// Start of the analytic far-field tail; defaults to `max(8R, 64)`.
    pub r_far: Option<f64>,
    /// Relative panel tolerance.
    pub tol: f64,
    /// Absolute panel tolerance floor.
    pub abs_tol: f64,
    /// Geometric descent stops below this fraction of the near segment.
    pub min_ratio: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rho_near: None, r_far: None, tol: 1e-8, abs_tol: 1e-14, min_ratio: 1e-6 }
    }
}

impl QuadratureSpec {
    pub fn rho_near(&self, u: &GridFunction) -> f64 {
        self.rho_near.unwrap_or(4.0 * u.grid().h)
    }

    pub fn r_far(&self, u: &GridFunction) -> f64 {
        let r = u.grid().extent();
        let d = self.r_far.unwrap_or((8.0 * r).max(64.0));
        d.max(4.0 * r)
    }

    fn tol(&self) -> Tol {
        Tol::new(self.tol, self.abs_tol)
    }
}

/// Checks that `u` and `P` admit a finite principal value everywhere.
pub fn check_preconditions(u: &GridFunction, params: &ProblemParams) -> Result<()> {
    let e = &params.exponents;
    if u.dim() != e.n {
        return Err(Error::InvalidParams(format!("grid dimension {} differs from n = {}", u.dim(), e.n)));
    }
    if u.interp() == Interp::Linear && e.p * (1.0 - e.s) <= 1.0 {
        return Err(Error::NonIntegrableNearField { p: e.p, s: e.s });
    }
    let g = u.exterior().growth_exponent();
    let mut threshold = e.sp() / (e.p - 1.0);
    if params.m_hat() > 0.0 {
        threshold = threshold.min(e.tq() / (e.q - 1.0));
    }
    if g >= threshold {
        return Err(Error::TailDivergence { growth: g, threshold });
    }
    Ok(())
}

/// `L u(x)` with value and quadrature error estimate.
///
/// Requires the distance from `x` to the box boundary to be at least the
/// near-field radius.
pub fn evaluate(u: &GridFunction, x: &Point, params: &ProblemParams, q: &QuadratureSpec) -> Result<Estimate> {
    check_preconditions(u, params)?;
    let rho = q.rho_near(u);
    let margin = u.grid().margin(x);
    if margin < rho {
        return Err(Error::OutsideMargin { point: *x, margin, required: rho });
    }
    Ok(evaluate_unchecked(u, x, params, q))
}

/// `L u(x)` at any point of the closed box, without precondition checks.
pub fn evaluate_unchecked(u: &GridFunction, x: &Point, params: &ProblemParams, q: &QuadratureSpec) -> Estimate {
    let ph = Phases::new(params, *x);
    if u.dim() == 1 {
        eval_1d(u, x[0], &ph, q)
    } else {
        eval_2d(u, x, &ph, q)
    }
}

/// Evaluates at the listed node indices, in parallel when enabled.
pub fn evaluate_nodes(u: &GridFunction, nodes: &[usize], params: &ProblemParams, q: &QuadratureSpec) -> Vec<Estimate> {
    let g = u.grid();
    let f = |k: &usize| evaluate_unchecked(u, &g.node(*k), params, q);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        nodes.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        nodes.iter().map(f).collect()
    }
}

/// `sign(d) |d|^{r-1}` summed over a pair, with `s = d1 + d2` supplied
/// accurately so that near-cancelling pairs keep their relative precision.
#[inline]
pub fn psi_pair(r: f64, d1: f64, d2: f64, s: f64) -> f64 {
    if r == 2.0 {
        return s;
    }
    if d1 == 0.0 {
        return psi(r, d2);
    }
    if d2 == 0.0 {
        return psi(r, d1);
    }
    if (d1 > 0.0) == (d2 > 0.0) {
        return psi(r, d1) + psi(r, d2);
    }
    let a = d1.abs();
    let sg = d2.signum();
    let rel = sg * s / a;
    if rel.abs() < 0.5 {
        sg * a.powf(r - 1.0) * ((r - 1.0) * rel.ln_1p()).exp_m1()
    } else {
        psi(r, d1) + psi(r, d2)
    }
}

/// Kernel, coefficient and exponent data frozen at a base point.
#[derive(Clone, Copy)]
pub(crate) struct Phases<'a> {
    p: f64,
    q: f64,
    c_hat: f64,
    ksp: &'a KernelField,
    ktq: &'a KernelField,
    a: &'a CoefficientField,
    x: Point,
    has_q: bool,
}

impl<'a> Phases<'a> {
    pub(crate) fn new(params: &'a ProblemParams, x: Point) -> Self {
        Self {
            p: params.exponents.p,
            q: params.exponents.q,
            c_hat: params.c_hat,
            ksp: &params.kernel_sp,
            ktq: &params.kernel_tq,
            a: &params.coefficient,
            x,
            has_q: params.m_hat() > 0.0,
        }
    }

    /// Folded integrand at offset `y` (`|y| = r`) given both one-sided differences.
    #[inline]
    fn integrand(&self, y: &Point, r: f64, d1: f64, d2: f64, s: f64) -> f64 {
        let mut v = self.ksp.eval_radial(&self.x, r) * psi_pair(self.p, d1, d2, s);
        if self.has_q {
            let ap = self.a.eval(&self.x, y);
            let am = self.a.eval(&self.x, &[-y[0], -y[1]]);
            if ap != 0.0 || am != 0.0 {
                let base = psi_pair(self.q, d1, d2, s);
                let asym = if am != ap { (am - ap) * psi(self.q, d2) } else { 0.0 };
                v += self.c_hat * self.ktq.eval_radial(&self.x, r) * (ap * base + asym);
            }
        }
        v
    }

    /// One-sided integrand at offset `y`.
    #[inline]
    fn one_sided(&self, y: &Point, r: f64, d: f64) -> f64 {
        let mut v = self.ksp.eval_radial(&self.x, r) * psi(self.p, d);
        if self.has_q {
            let a = self.a.eval(&self.x, y);
            if a != 0.0 {
                v += self.c_hat * a * self.ktq.eval_radial(&self.x, r) * psi(self.q, d);
            }
        }
        v
    }

    fn kernel_breaks(&self) -> Vec<f64> {
        let mut b = self.ksp.radial_breakpoints();
        if self.has_q {
            b.extend(self.ktq.radial_breakpoints());
        }
        b
    }
}

/// Taylor expansion of cell polynomial `a` (local variable) about `t`.
fn taylor4(a: &[f64], t: f64) -> [f64; 4] {
    [
        horner(a, t),
        a[1] + t * (2.0 * a[2] + 3.0 * a[3] * t),
        a[2] + 3.0 * a[3] * t,
        a[3],
    ]
}

/// Interpolant seen from a fixed base point of a 1D grid.
struct Line1<'a> {
    u: &'a GridFunction,
    x: f64,
    ux: f64,
    h: f64,
    lo: f64,
    hi: f64,
    cell: usize,
    last_cell: usize,
    /// Taylor data of cells `cell-1, cell, cell+1` in powers of `(z - x)/h`;
    /// entry 0 is `P_cell'(x) - u(x)`, computed from the smoothness jump.
    tay: [[f64; 4]; 3],
    tay_ok: [bool; 3],
}

impl<'a> Line1<'a> {
    fn new(u: &'a GridFunction, x: f64) -> Self {
        let g = u.grid();
        let (cell, t) = g.locate(0, x);
        let last_cell = g.counts[0] - 2;
        let a = u.cell1(cell);
        let ux = horner(a, t);
        let mut tay = [[0.0; 4]; 3];
        let mut tay_ok = [false; 3];
        let order = if u.interp() == Interp::Cubic { 3 } else { 1 };
        for (k, slot) in tay.iter_mut().enumerate() {
            let cc = cell as isize + k as isize - 1;
            if cc < 0 || cc as usize > last_cell {
                continue;
            }
            let b = u.cell1(cc as usize);
            let tt = t + (cell as isize - cc) as f64;
            let mut e = taylor4(b, tt);
            e[0] = match k {
                1 => 0.0,
                // P_{c+1} - P_c = jump * (z - x_{c+1})^order
                2 => (b[order] - a[order]) * (t - 1.0).powi(order as i32),
                _ => (b[order] - a[order]) * t.powi(order as i32),
            };
            *slot = e;
            tay_ok[k] = true;
        }
        Self { u, x, ux, h: g.h, lo: g.lo[0], hi: g.hi()[0], cell, last_cell, tay, tay_ok }
    }

    /// `u(x) - u(x + sign y)` and the Taylor slot used, if any.
    #[inline]
    fn side(&self, sign: f64, y: f64) -> (f64, Option<usize>) {
        let z = self.x + sign * y;
        if z < self.lo || z > self.hi {
            return (self.ux - self.u.exterior().eval(&[z, 0.0], 1), None);
        }
        let zz = (z - self.lo) / self.h;
        let c = (zz.floor().max(0.0) as usize).min(self.last_cell);
        let k = c as isize - self.cell as isize + 1;
        if (0..3).contains(&k) && self.tay_ok[k as usize] {
            let b = &self.tay[k as usize];
            let w = sign * y / self.h;
            (-(b[0] + w * (b[1] + w * (b[2] + w * b[3]))), Some(k as usize))
        } else {
            let a = self.u.cell1(c);
            (self.ux - horner(a, zz - c as f64), None)
        }
    }

    #[inline]
    fn pair(&self, y: f64) -> (f64, f64, f64) {
        let (d1, k1) = self.side(1.0, y);
        let (d2, k2) = self.side(-1.0, y);
        let s = match (k1, k2) {
            (Some(i), Some(j)) => {
                let (b, e) = (&self.tay[i], &self.tay[j]);
                let w = y / self.h;
                -((b[0] + e[0]) + w * ((b[1] - e[1]) + w * ((b[2] + e[2]) + w * (b[3] - e[3]))))
            }
            _ => d1 + d2,
        };
        (d1, d2, s)
    }

    /// Sorted breakpoints on `(0, r_far]`: node distances, box edges, dyadic
    /// points up to `r_far`, plus `extra`.
    fn breakpoints(&self, r_far: f64, extra: &[f64]) -> Vec<f64> {
        let g = self.u.grid();
        let n = g.counts[0];
        let mut b: Vec<f64> = Vec::with_capacity(2 * n + 16);
        for k in 0..n {
            let d = (g.lo[0] + g.h * k as f64 - self.x).abs();
            if d > 0.0 {
                b.push(d);
            }
        }
        let dmax = (self.hi - self.x).max(self.x - self.lo);
        let mut r = dmax;
        while r < r_far {
            b.push(r);
            r *= 2.0;
        }
        b.push(r_far);
        b.extend(extra.iter().copied().filter(|&e| e > 0.0 && e < r_far));
        b.sort_by(|a, c| a.partial_cmp(c).expect("finite breakpoints"));
        let eps = 1e-12 * self.h;
        b.dedup_by(|a, c| (*a - *c).abs() <= eps);
        b
    }
}

fn eval_1d(u: &GridFunction, x: f64, ph: &Phases, q: &QuadratureSpec) -> Estimate {
    let line = Line1::new(u, x);
    let r_far = q.r_far(u);
    let mut extra = ph.kernel_breaks();
    extra.push(q.rho_near(u));
    for r in u.exterior().jump_radii() {
        extra.push((r - x).abs());
        extra.push(r + x);
    }
    let breaks = line.breakpoints(r_far, &extra);
    let mut f = |y: f64| {
        let (d1, d2, s) = line.pair(y);
        ph.integrand(&[y, 0.0], y, d1, d2, s)
    };
    integrate_segments(&mut f, &breaks, 0.25 * line.h, q, true)
}

/// Descent on `(0, b*]`, adaptive panels between breakpoints, then the tail.
fn integrate_segments<F: FnMut(f64) -> f64>(f: &mut F, breaks: &[f64], min_first: f64, q: &QuadratureSpec, singular: bool) -> Estimate {
    let tol = q.tol();
    let start = breaks.iter().position(|&b| b >= min_first).unwrap_or(breaks.len() - 1);
    let mut total = if singular {
        singular_left(f, 0.0, breaks[start], tol, q.min_ratio).estimate
    } else {
        adaptive(f, 0.0, breaks[start], tol)
    };
    for w in breaks[start..].windows(2) {
        total += adaptive(f, w[0], w[1], tol);
    }
    let r_far = *breaks.last().expect("nonempty breakpoints");
    total += half_line(f, r_far, tol, 2000).estimate;
    total
}

/// Interpolant seen from a base point of a 2D grid.
struct Plane<'a> {
    u: &'a GridFunction,
    x: Point,
    ux: f64,
    h: f64,
    lo: Point,
    hi: Point,
    last: [usize; 2],
    /// Cells whose closure contains `x`, with Taylor data in powers of `y/h`.
    local: Vec<([usize; 2], [f64; 16])>,
    /// Radius below which both `x +- y` stay in local cells.
    r_local: f64,
}

fn binom(m: usize, k: usize) -> f64 {
    const T: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    T[m][k]
}

fn taylor16(a: &[f64], t0: f64, t1: f64) -> [f64; 16] {
    let mut b = [0.0; 16];
    for k in 0..4 {
        for l in 0..4 {
            let mut acc = 0.0;
            for m in k..4 {
                for n in l..4 {
                    acc += a[m + 4 * n] * binom(m, k) * binom(n, l) * t0.powi((m - k) as i32) * t1.powi((n - l) as i32);
                }
            }
            b[k + 4 * l] = acc;
        }
    }
    b
}

impl<'a> Plane<'a> {
    fn new(u: &'a GridFunction, x: &Point) -> Self {
        let g = u.grid();
        let h = g.h;
        let hi = g.hi();
        let last = [g.counts[0] - 2, g.counts[1] - 2];
        let mut xs = *x;
        let mut axis_cells: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut r_local = f64::INFINITY;
        for a in 0..2 {
            let z = (x[a] - g.lo[a]) / h;
            let k = z.round();
            if (z - k).abs() < 1e-4 {
                // on a grid line: both adjacent cells are local
                xs[a] = g.lo[a] + k * h;
                let k = k as isize;
                for c in [k - 1, k] {
                    if c >= 0 && c as usize <= last[a] {
                        axis_cells[a].push(c as usize);
                    }
                }
                r_local = r_local.min(h);
            } else {
                let c = (z.floor().max(0.0) as usize).min(last[a]);
                axis_cells[a].push(c);
                let t = z - c as f64;
                r_local = r_local.min(t.min(1.0 - t).max(0.0) * h);
            }
        }
        let mut local = Vec::new();
        for &c0 in &axis_cells[0] {
            for &c1 in &axis_cells[1] {
                let t0 = (xs[0] - g.lo[0]) / h - c0 as f64;
                let t1 = (xs[1] - g.lo[1]) / h - c1 as f64;
                let mut b = taylor16(u.cell2(c0, c1), t0, t1);
                b[0] = 0.0;
                local.push(([c0, c1], b));
            }
        }
        let ux = u.eval_inside(&xs);
        Self { u, x: xs, ux, h, lo: g.lo, hi, last, local, r_local }
    }

    #[inline]
    fn cell_of(&self, z: &Point) -> [usize; 2] {
        let mut c = [0usize; 2];
        for a in 0..2 {
            let zz = (z[a] - self.lo[a]) / self.h;
            c[a] = (zz.floor().max(0.0) as usize).min(self.last[a]);
        }
        c
    }

    #[inline]
    fn side(&self, y: &Point) -> (f64, Option<usize>) {
        let z = [self.x[0] + y[0], self.x[1] + y[1]];
        if z[0] < self.lo[0] || z[0] > self.hi[0] || z[1] < self.lo[1] || z[1] > self.hi[1] {
            return (self.ux - self.u.exterior().eval(&z, 2), None);
        }
        let c = self.cell_of(&z);
        if let Some(i) = self.local.iter().position(|(lc, _)| *lc == c) {
            let b = &self.local[i].1;
            (-poly2(b, y[0] / self.h, y[1] / self.h), Some(i))
        } else {
            (self.ux - self.u.eval_inside(&z), None)
        }
    }

    #[inline]
    fn pair(&self, y: &Point) -> (f64, f64, f64) {
        let (d1, k1) = self.side(y);
        let m = [-y[0], -y[1]];
        let (d2, k2) = self.side(&m);
        let s = match (k1, k2) {
            (Some(i), Some(j)) => {
                let (b, e) = (&self.local[i].1, &self.local[j].1);
                let w = [y[0] / self.h, y[1] / self.h];
                let mut comb = [0.0; 16];
                for k in 0..4 {
                    for l in 0..4 {
                        let sg = if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
                        comb[k + 4 * l] = b[k + 4 * l] + sg * e[k + 4 * l];
                    }
                }
                -poly2(&comb, w[0], w[1])
            }
            _ => d1 + d2,
        };
        (d1, d2, s)
    }

    /// Angles in `[0, pi]` where `x +- r e_theta` meets the box boundary.
    fn angle_breaks(&self, r: f64) -> Vec<f64> {
        let mut out = vec![0.0, std::f64::consts::PI];
        for a in 0..2 {
            for edge in [self.lo[a], self.hi[a]] {
                let c = (edge - self.x[a]) / r;
                for v in [c, -c] {
                    if v.abs() <= 1.0 {
                        let th = if a == 0 { v.acos() } else { v.asin() };
                        for t in [th, std::f64::consts::PI - th, th + std::f64::consts::PI] {
                            if t > 0.0 && t < std::f64::consts::PI {
                                out.push(t);
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    fn radial_breaks(&self, r_far: f64, extra: &[f64]) -> Vec<f64> {
        let mut b = Vec::new();
        let d = [self.x[0] - self.lo[0], self.hi[0] - self.x[0], self.x[1] - self.lo[1], self.hi[1] - self.x[1]];
        b.extend(d.iter().copied());
        for i in 0..2 {
            for j in 2..4 {
                b.push(d[i].hypot(d[j]));
            }
        }
        let dmax = b.iter().copied().fold(0.0, f64::max);
        let mut r = self.h;
        while r < dmax {
            b.push(r);
            r += self.h;
        }
        let mut r = dmax;
        while r < r_far {
            b.push(r);
            r *= 2.0;
        }
        b.push(r_far);
        b.push(self.r_local);
        b.extend(extra.iter().copied().filter(|&e| e > 0.0 && e < r_far));
        b.retain(|&v| v > 0.0 && v <= r_far);
        b.sort_by(|a, c| a.partial_cmp(c).expect("finite breakpoints"));
        b.dedup_by(|a, c| (*a - *c).abs() <= 1e-12 * self.h);
        b
    }
}

#[inline]
fn poly2(b: &[f64; 16], w0: f64, w1: f64) -> f64 {
    let mut acc = 0.0;
    for l in (0..4).rev() {
        let row = &b[4 * l..4 * l + 4];
        acc = acc * w1 + ((row[3] * w0 + row[2]) * w0 + row[1]) * w0 + row[0];
    }
    acc
}

fn eval_2d(u: &GridFunction, x: &Point, ph: &Phases, q: &QuadratureSpec) -> Estimate {
    let plane = Plane::new(u, x);
    let ph = Phases { x: plane.x, ..*ph };
    let r_far = q.r_far(u);
    let mut extra = ph.kernel_breaks();
    extra.push(q.rho_near(u));
    let breaks = plane.radial_breaks(r_far, &extra);
    let inner_tol = Tol::new(q.tol * 0.1, q.abs_tol * 0.1);
    let mut g = |r: f64| {
        let th = plane.angle_breaks(r);
        let mut f = |t: f64| {
            let y = [r * t.cos(), r * t.sin()];
            let (d1, d2, s) = plane.pair(&y);
            ph.integrand(&y, r, d1, d2, s)
        };
        let mut acc = 0.0;
        for w in th.windows(2) {
            acc += adaptive(&mut f, w[0], w[1], inner_tol).value;
        }
        acc * r
    };
    integrate_segments(&mut g, &breaks, plane.r_local.min(0.25 * plane.h), q, true)
}

/// The integral over `|y| > eps` evaluated side by side, without pairing.
///
/// Converges to the principal value as `eps -> 0`.
pub fn evaluate_excluded(u: &GridFunction, x: &Point, params: &ProblemParams, q: &QuadratureSpec, eps: f64) -> Result<Estimate> {
    check_preconditions(u, params)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParams("exclusion radius must be positive".into()));
    }
    let ph = Phases::new(params, *x);
    if u.dim() == 1 {
        let line = Line1::new(u, x[0]);
        let r_far = q.r_far(u);
        let mut extra = ph.kernel_breaks();
        extra.push(eps);
        let breaks: Vec<f64> = line.breakpoints(r_far, &extra).into_iter().filter(|&b| b >= eps).collect();
        let mut total = Estimate::ZERO;
        for sign in [1.0, -1.0] {
            let mut f = |y: f64| ph.one_sided(&[sign * y, 0.0], y, line.side(sign, y).0);
            for w in breaks.windows(2) {
                total += adaptive(&mut f, w[0], w[1], q.tol());
            }
            total += half_line(&mut f, r_far, q.tol(), 2000).estimate;
        }
        Ok(total)
    } else {
        let plane = Plane::new(u, x);
        let ph = Phases { x: plane.x, ..ph };
        let r_far = q.r_far(u);
        let mut extra = ph.kernel_breaks();
        extra.push(eps);
        let breaks: Vec<f64> = plane.radial_breaks(r_far, &extra).into_iter().filter(|&b| b >= eps).collect();
        let inner_tol = Tol::new(q.tol * 0.1, q.abs_tol * 0.1);
        let mut g = |r: f64| {
            let mut th = plane.angle_breaks(r);
            let pi = std::f64::consts::PI;
            th.extend(plane.angle_breaks(r).into_iter().map(|t| t + pi));
            th.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            th.dedup();
            let mut f = |t: f64| {
                let y = [r * t.cos(), r * t.sin()];
                ph.one_sided(&y, r, plane.side(&y).0)
            };
            let mut acc = 0.0;
            for w in th.windows(2) {
                acc += adaptive(&mut f, w[0], w[1], inner_tol).value;
            }
            acc * r
        };
        let mut total = Estimate::ZERO;
        for w in breaks.windows(2) {
            total += adaptive(&mut g, w[0], w[1], q.tol());
        }
        total += half_line(&mut g, r_far, q.tol(), 2000).estimate;
        Ok(total)
    }
}

/// Operator on the function equal to `phi` in `B_rho(x0)` and to `u` outside.
///
/// `phi` must touch `u` from above at `x0`: `phi(x0) = u(x0)` and `phi >= u`
/// at the probes inside the ball, both within `1e-10`.
pub fn evaluate_truncated(
    u: &GridFunction,
    phi: &(dyn Fn(&Point) -> f64 + Sync),
    x0: &Point,
    rho: f64,
    params: &ProblemParams,
    q: &QuadratureSpec,
) -> Result<Estimate> {
    check_preconditions(u, params)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParams("truncation radius must be positive".into()));
    }
    let n = u.dim();
    let ux = u.eval(x0);
    let p0 = phi(x0);
    if (p0 - ux).abs() > 1e-10 {
        return Err(Error::TouchViolation { point: *x0, gap: p0 - ux });
    }
    let g = u.grid();
    let mut probes: Vec<Point> = (0..g.len()).map(|k| g.node(k)).collect();
    for k in 1..=64 {
        let r = rho * k as f64 / 64.0;
        if n == 1 {
            probes.push([x0[0] + r, 0.0]);
            probes.push([x0[0] - r, 0.0]);
        } else {
            for j in 0..16 {
                let th = std::f64::consts::TAU * j as f64 / 16.0;
                probes.push([x0[0] + r * th.cos(), x0[1] + r * th.sin()]);
            }
        }
    }
    for z in &probes {
        if crate::params::norm(&crate::params::sub(z, x0), n) < rho {
            let gap = phi(z) - u.eval(z);
            if gap < -1e-10 {
                return Err(Error::TouchViolation { point: *z, gap });
            }
        }
    }
    let ph = Phases::new(params, *x0);
    let tol = q.tol();
    let glued = |z: &Point, r: f64| if r < rho { phi(z) } else { u.eval(z) };
    if n == 1 {
        let line = Line1::new(u, x0[0]);
        let r_far = q.r_far(u).max(2.0 * rho);
        let mut extra = ph.kernel_breaks();
        extra.push(rho);
        let outer: Vec<f64> = line.breakpoints(r_far, &extra).into_iter().filter(|&b| b >= rho).collect();
        let mut near = |y: f64| {
            let d1 = p0 - glued(&[x0[0] + y, 0.0], y);
            let d2 = p0 - glued(&[x0[0] - y, 0.0], y);
            ph.integrand(&[y, 0.0], y, d1, d2, d1 + d2)
        };
        let mut total = singular_left(&mut near, 0.0, rho, tol, q.min_ratio).estimate;
        let mut far = |y: f64| {
            let d1 = p0 - u.eval(&[x0[0] + y, 0.0]);
            let d2 = p0 - u.eval(&[x0[0] - y, 0.0]);
            ph.integrand(&[y, 0.0], y, d1, d2, d1 + d2)
        };
        for w in outer.windows(2) {
            total += adaptive(&mut far, w[0], w[1], tol);
        }
        total += half_line(&mut far, r_far, tol, 2000).estimate;
        Ok(total)
    } else {
        let plane = Plane::new(u, x0);
        let r_far = q.r_far(u).max(2.0 * rho);
        let mut extra = ph.kernel_breaks();
        extra.push(rho);
        let breaks: Vec<f64> = plane.radial_breaks(r_far, &extra).into_iter().filter(|&b| b >= rho).collect();
        let inner_tol = Tol::new(q.tol * 0.1, q.abs_tol * 0.1);
        let mut g = |r: f64| {
            let th = if r < rho { vec![0.0, std::f64::consts::PI] } else { plane.angle_breaks(r) };
            let mut f = |t: f64| {
                let y = [r * t.cos(), r * t.sin()];
                let d1 = p0 - glued(&[x0[0] + y[0], x0[1] + y[1]], r);
                let d2 = p0 - glued(&[x0[0] - y[0], x0[1] - y[1]], r);
                ph.integrand(&y, r, d1, d2, d1 + d2)
            };
            let mut acc = 0.0;
            for w in th.windows(2) {
                acc += adaptive(&mut f, w[0], w[1], inner_tol).value;
            }
            acc * r
        };
        let mut total = singular_left(&mut g, 0.0, rho, tol, q.min_ratio).estimate;
        for w in breaks.windows(2) {
            total += adaptive(&mut g, w[0], w[1], tol);
        }
        total += half_line(&mut g, r_far, tol, 2000).estimate;
        Ok(total)
    }
}

/// Double-phase energy of a grid function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `+inf` when a divergence test fires.
    pub value: f64,
    pub error: f64,
    pub finite: bool,
    pub reason: Option<String>,
}

impl EnergyReport {
    fn infinite(reason: String) -> Self {
        Self { value: f64::INFINITY, error: 0.0, finite: false, reason: Some(reason) }
    }
}

/// Energy over pairs `(x, x+y)` not both outside the box, with Gagliardo
/// kernels and weight `c_hat a` on the second phase.
///
/// Flags `+inf` when the tail or a boundary-layer descent fails to converge.
pub fn energy(u: &GridFunction, params: &ProblemParams, q: &QuadratureSpec) -> Result<EnergyReport> {
    let e = &params.exponents;
    if u.dim() != e.n {
        return Err(Error::InvalidParams("grid dimension differs from n".into()));
    }
    let growth = u.exterior().growth_exponent();
    let mut lim = e.sp() / e.p;
    if params.m_hat() > 0.0 {
        lim = lim.min(e.tq() / e.q);
    }
    if growth >= lim {
        return Ok(EnergyReport::infinite(format!("exterior growth {growth} >= {lim}")));
    }
    let n = e.n;
    let ksp = KernelField::gagliardo(n, e.s, e.p);
    let ktq = KernelField::gagliardo(n, e.t, e.q);
    let has_q = params.m_hat() > 0.0;
    let g = u.grid();
    let density = |z: &Point, y: &Point, r: f64| -> f64 {
        let d = u.eval(z) - u.eval(&[z[0] + y[0], z[1] + y[1]]);
        let ad = d.abs();
        let mut v = ad.powf(e.p) * ksp.eval_radial(z, r);
        let outside = !g.contains(&[z[0] + y[0], z[1] + y[1]]);
        if outside {
            v *= 2.0;
        }
        if has_q {
            let kq = ktq.eval_radial(z, r);
            let mut a = params.coefficient.eval(z, y);
            if outside {
                a += params.coefficient.eval(&[z[0] + y[0], z[1] + y[1]], &[-y[0], -y[1]]);
            }
            v += params.c_hat * a * ad.powf(e.q) * kq;
        }
        v
    };
    let tol = Tol::new(q.tol.max(1e-9), q.abs_tol);
    let r_far = q.r_far(u);
    let mut diverged: Option<String> = None;
    let mut inner = |z: &Point| -> Estimate {
        if n == 1 {
            let line = Line1::new(u, z[0]);
            let breaks = line.breakpoints(r_far, &[]);
            let mut acc = Estimate::ZERO;
            for sign in [1.0, -1.0] {
                let mut f = |y: f64| density(z, &[sign * y, 0.0], y);
                let start = breaks.iter().position(|&b| b >= 0.25 * g.h).unwrap_or(0);
                acc += singular_left(&mut f, 0.0, breaks[start], tol, q.min_ratio).estimate;
                for w in breaks[start..].windows(2) {
                    acc += adaptive(&mut f, w[0], w[1], tol);
                }
                let t = half_line(&mut f, r_far, tol, 4000);
                if t.diverging() || !t.estimate.error.is_finite() {
                    diverged = Some("tail does not converge".into());
                }
                acc += t.estimate;
            }
            acc
        } else {
            let plane = Plane::new(u, z);
            let breaks = plane.radial_breaks(r_far, &[]);
            let itol = Tol::new(tol.rel * 0.1, tol.abs * 0.1);
            let mut gr = |r: f64| {
                let mut th = plane.angle_breaks(r);
                th.extend(plane.angle_breaks(r).into_iter().map(|t| t + std::f64::consts::PI));
                th.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                th.dedup();
                let mut f = |t: f64| density(&plane.x, &[r * t.cos(), r * t.sin()], r);
                let mut acc = 0.0;
                for w in th.windows(2) {
                    acc += adaptive(&mut f, w[0], w[1], itol).value;
                }
                acc * r
            };
            let mut acc = singular_left(&mut gr, 0.0, breaks[0], tol, q.min_ratio).estimate;
            for w in breaks.windows(2) {
                acc += adaptive(&mut gr, w[0], w[1], tol);
            }
            let t = half_line(&mut gr, r_far, tol, 4000);
            if t.diverging() || !t.estimate.error.is_finite() {
                diverged = Some("tail does not converge".into());
            }
            acc + t.estimate
        }
    };
    let lo = g.lo;
    let hi = g.hi();
    let mut total = Estimate::ZERO;
    if n == 1 {
        let cells = g.counts[0] - 1;
        let mut outer = |x: f64| inner(&[x, 0.0]).value;
        for c in 0..cells {
            let a = lo[0] + g.h * c as f64;
            let b = a + g.h;
            if c == 0 || c + 1 == cells {
                // boundary layer: descend toward the box edge
                let (edge, sgn) = if c == 0 { (lo[0], 1.0) } else { (hi[0], -1.0) };
                let mut f = |d: f64| outer(edge + sgn * d);
                let d = singular_left(&mut f, 0.0, g.h, tol, 1e-6);
                if d.diverging() {
                    return Ok(EnergyReport::infinite(format!("boundary layer at x = {edge} diverges (ratio {})", d.ratio)));
                }
                total += d.estimate;
            } else {
                total += adaptive(&mut outer, a, b, Tol::new(tol.rel * 10.0, tol.abs).with_panels(20));
            }
        }
    } else {
        let (xs, ws) = crate::quad::gauss_legendre(4);
        let cells = [g.counts[0] - 1, g.counts[1] - 1];
        for c1 in 0..cells[1] {
            for c0 in 0..cells[0] {
                for (i, xi) in xs.iter().enumerate() {
                    for (j, xj) in xs.iter().enumerate() {
                        let z = [lo[0] + g.h * (c0 as f64 + 0.5 + 0.5 * xi), lo[1] + g.h * (c1 as f64 + 0.5 + 0.5 * xj)];
                        let w = 0.25 * g.h * g.h * ws[i] * ws[j];
                        total += inner(&z).scaled(w);
                    }
                }
            }
        }
    }
    if let Some(r) = diverged {
        return Ok(EnergyReport::infinite(r));
    }
    Ok(EnergyReport { value: total.value, error: total.error, finite: true, reason: None })
}

/// Energies along a refinement family and the contraction test of their increments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyRefinement {
    pub spacings: Vec<f64>,
    pub energies: Vec<f64>,
    /// Ratios `|E_{k+2} - E_{k+1}| / |E_{k+1} - E_k|`.
    pub ratios: Vec<f64>,
    pub finite: bool,
}

/// Flags `+inf` when increments fail to contract over three successive refinements.
pub fn energy_refinement(samples: &[GridFunction], params: &ProblemParams, q: &QuadratureSpec) -> Result<EnergyRefinement> {
    if samples.len() < 4 {
        return Err(Error::InvalidParams("need at least four refinement levels".into()));
    }
    let mut spacings = Vec::new();
    let mut energies = Vec::new();
    for s in samples {
        let r = energy(s, params, q)?;
        spacings.push(s.grid().h);
        energies.push(r.value);
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Ok(EnergyRefinement { spacings, energies, ratios: Vec::new(), finite: false });
    }
    let inc: Vec<f64> = energies.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let ratios: Vec<f64> = inc.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let finite = ratios.iter().any(|&r| r < 0.9);
    Ok(EnergyRefinement { spacings, energies, ratios, finite })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Exterior, Grid};
    use crate::params::{pt1, Exponents};

    fn params(s: f64, p: f64) -> ProblemParams {
        let mut pp = ProblemParams::model(Exponents::new(1, s, 0.5, p, p.max(2.2)));
        pp.coefficient = CoefficientField::constant(0.0);
        pp
    }

    #[test]
    fn psi_pair_matches_direct_sum_when_well_conditioned() {
        for (d1, d2) in [(0.3, -0.2), (-1.0, 0.999), (0.5, 0.25), (0.0, -0.3)] {
            let direct = psi(1.7, d1) + psi(1.7, d2);
            assert!((psi_pair(1.7, d1, d2, d1 + d2) - direct).abs() < 1e-14);
        }
        // near-cancelling pair keeps relative precision
        let d = 1e-3;
        let s = 1e-15;
        let exact = 1.7 - 1.0;
        let v = psi_pair(1.7, -d, d + s, s);
        let lead = exact * d.powf(0.7 - 1.0) * s;
        assert!((v - lead).abs() < 1e-6 * lead.abs(), "{v} vs {lead}");
    }

    #[test]
    fn constants_are_annihilated() {
        let g = Grid::centered(1, 2.0, 41).unwrap();
        let u = GridFunction::from_fn(g, |_| 0.7, Exterior::Constant { value: 0.7 }, Interp::Cubic).unwrap();
        let v = evaluate(&u, &pt1(0.3), &params(0.6, 2.0), &QuadratureSpec::default()).unwrap();
        assert!(v.value.abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn quadratic_matches_closed_form_inside_a_large_box() {
        // u = x^2 inside, R^2 outside
        let r = 1.0;
        let s = 0.3;
        let g = Grid::centered(1, r, 201).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0] * x[0], Exterior::Constant { value: r * r }, Interp::Cubic).unwrap();
        let pp = params(s, 2.0);
        let v = evaluate(&u, &pt1(0.0), &pp, &QuadratureSpec::default()).unwrap();
        // int_{-R}^{R} -y^2 |y|^{-1-2s} dy + 2 int_R^inf -R^2 y^{-1-2s} dy
        let a = 2.0 * s;
        let exact = -2.0 * r.powf(2.0 - a) / (2.0 - a) - 2.0 * r * r * r.powf(-a) / a;
        // natural end conditions perturb the interpolant near the box edges at O(h^2)
        assert!((v.value - exact).abs() < 1e-6 * exact.abs(), "{} vs {exact}", v.value);
    }

    #[test]
    fn margin_is_enforced() {
        let g = Grid::centered(1, 1.0, 21).unwrap();
        let u = GridFunction::from_fn(g, |_| 0.0, Exterior::Constant { value: 0.0 }, Interp::Cubic).unwrap();
        let err = evaluate(&u, &pt1(0.95), &params(0.6, 2.0), &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, Error::OutsideMargin { .. }));
    }

    #[test]
    fn linear_interpolation_requires_integrable_near_field() {
        let g = Grid::centered(1, 1.0, 21).unwrap();
        let u = GridFunction::from_fn(g, |_| 0.0, Exterior::Constant { value: 0.0 }, Interp::Linear).unwrap();
        let err = evaluate(&u, &pt1(0.0), &params(0.6, 2.0), &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, Error::NonIntegrableNearField { .. }));
        assert!(evaluate(&u, &pt1(0.0), &params(0.3, 2.0), &QuadratureSpec::default()).is_ok());
    }

    #[test]
    fn tail_divergence_is_detected() {
        let g = Grid::centered(1, 1.0, 21).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0], Exterior::Affine { slope: [1.0, 0.0], offset: 0.0 }, Interp::Cubic).unwrap();
        let err = evaluate(&u, &pt1(0.0), &params(0.4, 2.0), &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, Error::TailDivergence { .. }));
    }
}
