//! Rescaling `u -> lambda u(mu x + x0)` of problems and grid functions, and
//! the dyadic blow-up used by the oscillation induction.

use serde::{Deserialize, Serialize};

use crate::constants::ball_probes;
use crate::error::{Error, Result};
use crate::grid::{envelope, Exterior, Grid, GridFunction};
use crate::operator::{evaluate, QuadratureSpec};
use crate::params::{norm, Frame, Point, ProblemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingContext {
    pub lambda: f64,
    pub mu: f64,
    pub x0: Point,
    /// Dyadic level of a blow-up; zero otherwise.
    pub j: u32,
    pub gamma: f64,
    /// Subtracted midpoint `(b_j + c_j) / 2` of a blow-up.
    pub m: f64,
}

impl ScalingContext {
    pub fn new(lambda: f64, mu: f64, x0: Point) -> Result<Self> {
        let ctx = Self { lambda, mu, x0, j: 0, gamma: 0.0, m: 0.0 };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn identity() -> Self {
        Self { lambda: 1.0, mu: 1.0, x0: [0.0, 0.0], j: 0, gamma: 0.0, m: 0.0 }
    }

    /// `lambda = 2^{gamma j + 1}`, `mu = 2^{-j}`.
    pub fn blowup(j: u32, gamma: f64, m: f64, x0: Point) -> Self {
        Self { lambda: 2f64.powf(gamma * j as f64 + 1.0), mu: 2f64.powi(-(j as i32)), x0, j, gamma, m }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.lambda) && ok(self.mu) && self.x0.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::DegenerateScaling)
        }
    }

    pub fn frame(&self) -> Frame {
        Frame { scale: self.mu, shift: self.x0 }
    }

    /// The context of rescaling by `self` and then by `next`.
    pub fn then(&self, next: &ScalingContext) -> ScalingContext {
        let f = self.frame().then_inner(&next.frame());
        ScalingContext { lambda: self.lambda * next.lambda, mu: f.scale, x0: f.shift, j: 0, gamma: 0.0, m: 0.0 }
    }

    /// Factor `lambda^{p-1} mu^{sp}` carried by the source.
    pub fn source_factor(&self, params: &ProblemParams) -> f64 {
        let e = &params.exponents;
        self.lambda.powf(e.p - 1.0) * self.mu.powf(e.sp())
    }

    /// Factor `lambda^{p-q} mu^{sp-tq}` carried by the coefficient.
    pub fn coefficient_factor(&self, params: &ProblemParams) -> f64 {
        let e = &params.exponents;
        self.lambda.powf(e.p - e.q) * self.mu.powf(e.sp() - e.tq())
    }
}

/// Problem solved by `lambda u(mu x + x0)` when `u` solves `params`.
///
/// Kernels keep their kind and pick up the composed frame, which realises
/// `mu^{n+sp} K(mu x + x0, mu y)` exactly; `c_hat` is left untouched.
pub fn rescale_problem(params: &ProblemParams, ctx: &ScalingContext) -> Result<ProblemParams> {
    ctx.validate()?;
    let f = ctx.frame();
    let mut out = params.clone();
    out.kernel_sp.frame = params.kernel_sp.frame.then_inner(&f);
    out.kernel_tq.frame = params.kernel_tq.frame.then_inner(&f);
    out.coefficient.frame = params.coefficient.frame.then_inner(&f);
    out.coefficient.factor *= ctx.coefficient_factor(params);
    out.source.frame = params.source.frame.then_inner(&f);
    out.source.factor *= ctx.source_factor(params);
    Ok(out)
}

/// `lambda^{p-q} mu^{sp-tq} M`.
pub fn m_hat_formula(params: &ProblemParams, ctx: &ScalingContext) -> f64 {
    ctx.coefficient_factor(params) * params.m_bound()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingProbe {
    /// Probe in the rescaled frame.
    pub x: Point,
    /// Its image `mu x + x0`.
    pub z: Point,
    pub lhs: f64,
    pub rhs: f64,
    pub error: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingIdentityReport {
    pub context: ScalingContext,
    pub probes: Vec<ScalingProbe>,
    pub max_discrepancy: f64,
    /// Largest combined quadrature error relative to the same denominator.
    pub max_quadrature_error: f64,
}

/// Compares `L-hat(lambda u(mu . + x0))(x)` with `lambda^{p-1} mu^{sp} (L u)(mu x + x0)`.
///
/// Eight probes are taken in the central 60% of the box of `u`. The
/// discrepancy is relative to `|rhs|`, floored at `1e-3` of the largest
/// `|rhs|` so that probes where the operator vanishes do not dominate.
pub fn scaling_identity_check(
    u: &GridFunction,
    params: &ProblemParams,
    ctx: &ScalingContext,
    q: &QuadratureSpec,
) -> Result<ScalingIdentityReport> {
    ctx.validate()?;
    let hat = rescale_problem(params, ctx)?;
    let v = u.affine_image(ctx.lambda, ctx.mu, ctx.x0, 0.0)?;
    let g = u.grid();
    let hi = g.hi();
    let n = g.dim;
    let center = [0.5 * (g.lo[0] + hi[0]), if n == 1 { 0.0 } else { 0.5 * (g.lo[1] + hi[1]) }];
    let half = 0.5 * (hi[0] - g.lo[0]).min(if n == 1 { f64::INFINITY } else { hi[1] - g.lo[1] });
    let factor = ctx.source_factor(params);
    let zs: Vec<Point> = ball_probes(n, 8, 0.6 * half, 1)
        .into_iter()
        .map(|p| [center[0] + p[0], if n == 1 { 0.0 } else { center[1] + p[1] }])
        .collect();
    let mut raw = Vec::with_capacity(zs.len());
    for z in zs {
        let x = [(z[0] - ctx.x0[0]) / ctx.mu, if n == 1 { 0.0 } else { (z[1] - ctx.x0[1]) / ctx.mu }];
        let l = evaluate(&v, &x, &hat, q)?;
        let r = evaluate(u, &z, params, q)?.scaled(factor);
        raw.push((x, z, l, r));
    }
    let scale = raw.iter().fold(0.0f64, |m, r| m.max(r.3.value.abs()));
    let mut probes = Vec::with_capacity(raw.len());
    let (mut max_d, mut max_e) = (0.0f64, 0.0f64);
    for (x, z, l, r) in raw {
        let denom = r.value.abs().max(1e-3 * scale).max(f64::MIN_POSITIVE);
        let d = (l.value - r.value).abs() / denom;
        let err = (l.error + r.error) / denom;
        max_d = max_d.max(d);
        max_e = max_e.max(err);
        probes.push(ScalingProbe { x, z, lhs: l.value, rhs: r.value, error: l.error + r.error, discrepancy: d });
    }
    Ok(ScalingIdentityReport { context: *ctx, probes, max_discrepancy: max_d, max_quadrature_error: max_e })
}

/// Envelopes `b_i <= u~ <= c_i` on `B_{2^{-i}}(x0)` for `i = 0..=j`.
///
/// Levels `i < 0` reuse level 0, whose envelope is `[inf u~, inf u~ + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionState {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl InductionState {
    pub fn start(inf: f64) -> Self {
        Self { b: vec![inf], c: vec![inf + 1.0] }
    }

    pub fn level(&self) -> usize {
        self.b.len() - 1
    }

    pub fn at(&self, i: i64) -> (f64, f64) {
        let k = i.clamp(0, self.level() as i64) as usize;
        (self.b[k], self.c[k])
    }

    pub fn midpoint(&self) -> f64 {
        let (b, c) = self.at(self.level() as i64);
        0.5 * (b + c)
    }

    pub fn push(&mut self, b: f64, c: f64) {
        self.b.push(b);
        self.c.push(c);
    }
}

/// Bounds a blow-up must satisfy for the growth lemma to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupTargets {
    pub sigma: f64,
    pub eta: f64,
    /// Effective coefficient bound `c_hat M` the constants were certified for.
    pub m_bar: f64,
    /// Allowance for interpolation error in the sampled bounds.
    pub tol: f64,
}

/// Grid onto which each blow-up is resampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self { half_width: 2.0, nodes: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub witness: Point,
    pub ok: bool,
}

impl BoundCheck {
    fn new(name: &str, value: f64, bound: f64, witness: Point, tol: f64) -> Self {
        Self { name: name.to_string(), value, bound, witness, ok: value <= bound + tol }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupReport {
    pub context: ScalingContext,
    /// `+1` for the blow-up itself, `-1` for its negative.
    pub sign: f64,
    pub checks: Vec<BoundCheck>,
    /// Largest gap between the resampled function and the exact affine image.
    pub resample_error: f64,
    pub ok: bool,
}

impl BlowupReport {
    pub fn first_failure(&self) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| !c.ok)
    }
}

#[derive(Debug, Clone)]
pub struct Blowup {
    pub u_bar: GridFunction,
    pub params: ProblemParams,
    pub report: BlowupReport,
}

/// `sign * 2^{gamma j + 1}(u~(2^{-j} x + x0) - m)` with the transformed
/// problem and the four bound checks, without failing on a violated bound.
///
/// The function is resampled onto `spec`; outside that box it takes the
/// dyadic envelope value `sign * 2^{gamma j + 1}(e_{j-l-1} - m)` on the shell
/// `2^l <= |x| < 2^{l+1}`, with `e = c` for `sign = 1` and `e = b` otherwise.
/// This envelope dominates the true exterior, which can only lower the
/// operator at points of `B_1`.
#[allow(clippy::too_many_arguments)]
pub fn blowup_unchecked(
    u_tilde: &GridFunction,
    params: &ProblemParams,
    state: &InductionState,
    gamma: f64,
    x0: Point,
    sign: f64,
    targets: &BlowupTargets,
    spec: &ResampleSpec,
) -> Result<Blowup> {
    let j = state.level() as u32;
    let m = state.midpoint();
    let ctx = ScalingContext::blowup(j, gamma, m, x0);
    let n = u_tilde.dim();
    let lam = ctx.lambda;
    let mu = ctx.mu;

    let env = |i: i64| {
        let (b, c) = state.at(i);
        sign * lam * (if sign > 0.0 { c } else { b } - m)
    };
    let values: Vec<f64> = (0..=j as i64).map(|l| env(j as i64 - l - 1)).collect();
    let exterior = Exterior::Shells { values, outer: env(-1) };

    let grid = Grid::centered(n, spec.half_width, spec.nodes)?;
    let image = |x: &Point| sign * lam * (u_tilde.eval(&[mu * x[0] + x0[0], mu * x[1] + x0[1]]) - m);
    let u_bar = GridFunction::from_fn(grid, image, exterior, u_tilde.interp())?;

    let mut bar = rescale_problem(params, &ctx)?;
    bar.source.factor *= sign;

    let lazy = u_tilde.affine_image(sign * lam, mu, x0, m)?;
    let probes = ball_probes(n, 256, 0.999 * spec.half_width, 1);
    let resample_error = probes.iter().fold(0.0f64, |acc, x| {
        if lazy.grid().contains(x) {
            acc.max((u_bar.eval(x) - lazy.eval(x)).abs())
        } else {
            acc
        }
    });

    let tol = targets.tol;
    let mut checks = Vec::with_capacity(4);

    // sup over B_1: nodes and interpolant probes
    let inside: Vec<Point> = (0..u_bar.grid().len())
        .map(|k| u_bar.grid().node(k))
        .filter(|x| norm(x, n) < 1.0)
        .chain(ball_probes(n, 256, 1.0, 1))
        .collect();
    let (mut sup, mut w) = (0.0f64, [0.0, 0.0]);
    for x in &inside {
        let v = u_bar.eval(x).abs();
        if v > sup {
            sup = v;
            w = *x;
        }
    }
    checks.push(BoundCheck::new("u_bar_sup", sup, 1.0, w, tol));

    checks.push(BoundCheck::new("f_bar_sup", bar.source.sup_norm(), targets.sigma, x0, 0.0));
    checks.push(BoundCheck::new("a_bar_sup", bar.m_hat(), targets.m_bar, x0, 0.0));

    // exterior growth: data nodes with |x| >= 1, then each envelope shell at its inner radius
    let eta = targets.eta;
    let (mut worst, mut wv, mut wb, mut wx) = (f64::NEG_INFINITY, 0.0, 0.0, [0.0, 0.0]);
    let mut consider = |x: Point, v: f64, r: f64| {
        let bound = envelope(r, eta);
        if v - bound > worst {
            worst = v - bound;
            wv = v;
            wb = bound;
            wx = x;
        }
    };
    for k in 0..u_bar.grid().len() {
        let x = u_bar.grid().node(k);
        let r = norm(&x, n);
        if r >= 1.0 {
            consider(x, u_bar.values()[k], r);
        }
    }
    let Exterior::Shells { values, outer } = u_bar.exterior().clone() else { unreachable!() };
    let first_out = spec.half_width;
    for (l, v) in values.iter().enumerate() {
        let r_in = 2f64.powi(l as i32).max(first_out);
        if r_in < 2f64.powi(l as i32 + 1) {
            consider([r_in, 0.0], *v, r_in);
        }
    }
    let r_outer = 2f64.powi(values.len() as i32).max(first_out);
    consider([r_outer, 0.0], outer, r_outer);
    checks.push(BoundCheck::new("exterior_growth", wv, wb, wx, tol));

    let ok = checks.iter().all(|c| c.ok);
    Ok(Blowup { u_bar, params: bar, report: BlowupReport { context: ctx, sign, checks, resample_error, ok } })
}

/// As [`blowup_unchecked`], failing with `InductionViolation` on the first violated bound.
#[allow(clippy::too_many_arguments)]
pub fn blowup_step(
    u_tilde: &GridFunction,
    params: &ProblemParams,
    state: &InductionState,
    gamma: f64,
    x0: Point,
    sign: f64,
    targets: &BlowupTargets,
    spec: &ResampleSpec,
) -> Result<Blowup> {
    let b = blowup_unchecked(u_tilde, params, state, gamma, x0, sign, targets, spec)?;
    if let Some(c) = b.report.first_failure() {
        return Err(Error::InductionViolation { bound: c.name.clone(), witness: c.witness, excess: c.value - c.bound });
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interp;
    use crate::params::{pt1, Barrier, CoefficientField, CoefficientKind, Exponents, SourceField};

    fn params() -> ProblemParams {
        let mut p = ProblemParams::model(Exponents::new(1, 0.6, 0.5, 2.0, 2.2));
        p.coefficient = CoefficientField::new(CoefficientKind::Halfspace { value: 1.0, normal: [1.0, 0.0], offset: 0.1 });
        p.source = SourceField::constant(0.3);
        p
    }

    #[test]
    fn identity_context_changes_nothing() {
        let p = params();
        let out = rescale_problem(&p, &ScalingContext::identity()).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn equal_orders_leave_the_coefficient_factor_alone() {
        let mut p = params();
        p.exponents = Exponents::new(1, 0.5, 0.5, 2.0, 2.0);
        let ctx = ScalingContext::new(3.0, 0.25, pt1(0.4)).unwrap();
        assert_eq!(ctx.coefficient_factor(&p), 1.0);
        let out = rescale_problem(&p, &ctx).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            let y = pt1(0.3);
            assert_eq!(out.coefficient.eval(&pt1(x), &y), p.coefficient.eval(&pt1(0.25 * x + 0.4), &pt1(0.075)));
        }
    }

    #[test]
    fn rescaled_fields_match_their_formulas() {
        let p = params();
        let ctx = ScalingContext::new(2.0, 0.5, pt1(0.3)).unwrap();
        let out = rescale_problem(&p, &ctx).unwrap();
        let x = pt1(0.45);
        let z = pt1(0.5 * 0.45 + 0.3);
        assert!((out.source.eval(&x) - 2.0 * 0.5f64.powf(1.2) * p.source.eval(&z)).abs() < 1e-15);
        assert!((m_hat_formula(&p, &ctx) - out.m_bound()).abs() < 1e-15);
        let y = pt1(0.8);
        let k = out.kernel_sp.eval(&x, &y);
        let want = 0.5f64.powf(2.2) * p.kernel_sp.eval(&z, &pt1(0.4));
        assert!((k - want).abs() < 1e-12 * want);
    }

    #[test]
    fn contexts_compose() {
        let a = ScalingContext::new(2.0, 0.5, pt1(0.3)).unwrap();
        let b = ScalingContext::new(0.7, 0.25, pt1(-0.2)).unwrap();
        let c = a.then(&b);
        assert_eq!((c.lambda, c.mu), (1.4, 0.125));
        assert!((c.x0[0] - (0.5 * -0.2 + 0.3)).abs() < 1e-16);
    }

    #[test]
    fn zero_level_blowup_doubles() {
        let g = Grid::centered(1, 2.0, 129).unwrap();
        let u = GridFunction::from_fn(g, |x| 0.4 * Barrier.value(x, 1), Exterior::Constant { value: 0.0 }, Interp::Cubic).unwrap();
        let mut state = InductionState::start(-0.5);
        state.c[0] = 0.5;
        let targets = BlowupTargets { sigma: 1.0, eta: 0.1, m_bar: 10.0, tol: 1e-12 };
        let spec = ResampleSpec { half_width: 2.0, nodes: 129 };
        let b = blowup_step(&u, &params(), &state, 0.05, pt1(0.0), 1.0, &targets, &spec).unwrap();
        for x in [-0.5, 0.0, 0.25] {
            assert!((b.u_bar.eval(&pt1(x)) - 2.0 * u.eval(&pt1(x))).abs() < 1e-12);
        }
        // a function above 1/2 breaks the sup bound
        let big = GridFunction::from_fn(u.grid().clone(), |x| 0.6 * Barrier.value(x, 1), Exterior::Constant { value: 0.0 }, Interp::Cubic).unwrap();
        match blowup_step(&big, &params(), &state, 0.05, pt1(0.0), 1.0, &targets, &spec) {
            Err(Error::InductionViolation { bound, .. }) => assert_eq!(bound, "u_bar_sup"),
            other => panic!("{other:?}"),
        }
    }
}
