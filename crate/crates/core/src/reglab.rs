//! Oscillation decay probes, Hölder fits, the growth lemma check and the
//! dyadic induction built on it.

use serde::{Deserialize, Serialize};

use crate::constants::{ball_probes, constants_bundle, default_epsilon, ConstantsBundle};
use crate::error::{Error, Result};
use crate::grid::{envelope, GridFunction};
use crate::operator::{evaluate, QuadratureSpec};
use crate::params::{norm, Point, ProblemParams};
use crate::par_map;
use crate::scaling::{blowup_unchecked, rescale_problem, BlowupReport, BlowupTargets, InductionState, ResampleSpec, ScalingContext};
use crate::solver::{exterior_range, solve, SolveConfig, SolveReport};

/// Interior probes added to the grid nodes when sampling a ball.
pub const BALL_PROBES: usize = 1000;

/// Largest radius at which exterior data is sampled.
const FAR_RADIUS: f64 = 1048576.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationLevel {
    pub level: usize,
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
    pub osc: f64,
    /// `2^{-level gamma}`.
    pub bound: f64,
    /// Induction envelope `[b, c]` at this level.
    pub b: f64,
    pub c: f64,
    /// `b - tol <= inf` and `sup <= c + tol`.
    pub contained: bool,
    /// `osc <= bound + tol`.
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationTrace {
    pub center: Point,
    pub gamma: f64,
    pub levels: Vec<OscillationLevel>,
    pub fitted_gamma: Option<f64>,
    pub fit_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub sup: f64,
    pub inf: f64,
    pub osc: f64,
    pub sup_at: Point,
    pub inf_at: Point,
    pub samples: usize,
}

fn shifted(center: &Point, x: &Point) -> Point {
    [center[0] + x[0], center[1] + x[1]]
}

/// Grid nodes in the closed ball, the center, and [`BALL_PROBES`] Halton points inside.
fn ball_samples(u: &GridFunction, center: &Point, radius: f64) -> Vec<(Point, f64)> {
    let g = u.grid();
    let n = g.dim;
    let mut out: Vec<(Point, f64)> = (0..g.len())
        .filter_map(|k| {
            let x = g.node(k);
            let d = [x[0] - center[0], x[1] - center[1]];
            (norm(&d, n) <= radius).then(|| (x, u.values()[k]))
        })
        .collect();
    out.push((*center, u.eval(center)));
    for p in ball_probes(n, BALL_PROBES, radius, 1) {
        let x = shifted(center, &p);
        out.push((x, u.eval(&x)));
    }
    out
}

/// Extrema of `u` over `B_radius(center)`, using the exterior where the ball leaves the box.
pub fn oscillation(u: &GridFunction, center: &Point, radius: f64) -> Result<Oscillation> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("oscillation radius {radius} must be positive")));
    }
    let samples = ball_samples(u, center, radius);
    let mut o = Oscillation {
        sup: f64::NEG_INFINITY,
        inf: f64::INFINITY,
        osc: 0.0,
        sup_at: *center,
        inf_at: *center,
        samples: samples.len(),
    };
    for (x, v) in samples {
        if v > o.sup {
            o.sup = v;
            o.sup_at = x;
        }
        if v < o.inf {
            o.inf = v;
            o.inf_at = x;
        }
    }
    o.osc = o.sup - o.inf;
    Ok(o)
}

/// Measure of `{x in B_radius(center) : pred(u(x))}` by node counting.
///
/// A node carries `h^n` when its dual cell lies in the ball, `h^n / 2` when
/// the sphere cuts the cell, and nothing otherwise.
pub fn ball_measure_where(u: &GridFunction, center: &Point, radius: f64, pred: impl Fn(f64) -> bool) -> f64 {
    let g = u.grid();
    let n = g.dim;
    let h = g.h;
    let cell = h.powi(n as i32);
    let mut total = 0.0;
    for k in 0..g.len() {
        if !pred(u.values()[k]) {
            continue;
        }
        let x = g.node(k);
        let d: Vec<f64> = (0..n).map(|a| (x[a] - center[a]).abs()).collect();
        let near = d.iter().map(|v| (v - 0.5 * h).max(0.0).powi(2)).sum::<f64>().sqrt();
        let far = d.iter().map(|v| (v + 0.5 * h).powi(2)).sum::<f64>().sqrt();
        if far <= radius {
            total += cell;
        } else if near < radius {
            total += 0.5 * cell;
        }
    }
    total
}

/// `|{u <= level} ∩ B_radius(center)|`.
pub fn sublevel_measure(u: &GridFunction, center: &Point, radius: f64, level: f64) -> f64 {
    ball_measure_where(u, center, radius, |v| v <= level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub gamma_hat: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of the fit in `log2` units.
    pub fit_residual: f64,
    pub radii: Vec<f64>,
    pub osc: Vec<f64>,
    pub floor: f64,
}

/// Rounding-level floor below which an oscillation carries no information.
pub fn interpolation_floor(u: &GridFunction) -> f64 {
    64.0 * f64::EPSILON * u.max_abs().max(1.0)
}

/// Least-squares fit of `log osc` against `log radius`.
pub fn fit_oscillations(radii: &[f64], osc: &[f64], floor: f64) -> Result<HolderFit> {
    if radii.len() != osc.len() || radii.len() < 4 {
        return Err(Error::InvalidParams("a Hölder fit needs at least four levels".into()));
    }
    for (r, o) in radii.iter().zip(osc) {
        if !(*o >= 10.0 * floor) {
            return Err(Error::DegenerateFit { osc: *o, radius: *r, floor });
        }
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.log2()).collect();
    let ys: Vec<f64> = osc.iter().map(|o| o.log2()).collect();
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let icpt = ym - slope * xm;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    Ok(HolderFit {
        gamma_hat: slope,
        prefactor: icpt.exp2(),
        fit_residual: (rss / m).sqrt(),
        radii: radii.to_vec(),
        osc: osc.to_vec(),
        floor,
    })
}

/// Fits `osc_{B_{2^{-i}}(center)} u ~ C 2^{-i gamma_hat}` over `i_min..=i_max`.
pub fn holder_fit(u: &GridFunction, center: &Point, i_min: usize, i_max: usize) -> Result<HolderFit> {
    if i_max < i_min + 3 {
        return Err(Error::InvalidParams(format!("levels {i_min}..={i_max} span fewer than 3 dyadic steps")));
    }
    let h = u.grid().h;
    let finest = 2f64.powi(-(i_max as i32));
    if finest < 4.0 * h {
        return Err(Error::InvalidParams(format!("radius {finest:e} is below the resolution 4h = {:e}", 4.0 * h)));
    }
    let radii: Vec<f64> = (i_min..=i_max).map(|i| 2f64.powi(-(i as i32))).collect();
    let osc = radii.iter().map(|r| oscillation(u, center, *r).map(|o| o.osc)).collect::<Result<Vec<_>>>()?;
    fit_oscillations(&radii, &osc, interpolation_floor(u))
}

/// Finest dyadic level `i` with `2^{-i} >= 4h`.
pub fn resolvable_levels(u: &GridFunction) -> usize {
    let r = 4.0 * u.grid().h;
    if r >= 1.0 {
        0
    } else {
        (1.0 / r).log2().floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthCheckConfig {
    /// Halton probes in `B_1`, besides the origin, for the operator inequality.
    pub operator_probes: usize,
    /// Allowance for interpolation error in the sampled bounds.
    pub tol: f64,
}

impl Default for GrowthCheckConfig {
    fn default() -> Self {
        Self { operator_probes: 32, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorProbe {
    pub x: Point,
    pub value: f64,
    pub error: f64,
}

/// One numerical check; `holds` means `value <= bound`, or `value > bound`
/// for the sublevel measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub witness: Point,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthLemmaInstance {
    pub sigma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub operator_probes: Vec<OperatorProbe>,
    pub hypotheses: Vec<Hypothesis>,
    /// `sup_{B_{1/2}} u <= 1 - theta`; present only when every hypothesis holds.
    pub conclusion: Option<Hypothesis>,
    /// `1 - theta - sup_{B_{1/2}} u` when concluded.
    pub margin: Option<f64>,
}

impl GrowthLemmaInstance {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
    }

    pub fn holds(&self) -> bool {
        self.conclusion.as_ref().is_some_and(|c| c.holds)
    }

    pub fn first_failure(&self) -> Option<&Hypothesis> {
        self.hypotheses.iter().chain(self.conclusion.iter()).find(|h| !h.holds)
    }
}

/// Points just outside `B_1` and in the exterior, up to a large radius,
/// including both sides of every exterior jump.
fn exterior_points(u: &GridFunction) -> Vec<Point> {
    let g = u.grid();
    let n = g.dim;
    let mut radii = vec![1.0, g.extent() * (1.0 + 1e-12)];
    let mut r = g.extent();
    while r < FAR_RADIUS {
        r *= 1.25;
        radii.push(r);
    }
    for j in u.exterior().jump_radii() {
        radii.push(j);
        radii.push(j * (1.0 - 1e-12));
    }
    let mut out = Vec::new();
    for r in radii {
        if n == 1 {
            out.push([r, 0.0]);
            out.push([-r, 0.0]);
        } else {
            for k in 0..64 {
                let th = std::f64::consts::TAU * k as f64 / 64.0;
                out.push([r * th.cos(), r * th.sin()]);
            }
        }
    }
    out
}

/// Checks the four growth-lemma hypotheses for `u` and, if they all hold,
/// the conclusion `sup_{B_{1/2}} u <= 1 - theta`.
///
/// A probe of the operator inequality counts only when `value + error <= sigma`.
pub fn growth_lemma_check(
    u: &GridFunction,
    bundle: &ConstantsBundle,
    params: &ProblemParams,
    q: &QuadratureSpec,
    cfg: &GrowthCheckConfig,
) -> Result<GrowthLemmaInstance> {
    let rel = 1.0 + 1e-12;
    if params.m_hat() > bundle.m_hat * rel {
        return Err(Error::InvalidParams(format!(
            "coefficient bound {:e} exceeds the certified {:e}",
            params.m_hat(),
            bundle.m_hat
        )));
    }
    if params.lambda() > bundle.kernel_lambda * rel {
        return Err(Error::InvalidParams(format!(
            "kernel constant {} exceeds the certified {}",
            params.lambda(),
            bundle.kernel_lambda
        )));
    }
    let n = u.dim();
    let tol = cfg.tol;
    let origin = [0.0, 0.0];
    let mut hypotheses = Vec::with_capacity(4);

    // operator inequality
    let mut xs = vec![origin];
    xs.extend(ball_probes(n, cfg.operator_probes, 1.0, 1));
    let evals = par_map(xs.len(), |i| evaluate(u, &xs[i], params, q));
    let mut probes = Vec::with_capacity(xs.len());
    for (x, e) in xs.iter().zip(evals) {
        let e = e?;
        probes.push(OperatorProbe { x: *x, value: e.value, error: e.error });
    }
    let sigma = bundle.sigma;
    let worst = probes
        .iter()
        .max_by(|a, b| (a.value + a.error).total_cmp(&(b.value + b.error)))
        .copied()
        .expect("at least the origin is probed");
    let violated = probes.iter().find(|p| p.value - p.error > sigma);
    if violated.is_none() {
        if let Some(p) = probes.iter().find(|p| p.value + p.error > sigma) {
            return Err(Error::HypothesisUnverifiable { point: p.x, value: p.value, error: p.error, bound: sigma });
        }
    }
    hypotheses.push(Hypothesis {
        name: "operator".into(),
        value: worst.value + worst.error,
        bound: sigma,
        witness: worst.x,
        holds: violated.is_none(),
    });

    // u <= 1 in B_1
    let s = oscillation(u, &origin, 1.0)?;
    hypotheses.push(Hypothesis { name: "sup".into(), value: s.sup, bound: 1.0, witness: s.sup_at, holds: s.sup <= 1.0 + tol });

    // growth outside B_1
    let eta = bundle.eta;
    let g = u.grid();
    let mut ext = Hypothesis {
        name: "exterior_growth".into(),
        value: f64::NEG_INFINITY,
        bound: 0.0,
        witness: origin,
        holds: true,
    };
    let mut worst_gap = f64::NEG_INFINITY;
    let mut consider = |x: Point, v: f64| {
        let b = envelope(norm(&x, n), eta);
        if v - b > worst_gap {
            worst_gap = v - b;
            ext.value = v;
            ext.bound = b;
            ext.witness = x;
        }
    };
    for k in 0..g.len() {
        let x = g.node(k);
        if norm(&x, n) >= 1.0 {
            consider(x, u.values()[k]);
        }
    }
    for x in exterior_points(u) {
        consider(x, u.eval(&x));
    }
    ext.holds = worst_gap <= tol;
    hypotheses.push(ext);

    // fat sublevel set
    let epsilon = bundle.epsilon;
    let measure = sublevel_measure(u, &origin, 1.0, 0.0);
    hypotheses.push(Hypothesis {
        name: "sublevel_measure".into(),
        value: measure,
        bound: epsilon,
        witness: origin,
        holds: measure > epsilon,
    });

    let mut out = GrowthLemmaInstance {
        sigma,
        eta,
        epsilon,
        theta: bundle.theta,
        operator_probes: probes,
        hypotheses,
        conclusion: None,
        margin: None,
    };
    if out.hypotheses_hold() {
        let half = oscillation(u, &origin, 0.5)?;
        let bound = 1.0 - bundle.theta;
        out.margin = Some(bound - half.sup);
        out.conclusion = Some(Hypothesis {
            name: "conclusion".into(),
            value: half.sup,
            bound,
            witness: half.sup_at,
            holds: half.sup <= bound + tol,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationConfig {
    /// Requested levels; capped at the finest resolvable one.
    pub levels: usize,
    pub quadrature: QuadratureSpec,
    pub growth: GrowthCheckConfig,
    pub resample: ResampleSpec,
    pub tol: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            quadrature: QuadratureSpec::default(),
            growth: GrowthCheckConfig::default(),
            resample: ResampleSpec::default(),
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStep {
    /// Level `j` of the blow-up that produced `b_{j+1}, c_{j+1}`.
    pub level: usize,
    /// `+1` when the lemma was applied to the blow-up, `-1` for its negative.
    pub sign: f64,
    pub sublevel_plus: f64,
    pub sublevel_minus: f64,
    pub blowup: BlowupReport,
    pub lemma: GrowthLemmaInstance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicRun {
    pub trace: OscillationTrace,
    pub state: InductionState,
    pub steps: Vec<LevelStep>,
    /// Level count after capping at the grid resolution.
    pub levels: usize,
}

fn level_record(u: &GridFunction, x0: &Point, i: usize, gamma: f64, state: &InductionState, tol: f64) -> Result<OscillationLevel> {
    let radius = 2f64.powi(-(i as i32));
    let o = oscillation(u, x0, radius)?;
    let (b, c) = state.at(i as i64);
    let bound = 2f64.powf(-(i as f64) * gamma);
    Ok(OscillationLevel {
        level: i,
        radius,
        sup: o.sup,
        inf: o.inf,
        osc: o.osc,
        bound,
        b,
        c,
        contained: b - tol <= o.inf && o.sup <= c + tol,
        within_bound: o.osc <= bound + tol,
    })
}

/// Replays the dyadic induction `b_i <= u~ <= c_i` on `B_{2^{-i}}(x0)` with
/// `c_i - b_i <= 2^{-i gamma}`.
///
/// At level `j` the blow-up or its negative is taken, whichever has the
/// larger sublevel set `{. <= 0}` in `B_1`. When the growth lemma holds for
/// it, `c_{j+1} = b_j + 2^{-gamma(j+1)}` (or `b_{j+1} = c_j - 2^{-gamma(j+1)}`
/// for the negative). `u_tilde` must satisfy `sup - inf <= 1` over the whole
/// space, with the infimum taken over the grid and the sampled exterior.
pub fn dyadic_iteration(
    u_tilde: &GridFunction,
    x0: &Point,
    bundle: &ConstantsBundle,
    params: &ProblemParams,
    cfg: &IterationConfig,
) -> Result<DyadicRun> {
    let tol = cfg.tol;
    let g = u_tilde.grid();
    let (elo, ehi) = exterior_range(g, u_tilde.exterior(), FAR_RADIUS);
    let lo = u_tilde.values().iter().copied().fold(elo, f64::min);
    let hi = u_tilde.values().iter().copied().fold(ehi, f64::max);
    if hi - lo > 1.0 + tol {
        return Err(Error::InvalidParams(format!("u~ is not normalised: oscillation {} exceeds 1", hi - lo)));
    }
    let gamma = bundle.gamma;
    let levels = cfg.levels.min(resolvable_levels(u_tilde));
    let targets = BlowupTargets { sigma: bundle.sigma, eta: bundle.eta, m_bar: bundle.m_hat, tol };
    let mut state = InductionState::start(lo);
    let mut trace = OscillationTrace { center: *x0, gamma, levels: Vec::new(), fitted_gamma: None, fit_residual: None };
    let mut steps = Vec::new();

    let breakdown = |level: usize, reason: String, trace: &OscillationTrace| Error::IterationBreakdown {
        level,
        reason,
        trace: Box::new(trace.clone()),
    };

    trace.levels.push(level_record(u_tilde, x0, 0, gamma, &state, tol)?);
    for j in 0..levels {
        let plus = blowup_unchecked(u_tilde, params, &state, gamma, *x0, 1.0, &targets, &cfg.resample)?;
        let origin = [0.0, 0.0];
        let m_plus = sublevel_measure(&plus.u_bar, &origin, 1.0, 0.0);
        let m_minus = ball_measure_where(&plus.u_bar, &origin, 1.0, |v| v >= 0.0);
        let sign = if m_plus >= m_minus { 1.0 } else { -1.0 };
        let b = if sign > 0.0 {
            plus
        } else {
            blowup_unchecked(u_tilde, params, &state, gamma, *x0, -1.0, &targets, &cfg.resample)?
        };
        log::info!("level {j}: sign {sign:+}, sublevel measures {m_plus:.4} / {m_minus:.4}");
        if let Some(c) = b.report.first_failure() {
            let reason = format!("blow-up bound `{}`: {:e} > {:e} at {:?}", c.name, c.value, c.bound, c.witness);
            return Err(breakdown(j, reason, &trace));
        }
        let lemma = match growth_lemma_check(&b.u_bar, bundle, &b.params, &cfg.quadrature, &cfg.growth) {
            Ok(l) => l,
            Err(e) => return Err(breakdown(j, e.to_string(), &trace)),
        };
        if let Some(h) = lemma.first_failure() {
            let reason = format!("growth lemma `{}`: {:e} against {:e} at {:?}", h.name, h.value, h.bound, h.witness);
            return Err(breakdown(j, reason, &trace));
        }
        let (bj, cj) = state.at(j as i64);
        let width = 2f64.powf(-gamma * (j + 1) as f64);
        if sign > 0.0 {
            state.push(bj, bj + width);
        } else {
            state.push(cj - width, cj);
        }
        steps.push(LevelStep { level: j, sign, sublevel_plus: m_plus, sublevel_minus: m_minus, blowup: b.report, lemma });
        let rec = level_record(u_tilde, x0, j + 1, gamma, &state, tol)?;
        let ok = rec.contained && rec.within_bound;
        trace.levels.push(rec);
        if !ok {
            let r = trace.levels.last().expect("just pushed");
            let reason = format!(
                "envelope [{:e}, {:e}] misses [{:e}, {:e}] (osc {:e}, bound {:e})",
                r.b, r.c, r.inf, r.sup, r.osc, r.bound
            );
            return Err(breakdown(j + 1, reason, &trace));
        }
    }
    if trace.levels.len() >= 4 {
        let radii: Vec<f64> = trace.levels.iter().map(|l| l.radius).collect();
        let osc: Vec<f64> = trace.levels.iter().map(|l| l.osc).collect();
        if let Ok(f) = fit_oscillations(&radii, &osc, interpolation_floor(u_tilde)) {
            trace.fitted_gamma = Some(f.gamma_hat);
            trace.fit_residual = Some(f.fit_residual);
        }
    }
    Ok(DyadicRun { trace, state, steps, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub solve: SolveConfig,
    /// Defaults to `|B_1| / 2`.
    pub epsilon: Option<f64>,
    pub center: Point,
    pub iteration: IterationConfig,
    /// Rounds of raising `c_hat` until the normalised coefficient is certified.
    pub max_rounds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solve: SolveConfig::default(),
            epsilon: None,
            center: [0.0, 0.0],
            iteration: IterationConfig::default(),
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationRound {
    /// `c_hat` the constants were selected for.
    pub c_hat: f64,
    pub sigma: f64,
    pub lambda_tilde: f64,
    /// `c_hat lambda~^{p-q} M` of the normalised problem.
    pub m_bar: f64,
    /// Bound the selection was certified for.
    pub m_certified: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Breakdown {
    pub level: usize,
    pub reason: String,
    pub trace: OscillationTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub solve: SolveReport,
    pub u_sup: f64,
    pub f_sup: f64,
    pub rounds: Vec<CertificationRound>,
    pub bundle: ConstantsBundle,
    pub lambda_tilde: f64,
    pub run: Option<DyadicRun>,
    pub breakdown: Option<Breakdown>,
    pub fit: Option<HolderFit>,
}

/// Solves, selects constants, normalises by `lambda~` and runs the dyadic iteration.
///
/// The constants are first selected for `c_hat`. If the normalised
/// coefficient `c_hat lambda~^{p-q} M` exceeds the certified bound, they are
/// reselected for `1.05` times the required `c_hat` until it fits.
pub fn run_pipeline(params: &ProblemParams, cfg: &PipelineConfig) -> Result<(GridFunction, PipelineReport)> {
    let q = &cfg.iteration.quadrature;
    let (u, solve_report) = solve(params, &cfg.solve, q)?;
    let g = u.grid();
    let (elo, ehi) = exterior_range(g, u.exterior(), FAR_RADIUS);
    let u_sup = u.max_abs().max(elo.abs()).max(ehi.abs());
    let f_sup = params.source.sup_norm();
    let epsilon = cfg.epsilon.unwrap_or_else(|| default_epsilon(params.exponents.n));
    let e = &params.exponents;
    let m = params.m_bound();

    let mut rounds = Vec::new();
    let mut c_hat = params.c_hat;
    let mut accepted = None;
    for _ in 0..cfg.max_rounds.max(1) {
        let mut pc = params.clone();
        pc.c_hat = c_hat;
        let bundle = constants_bundle(epsilon, &pc, Some((u_sup, f_sup)))?;
        let lt = bundle.lambda.expect("norms were supplied");
        let m_bar = params.c_hat * lt.powf(e.p - e.q) * m;
        rounds.push(CertificationRound { c_hat, sigma: bundle.sigma, lambda_tilde: lt, m_bar, m_certified: bundle.m_hat });
        log::info!("c_hat {c_hat:.6e}: lambda~ {lt:.6e}, m_bar {m_bar:.6e}, certified {:.6e}", bundle.m_hat);
        if m_bar <= bundle.m_hat * (1.0 + 1e-12) {
            accepted = Some((bundle, lt));
            break;
        }
        c_hat = 1.05 * m_bar / m;
    }
    let Some((bundle, lambda_tilde)) = accepted else {
        return Err(Error::SelectionFailed(format!(
            "normalised coefficient not certified after {} rounds",
            rounds.len()
        )));
    };

    let ctx = ScalingContext::new(lambda_tilde, 1.0, [0.0, 0.0])?;
    let p_tilde = rescale_problem(params, &ctx)?;
    let u_tilde = u.affine_image(lambda_tilde, 1.0, [0.0, 0.0], 0.0)?;
    let (run, breakdown) = match dyadic_iteration(&u_tilde, &cfg.center, &bundle, &p_tilde, &cfg.iteration) {
        Ok(r) => (Some(r), None),
        Err(Error::IterationBreakdown { level, reason, trace }) => (None, Some(Breakdown { level, reason, trace: *trace })),
        Err(e) => return Err(e),
    };
    let fit = run.as_ref().and_then(|r| {
        let radii: Vec<f64> = r.trace.levels.iter().map(|l| l.radius).collect();
        let osc: Vec<f64> = r.trace.levels.iter().map(|l| l.osc).collect();
        fit_oscillations(&radii, &osc, interpolation_floor(&u_tilde)).ok()
    });
    let report = PipelineReport {
        solve: solve_report,
        u_sup,
        f_sup,
        rounds,
        bundle,
        lambda_tilde,
        run,
        breakdown,
        fit,
    };
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Exterior, Grid, Interp};
    use crate::params::{pt1, Barrier};

    fn on_grid(nodes: usize, f: impl Fn(&Point) -> f64, ext: Exterior) -> GridFunction {
        GridFunction::from_fn(Grid::centered(1, 2.0, nodes).unwrap(), f, ext, Interp::Cubic).unwrap()
    }

    fn zero_ext() -> Exterior {
        Exterior::Constant { value: 0.0 }
    }

    #[test]
    fn oscillation_of_the_barrier() {
        let u = on_grid(257, |x| Barrier.value(x, 1), zero_ext());
        let o = oscillation(&u, &pt1(0.0), 1.0).unwrap();
        assert!((o.osc - 1.0).abs() < 1e-12, "{o:?}");
        let o = oscillation(&u, &pt1(0.0), 0.5).unwrap();
        assert!((o.osc - 7.0 / 16.0).abs() < 1e-12, "{o:?}");
        let c = on_grid(65, |_| 0.3, Exterior::Constant { value: 0.3 });
        assert_eq!(oscillation(&c, &pt1(0.5), 1.0).unwrap().osc, 0.0);
    }

    #[test]
    fn oscillation_sees_the_exterior() {
        let u = on_grid(65, |_| 0.0, Exterior::Step { left: -1.0, right: 2.0 });
        let o = oscillation(&u, &pt1(1.5), 1.0).unwrap();
        assert_eq!(o.sup, 2.0);
        assert_eq!(o.inf, 0.0);
    }

    #[test]
    fn holder_fit_calibration() {
        let root = on_grid(1025, |x| x[0].abs().sqrt(), zero_ext());
        let f = holder_fit(&root, &pt1(0.0), 0, 6).unwrap();
        assert!((f.gamma_hat - 0.5).abs() < 0.05, "{f:?}");
        let affine = on_grid(1025, |x| 0.3 * x[0] - 0.1, zero_ext());
        let f = holder_fit(&affine, &pt1(0.1), 0, 6).unwrap();
        assert!((f.gamma_hat - 1.0).abs() < 0.05, "{f:?}");
        let flat = on_grid(1025, |_| 0.7, Exterior::Constant { value: 0.7 });
        assert!(matches!(holder_fit(&flat, &pt1(0.0), 0, 6), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn holder_fit_preconditions() {
        let u = on_grid(257, |x| x[0], zero_ext());
        assert!(matches!(holder_fit(&u, &pt1(0.0), 0, 2), Err(Error::InvalidParams(_))));
        // h = 1/64, so 2^{-5} < 4h
        assert!(matches!(holder_fit(&u, &pt1(0.0), 0, 5), Err(Error::InvalidParams(_))));
        assert!(holder_fit(&u, &pt1(0.0), 1, 4).is_ok());
    }

    #[test]
    fn sublevel_measure_counts_half_cells() {
        let u = on_grid(257, |x| x[0], zero_ext());
        // {x <= 0} ∩ (-1, 1) has measure 1
        let m = sublevel_measure(&u, &pt1(0.0), 1.0, 0.0);
        assert!((m - 1.0).abs() <= u.grid().h, "{m}");
        let all = sublevel_measure(&u, &pt1(0.0), 1.0, 10.0);
        assert!((all - 2.0).abs() < 1e-12, "{all}");
    }

    #[test]
    fn resolvable_levels_follow_the_grid() {
        let u = on_grid(1024, |_| 0.0, zero_ext());
        assert_eq!(resolvable_levels(&u), 5);
        let u = on_grid(1025, |_| 0.0, zero_ext());
        assert_eq!(resolvable_levels(&u), 6);
    }
}
