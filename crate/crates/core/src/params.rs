//! Problem data: exponents, kernels, coefficient, source, and the barrier.
//!
//! Points are `[f64; 2]`; in one dimension the second coordinate is ignored
//! and should be zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub fn pt1(x: f64) -> Point {
    [x, 0.0]
}

pub fn norm(x: &Point, n: usize) -> f64 {
    if n == 1 {
        x[0].abs()
    } else {
        x[0].hypot(x[1])
    }
}

pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(c: f64, a: &Point) -> Point {
    [c * a[0], c * a[1]]
}

/// Surface measure of the unit sphere (the radial factor in polar integrals).
pub fn sphere_measure(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        2.0 * std::f64::consts::PI
    }
}

/// Lebesgue measure of the unit ball.
pub fn unit_ball_measure(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        std::f64::consts::PI
    }
}

/// Signed power map `|d|^{r-2} d`, with the value 0 at the origin for every `r`.
#[inline]
pub fn psi(r: f64, d: f64) -> f64 {
    if r == 2.0 {
        d
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * d.abs().powf(r - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub n: usize,
    pub s: f64,
    pub t: f64,
    pub p: f64,
    pub q: f64,
}

/// Which family of constant estimates applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `q >= p >= 2`
    Superquadratic,
    /// `p < 2 <= q`
    Mixed,
    /// `q < 2`
    Subquadratic,
}

impl Exponents {
    pub fn new(n: usize, s: f64, t: f64, p: f64, q: f64) -> Self {
        Self { n, s, t, p, q }
    }

    /// Routing by `(p, q)` alone; does not validate.
    pub fn regime(&self) -> Regime {
        if self.q < 2.0 {
            Regime::Subquadratic
        } else if self.p < 2.0 {
            Regime::Mixed
        } else {
            Regime::Superquadratic
        }
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    pub fn tq(&self) -> f64 {
        self.t * self.q
    }

    /// Upper limit on the exterior growth exponent for which tails are finite.
    pub fn tail_threshold(&self) -> f64 {
        (self.sp() / (self.p - 1.0)).min(self.tq() / (self.q - 1.0))
    }
}

/// Checks the standing exponent conditions and returns the regime.
///
/// With `homogeneous` set, the `q/p <= 1 + s` cap is not enforced (only
/// meaningful when the source vanishes).
pub fn validate_exponents(e: &Exponents, homogeneous: bool) -> Result<Regime> {
    let fail = |m: String| Err(Error::InvalidParams(m));
    if e.n != 1 && e.n != 2 {
        return fail(format!("dimension {} not supported (1 or 2)", e.n));
    }
    let all = [e.s, e.t, e.p, e.q];
    if all.iter().any(|v| !v.is_finite()) {
        return fail("exponents must be finite".into());
    }
    if !(e.s > 0.0 && e.s < 1.0) || !(e.t > 0.0 && e.t < 1.0) {
        return fail(format!("need 0 < s, t < 1 (s = {}, t = {})", e.s, e.t));
    }
    if !(e.p > 1.0 && e.p <= e.q) {
        return fail(format!("need 1 < p <= q (p = {}, q = {})", e.p, e.q));
    }
    if e.p < 2.0 && e.p * (1.0 - e.s) <= 1.0 {
        return fail(format!("p = {} < 2 requires p > 1/(1-s) = {}", e.p, 1.0 / (1.0 - e.s)));
    }
    if e.q * (1.0 - e.t) <= 1.0 {
        return fail(format!("q = {} must exceed 1/(1-t) = {}", e.q, 1.0 / (1.0 - e.t)));
    }
    let ratio = e.q / e.p;
    if ratio > e.s / e.t {
        return fail(format!("q/p = {ratio} exceeds s/t = {}", e.s / e.t));
    }
    if !homogeneous && ratio > 1.0 + e.s {
        return fail(format!("q/p = {ratio} exceeds 1 + s = {}", 1.0 + e.s));
    }
    Ok(e.regime())
}

/// Affine change of variables `x -> scale * x + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub scale: f64,
    pub shift: Point,
}

impl Default for Frame {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Frame {
    pub const IDENTITY: Frame = Frame { scale: 1.0, shift: [0.0, 0.0] };

    #[inline]
    pub fn apply(&self, x: &Point) -> Point {
        [self.scale * x[0] + self.shift[0], self.scale * x[1] + self.shift[1]]
    }

    /// Frame of `x -> self.apply(inner.apply(x))`.
    pub fn then_inner(&self, inner: &Frame) -> Frame {
        Frame {
            scale: self.scale * inner.scale,
            shift: [
                self.scale * inner.shift[0] + self.shift[0],
                self.scale * inner.shift[1] + self.shift[1],
            ],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Shape of a kernel as a factor multiplying `|y|^{-n-sp}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Gagliardo,
    Scaled { factor: f64 },
    /// Factor interpolated linearly in `log |y|` between tabulated radii,
    /// held constant outside the table.
    Table { radii: Vec<f64>, factors: Vec<f64> },
    /// `1 + amplitude * cos(2 pi x_1 / wavelength)`; depends on the base point only.
    Oscillating { amplitude: f64, wavelength: f64 },
}

impl KernelKind {
    fn factor(&self, x: &Point, r: f64) -> f64 {
        match self {
            KernelKind::Gagliardo => 1.0,
            KernelKind::Scaled { factor } => *factor,
            KernelKind::Table { radii, factors } => table_log_interp(radii, factors, r),
            KernelKind::Oscillating { amplitude, wavelength } => {
                1.0 + amplitude * (2.0 * std::f64::consts::PI * x[0] / wavelength).cos()
            }
        }
    }

    fn lambda(&self) -> f64 {
        let sym = |f: f64| f.max(1.0 / f);
        match self {
            KernelKind::Gagliardo => 1.0,
            KernelKind::Scaled { factor } => sym(*factor),
            KernelKind::Table { factors, .. } => factors.iter().copied().map(sym).fold(1.0, f64::max),
            KernelKind::Oscillating { amplitude, .. } => (1.0 + amplitude.abs()).max(1.0 / (1.0 - amplitude.abs())),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        match self {
            KernelKind::Gagliardo => Ok(()),
            KernelKind::Scaled { factor } if *factor > 0.0 && factor.is_finite() => Ok(()),
            KernelKind::Scaled { .. } => bad("kernel factor must be positive"),
            KernelKind::Table { radii, factors } => {
                if radii.is_empty() || radii.len() != factors.len() {
                    return bad("kernel table needs equal, nonempty radii and factors");
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
                    return bad("kernel table radii must be positive and increasing");
                }
                if factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
                    return bad("kernel table factors must be positive");
                }
                Ok(())
            }
            KernelKind::Oscillating { amplitude, wavelength } => {
                if amplitude.abs() >= 1.0 || *wavelength <= 0.0 {
                    bad("oscillating kernel needs |amplitude| < 1 and wavelength > 0")
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn table_log_interp(radii: &[f64], vals: &[f64], r: f64) -> f64 {
    if r <= radii[0] {
        return vals[0];
    }
    let last = radii.len() - 1;
    if r >= radii[last] {
        return vals[last];
    }
    let i = radii.partition_point(|&ri| ri <= r) - 1;
    let w = (r / radii[i]).ln() / (radii[i + 1] / radii[i]).ln();
    vals[i] + w * (vals[i + 1] - vals[i])
}

/// Kernel `K(x, y)` comparable to `|y|^{-n-sp}`, even in `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    pub n: usize,
    /// differentiability order
    pub s: f64,
    /// summability exponent
    pub p: f64,
    pub kind: KernelKind,
    #[serde(default)]
    pub frame: Frame,
}

impl KernelField {
    pub fn gagliardo(n: usize, s: f64, p: f64) -> Self {
        Self { n, s, p, kind: KernelKind::Gagliardo, frame: Frame::IDENTITY }
    }

    pub fn with_kind(n: usize, s: f64, p: f64, kind: KernelKind) -> Self {
        Self { n, s, p, kind, frame: Frame::IDENTITY }
    }

    /// Homogeneity `n + s p`.
    pub fn order(&self) -> f64 {
        self.n as f64 + self.s * self.p
    }

    #[inline]
    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        let r = norm(y, self.n);
        self.eval_radial(x, r)
    }

    /// Kernel value at base point `x` and offset of length `r`.
    #[inline]
    pub fn eval_radial(&self, x: &Point, r: f64) -> f64 {
        let g = match self.kind {
            KernelKind::Gagliardo => 1.0,
            KernelKind::Scaled { factor } => factor,
            _ => self.kind.factor(&self.frame.apply(x), self.frame.scale * r),
        };
        g * r.powf(-self.order())
    }

    /// True when `K(x, y)` does not depend on `x`.
    pub fn translation_invariant(&self) -> bool {
        !matches!(self.kind, KernelKind::Oscillating { .. })
    }

    /// Ellipticity constant: `K / |y|^{-n-sp}` lies in `[1/lambda, lambda]`.
    pub fn lambda(&self) -> f64 {
        self.kind.lambda()
    }

    /// Radii (in the current frame) where the kernel profile has kinks.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            KernelKind::Table { radii, .. } => radii.iter().map(|r| r / self.frame.scale).collect(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.frame.scale > 0.0 && self.frame.scale.is_finite()) {
            return Err(Error::InvalidParams("kernel frame scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant { value: f64 },
    /// `value` on `{x . normal > offset}`, zero elsewhere.
    Halfspace { value: f64, normal: Point, offset: f64 },
    /// `value` on cells of side `width` with even index sum, zero elsewhere.
    Checkerboard { value: f64, width: f64 },
    /// `min(|x - y|^alpha, cap)`, treating the offset `y` as a point.
    Holder { alpha: f64, cap: f64 },
    /// Piecewise constant in `x_1`: `values[i]` on `[breaks[i-1], breaks[i])`.
    Table { breaks: Vec<f64>, values: Vec<f64> },
}

/// Bounded measurable coefficient `a(x, y) >= 0` of the second phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub kind: CoefficientKind,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default = "one")]
    pub factor: f64,
}

fn one() -> f64 {
    1.0
}

impl CoefficientField {
    pub fn new(kind: CoefficientKind) -> Self {
        Self { kind, frame: Frame::IDENTITY, factor: 1.0 }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(CoefficientKind::Constant { value })
    }

    #[inline]
    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        if let CoefficientKind::Constant { value } = self.kind {
            return self.factor * value;
        }
        let xs = self.frame.apply(x);
        let ys = scale(self.frame.scale, y);
        let v = match &self.kind {
            CoefficientKind::Constant { value } => *value,
            CoefficientKind::Halfspace { value, normal, offset } => {
                if xs[0] * normal[0] + xs[1] * normal[1] > *offset {
                    *value
                } else {
                    0.0
                }
            }
            CoefficientKind::Checkerboard { value, width } => {
                let k = (xs[0] / width).floor() + (xs[1] / width).floor();
                if k.rem_euclid(2.0) == 0.0 {
                    *value
                } else {
                    0.0
                }
            }
            CoefficientKind::Holder { alpha, cap } => {
                let d = sub(&xs, &ys);
                d[0].hypot(d[1]).powf(*alpha).min(*cap)
            }
            CoefficientKind::Table { breaks, values } => values[breaks.partition_point(|&b| b <= xs[0])],
        };
        self.factor * v
    }

    /// Declared bound `M` with `0 <= a <= M`.
    pub fn sup_bound(&self) -> f64 {
        let base = match &self.kind {
            CoefficientKind::Constant { value } => *value,
            CoefficientKind::Halfspace { value, .. } | CoefficientKind::Checkerboard { value, .. } => *value,
            CoefficientKind::Holder { cap, .. } => *cap,
            CoefficientKind::Table { values, .. } => values.iter().copied().fold(0.0, f64::max),
        };
        self.factor * base
    }

    /// `a(x, y) = a(x, -y)` for every `x, y`.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, CoefficientKind::Holder { .. })
    }

    /// Hoelder exponent and seminorm bound for `|a(x,-y) - a(x,y)| <= c |2y|^alpha`.
    pub fn holder(&self) -> Option<(f64, f64)> {
        match self.kind {
            CoefficientKind::Holder { alpha, .. } => Some((alpha, self.factor * self.frame.scale.powf(alpha))),
            CoefficientKind::Constant { .. } => Some((1.0, 0.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.factor >= 0.0 && self.factor.is_finite()) {
            return bad("coefficient factor must be nonnegative");
        }
        match &self.kind {
            CoefficientKind::Constant { value }
            | CoefficientKind::Halfspace { value, .. }
            | CoefficientKind::Checkerboard { value, .. }
                if *value < 0.0 || !value.is_finite() =>
            {
                bad("coefficient values must be nonnegative")
            }
            CoefficientKind::Checkerboard { width, .. } if *width <= 0.0 => bad("checkerboard width must be positive"),
            CoefficientKind::Holder { alpha, cap } if !(*alpha > 0.0 && *alpha <= 1.0) || *cap < 0.0 => {
                bad("Hoelder coefficient needs 0 < alpha <= 1 and cap >= 0")
            }
            CoefficientKind::Table { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    bad("coefficient table needs one more value than breaks")
                } else if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    bad("coefficient values must be nonnegative")
                } else if breaks.windows(2).any(|w| w[1] <= w[0]) {
                    bad("coefficient table breaks must increase")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Constant { value: f64 },
    /// `inside` on `{x_1 > 0}`, `outside` elsewhere.
    Halfspace { inside: f64, outside: f64 },
    /// `amplitude * beta(x)`.
    Bump { amplitude: f64 },
}

/// Bounded source term `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceField {
    pub kind: SourceKind,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default = "one")]
    pub factor: f64,
}

impl SourceField {
    pub fn constant(value: f64) -> Self {
        Self { kind: SourceKind::Constant { value }, frame: Frame::IDENTITY, factor: 1.0 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let xs = self.frame.apply(x);
        let v = match self.kind {
            SourceKind::Constant { value } => value,
            SourceKind::Halfspace { inside, outside } => {
                if xs[0] > 0.0 {
                    inside
                } else {
                    outside
                }
            }
            SourceKind::Bump { amplitude } => amplitude * Barrier.value(&xs, 2),
        };
        self.factor * v
    }

    /// Declared sup norm.
    pub fn sup_norm(&self) -> f64 {
        let base = match self.kind {
            SourceKind::Constant { value } => value.abs(),
            SourceKind::Halfspace { inside, outside } => inside.abs().max(outside.abs()),
            SourceKind::Bump { amplitude } => amplitude.abs(),
        };
        self.factor.abs() * base
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == 0.0
    }
}

/// Full problem data for the operator with dilation constant `c_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub exponents: Exponents,
    pub kernel_sp: KernelField,
    pub kernel_tq: KernelField,
    pub coefficient: CoefficientField,
    #[serde(default = "one")]
    pub c_hat: f64,
    pub source: SourceField,
    /// Relaxes the `q/p <= 1 + s` cap; requires a vanishing source.
    #[serde(default)]
    pub homogeneous: bool,
}

impl ProblemParams {
    /// Gagliardo kernels, `a = 1`, `c_hat = 1`, `f = 0`.
    pub fn model(e: Exponents) -> Self {
        Self {
            exponents: e,
            kernel_sp: KernelField::gagliardo(e.n, e.s, e.p),
            kernel_tq: KernelField::gagliardo(e.n, e.t, e.q),
            coefficient: CoefficientField::constant(1.0),
            c_hat: 1.0,
            source: SourceField::zero(),
            homogeneous: false,
        }
    }

    pub fn n(&self) -> usize {
        self.exponents.n
    }

    /// Ellipticity constant of both kernels.
    pub fn lambda(&self) -> f64 {
        self.kernel_sp.lambda().max(self.kernel_tq.lambda())
    }

    /// Coefficient bound `M`.
    pub fn m_bound(&self) -> f64 {
        self.coefficient.sup_bound()
    }

    /// Effective coefficient bound `c_hat * M`.
    pub fn m_hat(&self) -> f64 {
        self.c_hat * self.m_bound()
    }

    pub fn validate(&self) -> Result<Regime> {
        let e = &self.exponents;
        let regime = validate_exponents(e, self.homogeneous)?;
        if self.homogeneous && !self.source.is_zero() {
            return Err(Error::InvalidParams("homogeneous mode requires a vanishing source".into()));
        }
        for (k, s, p, name) in [(&self.kernel_sp, e.s, e.p, "kernel_sp"), (&self.kernel_tq, e.t, e.q, "kernel_tq")] {
            k.validate()?;
            if k.n != e.n || k.s != s || k.p != p {
                return Err(Error::InvalidParams(format!("{name} orders do not match the exponents")));
            }
        }
        self.coefficient.validate()?;
        if !(self.c_hat > 0.0 && self.c_hat.is_finite()) {
            return Err(Error::InvalidParams("c_hat must be positive".into()));
        }
        if !self.source.sup_norm().is_finite() {
            return Err(Error::InvalidParams("source must be bounded".into()));
        }
        Ok(regime)
    }
}

/// A smooth test function with declared bounds on its first two derivatives.
pub trait C2Function: Sync {
    fn value(&self, x: &Point, n: usize) -> f64;
    /// Declared `sup |phi|`; infinite when unbounded.
    fn c0_norm(&self) -> f64 {
        f64::INFINITY
    }
    /// Declared `sup |D phi|`.
    fn c1_norm(&self) -> f64;
    /// Declared `sup |D^2 phi|`.
    fn c2_norm(&self) -> f64;
}

/// `beta(x) = ((1 - |x|^2)^+)^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Barrier;

impl Barrier {
    /// Declared gradient bound.
    pub const C1: f64 = 8.0;
    /// Declared Hessian bound.
    pub const C2: f64 = 16.0;

    pub fn value(&self, x: &Point, n: usize) -> f64 {
        let r2 = if n == 1 { x[0] * x[0] } else { x[0] * x[0] + x[1] * x[1] };
        let m = (1.0 - r2).max(0.0);
        m * m
    }

    /// Barrier as a function of `|x|`.
    pub fn radial(r: f64) -> f64 {
        let m = (1.0 - r * r).max(0.0);
        m * m
    }

    pub fn gradient(&self, x: &Point, n: usize) -> Point {
        let r2 = if n == 1 { x[0] * x[0] } else { x[0] * x[0] + x[1] * x[1] };
        if r2 >= 1.0 {
            return [0.0, 0.0];
        }
        let c = -4.0 * (1.0 - r2);
        if n == 1 {
            [c * x[0], 0.0]
        } else {
            [c * x[0], c * x[1]]
        }
    }

    /// Spectral norm of the Hessian.
    pub fn hessian_norm(&self, x: &Point, n: usize) -> f64 {
        let r2 = if n == 1 { x[0] * x[0] } else { x[0] * x[0] + x[1] * x[1] };
        if r2 >= 1.0 {
            return 0.0;
        }
        let radial = 12.0 * r2 - 4.0;
        let tangential = -4.0 * (1.0 - r2);
        if n == 1 {
            radial.abs()
        } else {
            radial.abs().max(tangential.abs())
        }
    }

    /// `beta(x) - beta(x+y)`, in closed form while `x + y` stays in the unit ball.
    pub fn difference(&self, x: &Point, y: &Point, n: usize) -> f64 {
        let (x2, y2, b) = if n == 1 {
            (x[0] * x[0], y[0] * y[0], 2.0 * x[0] * y[0])
        } else {
            (x[0] * x[0] + x[1] * x[1], y[0] * y[0] + y[1] * y[1], 2.0 * (x[0] * y[0] + x[1] * y[1]))
        };
        if x2 < 1.0 && x2 + y2 + b < 1.0 {
            (b + y2) * (2.0 * (1.0 - x2) - b - y2)
        } else {
            self.value(x, n) - self.value(&add(x, y), n)
        }
    }

    /// `beta(x+y) + beta(x-y) - 2 beta(x)`, in closed form while `x +- y` stay in the unit ball.
    pub fn second_difference(&self, x: &Point, y: &Point, n: usize) -> f64 {
        let (x2, y2, b) = if n == 1 {
            (x[0] * x[0], y[0] * y[0], 2.0 * x[0] * y[0])
        } else {
            (x[0] * x[0] + x[1] * x[1], y[0] * y[0] + y[1] * y[1], 2.0 * (x[0] * y[0] + x[1] * y[1]))
        };
        if x2 + y2 + b.abs() < 1.0 {
            let a = 1.0 - x2 - y2;
            2.0 * b * b - 4.0 * a * y2 - 2.0 * y2 * y2
        } else {
            self.value(&add(x, y), n) + self.value(&sub(x, y), n) - 2.0 * self.value(x, n)
        }
    }

    /// Drop of `kappa * beta` between the radii 1/2 and 3/4.
    pub fn theta(kappa: f64) -> f64 {
        kappa * (Self::radial(0.5) - Self::radial(0.75))
    }
}

impl C2Function for Barrier {
    fn value(&self, x: &Point, n: usize) -> f64 {
        Barrier::value(self, x, n)
    }
    fn c0_norm(&self) -> f64 {
        1.0
    }
    fn c1_norm(&self) -> f64 {
        Self::C1
    }
    fn c2_norm(&self) -> f64 {
        Self::C2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_values() {
        let b = Barrier;
        assert_eq!(b.value(&pt1(0.5), 1), 9.0 / 16.0);
        assert_eq!(b.value(&pt1(0.75), 1), 49.0 / 256.0);
        assert_eq!(b.value(&[0.6, 0.8], 2), 0.0);
        assert_eq!(Barrier::theta(1.0), 95.0 / 256.0);
    }

    #[test]
    fn barrier_derivative_bounds_hold_on_a_fine_sweep() {
        let b = Barrier;
        let mut g: f64 = 0.0;
        let mut h: f64 = 0.0;
        for i in 0..=20000 {
            let x = -1.2 + 2.4 * i as f64 / 20000.0;
            g = g.max(b.gradient(&pt1(x), 1)[0].abs());
            h = h.max(b.hessian_norm(&pt1(x), 1));
        }
        assert!((g - 8.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);
        assert!(g <= Barrier::C1 && h <= Barrier::C2);
        assert!((h - 8.0).abs() < 1e-3);
    }

    #[test]
    fn desk_parameters_are_superquadratic() {
        let e = Exponents::new(1, 0.6, 0.5, 2.0, 2.2);
        assert_eq!(validate_exponents(&e, false).unwrap(), Regime::Superquadratic);
    }

    #[test]
    fn rejects_p_below_singular_threshold() {
        let e = Exponents::new(1, 0.5, 0.3, 1.5, 1.6);
        let err = validate_exponents(&e, false).unwrap_err();
        assert!(err.to_string().contains("1/(1-s)"), "{err}");
    }

    #[test]
    fn rejects_ratio_above_one_plus_s_unless_homogeneous() {
        let e = Exponents::new(1, 0.3, 0.1, 2.0, 3.0);
        assert!(validate_exponents(&e, false).is_err());
        assert_eq!(validate_exponents(&e, true).unwrap(), Regime::Superquadratic);
    }

    #[test]
    fn routing_by_exponents() {
        assert_eq!(Exponents::new(1, 0.45, 0.4, 1.9, 2.0).regime(), Regime::Mixed);
        assert_eq!(Exponents::new(1, 0.44, 0.4, 1.8, 1.9).regime(), Regime::Subquadratic);
        assert_eq!(Exponents::new(1, 0.95, 0.5, 1.9, 2.1).regime(), Regime::Mixed);
        assert!(validate_exponents(&Exponents::new(1, 0.45, 0.4, 1.9, 2.0), false).is_ok());
        assert!(validate_exponents(&Exponents::new(1, 0.44, 0.4, 1.8, 1.9), false).is_ok());
    }

    #[test]
    fn frame_composition_matches_nested_application() {
        let a = Frame { scale: 0.5, shift: [0.3, -0.1] };
        let b = Frame { scale: 2.0, shift: [-1.0, 0.25] };
        let x = [0.7, 0.2];
        let nested = a.apply(&b.apply(&x));
        let composed = a.then_inner(&b).apply(&x);
        assert!((nested[0] - composed[0]).abs() < 1e-15 && (nested[1] - composed[1]).abs() < 1e-15);
    }

    #[test]
    fn kernel_table_interpolates_in_log_radius() {
        let k = KernelField::with_kind(1, 0.5, 2.0, KernelKind::Table { radii: vec![1.0, 4.0], factors: vec![1.0, 3.0] });
        assert!((k.eval_radial(&pt1(0.0), 2.0) - 2.0 * 2f64.powf(-2.0)).abs() < 1e-14);
        assert_eq!(k.lambda(), 3.0);
    }

    #[test]
    fn psi_is_odd_and_vanishes_at_zero() {
        for r in [1.3, 2.0, 2.7] {
            assert_eq!(psi(r, 0.0), 0.0);
            assert_eq!(psi(r, -1.7), -psi(r, 1.7));
        }
    }
}
