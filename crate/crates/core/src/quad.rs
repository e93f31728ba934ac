//! One-dimensional quadrature building blocks.
//!
//! Everything here works on panels with Gauss-Kronrod 7/15 rules. Singular
//! endpoints are handled by geometric descent with an extrapolated remainder,
//! half-lines by a logarithmic substitution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// A quadrature value with an error estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, error: 0.0 };

    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self { value: c * self.value, error: c.abs() * self.error }
    }
}

impl Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate { value: self.value + o.value, error: self.error + o.error }
    }
}

impl AddAssign for Estimate {
    fn add_assign(&mut self, o: Estimate) {
        self.value += o.value;
        self.error += o.error;
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Single Gauss-Kronrod 15-point panel with the usual error heuristic.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    let mut fv = [0.0; 14];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        rk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * rk;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = rk * hl;
    let asc = asc * hl.abs();
    let mut err = ((rk - rg) * hl).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    // roundoff floor
    let floor = 50.0 * f64::EPSILON * value.abs();
    Estimate::new(value, err.max(floor))
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.est.error == o.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.est.error.partial_cmp(&o.est.error).unwrap_or(Ordering::Equal)
    }
}

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub rel: f64,
    pub abs: f64,
    pub max_panels: usize,
}

impl Tol {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs, max_panels: 200 }
    }

    pub fn with_panels(mut self, n: usize) -> Self {
        self.max_panels = n;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

/// Globally adaptive bisection on `[a, b]`.
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: Tol) -> Estimate {
    if a == b {
        return Estimate::ZERO;
    }
    let first = gk15(f, a, b);
    if first.error <= tol.target(first.value) {
        return first;
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, est: first });
    let mut total = first;
    let mut panels = 1;
    while total.error > tol.target(total.value) && panels < tol.max_panels {
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let l = gk15(f, worst.a, m);
        let r = gk15(f, m, worst.b);
        total.value += l.value + r.value - worst.est.value;
        total.error += l.error + r.error - worst.est.error;
        heap.push(Panel { a: worst.a, b: m, est: l });
        heap.push(Panel { a: m, b: worst.b, est: r });
        panels += 1;
    }
    // recompute to shed accumulated cancellation
    let mut sum = Estimate::ZERO;
    for p in heap {
        sum += p.est;
    }
    sum
}

/// Result of a geometric descent toward a singular endpoint.
#[derive(Debug, Clone, Copy)]
pub struct Descent {
    pub estimate: Estimate,
    /// Ratio of the last two panel contributions; at least 1 signals divergence.
    pub ratio: f64,
    /// Number of dyadic panels used.
    pub panels: usize,
}

impl Descent {
    pub fn diverging(&self) -> bool {
        !(self.ratio.abs() < 1.0)
    }
}

/// Integrates on `(a, b]` where `f` may be integrably singular at `a`.
///
/// Dyadic panels `[a + L 2^{-k-1}, a + L 2^{-k}]` are summed until the
/// geometric remainder is negligible or the panel width drops below
/// `min_ratio * L`; the remainder is then extrapolated from the last ratio.
pub fn singular_left<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: Tol, min_ratio: f64) -> Descent {
    let len = b - a;
    if len <= 0.0 {
        return Descent { estimate: Estimate::ZERO, ratio: 0.0, panels: 0 };
    }
    let panel_tol = Tol { rel: tol.rel * 0.1, abs: tol.abs * 0.05, max_panels: 40 };
    let mut sum = Estimate::ZERO;
    let mut prev: Option<f64> = None;
    let mut prev_ratio = f64::NAN;
    let mut ratio = 0.0;
    let mut hi = len;
    let mut k = 0;
    loop {
        let lo = 0.5 * hi;
        let est = adaptive(f, a + lo, a + hi, panel_tol);
        sum += est;
        k += 1;
        if let Some(pv) = prev {
            ratio = if pv != 0.0 { est.value / pv } else if est.value == 0.0 { 0.0 } else { f64::INFINITY };
        }
        prev = Some(est.value);
        hi = lo;
        let r = ratio.abs();
        let remainder = if k >= 2 && r < 1.0 { est.value * ratio / (1.0 - ratio) } else { f64::INFINITY };
        let small = remainder.abs() <= 0.01 * tol.target(sum.value) || est.value == 0.0 && k >= 4;
        if k >= 4 && small || hi < min_ratio * len || k >= 200 {
            if k >= 2 && r < 1.0 {
                let drift = if prev_ratio.is_finite() { (ratio - prev_ratio).abs() } else { 1.0 };
                let rem_err = remainder.abs() * (2.0 * drift / (1.0 - r)).min(1.0);
                sum.value += remainder;
                sum.error += rem_err + f64::EPSILON * remainder.abs();
            } else if r >= 1.0 {
                sum.error = f64::INFINITY;
            }
            return Descent { estimate: sum, ratio, panels: k };
        }
        prev_ratio = ratio;
    }
}

/// Integrates `f` over `[a, inf)` through `y = a e^z`, on unit panels in `z`.
///
/// The remainder past the last panel is extrapolated geometrically.
pub fn half_line<F: FnMut(f64) -> f64>(f: &mut F, a: f64, tol: Tol, max_panels: usize) -> Descent {
    assert!(a > 0.0, "half_line needs a positive start");
    let panel_tol = Tol { rel: tol.rel * 0.1, abs: tol.abs * 0.05, max_panels: 40 };
    let mut g = |z: f64| {
        let y = a * z.exp();
        f(y) * y
    };
    let mut sum = Estimate::ZERO;
    let mut prev: Option<f64> = None;
    let mut prev_ratio = f64::NAN;
    let mut ratio = 0.0;
    for k in 0..max_panels {
        let z0 = k as f64;
        let est = adaptive(&mut g, z0, z0 + 1.0, panel_tol);
        sum += est;
        if let Some(pv) = prev {
            ratio = if pv != 0.0 { est.value / pv } else if est.value == 0.0 { 0.0 } else { f64::INFINITY };
        }
        prev = Some(est.value);
        let r = ratio.abs();
        if k >= 3 && r < 1.0 {
            let remainder = est.value * ratio / (1.0 - ratio);
            if remainder.abs() <= 0.01 * tol.target(sum.value) || k + 1 == max_panels {
                let drift = if prev_ratio.is_finite() { (ratio - prev_ratio).abs() } else { 1.0 };
                sum.value += remainder;
                sum.error += remainder.abs() * (2.0 * drift / (1.0 - r)).min(1.0);
                return Descent { estimate: sum, ratio, panels: k + 1 };
            }
        } else if k >= 3 && est.value == 0.0 {
            return Descent { estimate: sum, ratio: 0.0, panels: k + 1 };
        }
        prev_ratio = ratio;
    }
    sum.error = f64::INFINITY;
    Descent { estimate: sum, ratio, panels: max_panels }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let e = gk15(&mut |x: f64| x.powi(9) + 3.0 * x * x, 0.0, 2.0);
        assert!((e.value - (1024.0 / 10.0 + 8.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let e = adaptive(&mut |x: f64| (x - 0.3).abs(), 0.0, 1.0, Tol::new(1e-12, 1e-15));
        assert!((e.value - (0.045 + 0.245)).abs() < 1e-11, "{e:?}");
    }

    #[test]
    fn singular_descent_extrapolates_power_laws() {
        for a in [-0.9, -0.5, 0.3] {
            let d = singular_left(&mut |y: f64| y.powf(a), 0.0, 1.0, Tol::new(1e-10, 1e-14), 1e-6);
            let exact = 1.0 / (a + 1.0);
            assert!((d.estimate.value - exact).abs() < 1e-9 * exact, "a={a} {d:?}");
            assert!(!d.diverging());
        }
    }

    #[test]
    fn singular_descent_flags_divergence() {
        let d = singular_left(&mut |y: f64| 1.0 / y, 0.0, 1.0, Tol::new(1e-10, 1e-14), 1e-6);
        assert!(d.diverging());
    }

    #[test]
    fn half_line_power_tail() {
        let d = half_line(&mut |y: f64| y.powf(-2.2), 0.25, Tol::new(1e-11, 1e-16), 400);
        let exact = 0.25f64.powf(-1.2) / 1.2;
        assert!((d.estimate.value - exact).abs() < 1e-10 * exact, "{d:?}");
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 4, 7, 20] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            if n >= 3 {
                assert!((m4 - 0.4).abs() < 1e-13);
            }
        }
    }
}
