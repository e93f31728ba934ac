//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the crate's quadrature: the rules below are built from
//! scratch so agreement is meaningful.
#![allow(dead_code)]

/// Gauss-Legendre rule on [-1, 1] via Golub-Welsch-free Newton iteration on P_n.
pub fn gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut d = 1.0;
        for _ in 0..200 {
            let mut p = [1.0, z];
            for k in 2..=n {
                let k = k as f64;
                let next = ((2.0 * k - 1.0) * z * p[1] - (k - 1.0) * p[0]) / k;
                p = [p[1], next];
            }
            d = n as f64 * (z * p[1] - p[0]) / (z * z - 1.0);
            let step = p[1] / d;
            z -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        xs.push(z);
        ws.push(2.0 / ((1.0 - z * z) * d * d));
    }
    (xs, ws)
}

/// Composite Gauss-Legendre over `[a, b]` with `panels` equal pieces.
pub fn composite(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let c = a + h * (k as f64 + 0.5);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            acc += w * f(c + 0.5 * h * x);
        }
    }
    0.5 * h * acc
}

/// `int_0^a f` for `f` with an integrable power singularity at 0, through `y = a w^m`.
pub fn power_mapped(f: &dyn Fn(f64) -> f64, a: f64, m: i32, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let g = |w: f64| f(a * w.powi(m)) * a * m as f64 * w.powi(m - 1);
    composite(&g, 0.0, 1.0, panels, rule)
}

/// `int_a^inf f` through `y = a v^{-1/beta}`, valid when `f` decays like `y^{-1-beta}` or faster.
pub fn tail_mapped(f: &dyn Fn(f64) -> f64, a: f64, beta: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let g = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let y = a * v.powf(-1.0 / beta);
        f(y) * a / beta * v.powf(-1.0 / beta - 1.0)
    };
    composite(&g, 0.0, 1.0, panels, rule)
}

pub fn beta(x: f64) -> f64 {
    let m = (1.0 - x * x).max(0.0);
    m * m
}

/// `sign(A - B)|A - B|^{c} - sign(A + B)|A + B|^{c}` evaluated through the
/// sinh/atanh identity when `|B| < |A|`.
pub fn odd_even_pair(c: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        let v = b.abs().powf(c);
        return -2.0 * b.signum() * v;
    }
    if b.abs() < a.abs() {
        let bb = a.signum() * b / a.abs();
        -2.0 * a.signum() * a.abs().powf(c) * (1.0 - bb * bb).powf(0.5 * c) * (c * bb.atanh()).sinh()
    } else {
        let s = |v: f64| v.signum() * v.abs().powf(c);
        s(a - b) - s(a + b)
    }
}

/// `(L beta)(x)` for Gagliardo kernels in 1D with constant coefficient `a`:
/// `sum over phases r of weight_r int_0^inf [psi_r(d+) + psi_r(d-)] y^{-1-order_r} dy`.
pub fn barrier_operator_1d(x: f64, phases: &[(f64, f64, f64)]) -> f64 {
    let rule = gl(30);
    let b1 = -4.0 * x * (1.0 - x * x);
    let b2 = -4.0 + 12.0 * x * x;
    let b3 = 24.0 * x;
    let b4 = 24.0;
    let inner = 1.0 - x.abs();
    let mut total = 0.0;
    for &(r, order, weight) in phases {
        let c = r - 1.0;
        // both sides inside the unit ball: exact polynomial differences
        let near = |y: f64| {
            let odd = b1 * y + b3 * y.powi(3) / 6.0;
            let even = b2 * y * y / 2.0 + b4 * y.powi(4) / 24.0;
            // d+ = -(odd + even), d- = odd - even
            odd_even_pair(c, odd, even) * y.powf(-1.0 - order)
        };
        let plain = |y: f64| {
            let dp = beta(x) - beta(x + y);
            let dm = beta(x) - beta(x - y);
            let s = |v: f64| v.signum() * v.abs().powf(c);
            (s(dp) + s(dm)) * y.powf(-1.0 - order)
        };
        let mut v = power_mapped(&near, inner, 5, 400, &rule);
        let outer = 1.0 + x.abs();
        let mid = 1.0 - x.abs();
        v += composite(&plain, mid, outer, 400, &rule);
        v += 2.0 * beta(x).powf(c) * outer.powf(-order) / order;
        total += weight * v;
    }
    total
}

/// Cell coefficients, in `t in [0, 1]`, of the natural cubic splines
/// through each unit vector `e_j` on a uniform grid of `n` nodes.
pub fn natural_spline_basis(n: usize) -> Vec<Vec<[f64; 4]>> {
    let k = n - 2;
    let a = nalgebra::DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
        0 => 4.0,
        1 => 1.0,
        _ => 0.0,
    });
    // columns: right-hand sides 6 (e_{i+2} - 2 e_{i+1} + e_i) for each e_j
    let rhs = nalgebra::DMatrix::from_fn(k, n, |i, j| {
        let e = |m: usize| if m == j { 1.0 } else { 0.0 };
        6.0 * (e(i + 2) - 2.0 * e(i + 1) + e(i))
    });
    let sol = a.lu().solve(&rhs).expect("diagonally dominant");
    (0..n)
        .map(|j| {
            let u = |i: usize| if i == j { 1.0 } else { 0.0 };
            let m = |i: usize| if i == 0 || i == n - 1 { 0.0 } else { sol[(i - 1, j)] };
            (0..n - 1)
                .map(|c| [u(c), u(c + 1) - u(c) - (2.0 * m(c) + m(c + 1)) / 6.0, 0.5 * m(c), (m(c + 1) - m(c)) / 6.0])
                .collect()
        })
        .collect()
}

/// Dense matrix of the 1D fractional operator `PV int (u(x) - s(x+y)) |y|^{-1-order} dy`
/// applied to the natural spline `s` of the node values, with zero exterior,
/// restricted to interior rows and columns of the uniform grid on `[-half, half]`.
pub fn fractional_matrix_1d(nodes: usize, half: f64, order: f64) -> nalgebra::DMatrix<f64> {
    let h = 2.0 * half / (nodes - 1) as f64;
    let x = |i: usize| -half + h * i as f64;
    let rule = gl(20);
    let cells = nodes - 1;
    // mom[i][c][k] = int over cell c of t^k |z - x_i|^{-1-order} dz, for non-adjacent cells
    let moment = |i: usize, c: usize, k: i32| {
        let d = x(c) - x(i);
        composite(&|t: f64| t.powi(k) * (d + h * t).abs().powf(-1.0 - order) * h, 0.0, 1.0, 1, &rule)
    };
    let interior: Vec<usize> = (1..nodes - 1).collect();
    let mut a = nalgebra::DMatrix::zeros(interior.len(), interior.len());
    let basis = natural_spline_basis(nodes);
    let mut mom = vec![[0.0; 4]; cells];
    for (r, &i) in interior.iter().enumerate() {
        for (c, m) in mom.iter_mut().enumerate() {
            if c + 1 == i || c == i {
                continue;
            }
            for k in 0..4 {
                m[k] = moment(i, c, k as i32);
            }
        }
        let w_out = ((half - x(i)).powf(-order) + (x(i) + half).powf(-order)) / order;
        let w_in: f64 = (0..cells).filter(|&c| c + 1 != i && c != i).map(|c| mom[c][0]).sum();
        for (col, &j) in interior.iter().enumerate() {
            let sp = &basis[j];
            let mut v = if i == j { w_out + w_in } else { 0.0 };
            for c in 0..cells {
                if c + 1 == i || c == i {
                    continue;
                }
                v -= (0..4).map(|k| sp[c][k] * mom[c][k]).sum::<f64>();
            }
            // cells i-1 and i paired: 2 u_i - s(x_i + y) - s(x_i - y), value and slope cancel
            let (ar, bl) = (sp[i], sp[i - 1]);
            let c2 = -(ar[2] + bl[2] + 3.0 * bl[3]) / (h * h);
            let c3 = -(ar[3] - bl[3]) / (h * h * h);
            v += c2 * h.powf(2.0 - order) / (2.0 - order) + c3 * h.powf(3.0 - order) / (3.0 - order);
            a[(r, col)] = v;
        }
    }
    a
}

/// Interior node values solving `fractional_matrix_1d u = f` with zero exterior.
pub fn dense_fractional_solve(nodes: usize, half: f64, order: f64, f: f64) -> Vec<f64> {
    let a = fractional_matrix_1d(nodes, half, order);
    let rhs = nalgebra::DVector::from_element(nodes - 2, f);
    let sol = a.lu().solve(&rhs).expect("nonsingular");
    let mut out = vec![0.0; nodes];
    out[1..nodes - 1].copy_from_slice(sol.as_slice());
    out
}

/// Exponents drawn uniformly from a box and kept when they pass validation.
pub fn random_valid_exponents(rng: &mut impl rand::Rng) -> nldp_core::params::Exponents {
    loop {
        let n = rng.random_range(1..=2);
        let s = rng.random_range(0.05..0.95);
        let t = rng.random_range(0.05..0.95);
        let p = rng.random_range(1.05..4.0);
        let q = p * rng.random_range(1.0..1.9);
        let e = nldp_core::params::Exponents::new(n, s, t, p, q);
        if nldp_core::params::validate_exponents(&e, false).is_ok() {
            return e;
        }
    }
}

/// `2^{q-1} omega_n int_{|y| > 1/4} sum_r (|8y|^eta - 1)^{r-1} |y|^{-n-alpha_r} dy`
/// by composite Gauss-Legendre in `z = ln(4|y|)` with the exponential tail added analytically.
pub fn sigma_oracle(eta: f64, e: &nldp_core::params::Exponents) -> f64 {
    let omega = if e.n == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let rule = gl(20);
    let radial = |r: f64, alpha: f64| {
        let d = alpha - eta * (r - 1.0);
        let z_max = 80.0 / d;
        let f = |z: f64| {
            let a = eta * (std::f64::consts::LN_2 + z);
            // ln(e^a - 1) without overflow
            let ln_em1 = if a > 1.0 { a + (-(-a).exp()).ln_1p() } else { a.exp_m1().ln() };
            ((r - 1.0) * ln_em1 - alpha * z).exp()
        };
        let body = composite(&f, 0.0, z_max, 4000, &rule);
        // beyond z_max the integrand is at most 2^{eta(r-1)} e^{-d z}
        let tail = 2f64.powf(eta * (r - 1.0)) * (-d * z_max).exp() / d;
        4f64.powf(alpha) * (body + tail)
    };
    2f64.powf(e.q - 1.0) * omega * (radial(e.p, e.s * e.p) + radial(e.q, e.t * e.q))
}
