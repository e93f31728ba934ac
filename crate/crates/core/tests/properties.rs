use nldp_core::constants::{gamma, sigma, theta};
use nldp_core::grid::{Exterior, Grid, GridFunction, Interp};
use nldp_core::inequalities::{check_rev_l1, check_singular, check_superlinear};
use nldp_core::operator::{evaluate, psi_pair, QuadratureSpec};
use nldp_core::params::{
    pt1, Barrier, CoefficientField, CoefficientKind, Exponents, KernelField, KernelKind, ProblemParams,
};
use nldp_core::scaling::{m_hat_formula, rescale_problem, ScalingContext};
use proptest::prelude::*;

fn desk() -> ProblemParams {
    ProblemParams::model(Exponents::new(1, 0.6, 0.5, 2.0, 2.2))
}

fn smooth(a: f64, b: f64, c: f64) -> impl Fn(&[f64; 2]) -> f64 {
    move |x| a * (b * x[0]).cos() + c * x[0]
}

fn sampled(f: impl Fn(&[f64; 2]) -> f64, nodes: usize) -> GridFunction {
    let g = Grid::centered(1, 2.0, nodes).unwrap();
    GridFunction::from_fn(g, f, Exterior::Constant { value: 0.0 }, Interp::Cubic).unwrap()
}

fn valid_exponents() -> impl Strategy<Value = Exponents> {
    (1usize..=2, 0.05f64..0.95, 0.05f64..0.95, 1.05f64..4.0, 1.0f64..1.9).prop_filter_map("valid", |(n, s, t, p, r)| {
        let e = Exponents::new(n, s, t, p, p * r);
        nldp_core::params::validate_exponents(&e, false).ok().map(|_| e)
    })
}

fn context() -> impl Strategy<Value = ScalingContext> {
    (0.2f64..5.0, 0.2f64..5.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(l, m, a, b)| ScalingContext::new(l, m, [a, b]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn barrier_is_a_radially_decreasing_bump(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let (a, b) = (Barrier::radial(lo), Barrier::radial(hi));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a >= b);
    }

    #[test]
    fn barrier_differences_match_direct_evaluation(x in -0.9f64..0.9, x1 in -0.9f64..0.9, y in -0.5f64..0.5, y1 in -0.5f64..0.5, n in 1usize..=2) {
        let (x, y) = if n == 1 { ([x, 0.0], [y, 0.0]) } else { ([x, x1], [y, y1]) };
        let b = |p: &[f64; 2]| Barrier.value(p, n);
        let plus = [x[0] + y[0], x[1] + y[1]];
        let minus = [x[0] - y[0], x[1] - y[1]];
        prop_assert!((Barrier.difference(&x, &y, n) - (b(&x) - b(&plus))).abs() <= 1e-14);
        prop_assert!((Barrier.second_difference(&x, &y, n) - (b(&plus) + b(&minus) - 2.0 * b(&x))).abs() <= 1e-14);
    }

    #[test]
    fn barrier_gradient_matches_finite_differences(x in -1.2f64..1.2, y in -1.2f64..1.2) {
        let h = 1e-6;
        let p = [x, y];
        let g = Barrier.gradient(&p, 2);
        let fd0 = (Barrier.value(&[x + h, y], 2) - Barrier.value(&[x - h, y], 2)) / (2.0 * h);
        let fd1 = (Barrier.value(&[x, y + h], 2) - Barrier.value(&[x, y - h], 2)) / (2.0 * h);
        prop_assert!((g[0] - fd0).abs() < 1e-6 && (g[1] - fd1).abs() < 1e-6);
        prop_assert!(g[0].hypot(g[1]) <= Barrier::C1);
        prop_assert!(Barrier.hessian_norm(&p, 2) <= Barrier::C2);
    }

    #[test]
    fn model_kernels_respect_their_bounds(e in valid_exponents(), x in -2.0f64..2.0, r in 1e-4f64..1e3, f in 0.5f64..2.0) {
        let k = KernelField::with_kind(e.n, e.s, e.p, KernelKind::Scaled { factor: f });
        let base = r.powf(-(e.n as f64) - e.sp());
        let v = k.eval(&pt1(x), &pt1(r));
        prop_assert!(v >= base / k.lambda() * (1.0 - 1e-12) && v <= base * k.lambda() * (1.0 + 1e-12));
        prop_assert_eq!(v, k.eval(&pt1(x), &pt1(-r)));
    }

    #[test]
    fn rescaling_composes(c1 in context(), c2 in context(), x in -1.0f64..1.0, y in 0.01f64..1.0) {
        let mut p = desk();
        p.coefficient = CoefficientField::new(CoefficientKind::Halfspace { value: 0.8, normal: [1.0, 0.0], offset: 0.2 });
        p.source = nldp_core::params::SourceField::constant(0.3);
        let nested = rescale_problem(&rescale_problem(&p, &c1).unwrap(), &c2).unwrap();
        let once = rescale_problem(&p, &c1.then(&c2)).unwrap();
        let (x, y) = (pt1(x), pt1(y));
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        prop_assert!(close(nested.coefficient.eval(&x, &y), once.coefficient.eval(&x, &y)));
        prop_assert!(close(nested.source.eval(&x), once.source.eval(&x)));
        prop_assert!(close(nested.kernel_sp.eval(&x, &y), once.kernel_sp.eval(&x, &y)));
        prop_assert!(close(nested.kernel_tq.eval(&x, &y), once.kernel_tq.eval(&x, &y)));
    }

    #[test]
    fn rescaled_coefficient_stays_below_its_formula(c in context(), seed in 0u64..1000) {
        let mut p = desk();
        p.coefficient = CoefficientField::new(CoefficientKind::Halfspace { value: 0.7, normal: [1.0, 0.0], offset: -0.1 });
        let out = rescale_problem(&p, &c).unwrap();
        let bound = m_hat_formula(&p, &c) + 1e-12;
        let mut sup: f64 = 0.0;
        for k in 0..10_000u64 {
            let t = ((k + seed) as f64 * 0.618_033_988_749_895).fract();
            let x = pt1(-4.0 + 8.0 * t);
            let y = pt1(-2.0 + 4.0 * ((k as f64) * 0.414_213_562_373_095).fract());
            sup = sup.max(out.coefficient.eval(&x, &y));
        }
        prop_assert!(sup <= bound, "{} > {}", sup, bound);
        prop_assert!(out.kernel_sp.lambda() <= p.kernel_sp.lambda());
    }

    #[test]
    fn theta_is_linear_and_gamma_monotone(k1 in 1e-8f64..0.5, k2 in 1e-8f64..0.5, eta in 1e-6f64..0.5) {
        prop_assert!((theta(k1 + k2) - theta(k1) - theta(k2)).abs() <= 4.0 * f64::EPSILON);
        let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
        prop_assert!(gamma(theta(lo), eta) <= gamma(theta(hi), eta));
        prop_assert!(gamma(theta(lo), 0.5 * eta) <= gamma(theta(lo), eta));
    }

    #[test]
    fn elementary_inequalities_hold(a in -1e3f64..1e3, b in -1e3f64..1e3, r in 1.01f64..4.0, extra in 0.0f64..2.0) {
        let tol = |s: f64| 1e-9 * (1.0 + s.abs());
        if r >= 2.0 {
            let s = check_rev_l1(a, b, r).unwrap();
            prop_assert!(s >= -tol(a.abs().max(b.abs()).powf(r - 1.0)), "{}", s);
            if a + b >= 0.0 {
                let s = check_superlinear(a, b, r, r + extra).unwrap();
                prop_assert!(s >= -tol(a.abs().max(b.abs()).powf(r - 1.0)), "{}", s);
            }
        } else {
            let s = check_singular(a, b, r, r + extra).unwrap();
            prop_assert!(s >= -tol(a.abs().max(b.abs()).powf(r - 1.0)), "{}", s);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sigma_increases_with_eta(e in valid_exponents()) {
        let p = ProblemParams::model(e);
        let top = e.tail_threshold();
        let vals: Vec<f64> = (1..=20).map(|k| sigma(top * k as f64 / 21.0, &p).unwrap().value).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] < w[1]), "{:?}", vals);
    }

    #[test]
    fn operator_is_monotone_at_touching_points(a in -1.0f64..1.0, b in 0.5f64..3.0, c in -0.5f64..0.5, k in 0.0f64..2.0, node in 20usize..109) {
        let p = desk();
        let q = QuadratureSpec::default();
        let u = sampled(smooth(a, b, c), 129);
        // v = u + k |x - x_node|^2 touches u from above at the node, equal exterior data
        let xbar = u.grid().node(node);
        let base = smooth(a, b, c);
        let v = sampled(move |x| base(x) + k * (x[0] - xbar[0]).powi(2), 129);
        let lu = evaluate(&u, &xbar, &p, &q).unwrap();
        let lv = evaluate(&v, &xbar, &p, &q).unwrap();
        prop_assert!(lu.value >= lv.value - lu.error - lv.error - 1e-9, "{:?} {:?}", lu, lv);
    }

    #[test]
    fn operator_is_translation_covariant(a in -1.0f64..1.0, b in 0.5f64..3.0, z in -0.5f64..0.5, x in -0.5f64..0.5) {
        let p = desk();
        let q = QuadratureSpec::default();
        let u = sampled(smooth(a, b, 0.0), 129);
        let shifted = u.affine_image(1.0, 1.0, [-z, 0.0], 0.0).unwrap();
        let l0 = evaluate(&u, &pt1(x), &p, &q).unwrap();
        let l1 = evaluate(&shifted, &pt1(x + z), &p, &q).unwrap();
        prop_assert!((l0.value - l1.value).abs() <= 2.0 * q.tol * l0.value.abs().max(1.0) + l0.error + l1.error);
    }

    #[test]
    fn symmetrised_integrand_decays_at_the_predicted_rate(x in -0.8f64..0.8, p in 1.5f64..3.5, s in 0.2f64..0.6) {
        if p < 2.0 && p * (1.0 - s) <= 1.0 {
            return Ok(());
        }
        let beta = |z: f64| Barrier::radial(z.abs());
        let order = 1.0 + s * p;
        let integrand = |y: f64| {
            let second = -((12.0 * x * x - 4.0) * y * y + 2.0 * y.powi(4));
            psi_pair(p, beta(x) - beta(x + y), beta(x) - beta(x - y), second).abs() * y.powf(-order)
        };
        // |y|^p for p >= 2 and |y|^{p-1} below, against |y|^{-n-sp}
        let predicted = if p >= 2.0 { p } else { p - 1.0 } - order;
        let ratio = |k: i32| {
            let y = 2f64.powi(-k);
            integrand(y) * y.powf(-predicted)
        };
        let coarse = (3..=10).map(ratio).fold(0.0f64, f64::max);
        for k in 11..=24 {
            prop_assert!(ratio(k) <= 1.5 * coarse + 1e-12, "ratio {} at 2^-{} above {}", ratio(k), k, coarse);
        }
    }
}
