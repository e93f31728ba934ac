mod common;

use nldp_core::grid::{Exterior, Grid, GridFunction, Interp};
use nldp_core::operator::{evaluate, QuadratureSpec};
use nldp_core::params::{pt1, CoefficientField, Exponents, ProblemParams};

fn worst_relative(nodes: usize, pp: &ProblemParams, phases: &[(f64, f64, f64)]) -> f64 {
    let g = Grid::centered(1, 2.0, nodes).unwrap();
    let u = GridFunction::from_fn(g, |x| common::beta(x[0]), Exterior::Constant { value: 0.0 }, Interp::Cubic).unwrap();
    (0..9)
        .map(|k| {
            let x = -0.8 + 0.2 * k as f64;
            let v = evaluate(&u, &pt1(x), pp, &QuadratureSpec::default()).unwrap();
            let r = common::barrier_operator_1d(x, phases);
            (v.value - r).abs() / r.abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn quadratic_barrier_matches_reference() {
    let mut pp = ProblemParams::model(Exponents::new(1, 0.6, 0.4, 2.0, 2.0));
    pp.coefficient = CoefficientField::constant(0.0);
    let coarse = worst_relative(257, &pp, &[(2.0, 1.2, 1.0)]);
    let fine = worst_relative(4097, &pp, &[(2.0, 1.2, 1.0)]);
    assert!(fine <= 1e-6, "{fine:e}");
    assert!(fine < coarse / 100.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn double_phase_barrier_matches_reference() {
    let desk = ProblemParams::model(Exponents::new(1, 0.6, 0.5, 2.0, 2.2));
    let w = worst_relative(4097, &desk, &[(2.0, 1.2, 1.0), (2.2, 1.1, 1.0)]);
    assert!(w <= 1e-6, "{w:e}");
}

#[test]
fn singular_phase_barrier_matches_reference() {
    let pp = ProblemParams::model(Exponents::new(1, 0.45, 0.4, 1.9, 2.0));
    let w = worst_relative(4097, &pp, &[(1.9, 0.855, 1.0), (2.0, 0.8, 1.0)]);
    assert!(w <= 1e-6, "{w:e}");
}
