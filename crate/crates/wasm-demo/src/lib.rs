//! Browser bindings: regime check, operator on the barrier profile, and the constant bundle.
//!
//! Every entry point takes the model problem on the line (Gagliardo kernels, constant
//! coefficient and source) and returns a JSON string.

use nldp_core::constants::{applicable_cases, constants_bundle, default_epsilon, eta_threshold};
use nldp_core::grid::{Exterior, Grid, GridFunction, Interp};
use nldp_core::operator::{evaluate, QuadratureSpec};
use nldp_core::params::{Barrier, CoefficientField, Exponents, ProblemParams, SourceField};
use serde_json::json;
use wasm_bindgen::prelude::*;

const HALF_WIDTH: f64 = 2.0;
const NODES: usize = 256;

fn problem(s: f64, t: f64, p: f64, q: f64, a: f64, f: f64) -> ProblemParams {
    let mut pp = ProblemParams::model(Exponents { n: 1, s, t, p, q });
    pp.coefficient = CoefficientField::constant(a);
    pp.source = SourceField::constant(f);
    pp
}

pub fn classify_json(s: f64, t: f64, p: f64, q: f64, a: f64, f: f64) -> Result<String, nldp_core::Error> {
    let pp = problem(s, t, p, q, a, f);
    let regime = pp.validate()?;
    Ok(json!({
        "regime": regime,
        "applicable_cases": applicable_cases(&pp),
        "sp": s * p,
        "tq": t * q,
        "eta_threshold": eta_threshold(&pp),
    })
    .to_string())
}

/// Operator applied to `amplitude * (1 - x^2)_+^2`; points closer to the box edge than
/// the near-field radius come back as `null`.
pub fn barrier_profile_json(
    s: f64,
    t: f64,
    p: f64,
    q: f64,
    a: f64,
    amplitude: f64,
    xs: &[f64],
) -> Result<String, nldp_core::Error> {
    let pp = problem(s, t, p, q, a, 0.0);
    pp.validate()?;
    let g = Grid::centered(1, HALF_WIDTH, NODES)?;
    let u = GridFunction::from_fn(g, |x| amplitude * Barrier.value(x, 1), Exterior::Constant { value: 0.0 }, Interp::Cubic)?;
    let quad = QuadratureSpec::default();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let row = match evaluate(&u, &[x, 0.0], &pp, &quad) {
            Ok(e) => json!({ "x": x, "value": e.value, "error": e.error }),
            Err(nldp_core::Error::OutsideMargin { .. }) => json!({ "x": x, "value": null, "error": null }),
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(json!(rows).to_string())
}

pub fn constants_json(s: f64, t: f64, p: f64, q: f64, a: f64, f: f64) -> Result<String, nldp_core::Error> {
    let pp = problem(s, t, p, q, a, f);
    pp.validate()?;
    let b = constants_bundle(default_epsilon(1), &pp, None)?;
    Ok(serde_json::to_string(&b)?)
}

fn js(r: Result<String, nldp_core::Error>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn classify(s: f64, t: f64, p: f64, q: f64, a: f64, f: f64) -> Result<String, JsError> {
    js(classify_json(s, t, p, q, a, f))
}

#[wasm_bindgen]
pub fn barrier_profile(s: f64, t: f64, p: f64, q: f64, a: f64, amplitude: f64, xs: Vec<f64>) -> Result<String, JsError> {
    js(barrier_profile_json(s, t, p, q, a, amplitude, &xs))
}

#[wasm_bindgen]
pub fn constants(s: f64, t: f64, p: f64, q: f64, a: f64, f: f64) -> Result<String, JsError> {
    js(constants_json(s, t, p, q, a, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_reports_the_regime() {
        let v: serde_json::Value = serde_json::from_str(&classify_json(0.6, 0.5, 2.0, 2.2, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(v["regime"], "Superquadratic");
        assert!(classify_json(0.6, 0.5, 2.0, 9.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn profile_marks_points_outside_the_margin() {
        let out = barrier_profile_json(0.6, 0.5, 2.0, 2.2, 1.0, 1.0, &[0.0, 1.999]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v[0]["value"].as_f64().unwrap() > 0.0);
        assert!(v[1]["value"].is_null());
    }

    #[test]
    fn constants_match_the_desk_bundle() {
        let v: serde_json::Value = serde_json::from_str(&constants_json(0.6, 0.5, 2.0, 2.2, 1.0, 0.0).unwrap()).unwrap();
        let eta = v["eta"].as_f64().unwrap();
        assert!((eta - 1.1190e-4).abs() < 1e-7, "{eta}");
    }
}
