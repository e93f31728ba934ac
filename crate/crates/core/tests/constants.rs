mod common;

use nldp_core::constants::{sigma, sigma_bounds};
use nldp_core::params::{Exponents, ProblemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sigma_matches_radial_oracle_at_desk_scale() {
    let e = Exponents::new(1, 0.6, 0.5, 2.0, 2.2);
    let got = sigma(0.01, &ProblemParams::model(e)).unwrap();
    let want = common::sigma_oracle(0.01, &e);
    assert!((got.value - want).abs() <= 1e-12 * want, "{} vs {want}", got.value);
    let (lo, hi) = sigma_bounds(0.01, &ProblemParams::model(e));
    assert!(lo <= got.value && got.value <= hi);
}

#[test]
fn sigma_matches_radial_oracle_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut outside_band = 0;
    for _ in 0..20 {
        let e = common::random_valid_exponents(&mut rng);
        let eta = e.tail_threshold() * rng.random_range(0.001..0.9);
        let p = ProblemParams::model(e);
        let got = sigma(eta, &p).unwrap().value;
        let want = common::sigma_oracle(eta, &e);
        assert!((got - want).abs() <= 1e-8 * want, "{e:?} eta {eta}: {got} vs {want}");
        let (lo, hi) = sigma_bounds(eta, &p);
        if !(lo <= got && got <= hi) {
            outside_band += 1;
        }
    }
    eprintln!("{outside_band} of 20 draws fall outside the closed-form band");
}

#[test]
fn signed_near_integral_matches_high_precision_value() {
    // 40-digit quadrature of the closed-form second difference, minus the exterior part
    let x = nldp_core::params::pt1(0.0234374999765625);
    let near = nldp_core::constants::near_integrals(&x, &ProblemParams::model(Exponents::new(1, 0.6, 0.5, 2.0, 2.2)));
    let want = 4.276_267_674_016_655;
    assert!((near.signed_p - want).abs() <= 1e-10 * want, "{}", near.signed_p);
    assert!(near.error <= 1e-9, "{:e}", near.error);
}
