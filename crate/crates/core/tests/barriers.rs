use std::f64::consts::{E, PI};

use hardylab::closedform::*;
use hardylab::{FermiChart, OperatorSpec};
use proptest::prelude::*;

#[test]
fn weight_and_barrier_values() {
    assert!((x_weight(2.0, 1.0 / E).unwrap() - 1.0).abs() < 1e-15);
    assert!((x_weight(-2.0, (-2.0f64).exp()).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(x_weight(0.0, 0.37).unwrap(), 1.0);
    assert!(x_weight(1.0, 1.0).is_err());
    assert!(x_weight(1.0, 0.0).is_err());

    for a in [-0.9, -0.3, 1.7] {
        assert!((omega_bar(a, &[1.0 / E, 0.0]).unwrap() - 1.0).abs() < 1e-14);
    }
    assert!((omega_bar(-1.0, &[(-2.0f64).exp(), 0.0]).unwrap() - 0.5).abs() < 1e-14);
    // independent arithmetic: e^{1/e} = exp(0.36787944117144233)
    assert!((omega(-0.75, 1.0, &[1.0 / E, 0.0]).unwrap() - 1.444_667_861_009_766).abs() < 1e-12);
}

#[test]
fn barrier_vanishes_linearly_on_the_boundary() {
    let v: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|&e| omega_bar(-0.75, &[e, 0.5]).unwrap() / e).collect();
    assert!((v[0] - v[2]).abs() / v[2] < 1e-2);
}

#[test]
fn drift_factor_is_monotone() {
    let y = [0.2, 0.1];
    assert_eq!(omega(-0.6, 0.0, &y).unwrap(), omega_bar(-0.6, &y).unwrap());
    assert!(omega(-0.6, 1.0, &y).unwrap() > omega(-0.6, 0.5, &y).unwrap());
}

#[test]
fn ly_residual_is_second_order() {
    let y = [0.2, 0.1];
    let r1 = ly_residual_fd(-0.75, &y, 1e-3).unwrap();
    let r2 = ly_residual_fd(-0.75, &y, 5e-4).unwrap();
    assert!((r1 / r2 - 4.0).abs() < 0.05, "ratio {}", r1 / r2);
    assert!(ly_residual_fd(0.0, &[0.3, 0.0], 1e-4).unwrap().abs() < 1e-6);
}

#[test]
fn drift_identity_holds() {
    let y = [0.2, 0.1];
    let r1 = lyoak_residual_fd(-0.75, 1.0, &y, 1e-3).unwrap();
    let r2 = lyoak_residual_fd(-0.75, 1.0, &y, 5e-4).unwrap();
    let scale = omega(-0.75, 1.0, &y).unwrap() / (y[0] * y[0] + y[1] * y[1]);
    assert!(r1.abs() < 1e-4 * scale, "{r1} vs {scale}");
    assert!((r1 / r2 - 4.0).abs() < 0.05);
    for y in [[0.3, 0.0], [0.1, -0.2]] {
        assert_eq!(lyoak_rhs(-0.9, 0.0, &y).unwrap(), 0.0);
    }
}

#[test]
fn drift_rhs_has_a_finite_boundary_limit() {
    let (a, k, s) = (-0.75, 1.0, 0.3);
    let limit = -2.0 * k * x_weight(a, s).unwrap() / s;
    let v = lyoak_rhs(a, k, &[1e-9, s]).unwrap();
    assert!((v - limit).abs() / limit.abs() < 1e-6, "{v} vs {limit}");
}

#[test]
fn residual_constants_are_bounded_across_points() {
    for a in [-0.6, -0.9] {
        let h = 1e-3;
        let c: Vec<f64> =
            sample_points(20).iter().map(|y| ly_residual_fd(a, y, h).unwrap().abs() / (h * h)).collect();
        let c2: Vec<f64> =
            sample_points(20).iter().map(|y| ly_residual_fd(a, y, h / 2.0).unwrap().abs() / (h * h / 4.0)).collect();
        for (x, y) in c.iter().zip(&c2) {
            assert!((x / y - 1.0).abs() < 0.02);
        }
    }
}

#[test]
fn flat_scan_matches_closed_form() {
    // Flat chart, λ = 0, K = 0: L_y ω̄ = 0 leaves (Lw)/w = −a(a−1) / (|y|² log²|y|).
    let a = -0.75;
    let rep = barrier_sign_scan(&BarrierParams::new(a, 0.0, 2).unwrap(), &OperatorSpec::plain(0.0), &FermiChart::plane2(), 0.2, 16)
        .unwrap();
    let y = rep.argmax_y;
    let r = y[0].hypot(y[1]);
    let l = -r.ln();
    let closed = -a * (a - 1.0) / (r * r * l * l);
    assert!((rep.max_ratio - closed).abs() <= 1e-6 * closed.abs().max(1.0), "{} vs {closed}", rep.max_ratio);
    assert!(rep.admissible && (r - 0.2).abs() < 1e-12);
}

#[test]
fn interior_scan_is_admissible_for_small_r() {
    let op = OperatorSpec::plain(1.0);
    let rep = barrier_sign_scan(&BarrierParams::new(-0.75, 1.0, 2).unwrap(), &op, &FermiChart::interior2(), 0.05, 64).unwrap();
    assert!(rep.admissible && rep.violating_region.is_none());
    let big = barrier_sign_scan(&BarrierParams::new(-0.51, 1.0, 2).unwrap(), &op, &FermiChart::interior2(), 0.4, 32).unwrap();
    assert!(!big.admissible);
    let reg = big.violating_region.expect("region reported");
    assert!(reg[0] <= reg[1] && reg[1] <= 0.4 + 1e-12 && reg[2] <= reg[3]);
}

#[test]
fn norm_integral_blows_up_toward_minus_half() {
    let r = (-4.0f64).exp();
    let near = barrier_norm_divergence(-0.51, 2, &[r]).unwrap()[0];
    let far = barrier_norm_divergence(-0.9, 2, &[r]).unwrap()[0];
    assert!(near.is_finite() && near >= 50.0 * far, "{near} vs {far}");
    let vals: Vec<f64> =
        [-0.9, -0.75, -0.6, -0.55].iter().map(|&a| barrier_norm_divergence(a, 2, &[r]).unwrap()[0]).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    assert!(barrier_norm_divergence(-0.4, 2, &[r]).is_err());
}

#[test]
fn norm_integral_flat_part_has_closed_form() {
    // Without drift the integrand separates: ∫cos²φ dφ · ∫ρ^{-1}|log ρ|^{2a} dρ = (π/2)·L^{2a+1}/(−2a−1)
    let (a, r) = (-0.75, 0.05f64);
    let v = barrier_norm_divergence(a, 2, &[r]).unwrap()[0];
    let l = -r.ln();
    let flat = 0.5 * PI * l.powf(2.0 * a + 1.0) / (-2.0 * a - 1.0);
    // the e^{2y¹} drift factor only adds mass
    assert!(v > flat && v < flat * (1.0 + 4.0 * r), "{v} vs {flat}");
}

#[test]
fn oracle_constants() {
    assert_eq!(sector_hardy_constant(PI).unwrap(), 1.0);
    assert!((sector_hardy_constant(0.5 * PI).unwrap() - 4.0).abs() < 1e-15);
    assert!((sector_hardy_constant(2.0 * PI).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(halfspace_constant(2, 0).unwrap(), 1.0);
    assert_eq!(halfspace_constant(3, 1).unwrap(), 1.0);
    assert!(halfspace_constant(2, 2).is_err());
}

proptest! {
    #[test]
    fn barrier_is_positive_in_the_half_ball(a in -0.99f64..-0.5, k in 0.0f64..2.0, rho in 0.01f64..0.9, phi in -1.5f64..1.5) {
        let y = [rho * phi.cos(), rho * phi.sin()];
        prop_assert!(omega(a, k, &y).unwrap() > 0.0);
    }
}
