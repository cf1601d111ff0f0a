use std::f64::consts::{E, FRAC_PI_2};

use hardylab::geometry::drift_constant;
use hardylab::{ChartKind, DomainSpec, Extremum, FermiChart, ScalarField};
use proptest::prelude::*;

const KINDS: [ChartKind; 3] = [ChartKind::Plane, ChartKind::SphereExterior, ChartKind::SphereInterior];

#[test]
fn forward_examples() {
    let p = FermiChart::plane2();
    assert_eq!(p.forward2([0.3, -0.2]).unwrap(), [0.3, -0.2]);
    assert_eq!(p.inverse2([0.3, -0.2]).unwrap(), [0.3, -0.2]);

    let e = FermiChart::exterior2();
    let x = e.forward2([0.0, FRAC_PI_2]).unwrap();
    assert!((x[0] + 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    let y = e.inverse2([-1.0, 1.0]).unwrap();
    assert!(y[0].abs() < 1e-15 && (y[1] - FRAC_PI_2).abs() < 1e-15);
    assert_eq!(e.forward2([0.1, 0.0]).unwrap(), [0.1, 0.0]);

    for k in KINDS {
        assert_eq!(FermiChart::new(k, 2).unwrap().forward2([0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }
}

#[test]
fn distance_and_curvature_examples() {
    assert_eq!(FermiChart::plane2().distance_to_surface(&[0.4, 7.0]).unwrap(), 0.4);
    assert!((FermiChart::exterior2().distance_to_surface(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((FermiChart::interior2().distance_to_surface(&[0.5, 0.0]).unwrap() - 0.5).abs() < 1e-15);

    assert_eq!(FermiChart::plane2().mean_curvature_term(&[0.2, 0.3]).unwrap(), 0.0);
    assert!((FermiChart::exterior2().mean_curvature_term(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((FermiChart::interior2().mean_curvature_term(&[0.5, 0.0]).unwrap() + 2.0).abs() < 1e-14);
}

#[test]
fn drift_constant_examples() {
    let one = ScalarField::one();
    assert_eq!(drift_constant(&FermiChart::plane2(), &one, 0.1, Extremum::Max).unwrap(), 0.0);
    let k = drift_constant(&FermiChart::plane2(), &ScalarField::one_plus_x1(), 0.1, Extremum::Min).unwrap();
    assert!((k + 0.5).abs() < 1e-14);
    // −h = (N − 1)/(1 − d) on the interior chart: ½ max → ½ (1 + O(r))
    for r in [0.1, 0.05] {
        let k = drift_constant(&FermiChart::interior2(), &one, r, Extremum::Max).unwrap();
        assert!(k >= 0.5 && k <= 0.5 / (1.0 - r) + 1e-12, "r = {r}: K = {k}");
    }
}

#[test]
fn degenerate_domains_are_rejected() {
    assert!(DomainSpec::half_disk(0.0).validate().is_err());
    assert!(DomainSpec::half_disk(-1.0).validate().is_err());
    assert!(DomainSpec::sector(0.0, 0.5).validate().is_err());
    assert!(DomainSpec::sector(-1.0, 0.5).validate().is_err());
    assert!(DomainSpec::sector(1.0, 0.5).validate().is_ok());
}

#[test]
fn log_weight_at_inverse_e() {
    // |x|⁻²|log|x||⁻² at |x| = e⁻¹ is e²
    let x = (-1.0f64).exp();
    let w = 1.0 / (x * x * x.ln().powi(2));
    assert!((w - E * E).abs() < 1e-12);
}

fn chart_strategy() -> impl Strategy<Value = ChartKind> {
    prop::sample::select(KINDS.to_vec())
}

proptest! {
    #[test]
    fn round_trip_is_accurate(kind in chart_strategy(), rho in 1e-6f64..0.5, phi in -FRAC_PI_2..FRAC_PI_2) {
        let c = FermiChart::new(kind, 2).unwrap();
        let y = [rho * phi.cos(), rho * phi.sin()];
        let back = c.inverse2(c.forward2(y).unwrap()).unwrap();
        let err = (back[0] - y[0]).hypot(back[1] - y[1]);
        prop_assert!(err <= 10.0 * f64::EPSILON * rho, "err {err:e} at {y:?}");
    }

    #[test]
    fn round_trip_random_small(kind in chart_strategy(), y0 in 0.0f64..0.3, y1 in -0.3f64..0.3) {
        prop_assume!(y0.hypot(y1) < 0.3);
        let c = FermiChart::new(kind, 2).unwrap();
        let back = c.inverse2(c.forward2([y0, y1]).unwrap()).unwrap();
        prop_assert!((back[0] - y0).abs() < 1e-10 && (back[1] - y1).abs() < 1e-10);
    }

    #[test]
    fn chart_is_nearly_isometric_at_origin(kind in chart_strategy(), rho in 1e-4f64..0.1, phi in -FRAC_PI_2..FRAC_PI_2) {
        let c = FermiChart::new(kind, 2).unwrap();
        let x = c.forward2([rho * phi.cos(), rho * phi.sin()]).unwrap();
        prop_assert!((x[0].hypot(x[1]) - rho).abs() <= rho * rho + 1e-15);
    }

    #[test]
    fn normal_coordinate_is_the_distance(kind in chart_strategy(), d in 0.0f64..0.45, s in -1.0f64..1.0) {
        let c = FermiChart::new(kind, 2).unwrap();
        let x = c.forward2([d, s]).unwrap();
        prop_assert!((c.distance_to_surface(&x).unwrap() - d).abs() < 1e-13);
    }
}
