use std::f64::consts::PI;

use srheat_core::asymptotics::{fit_expansion, sign_symmetric_grid, ExpansionInput, Weighting, DEFAULT_TRUST_RADIUS};
use srheat_core::flag::DEFAULT_MAX_DEPTH;
use srheat_core::poly::int;
use srheat_core::{
    compute_flag, identity_chart, rescaled_kernel, Error, FdConfig, HeatModel, McConfig, MultiPoly, PolyVectorField,
    PrivilegedChart, RescaledEstimator,
};

fn chart(fields: &[PolyVectorField]) -> PrivilegedChart {
    let p = vec![int(0); fields[0].dim()];
    let flag = compute_flag(fields, &p, DEFAULT_MAX_DEPTH).unwrap();
    identity_chart(fields, &flag, &p, 2 * flag.r as i64 + 2).unwrap()
}

fn euclid1() -> HeatModel {
    HeatModel::from_fields(vec![PolyVectorField::coordinate(1, 0)], vec![-5.0], vec![5.0]).unwrap()
}

fn grushin_pert() -> HeatModel {
    let x1 = MultiPoly::var(2, 0);
    HeatModel::from_fields(
        vec![PolyVectorField::coordinate(2, 0), PolyVectorField::along(1, &x1 + &x1.pow(2))],
        vec![-3.0, -3.0],
        vec![3.0, 3.0],
    )
    .unwrap()
}

#[test]
fn euclidean_rescaling_is_eps_independent() {
    let m = euclid1();
    let c = chart(&m.fields);
    let pairs = vec![(vec![0.0], vec![0.0]), (vec![0.6], vec![0.0])];
    let fd = RescaledEstimator::Fd {
        config: FdConfig::new(vec![0.01], 0.002),
        box_lo: vec![-5.0],
        box_hi: vec![5.0],
    };
    let base = rescaled_kernel(&m, &c, 1.0, 1.0, &pairs, &fd, DEFAULT_TRUST_RADIUS).unwrap();
    for (k, (x, _)) in pairs.iter().enumerate() {
        let exact = (-x[0] * x[0] / 4.0).exp() / (4.0 * PI).sqrt();
        assert!((base.values[k] - exact).abs() < 0.01 * exact);
    }
    for eps in [0.5, -0.5, 0.25] {
        let r = rescaled_kernel(&m, &c, eps, 1.0, &pairs, &fd, DEFAULT_TRUST_RADIUS).unwrap();
        assert_eq!(r.values, base.values, "eps = {eps}");
    }
    let mc = RescaledEstimator::Mc(McConfig::new(20_000, 5));
    let a = rescaled_kernel(&m, &c, 1.0, 1.0, &pairs, &mc, DEFAULT_TRUST_RADIUS).unwrap();
    let b = rescaled_kernel(&m, &c, 0.25, 1.0, &pairs, &mc, DEFAULT_TRUST_RADIUS).unwrap();
    for (u, v) in a.values.iter().zip(&b.values) {
        assert!((u - v).abs() < 1e-9 * u, "{u} vs {v}");
    }
}

#[test]
fn points_outside_the_trusted_ball_are_refused() {
    let m = euclid1();
    let c = chart(&m.fields);
    let pairs = vec![(vec![2.0], vec![0.0])];
    let est = RescaledEstimator::Mc(McConfig::new(1000, 0));
    let err = rescaled_kernel(&m, &c, 1.0, 1.0, &pairs, &est, DEFAULT_TRUST_RADIUS).unwrap_err();
    assert!(matches!(err, Error::ChartValidity { .. }));
    assert!(rescaled_kernel(&m, &c, 0.25, 1.0, &pairs, &est, DEFAULT_TRUST_RADIUS).is_ok());
}

#[test]
fn grushin_routes_agree() {
    let m = grushin_pert();
    let c = chart(&m.fields);
    let pairs = vec![(vec![0.0, 0.0], vec![0.0, 0.0]), (vec![0.6, 0.3], vec![0.0, 0.0])];
    let fd = RescaledEstimator::Fd {
        config: FdConfig::new(vec![0.05, 0.05], 0.01),
        box_lo: vec![-6.0, -6.0],
        box_hi: vec![6.0, 6.0],
    };
    let mc = RescaledEstimator::Mc(McConfig::new(200_000, 21));
    let a = rescaled_kernel(&m, &c, 0.5, 1.0, &pairs, &fd, DEFAULT_TRUST_RADIUS).unwrap();
    let b = rescaled_kernel(&m, &c, 0.5, 1.0, &pairs, &mc, DEFAULT_TRUST_RADIUS).unwrap();
    for k in 0..pairs.len() {
        let tol = 3.0 * (a.errors[k].powi(2) + b.errors[k].powi(2)).sqrt();
        assert!((a.values[k] - b.values[k]).abs() <= tol, "{k}: fd {} mc {} tol {tol}", a.values[k], b.values[k]);
    }
}

#[test]
fn grushin_first_coefficient_vanishes_at_the_origin() {
    let m = grushin_pert();
    let c = chart(&m.fields);
    let pairs = vec![(vec![0.0, 0.0], vec![0.0, 0.0])];
    let fd = RescaledEstimator::Fd {
        config: FdConfig::new(vec![0.1, 0.1], 0.02),
        box_lo: vec![-6.0, -6.0],
        box_hi: vec![6.0, 6.0],
    };
    let eps = sign_symmetric_grid(0.5, 3);
    let mut values = Vec::new();
    let mut errors = Vec::new();
    for &e in &eps {
        let r = rescaled_kernel(&m, &c, e, 1.0, &pairs, &fd, DEFAULT_TRUST_RADIUS).unwrap();
        values.push(r.values[0]);
        errors.push(r.errors[0]);
    }
    let inp = ExpansionInput {
        tau: 1.0,
        x: vec![0.0, 0.0],
        x_prime: vec![0.0, 0.0],
        eps,
        values,
        errors,
    };
    let rep = fit_expansion(&[inp], 2, Weighting::Uniform, 3.0).unwrap();
    let odd = rep.oddness.unwrap();
    assert!(odd.ratio <= 3.0, "{odd:?}");
}
