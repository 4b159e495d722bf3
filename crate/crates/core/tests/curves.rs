mod common;

use common::{c, quintic_periods};
use trisecant::curves::{curve_from_branch_points, AbelJacobiPath, CurvePeriods, CurvePoint};
use trisecant::ppav::{is_two_torsion, torus_distance};
use trisecant::Complex64;

#[test]
fn riemann_bilinear_relations() {
    let periods = quintic_periods();
    let tau = periods.tau().tau();
    let asym = (tau - tau.transpose()).norm();
    assert!(asym <= 1e-8 * tau.norm());
    let im = tau.map(|v| v.im);
    assert!(im.cholesky().is_some());
}

#[test]
fn complex_branch_points() {
    let bp = [c(0.0, 0.0), c(1.0, 0.5), c(2.0, -0.3), c(3.0, 0.2), c(4.0, 0.0), c(5.0, -0.4)];
    let periods = CurvePeriods::compute(&curve_from_branch_points(&bp, 1).unwrap(), 1e-12).unwrap();
    let tau = periods.tau().tau();
    assert!((tau - tau.transpose()).norm() <= 1e-8 * tau.norm());
    for j in 0..bp.len() {
        let p = CurvePoint::branch(periods.curve(), j).unwrap();
        let image = periods.abel_jacobi(&p, 1e-12).unwrap().image;
        assert!(is_two_torsion(&image, periods.tau(), 1e-6), "branch point {j}");
    }
}

#[test]
fn tightening_the_tolerance_moves_images_by_less_than_it() {
    let bp: Vec<Complex64> = (0..5).map(|k| c(k as f64, 0.0)).collect();
    let curve = curve_from_branch_points(&bp, 0).unwrap();
    let p = CurvePoint::new(c(1.3, 0.8), 1).unwrap();
    for tol in [1e-6, 1e-8, 1e-10] {
        let coarse_periods = CurvePeriods::compute(&curve, tol).unwrap();
        let fine_periods = CurvePeriods::compute(&curve, tol / 10.0).unwrap();
        let coarse = coarse_periods.abel_jacobi(&p, tol).unwrap().image;
        let fine = fine_periods.abel_jacobi(&p, tol / 10.0).unwrap().image;
        let diff = &coarse - &fine;
        let moved = diff.coords().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let modulo = torus_distance(&coarse, &fine, fine_periods.tau());
        assert!(moved.min(modulo) <= tol, "tol {tol}: moved {moved:e}");
    }
}

#[test]
fn hyperelliptic_involution_negates() {
    let periods = quintic_periods();
    let p = CurvePoint::new(c(2.4, -0.7), 1).unwrap();
    let a = periods.abel_jacobi(&p, 1e-12).unwrap().image;
    let b = periods.abel_jacobi(&p.involution(), 1e-12).unwrap().image;
    // The basepoint is a branch point, so P + iota(P) is linearly equivalent to 2 * basepoint.
    assert!(torus_distance(&(&a + &b), &a.scale(0.0), periods.tau()) <= 1e-9);
    let via = periods.abel_jacobi_along(&p, &AbelJacobiPath::Via(vec![c(0.5, -2.0), c(3.0, -2.0)]), 1e-12).unwrap();
    assert!(torus_distance(&via.image, &a, periods.tau()) <= 1e-8);
}
