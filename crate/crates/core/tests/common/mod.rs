#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use trisecant::curves::{curve_from_branch_points, CurvePeriods, CurvePoint};
use trisecant::ppav::{AbelianPoint, PeriodMatrix};
use trisecant::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random point of the Siegel upper half space with `Im tau` comfortably
/// positive definite.
pub fn random_tau<R: Rng>(rng: &mut R, g: usize) -> PeriodMatrix {
    let b = DMatrix::from_fn(g, g, |_, _| rng.gen_range(-0.4..0.4));
    let im = b.transpose() * &b + DMatrix::identity(g, g) * 0.7;
    let mut re = DMatrix::from_fn(g, g, |_, _| rng.gen_range(-0.5..0.5));
    re = (&re + re.transpose()) * 0.5;
    let tau = DMatrix::from_fn(g, g, |i, j| c(re[(i, j)], im[(i, j)]));
    PeriodMatrix::new(tau).unwrap()
}

/// Uniform point of the fundamental domain.
pub fn random_point<R: Rng>(rng: &mut R, tau: &PeriodMatrix) -> AbelianPoint {
    let g = tau.g();
    let x: Vec<f64> = (0..g).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let y: Vec<f64> = (0..g).map(|_| rng.gen_range(-0.5..0.5)).collect();
    tau.from_chart(&x, &y)
}

/// The genus-2 curve `y^2 = x(x-1)(x-2)(x-3)(x-4)` with basepoint 0.
pub fn quintic_periods() -> CurvePeriods {
    let bp: Vec<Complex64> = (0..5).map(|k| c(k as f64, 0.0)).collect();
    CurvePeriods::compute(&curve_from_branch_points(&bp, 0).unwrap(), 1e-12).unwrap()
}

pub fn aj(periods: &CurvePeriods, x: Complex64, sheet: i8) -> AbelianPoint {
    periods.abel_jacobi(&CurvePoint::new(x, sheet).unwrap(), 1e-12).unwrap().image
}

/// Abel-Jacobi images of three fixed curve points.
pub fn curve_triple(periods: &CurvePeriods) -> Vec<AbelianPoint> {
    vec![aj(periods, c(0.5, 0.7), 1), aj(periods, c(1.7, -0.4), 1), aj(periods, c(-0.8, 0.3), -1)]
}
