//! Riemann theta functions with half-integer characteristics,
//!
//! ```text
//! theta[a;b](z, tau) = sum_{n in Z^g} exp(pi i (n+a)^T tau (n+a) + 2 pi i (n+a)^T (z+b)),
//! ```
//!
//! and the second-order basis `theta_sigma(z) = theta[sigma/2; 0](2z, 2tau)`
//! of the sections of twice the principal polarization.
//!
//! # Normalization and error control
//!
//! Write `Y = Im tau`, `c = Y^{-1} Im z` and let `T` be the upper triangular
//! factor with `T^T T = pi Y`. A term with summation index `v = n + a` has
//! modulus `exp(pi c^T Y c) * exp(-|T (v + c)|^2)`. Evaluation sums every term
//! inside the ellipsoid `|T (v + c)| <= R`, so the truncation error is at most
//! `eps * exp(pi c^T Y c)`: `eps` bounds the tail of the *normalized* series.
//! The returned values are the raw series values, growth factor included.
//! [`growth_factor`] reports the factor for callers comparing magnitudes.
//!
//! The radius comes from the tail estimate for lattice sums over the
//! ellipsoid (incomplete gamma bound in terms of the shortest vector `rho` of
//! `T Z^g`).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppav::{AbelianPoint, LatticeVector, PeriodMatrix};

/// Upper bound on the number of lattice points a single series may visit.
pub const MAX_LATTICE_POINTS: f64 = 1e8;

/// A characteristic `[a; b]` with `a, b in {0, 1/2}^g`, stored as bits
/// (`a_i = a_bits[i] / 2`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThetaCharacteristic {
    a_bits: Vec<u8>,
    b_bits: Vec<u8>,
}

impl ThetaCharacteristic {
    pub fn new(a_bits: Vec<u8>, b_bits: Vec<u8>) -> Result<Self> {
        if a_bits.len() != b_bits.len() {
            return Err(Error::InvalidCharacteristic(format!(
                "a has {} entries, b has {}",
                a_bits.len(),
                b_bits.len()
            )));
        }
        if a_bits.iter().chain(&b_bits).any(|&v| v > 1) {
            return Err(Error::InvalidCharacteristic("entries must be 0 or 1 (units of 1/2)".into()));
        }
        Ok(Self { a_bits, b_bits })
    }

    /// From real half-integer vectors with entries in `{0, 1/2}`.
    pub fn from_halves(a: &[f64], b: &[f64]) -> Result<Self> {
        let to_bit = |v: f64| -> Result<u8> {
            if v == 0.0 {
                Ok(0)
            } else if v == 0.5 {
                Ok(1)
            } else {
                Err(Error::InvalidCharacteristic(format!("entry {v} is not 0 or 1/2")))
            }
        };
        let a_bits = a.iter().map(|&v| to_bit(v)).collect::<Result<_>>()?;
        let b_bits = b.iter().map(|&v| to_bit(v)).collect::<Result<_>>()?;
        Self::new(a_bits, b_bits)
    }

    pub fn zero(g: usize) -> Self {
        Self { a_bits: vec![0; g], b_bits: vec![0; g] }
    }

    /// `[sigma/2; 0]`, the characteristic of the second-order function `theta_sigma`.
    pub fn second_order(sigma: &[u8]) -> Self {
        Self { a_bits: sigma.to_vec(), b_bits: vec![0; sigma.len()] }
    }

    pub fn g(&self) -> usize {
        self.a_bits.len()
    }

    pub fn a(&self) -> Vec<f64> {
        self.a_bits.iter().map(|&v| 0.5 * v as f64).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.b_bits.iter().map(|&v| 0.5 * v as f64).collect()
    }

    pub fn a_bits(&self) -> &[u8] {
        &self.a_bits
    }

    pub fn b_bits(&self) -> &[u8] {
        &self.b_bits
    }

    /// `4 a^T b mod 2`.
    pub fn parity(&self) -> u8 {
        self.a_bits.iter().zip(&self.b_bits).map(|(a, b)| a * b).sum::<u8>() % 2
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == 1
    }

    /// All `4^g` characteristics, `a` bits most significant.
    pub fn all(g: usize) -> Vec<Self> {
        (0..1usize << (2 * g))
            .map(|k| {
                let bit = |i: usize| ((k >> (2 * g - 1 - i)) & 1) as u8;
                Self { a_bits: (0..g).map(bit).collect(), b_bits: (g..2 * g).map(bit).collect() }
            })
            .collect()
    }
}

/// `sigma in {0,1}^g` for index `k`, lexicographic with the first coordinate
/// most significant.
pub fn sigma_bits(k: usize, g: usize) -> Vec<u8> {
    (0..g).map(|i| ((k >> (g - 1 - i)) & 1) as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub eps: f64,
    pub radius_override: Option<f64>,
}

impl EvalParams {
    pub fn new(eps: f64) -> Result<Self> {
        let p = Self { eps, radius_override: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidEps(self.eps));
        }
        if let Some(r) = self.radius_override {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput(format!("radius override {r} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { eps: 1e-12, radius_override: None }
    }
}

/// Upper triangular `T` with `T^T T = pi Im(tau)`, row-major.
fn scaled_cholesky(tau: &PeriodMatrix) -> Vec<f64> {
    let g = tau.g();
    let l = tau.im_cholesky();
    let s = PI.sqrt();
    let mut t = vec![0.0; g * g];
    for i in 0..g {
        for j in i..g {
            t[i * g + j] = s * l[(j, i)];
        }
    }
    t
}

/// Visits every `n in Z^g` with `|T (n + shift)| <= radius` in a fixed order
/// (last coordinate outermost, each coordinate ascending).
fn for_each_in_ellipsoid(t: &[f64], g: usize, shift: &[f64], radius: f64, mut visit: impl FnMut(&[i64])) {
    let mut n = vec![0i64; g];
    // partial[i] = squared length contributed by coordinates i..g
    let mut partial = vec![0.0f64; g + 1];
    let r2 = radius * radius;

    fn bounds(t: &[f64], g: usize, shift: &[f64], n: &[i64], i: usize, rem: f64) -> Option<(i64, i64, f64)> {
        if rem < 0.0 {
            return None;
        }
        let mut s = 0.0;
        for j in (i + 1)..g {
            s += t[i * g + j] * (n[j] as f64 + shift[j]);
        }
        let tii = t[i * g + i];
        let r = rem.sqrt();
        let lo = ((-r - s) / tii - shift[i]).ceil() as i64;
        let hi = ((r - s) / tii - shift[i]).floor() as i64;
        if lo > hi {
            None
        } else {
            Some((lo, hi, s))
        }
    }

    // Explicit stack of (coordinate, current, hi, offset).
    let mut lo_hi: Vec<(i64, i64, f64)> = vec![(0, -1, 0.0); g];
    let mut i = g - 1;
    match bounds(t, g, shift, &n, i, r2) {
        Some(b) => lo_hi[i] = b,
        None => return,
    }
    n[i] = lo_hi[i].0;
    loop {
        if n[i] > lo_hi[i].1 {
            if i == g - 1 {
                return;
            }
            i += 1;
            n[i] += 1;
            continue;
        }
        let comp = t[i * g + i] * (n[i] as f64 + shift[i]) + lo_hi[i].2;
        partial[i] = partial[i + 1] + comp * comp;
        if i == 0 {
            if partial[0] <= r2 {
                visit(&n);
            }
            n[0] += 1;
            continue;
        }
        let rem = r2 - partial[i];
        match bounds(t, g, shift, &n, i - 1, rem) {
            Some(b) => {
                i -= 1;
                lo_hi[i] = b;
                n[i] = b.0;
            }
            None => n[i] += 1,
        }
    }
}

/// Length of the shortest nonzero vector of `T Z^g`.
fn shortest_vector(t: &[f64], g: usize) -> f64 {
    let mut bound = f64::INFINITY;
    for j in 0..g {
        let col: f64 = (0..g).map(|i| t[i * g + j] * t[i * g + j]).sum::<f64>().sqrt();
        bound = bound.min(col);
    }
    let zero = vec![0.0; g];
    let mut best = bound;
    for_each_in_ellipsoid(t, g, &zero, bound * (1.0 + 1e-12), |n| {
        if n.iter().all(|&v| v == 0) {
            return;
        }
        let mut len2 = 0.0;
        for i in 0..g {
            let mut s = 0.0;
            for j in i..g {
                s += t[i * g + j] * n[j] as f64;
            }
            len2 += s * s;
        }
        best = best.min(len2.sqrt());
    });
    best
}

/// Upper incomplete gamma function `Gamma(s, x)` for `s = k/2`, `k >= 1`.
fn upper_gamma_half_integer(twice_s: usize, x: f64) -> f64 {
    let mut s;
    let mut value;
    if twice_s.is_multiple_of(2) {
        s = 1.0;
        value = (-x).exp();
    } else {
        s = 0.5;
        value = PI.sqrt() * libm::erfc(x.sqrt());
    }
    while 2.0 * s < twice_s as f64 {
        value = s * value + x.powf(s) * (-x).exp();
        s += 1.0;
    }
    value
}

fn tail_bound(g: usize, rho: f64, radius: f64) -> f64 {
    let gf = g as f64;
    let u = radius - rho / 2.0;
    0.5 * gf * (2.0 / rho).powf(gf) * upper_gamma_half_integer(g, u * u)
}

/// Radius of the summation ellipsoid guaranteeing a normalized tail `<= eps`.
///
/// The ellipsoid is centered on the shifted lattice, so the radius does not
/// depend on `y_norm`; the argument is validated and otherwise unused.
pub fn truncation_radius(tau: &PeriodMatrix, y_norm: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEps(eps));
    }
    if !(y_norm >= 0.0) || !y_norm.is_finite() {
        return Err(Error::InvalidInput(format!("y_norm {y_norm} must be a finite non-negative number")));
    }
    let g = tau.g();
    let t = scaled_cholesky(tau);
    Ok(radius_for(&t, g, eps))
}

/// Smallest `R` with `tail_bound(g, rho, R) <= eps`.
fn radius_for_rho(g: usize, rho: f64, eps: f64) -> f64 {
    let mut lo = ((g as f64).sqrt() + rho) / 2.0;
    if tail_bound(g, rho, lo) <= eps {
        return lo;
    }
    let mut hi = lo.max(1.0);
    while tail_bound(g, rho, hi) > eps {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if tail_bound(g, rho, mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    hi
}

/// The bound holds with `rho` replaced by any smaller packing radius, so the
/// radius is `R(min(rho, rho_opt))`, `rho_opt` minimizing `R` over all
/// packing radii. This makes the radius nonincreasing in `rho`.
fn radius_for(t: &[f64], g: usize, eps: f64) -> f64 {
    let rho = shortest_vector(t, g);
    let r = |p: f64| radius_for_rho(g, p, eps);
    // Golden-section search for the optimal packing radius on a log scale.
    let (mut a, mut b) = ((1e-3f64).ln(), (1e3f64).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (r(c.exp()), r(d.exp()));
    while b - a > 1e-6 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = r(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = r(d.exp());
        }
    }
    let rho_opt = (0.5 * (a + b)).exp();
    r(rho.min(rho_opt))
}

fn estimated_points(t: &[f64], g: usize, radius: f64) -> f64 {
    let det: f64 = (0..g).map(|i| t[i * g + i]).product();
    let gf = g as f64;
    let ball = PI.powf(gf / 2.0) / libm::tgamma(gf / 2.0 + 1.0);
    // Covering slack: each lattice cell may poke out by one diameter.
    let widened = radius + (0..g).map(|i| t[i * g + i]).fold(0.0, f64::max) * gf.sqrt();
    ball * widened.powf(gf) / det
}

/// Neumaier-compensated complex accumulator; summation order is the visit order.
#[derive(Default, Clone, Copy)]
struct Accumulator {
    sum: Complex64,
    comp: Complex64,
}

impl Accumulator {
    fn add(&mut self, v: Complex64) {
        fn step(sum: &mut f64, comp: &mut f64, v: f64) {
            let t = *sum + v;
            if sum.abs() >= v.abs() {
                *comp += (*sum - t) + v;
            } else {
                *comp += (v - t) + *sum;
            }
            *sum = t;
        }
        step(&mut self.sum.re, &mut self.comp.re, v.re);
        step(&mut self.sum.im, &mut self.comp.im, v.im);
    }

    fn total(&self) -> Complex64 {
        self.sum + self.comp
    }
}

/// Series data for one period matrix and tolerance, reusable across many
/// evaluation points.
#[derive(Debug, Clone)]
pub struct ThetaSeries {
    g: usize,
    tau_re: Vec<f64>,
    tau_im: Vec<f64>,
    im_inv: Vec<f64>,
    t: Vec<f64>,
    radius: f64,
    eps: f64,
}

impl ThetaSeries {
    pub fn new(tau: &PeriodMatrix, params: &EvalParams) -> Result<Self> {
        params.validate()?;
        let g = tau.g();
        let t = scaled_cholesky(tau);
        let radius = match params.radius_override {
            Some(r) => r,
            None => radius_for(&t, g, params.eps),
        };
        let estimated = estimated_points(&t, g, radius);
        if estimated > MAX_LATTICE_POINTS {
            return Err(Error::ConvergenceBudgetExceeded { estimated, budget: MAX_LATTICE_POINTS });
        }
        let flat = |m: &nalgebra::DMatrix<f64>| (0..g * g).map(|k| m[(k / g, k % g)]).collect::<Vec<_>>();
        Ok(Self {
            g,
            tau_re: flat(tau.re()),
            tau_im: flat(tau.im()),
            im_inv: flat(tau.im_inv()),
            t,
            radius,
            eps: params.eps,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn center(&self, z: &[Complex64]) -> Vec<f64> {
        let g = self.g;
        (0..g).map(|i| (0..g).map(|j| self.im_inv[i * g + j] * z[j].im).sum()).collect()
    }

    /// Sum over `v in Z^g + a` of `exp(pi i v^T tau v + 2 pi i v^T w)` with
    /// `w = z + b`, truncated to the ellipsoid around `-Y^{-1} Im z`.
    fn sum_shifted(&self, z: &[Complex64], a: &[f64], b: &[f64]) -> Complex64 {
        let g = self.g;
        let c = self.center(z);
        let shift: Vec<f64> = (0..g).map(|i| a[i] + c[i]).collect();
        let w_re: Vec<f64> = (0..g).map(|i| z[i].re + b[i]).collect();
        let w_im: Vec<f64> = (0..g).map(|i| z[i].im).collect();
        let mut v = vec![0.0; g];
        let mut acc = Accumulator::default();
        for_each_in_ellipsoid(&self.t, g, &shift, self.radius, |n| {
            for i in 0..g {
                v[i] = n[i] as f64 + a[i];
            }
            let mut quad_re = 0.0;
            let mut quad_im = 0.0;
            for i in 0..g {
                let mut row_re = 0.0;
                let mut row_im = 0.0;
                for j in 0..g {
                    row_re += self.tau_re[i * g + j] * v[j];
                    row_im += self.tau_im[i * g + j] * v[j];
                }
                quad_re += v[i] * row_re;
                quad_im += v[i] * row_im;
            }
            let lin_re: f64 = (0..g).map(|i| v[i] * w_re[i]).sum();
            let lin_im: f64 = (0..g).map(|i| v[i] * w_im[i]).sum();
            // pi i (quad_re + i quad_im) + 2 pi i (lin_re + i lin_im)
            let modulus = (-PI * quad_im - 2.0 * PI * lin_im).exp();
            let phase = PI * quad_re + 2.0 * PI * lin_re;
            acc.add(Complex64::from_polar(modulus, phase));
        });
        acc.total()
    }

    pub fn eval(&self, z: &AbelianPoint, chr: &ThetaCharacteristic) -> Result<Complex64> {
        if z.g() != self.g {
            return Err(Error::DimensionMismatch { expected: self.g, found: z.g() });
        }
        if chr.g() != self.g {
            return Err(Error::DimensionMismatch { expected: self.g, found: chr.g() });
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("theta argument"));
        }
        Ok(self.sum_shifted(z.coords(), &chr.a(), &chr.b()))
    }
}

/// `exp(pi c^T Y c)` with `c = Y^{-1} Im z`: the size of the largest terms.
pub fn growth_factor(z: &AbelianPoint, tau: &PeriodMatrix) -> f64 {
    let g = tau.g();
    let imz: Vec<f64> = z.coords().iter().map(|c| c.im).collect();
    let mut q = 0.0;
    for i in 0..g {
        for j in 0..g {
            q += imz[i] * tau.im_inv()[(i, j)] * imz[j];
        }
    }
    (PI * q).exp()
}

pub fn riemann_theta(
    z: &AbelianPoint,
    tau: &PeriodMatrix,
    chr: &ThetaCharacteristic,
    params: &EvalParams,
) -> Result<Complex64> {
    ThetaSeries::new(tau, params)?.eval(z, chr)
}

/// Multiplier `mu` with `theta[a;b](z + m + tau n) = mu * theta[a;b](z)`:
/// `mu = exp(2 pi i a^T m - pi i n^T tau n - 2 pi i n^T (z + b))`.
pub fn quasi_period_factor(
    z: &AbelianPoint,
    tau: &PeriodMatrix,
    lv: &LatticeVector,
    chr: &ThetaCharacteristic,
) -> Complex64 {
    let g = tau.g();
    let a = chr.a();
    let b = chr.b();
    let i = Complex64::i();
    let mut expo = Complex64::new(0.0, 0.0);
    for k in 0..g {
        expo += 2.0 * PI * i * a[k] * lv.m[k] as f64;
        expo -= 2.0 * PI * i * lv.n[k] as f64 * (z.coords()[k] + b[k]);
        for l in 0..g {
            expo -= PI * i * lv.n[k] as f64 * tau.tau()[(k, l)] * lv.n[l] as f64;
        }
    }
    expo.exp()
}

/// Evaluator for the second-order basis `theta_sigma(z) = theta[sigma/2; 0](2z, 2tau)`.
///
/// All `2^g` components are summed in one pass over `w in Z^g`, writing
/// `v = w/2` and `sigma = w mod 2`; each component sees exactly the terms of
/// its own ellipsoid.
#[derive(Debug, Clone)]
pub struct SecondOrderTheta {
    series: ThetaSeries,
}

impl SecondOrderTheta {
    pub fn new(tau: &PeriodMatrix, params: &EvalParams) -> Result<Self> {
        Ok(Self { series: ThetaSeries::new(&tau.scaled(2.0), params)? })
    }

    pub fn g(&self) -> usize {
        self.series.g
    }

    pub fn eps(&self) -> f64 {
        self.series.eps
    }

    pub fn eval(&self, z: &AbelianPoint) -> Result<Vec<Complex64>> {
        let s = &self.series;
        let g = s.g;
        if z.g() != g {
            return Err(Error::DimensionMismatch { expected: g, found: z.g() });
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("theta argument"));
        }
        let z2: Vec<Complex64> = z.coords().iter().map(|c| c * 2.0).collect();
        // v = w/2 with w in Z^g: |T(v + c)| <= R  <=>  |(T/2)(w + 2c)| <= R.
        let c = s.center(&z2);
        let half_t: Vec<f64> = s.t.iter().map(|v| 0.5 * v).collect();
        let shift: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let mut acc = vec![Accumulator::default(); 1 << g];
        let mut v = vec![0.0; g];
        for_each_in_ellipsoid(&half_t, g, &shift, s.radius, |w| {
            let mut index = 0usize;
            for i in 0..g {
                v[i] = 0.5 * w[i] as f64;
                index = (index << 1) | (w[i].rem_euclid(2) as usize);
            }
            let mut quad_re = 0.0;
            let mut quad_im = 0.0;
            for i in 0..g {
                let mut row_re = 0.0;
                let mut row_im = 0.0;
                for j in 0..g {
                    row_re += s.tau_re[i * g + j] * v[j];
                    row_im += s.tau_im[i * g + j] * v[j];
                }
                quad_re += v[i] * row_re;
                quad_im += v[i] * row_im;
            }
            let lin_re: f64 = (0..g).map(|i| v[i] * z2[i].re).sum();
            let lin_im: f64 = (0..g).map(|i| v[i] * z2[i].im).sum();
            let modulus = (-PI * quad_im - 2.0 * PI * lin_im).exp();
            let phase = PI * quad_re + 2.0 * PI * lin_re;
            acc[index].add(Complex64::from_polar(modulus, phase));
        });
        Ok(acc.iter().map(Accumulator::total).collect())
    }
}

/// The vector `(theta_sigma(z))_sigma`, `sigma` lexicographic over `{0,1}^g`.
pub fn second_order_basis(z: &AbelianPoint, tau: &PeriodMatrix, params: &EvalParams) -> Result<Vec<Complex64>> {
    SecondOrderTheta::new(tau, params)?.eval(z)
}
