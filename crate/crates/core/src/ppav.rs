//! Points of the complex torus `C^g / (Z^g + tau Z^g)` carrying the standard
//! principal polarization.
//!
//! Points are stored as complex vectors. Everything lattice-related goes
//! through the real chart `z = x + tau y`, in which the lattice is `Z^{2g}`
//! and the fundamental domain is the half-open cube `[-1/2, 1/2)^{2g}`.

use std::ops::{Add, Neg, Sub};

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated point of the Siegel upper half space.
#[derive(Debug, Clone)]
pub struct PeriodMatrix {
    tau: DMatrix<Complex64>,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    im_inv: DMatrix<f64>,
    /// Lower Cholesky factor of `Im tau`.
    im_chol: DMatrix<f64>,
}

/// JSON form `{"g", "tau_re", "tau_im"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMatrixJson {
    pub g: usize,
    pub tau_re: Vec<Vec<f64>>,
    pub tau_im: Vec<Vec<f64>>,
}

impl PeriodMatrix {
    /// Checks symmetry and positivity of the imaginary part. Asymmetric input
    /// is rejected rather than symmetrized.
    pub fn new(tau: DMatrix<Complex64>) -> Result<Self> {
        let (rows, cols) = tau.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        if tau.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("period matrix"));
        }
        let scale = tau.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut asymmetry: f64 = 0.0;
        for i in 0..rows {
            for j in 0..i {
                asymmetry = asymmetry.max((tau[(i, j)] - tau[(j, i)]).norm());
            }
        }
        let bound = 1e-12 * scale;
        if asymmetry > bound {
            return Err(Error::NotSymmetric { asymmetry, bound });
        }
        let re = tau.map(|c| c.re);
        let im = tau.map(|c| c.im);
        let chol = Cholesky::new(im.clone()).ok_or(Error::NotPositiveDefinite)?;
        let im_chol = chol.l();
        if (0..rows).any(|i| !(im_chol[(i, i)] > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let im_inv = chol.inverse();
        Ok(Self { tau, re, im, im_inv, im_chol })
    }

    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let g = re.len();
        if im.len() != g {
            return Err(Error::DimensionMismatch { expected: g, found: im.len() });
        }
        for row in re.iter().chain(im.iter()) {
            if row.len() != g {
                return Err(Error::NotSquare { rows: g, cols: row.len() });
            }
        }
        Self::new(DMatrix::from_fn(g, g, |i, j| Complex64::new(re[i][j], im[i][j])))
    }

    pub fn from_json(json: &PeriodMatrixJson) -> Result<Self> {
        if json.tau_re.len() != json.g {
            return Err(Error::DimensionMismatch { expected: json.g, found: json.tau_re.len() });
        }
        Self::from_parts(&json.tau_re, &json.tau_im)
    }

    pub fn to_json(&self) -> PeriodMatrixJson {
        let g = self.g();
        let rows = |m: &DMatrix<f64>| (0..g).map(|i| (0..g).map(|j| m[(i, j)]).collect()).collect();
        PeriodMatrixJson { g, tau_re: rows(&self.re), tau_im: rows(&self.im) }
    }

    pub fn g(&self) -> usize {
        self.tau.nrows()
    }

    pub fn tau(&self) -> &DMatrix<Complex64> {
        &self.tau
    }

    pub fn re(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn im(&self) -> &DMatrix<f64> {
        &self.im
    }

    pub fn im_inv(&self) -> &DMatrix<f64> {
        &self.im_inv
    }

    pub fn im_cholesky(&self) -> &DMatrix<f64> {
        &self.im_chol
    }

    /// `k * tau`; stays in the Siegel upper half space for `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        assert!(k > 0.0, "scale factor must be positive");
        let sk = k.sqrt();
        Self {
            tau: self.tau.map(|c| c * k),
            re: &self.re * k,
            im: &self.im * k,
            im_inv: &self.im_inv / k,
            im_chol: &self.im_chol * sk,
        }
    }

    /// The lattice vector `m + tau n`.
    pub fn lattice_point(&self, lv: &LatticeVector) -> AbelianPoint {
        let g = self.g();
        assert_eq!(lv.m.len(), g);
        let n = DVector::from_iterator(g, lv.n.iter().map(|&v| Complex64::new(v as f64, 0.0)));
        let tn = &self.tau * n;
        AbelianPoint::new((0..g).map(|i| tn[i] + lv.m[i] as f64).collect())
    }

    /// Real chart `(x, y)` with `z = x + tau y`.
    pub fn chart(&self, z: &AbelianPoint) -> (Vec<f64>, Vec<f64>) {
        let g = self.g();
        assert_eq!(z.g(), g, "point dimension does not match period matrix");
        let imz = DVector::from_iterator(g, z.coords.iter().map(|c| c.im));
        let rez = DVector::from_iterator(g, z.coords.iter().map(|c| c.re));
        let y = &self.im_inv * imz;
        let x = rez - &self.re * &y;
        (x.iter().copied().collect(), y.iter().copied().collect())
    }

    pub fn from_chart(&self, x: &[f64], y: &[f64]) -> AbelianPoint {
        let g = self.g();
        assert!(x.len() == g && y.len() == g);
        let coords = (0..g)
            .map(|i| {
                let mut c = Complex64::new(x[i], 0.0);
                for j in 0..g {
                    c += self.tau[(i, j)] * y[j];
                }
                c
            })
            .collect();
        AbelianPoint::new(coords)
    }
}

/// A point of `C^g`, understood modulo the period lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelianPoint {
    coords: Vec<Complex64>,
    reduced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelianPointJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl AbelianPoint {
    pub fn new(coords: Vec<Complex64>) -> Self {
        Self { coords, reduced: false }
    }

    pub fn zero(g: usize) -> Self {
        Self { coords: vec![Complex64::new(0.0, 0.0); g], reduced: true }
    }

    pub fn from_json(json: &AbelianPointJson) -> Result<Self> {
        if json.re.len() != json.im.len() {
            return Err(Error::DimensionMismatch { expected: json.re.len(), found: json.im.len() });
        }
        let coords: Vec<_> = json.re.iter().zip(&json.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Self::new(coords))
    }

    pub fn to_json(&self) -> AbelianPointJson {
        AbelianPointJson {
            re: self.coords.iter().map(|c| c.re).collect(),
            im: self.coords.iter().map(|c| c.im).collect(),
        }
    }

    pub fn g(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coords.iter().map(|c| c * k).collect())
    }
}

impl Add for &AbelianPoint {
    type Output = AbelianPoint;
    fn add(self, rhs: &AbelianPoint) -> AbelianPoint {
        assert_eq!(self.g(), rhs.g());
        AbelianPoint::new(self.coords.iter().zip(&rhs.coords).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &AbelianPoint {
    type Output = AbelianPoint;
    fn sub(self, rhs: &AbelianPoint) -> AbelianPoint {
        assert_eq!(self.g(), rhs.g());
        AbelianPoint::new(self.coords.iter().zip(&rhs.coords).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &AbelianPoint {
    type Output = AbelianPoint;
    fn neg(self) -> AbelianPoint {
        AbelianPoint::new(self.coords.iter().map(|c| -c).collect())
    }
}

/// The lattice element `m + tau n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeVector {
    pub m: Vec<i64>,
    pub n: Vec<i64>,
}

impl LatticeVector {
    pub fn zero(g: usize) -> Self {
        Self { m: vec![0; g], n: vec![0; g] }
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().chain(&self.n).all(|&v| v == 0)
    }
}

/// `floor(t + 1/2)`: the integer whose subtraction lands `t` in `[-1/2, 1/2)`.
fn nearest_below_half(t: f64) -> f64 {
    (t + 0.5).floor()
}

/// Returns `(z0, lv)` with `z = z0 + m + tau n` and `z0` in the fundamental
/// domain `[-1/2, 1/2)^{2g}` of the `(x, y)` chart.
pub fn reduce_mod_lattice(z: &AbelianPoint, tau: &PeriodMatrix) -> Result<(AbelianPoint, LatticeVector)> {
    if z.g() != tau.g() {
        return Err(Error::DimensionMismatch { expected: tau.g(), found: z.g() });
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("point coordinates"));
    }
    let g = tau.g();
    let (x, y) = tau.chart(z);
    let n: Vec<f64> = y.iter().map(|&v| nearest_below_half(v)).collect();
    let m: Vec<f64> = x.iter().map(|&v| nearest_below_half(v)).collect();
    let mut coords = z.coords.clone();
    for i in 0..g {
        coords[i] -= m[i];
        for j in 0..g {
            coords[i] -= tau.tau[(i, j)] * n[j];
        }
    }
    let lv = LatticeVector {
        m: m.iter().map(|&v| v as i64).collect(),
        n: n.iter().map(|&v| v as i64).collect(),
    };
    Ok((AbelianPoint { coords, reduced: true }, lv))
}

/// Shorthand for the reduced representative; panics on dimension mismatch.
pub fn reduce(z: &AbelianPoint, tau: &PeriodMatrix) -> AbelianPoint {
    reduce_mod_lattice(z, tau).expect("point incompatible with period matrix").0
}

/// Reduced representative of `k z`. For `k = 2` this is the isogeny attached
/// to a line bundle algebraically equivalent to twice the polarization.
pub fn multiply_point(z: &AbelianPoint, k: i64, tau: &PeriodMatrix) -> AbelianPoint {
    reduce(&z.scale(k as f64), tau)
}

/// Sup-norm of the reduced chart coordinates of `z`: the distance of `z` to
/// the lattice in the chart metric.
pub fn chart_norm(z: &AbelianPoint, tau: &PeriodMatrix) -> f64 {
    let r = reduce(z, tau);
    let (x, y) = tau.chart(&r);
    x.iter().chain(y.iter()).fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Chart distance between `a` and `b` modulo the lattice.
pub fn torus_distance(a: &AbelianPoint, b: &AbelianPoint, tau: &PeriodMatrix) -> f64 {
    chart_norm(&(a - b), tau)
}

pub fn is_two_torsion(z: &AbelianPoint, tau: &PeriodMatrix, tol: f64) -> bool {
    chart_norm(&z.scale(2.0), tau) <= tol
}

/// The `4^g` points `(m + tau n)/2`, `m, n in {0,1}^g`, reduced. Ordered
/// lexicographically in `(m, n)` with the first coordinate most significant.
pub fn two_torsion_points(tau: &PeriodMatrix) -> Vec<AbelianPoint> {
    let g = tau.g();
    let count = 1usize << (2 * g);
    (0..count)
        .map(|k| {
            let bit = |i: usize| ((k >> (2 * g - 1 - i)) & 1) as f64 * 0.5;
            let x: Vec<f64> = (0..g).map(bit).collect();
            let y: Vec<f64> = (g..2 * g).map(bit).collect();
            reduce(&tau.from_chart(&x, &y), tau)
        })
        .collect()
}

/// All `4^g` solutions of `2 xi = s` modulo the lattice.
pub fn halve_point(s: &AbelianPoint, tau: &PeriodMatrix) -> Vec<AbelianPoint> {
    let half = s.scale(0.5);
    two_torsion_points(tau).iter().map(|t| reduce(&(&half + t), tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tau_i() -> PeriodMatrix {
        PeriodMatrix::new(DMatrix::from_element(1, 1, c(0.0, 1.0))).unwrap()
    }

    fn tau_g2() -> PeriodMatrix {
        PeriodMatrix::new(DMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 2.0)]))
            .unwrap()
    }

    #[test]
    fn validates_examples() {
        assert_eq!(tau_i().g(), 1);
        assert_eq!(tau_g2().g(), 2);
        let bad = PeriodMatrix::new(DMatrix::from_element(1, 1, c(0.0, -1.0)));
        assert_eq!(bad.unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.5, 0.0), c(0.4, 0.0), c(0.0, 1.0)]);
        assert!(matches!(PeriodMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = DMatrix::from_element(2, 1, c(0.0, 1.0));
        assert!(matches!(PeriodMatrix::new(m), Err(Error::NotSquare { .. })));
        let m = DMatrix::from_element(1, 1, c(f64::NAN, 1.0));
        assert!(matches!(PeriodMatrix::new(m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn indefinite_imaginary_part_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 2.0), c(0.0, 2.0), c(0.0, 1.0)]);
        assert_eq!(PeriodMatrix::new(m).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn reduce_examples() {
        let t = tau_i();
        let (z0, lv) = reduce_mod_lattice(&AbelianPoint::zero(1), &t).unwrap();
        assert!(z0.coords()[0].norm() == 0.0 && lv.is_zero());

        let (z0, lv) = reduce_mod_lattice(&AbelianPoint::new(vec![c(1.0, 2.0)]), &t).unwrap();
        assert!(z0.coords()[0].norm() < 1e-15);
        assert_eq!(lv, LatticeVector { m: vec![1], n: vec![2] });

        let (z0, lv) = reduce_mod_lattice(&AbelianPoint::new(vec![c(0.6, 0.0)]), &t).unwrap();
        assert!((z0.coords()[0] - c(-0.4, 0.0)).norm() < 1e-15);
        assert_eq!(lv, LatticeVector { m: vec![1], n: vec![0] });
    }

    #[test]
    fn boundary_goes_to_lower_edge() {
        let t = tau_i();
        let (z0, _) = reduce_mod_lattice(&AbelianPoint::new(vec![c(0.5, 0.5)]), &t).unwrap();
        assert!((z0.coords()[0] - c(-0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn multiply_examples() {
        let t = tau_i();
        let z = AbelianPoint::new(vec![c(0.5, 0.5)]);
        assert!(multiply_point(&z, 2, &t).coords()[0].norm() < 1e-15);
        let z = AbelianPoint::new(vec![c(0.3, 0.0)]);
        assert!((multiply_point(&z, 2, &t).coords()[0] - c(-0.4, 0.0)).norm() < 1e-15);
        assert_eq!(multiply_point(&z, 1, &t), reduce(&z, &t));
    }

    #[test]
    fn two_torsion_examples() {
        let t = tau_i();
        assert!(is_two_torsion(&AbelianPoint::new(vec![c(0.5, 0.5)]), &t, 1e-12));
        assert!(is_two_torsion(&AbelianPoint::zero(1), &t, 1e-12));
        assert!(!is_two_torsion(&AbelianPoint::new(vec![c(0.3, 0.0)]), &t, 1e-12));

        let pts = two_torsion_points(&t);
        assert_eq!(pts.len(), 4);
        let g2 = tau_g2();
        let pts2 = two_torsion_points(&g2);
        assert_eq!(pts2.len(), 16);
        for (i, p) in pts2.iter().enumerate() {
            assert!(is_two_torsion(p, &g2, 1e-12));
            for q in &pts2[..i] {
                assert!(torus_distance(p, q, &g2) > 0.25);
            }
        }
    }

    #[test]
    fn halving_round_trips() {
        let t = tau_g2();
        let s = AbelianPoint::new(vec![c(0.31, -0.2), c(1.7, 0.9)]);
        let halves = halve_point(&s, &t);
        assert_eq!(halves.len(), 16);
        for h in &halves {
            assert!(torus_distance(&multiply_point(h, 2, &t), &s, &t) <= 1e-10);
        }
        let zero_halves = halve_point(&AbelianPoint::zero(1), &tau_i());
        for (a, b) in zero_halves.iter().zip(two_torsion_points(&tau_i()).iter()) {
            assert!(torus_distance(a, b, &tau_i()) < 1e-15);
        }
    }

    #[test]
    fn json_round_trip() {
        let t = tau_g2();
        let back = PeriodMatrix::from_json(&t.to_json()).unwrap();
        assert_eq!(back.tau(), t.tau());
    }
}
