//! Hyperelliptic curves `y^2 = prod (x - e_i)` given by their branch points,
//! their period matrices and their Abel-Jacobi maps.
//!
//! # Homology basis
//!
//! Branch points are sorted by real part (ties by imaginary part) into
//! `e_0, ..., e_{N-1}` and joined into an x-monotone polyline. The cuts are
//! the segments `[e_{2k}, e_{2k+1}]`, plus `[e_{2g}, +inf)` when `N = 2g + 1`.
//! The square root `y` is continued along the left side of the polyline,
//! detouring clockwise around each interior vertex. With
//! `I_j = int_{e_j}^{e_{j+1}} x^k dx / y` taken with those boundary values,
//!
//! ```text
//! A_k = 2 I_{2k},        B_k = 2 (I_{2k+1} + I_{2k+3} + ... + I_{2g-1}),
//! ```
//!
//! `a_k` being the loop around the k-th cut and `b_k` running from cut `k` to
//! the last cut along the left side on one sheet and back along the right
//! side on the other. The cuts passed on the way contribute nothing: their
//! two boundary values differ by a sign, which the change of sheet undoes. The normalized period
//! matrix is `tau = A^{-1} B` (negated if the orientation of the basis came
//! out reversed).
//!
//! # Quadrature
//!
//! On a segment `x = m + h t`, `t in [-1, 1]`, the function
//! `G(t) = y / sqrt(1 - t^2)` is analytic and nonvanishing, so each `I_j` is
//! a Gauss-Chebyshev sum of `x^k h / G`. Node counts double until successive
//! values agree to `tol / 4`. Abel-Jacobi integrals start at a branch point;
//! the substitution `x = e_b + (p - e_b) u^2` removes the endpoint singularity
//! and Gauss-Legendre handles the rest.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppav::{reduce, AbelianPoint, AbelianPointJson, PeriodMatrix};

const MAX_CHEBYSHEV_NODES: usize = 1 << 15;
const MAX_LEGENDRE_NODES: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperellipticCurve {
    branch_points: Vec<Complex64>,
    basepoint: usize,
    genus: usize,
    /// `order[s]` is the input index of the `s`-th sorted branch point.
    order: Vec<usize>,
    scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveJson {
    pub branch_points_re: Vec<f64>,
    pub branch_points_im: Vec<f64>,
    pub basepoint_index: usize,
}

pub fn curve_from_branch_points(points: &[Complex64], basepoint_index: usize) -> Result<HyperellipticCurve> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(Error::NonFinite("branch points"));
    }
    if basepoint_index >= points.len() {
        return Err(Error::InvalidInput(format!(
            "basepoint index {basepoint_index} out of range for {} branch points",
            points.len()
        )));
    }
    let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
    for i in 0..points.len() {
        for j in 0..i {
            if (points[i] - points[j]).norm() <= 1e-10 * scale {
                return Err(Error::DuplicateBranchPoints(j, i));
            }
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].re.total_cmp(&points[b].re).then(points[a].im.total_cmp(&points[b].im))
    });
    Ok(HyperellipticCurve {
        branch_points: points.to_vec(),
        basepoint: basepoint_index,
        genus: (points.len() - 1) / 2,
        order,
        scale,
    })
}

impl HyperellipticCurve {
    pub fn from_json(json: &CurveJson) -> Result<Self> {
        if json.branch_points_re.len() != json.branch_points_im.len() {
            return Err(Error::DimensionMismatch {
                expected: json.branch_points_re.len(),
                found: json.branch_points_im.len(),
            });
        }
        let pts: Vec<_> = json
            .branch_points_re
            .iter()
            .zip(&json.branch_points_im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        curve_from_branch_points(&pts, json.basepoint_index)
    }

    pub fn to_json(&self) -> CurveJson {
        CurveJson {
            branch_points_re: self.branch_points.iter().map(|p| p.re).collect(),
            branch_points_im: self.branch_points.iter().map(|p| p.im).collect(),
            basepoint_index: self.basepoint,
        }
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn branch_points(&self) -> &[Complex64] {
        &self.branch_points
    }

    pub fn basepoint_index(&self) -> usize {
        self.basepoint
    }

    pub fn basepoint(&self) -> Complex64 {
        self.branch_points[self.basepoint]
    }

    /// `prod (x - e_i)`.
    pub fn polynomial(&self, x: Complex64) -> Complex64 {
        self.branch_points.iter().fold(Complex64::new(1.0, 0.0), |acc, e| acc * (x - e))
    }

    fn sorted(&self) -> Vec<Complex64> {
        self.order.iter().map(|&i| self.branch_points[i]).collect()
    }

    fn sorted_position(&self, index: usize) -> usize {
        self.order.iter().position(|&i| i == index).expect("index of a branch point")
    }

    /// The branch point within `1e-12` (relative) of `x`, if any.
    fn branch_index_at(&self, x: Complex64) -> Option<usize> {
        self.branch_points.iter().position(|e| (e - x).norm() <= 1e-12 * self.scale)
    }

    /// `y` on the given sheet: `sheet * sqrt(f(x))` with the principal root.
    pub fn y(&self, p: &CurvePoint) -> Complex64 {
        if p.at_branch.is_some() {
            return Complex64::new(0.0, 0.0);
        }
        self.polynomial(p.x).sqrt() * p.sheet as f64
    }
}

/// A finite point of the curve. The sheet selects `y = sheet * sqrt(f(x))`
/// with the principal square root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: Complex64,
    pub sheet: i8,
    pub at_branch: Option<usize>,
}

impl CurvePoint {
    pub fn new(x: Complex64, sheet: i8) -> Result<Self> {
        if sheet != 1 && sheet != -1 {
            return Err(Error::InvalidInput(format!("sheet must be +1 or -1, got {sheet}")));
        }
        if !x.re.is_finite() || !x.im.is_finite() {
            return Err(Error::NonFinite("curve point"));
        }
        Ok(Self { x, sheet, at_branch: None })
    }

    pub fn branch(curve: &HyperellipticCurve, index: usize) -> Result<Self> {
        let x = *curve
            .branch_points
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("no branch point with index {index}")))?;
        Ok(Self { x, sheet: 1, at_branch: Some(index) })
    }

    /// `(x, -y)`.
    pub fn involution(&self) -> Self {
        Self { sheet: -self.sheet, ..*self }
    }
}

/// Image of a curve point in the Jacobian, reduced modulo the period lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelJacobiResult {
    pub image: AbelianPoint,
    pub path_spec: String,
    pub est_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelJacobiJson {
    pub image: AbelianPointJson,
    pub path_spec: String,
    pub est_error: f64,
}

impl AbelJacobiResult {
    pub fn to_json(&self) -> AbelJacobiJson {
        AbelJacobiJson { image: self.image.to_json(), path_spec: self.path_spec.clone(), est_error: self.est_error }
    }
}

/// Integration contour from the basepoint to a finite curve point.
#[derive(Debug, Clone, PartialEq)]
pub enum AbelJacobiPath {
    /// Straight segment, or a detour through one waypoint when the segment
    /// passes close to another branch point.
    Auto,
    /// Straight segment from the basepoint.
    Direct,
    /// Polyline through the given waypoints.
    Via(Vec<Complex64>),
}

/// Continues the branch of `sqrt(f(path(s)))` with value `y0` at `s = 0` up
/// to `s = 1`. `zeros` are the zeros of `f` in the plane of `path`; steps are
/// kept short relative to their distance so no zero is ever encircled.
fn continue_root(
    f: impl Fn(Complex64) -> Complex64,
    zeros: &[Complex64],
    path: impl Fn(f64) -> Complex64,
    y0: Complex64,
) -> Result<Complex64> {
    let clearance = |x: Complex64| zeros.iter().map(|z| (z - x).norm()).fold(f64::INFINITY, f64::min);
    let mut s = 0.0;
    let mut y = y0;
    let mut x = path(0.0);
    let mut h: f64 = 1.0 / 8.0;
    while s < 1.0 {
        let s_new = (s + h).min(1.0);
        let x_new = path(s_new);
        let r = f(x_new).sqrt();
        let cand = if (r - y).norm() <= (r + y).norm() { r } else { -r };
        let step_ok = (x_new - x).norm() <= 0.5 * clearance(x);
        let change_ok = (cand - y).norm() <= 0.25 * y.norm().max(cand.norm());
        if step_ok && change_ok {
            s = s_new;
            x = x_new;
            y = cand;
            h *= 1.5;
        } else {
            h *= 0.5;
            if h < 1e-14 {
                return Err(Error::HomologyConstructionFailure(format!(
                    "square-root continuation stalled near x = {x}"
                )));
            }
        }
    }
    Ok(y)
}

fn integrand_powers(x: Complex64, g: usize) -> impl Iterator<Item = Complex64> {
    (0..g).scan(Complex64::new(1.0, 0.0), move |p, _| {
        let out = *p;
        *p *= x;
        Some(out)
    })
}

/// Gauss-Chebyshev evaluation of `int_{e_j}^{e_{j+1}} x^k dx / y`, `k < g`,
/// given `y` at the segment midpoint.
fn segment_integral(
    a: Complex64,
    b: Complex64,
    others: &[Complex64],
    y_mid: Complex64,
    g: usize,
    nodes: usize,
) -> Result<Vec<Complex64>> {
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let p = |t: Complex64| {
        let x = m + h * t;
        -h * h * others.iter().fold(Complex64::new(1.0, 0.0), |acc, e| acc * (x - e))
    };
    let zeros: Vec<Complex64> = others.iter().map(|e| (e - m) / h).collect();
    let mut ts: Vec<f64> = (1..=nodes).map(|i| ((2 * i - 1) as f64 * PI / (2 * nodes) as f64).cos()).collect();
    ts.sort_by(f64::total_cmp);
    let split = ts.partition_point(|&t| t < 0.0);
    let mut sums = vec![Complex64::new(0.0, 0.0); g];
    let mut add = |t: f64, gval: Complex64| {
        let x = m + h * t;
        for (k, xk) in integrand_powers(x, g).enumerate() {
            sums[k] += xk * h / gval;
        }
    };
    // Walk outward from t = 0 in both directions.
    for range in [(split..ts.len()).collect::<Vec<_>>(), (0..split).rev().collect()] {
        let mut prev_t = 0.0;
        let mut gval = y_mid;
        for idx in range {
            let t = ts[idx];
            let (t0, t1) = (prev_t, t);
            gval = continue_root(p, &zeros, |s| Complex64::new(t0 + (t1 - t0) * s, 0.0), gval)?;
            add(t, gval);
            prev_t = t;
        }
    }
    let w = PI / nodes as f64;
    Ok(sums.into_iter().map(|s| s * w).collect())
}

fn adaptive<F>(tol: f64, start: usize, cap: usize, mut rule: F) -> Result<(Vec<Complex64>, f64, usize)>
where
    F: FnMut(usize) -> Result<Vec<Complex64>>,
{
    let mut n = start;
    let mut prev = rule(n)?;
    loop {
        let next_n = 2 * n;
        let next = rule(next_n)?;
        let change = prev.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if change <= tol / 4.0 {
            return Ok((next, change, next_n));
        }
        if next_n >= cap {
            return Err(Error::QuadratureFailure { tol, achieved: change, nodes: next_n });
        }
        prev = next;
        n = next_n;
    }
}

/// Periods of a hyperelliptic curve in the homology basis described in the
/// module docs, kept together with the data needed for Abel-Jacobi images.
#[derive(Debug, Clone)]
pub struct CurvePeriods {
    curve: HyperellipticCurve,
    sorted: Vec<Complex64>,
    /// `segment_integrals[j][k] = int_{e_j}^{e_{j+1}} x^k dx / y`.
    segment_integrals: Vec<Vec<Complex64>>,
    a_periods: DMatrix<Complex64>,
    a_inv: DMatrix<Complex64>,
    tau: PeriodMatrix,
    est_error: f64,
}

impl CurvePeriods {
    pub fn compute(curve: &HyperellipticCurve, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidEps(tol));
        }
        let g = curve.genus;
        let sorted = curve.sorted();
        let count = sorted.len();
        let f = |x: Complex64| curve.polynomial(x);

        // y at each segment midpoint, continued along the left side of the chain.
        let mids: Vec<Complex64> = (0..count - 1).map(|j| 0.5 * (sorted[j] + sorted[j + 1])).collect();
        let mut y_mid = Vec::with_capacity(count - 1);
        y_mid.push(f(mids[0]).sqrt());
        for j in 0..count - 2 {
            let v = sorted[j + 1];
            let d_in = (sorted[j + 1] - sorted[j]) / (sorted[j + 1] - sorted[j]).norm();
            let d_out = (sorted[j + 2] - sorted[j + 1]) / (sorted[j + 2] - sorted[j + 1]).norm();
            let clearance = sorted
                .iter()
                .filter(|e| **e != v)
                .map(|e| (e - v).norm())
                .fold(f64::INFINITY, f64::min);
            let r = 0.25 * clearance;
            let start_angle = (-d_in).arg();
            let sweep = (start_angle - d_out.arg()).rem_euclid(2.0 * PI);
            let mut y = y_mid[j];
            let p0 = mids[j];
            let p1 = v - d_in * r;
            y = continue_root(f, &sorted, |s| p0 + (p1 - p0) * s, y)?;
            y = continue_root(f, &sorted, |s| v + Complex64::from_polar(r, start_angle - sweep * s), y)?;
            let q0 = v + d_out * r;
            let q1 = mids[j + 1];
            y = continue_root(f, &sorted, |s| q0 + (q1 - q0) * s, y)?;
            y_mid.push(y);
        }

        let mut segment_integrals = Vec::with_capacity(count - 1);
        let mut quad_error: f64 = 0.0;
        for j in 0..count - 1 {
            let others: Vec<Complex64> =
                sorted.iter().enumerate().filter(|(i, _)| *i != j && *i != j + 1).map(|(_, e)| *e).collect();
            let (values, err, _) = adaptive(tol, 16, MAX_CHEBYSHEV_NODES, |n| {
                segment_integral(sorted[j], sorted[j + 1], &others, y_mid[j], g, n)
            })?;
            quad_error = quad_error.max(err);
            segment_integrals.push(values);
        }

        let a_periods = DMatrix::from_fn(g, g, |i, k| 2.0 * segment_integrals[2 * k][i]);
        let b_periods = DMatrix::from_fn(g, g, |i, k| {
            (2 * k + 1..2 * g)
                .step_by(2)
                .map(|j| segment_integrals[j][i])
                .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
                * 2.0
        });
        let a_inv = a_periods
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::HomologyConstructionFailure("A-period matrix is singular".into()))?;
        let raw = &a_inv * b_periods;
        let scale = raw.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let asymmetry = (0..g)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (raw[(i, j)] - raw[(j, i)]).norm())
            .fold(0.0, f64::max);
        if asymmetry > 1e-8 * scale {
            return Err(Error::HomologyConstructionFailure(format!(
                "normalized B-periods are not symmetric (asymmetry {asymmetry:e})"
            )));
        }
        let symmetric = (&raw + raw.transpose()) * Complex64::new(0.5, 0.0);
        let tau = match PeriodMatrix::new(symmetric.clone()) {
            Ok(t) => t,
            Err(Error::NotPositiveDefinite) => PeriodMatrix::new(-symmetric).map_err(|_| {
                Error::HomologyConstructionFailure("imaginary part of tau is indefinite".into())
            })?,
            Err(e) => return Err(e),
        };
        let a_inv_norm = a_inv.iter().map(|c| c.norm()).fold(0.0, f64::max) * g as f64;
        let est_error = quad_error * 2.0 * (2 * g) as f64 * a_inv_norm * scale.max(1.0);
        Ok(Self { curve: curve.clone(), sorted, segment_integrals, a_periods, a_inv, tau, est_error })
    }

    pub fn curve(&self) -> &HyperellipticCurve {
        &self.curve
    }

    pub fn tau(&self) -> &PeriodMatrix {
        &self.tau
    }

    pub fn a_periods(&self) -> &DMatrix<Complex64> {
        &self.a_periods
    }

    /// Estimated absolute error of the entries of `tau`.
    pub fn est_error(&self) -> f64 {
        self.est_error
    }

    fn normalize(&self, raw: &[Complex64]) -> AbelianPoint {
        let v = &self.a_inv * DVector::from_column_slice(raw);
        reduce(&AbelianPoint::new(v.iter().copied().collect()), &self.tau)
    }

    /// `int_{e_from}^{e_to}` along the chain, by sorted positions.
    fn chain_integral(&self, from: usize, to: usize) -> Vec<Complex64> {
        let g = self.curve.genus;
        let mut acc = vec![Complex64::new(0.0, 0.0); g];
        let (lo, hi, sign) = if from <= to { (from, to, 1.0) } else { (to, from, -1.0) };
        for j in lo..hi {
            for k in 0..g {
                acc[k] += self.segment_integrals[j][k] * sign;
            }
        }
        acc
    }

    pub fn abel_jacobi(&self, p: &CurvePoint, tol: f64) -> Result<AbelJacobiResult> {
        self.abel_jacobi_along(p, &AbelJacobiPath::Auto, tol)
    }

    pub fn abel_jacobi_along(&self, p: &CurvePoint, path: &AbelJacobiPath, tol: f64) -> Result<AbelJacobiResult> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidEps(tol));
        }
        let g = self.curve.genus;
        let base_pos = self.curve.sorted_position(self.curve.basepoint);
        let branch = p.at_branch.or_else(|| self.curve.branch_index_at(p.x));
        if let Some(index) = branch {
            let target = self.curve.sorted_position(index);
            let raw = self.chain_integral(base_pos, target);
            return Ok(AbelJacobiResult {
                image: self.normalize(&raw),
                path_spec: format!("branch chain e{base_pos} -> e{target}"),
                est_error: self.est_error,
            });
        }
        let base = self.curve.basepoint();
        let vertices = match path {
            AbelJacobiPath::Direct => vec![base, p.x],
            AbelJacobiPath::Via(ws) => std::iter::once(base).chain(ws.iter().copied()).chain([p.x]).collect(),
            AbelJacobiPath::Auto => self.auto_path(base, p.x),
        };
        let y_end = self.curve.y(p);
        let (raw, err) = self.path_integral(&vertices, y_end, tol / 4.0)?;
        let a_inv_norm = self.a_inv.iter().map(|c| c.norm()).fold(0.0, f64::max) * g as f64;
        let est_error = err * a_inv_norm + self.est_error;
        if est_error > tol {
            return Err(Error::QuadratureFailure { tol, achieved: est_error, nodes: MAX_LEGENDRE_NODES });
        }
        let spec = vertices.iter().map(|v| format!("({:.6}{:+.6}i)", v.re, v.im)).collect::<Vec<_>>().join(" -> ");
        Ok(AbelJacobiResult { image: self.normalize(&raw), path_spec: spec, est_error })
    }

    /// A straight segment, bent through a waypoint when it passes within a
    /// tenth of the branch-point spacing of another branch point.
    fn auto_path(&self, base: Complex64, end: Complex64) -> Vec<Complex64> {
        let spacing = self
            .sorted
            .iter()
            .enumerate()
            .flat_map(|(i, a)| self.sorted[..i].iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        let d = end - base;
        let near = self.sorted.iter().filter(|e| **e != base).any(|e| {
            let s = ((e - base) * d.conj()).re / d.norm_sqr();
            let s = s.clamp(0.0, 1.0);
            (base + d * s - e).norm() < 0.1 * spacing
        });
        if !near {
            return vec![base, end];
        }
        // Try perpendicular offsets of growing size on either side.
        let normal = Complex64::i() * d / d.norm();
        for k in 1..8 {
            for side in [1.0, -1.0] {
                let w = 0.5 * (base + end) + normal * (side * 0.3 * spacing * k as f64);
                let bent = [base, w, end];
                let clear = bent.windows(2).all(|seg| {
                    let (a, b) = (seg[0], seg[1]);
                    let dd = b - a;
                    self.sorted.iter().filter(|e| **e != base).all(|e| {
                        let s = (((e - a) * dd.conj()).re / dd.norm_sqr()).clamp(0.0, 1.0);
                        (a + dd * s - e).norm() >= 0.1 * spacing
                    })
                });
                if clear {
                    return bent.to_vec();
                }
            }
        }
        vec![base, end]
    }

    /// `int x^k dx / y` along the polyline `vertices`, which starts at a
    /// branch point; `y_end` fixes the sheet at the last vertex.
    fn path_integral(&self, vertices: &[Complex64], y_end: Complex64, tol: f64) -> Result<(Vec<Complex64>, f64)> {
        let g = self.curve.genus;
        let f = |x: Complex64| self.curve.polynomial(x);
        let legs = vertices.len() - 1;
        // y at every vertex after the first, walking back from the end.
        let mut y_at = vec![Complex64::new(0.0, 0.0); vertices.len()];
        y_at[legs] = y_end;
        for v in (1..legs).rev() {
            let (a, b) = (vertices[v + 1], vertices[v]);
            y_at[v] = continue_root(f, &self.sorted, |s| a + (b - a) * s, y_at[v + 1])?;
        }
        let mut total = vec![Complex64::new(0.0, 0.0); g];
        let mut err = 0.0;

        // First leg from the branch point: x = e + d u^2, y = u W(u).
        let e = vertices[0];
        let d = vertices[1] - e;
        let others: Vec<Complex64> = self.sorted.iter().filter(|b| **b != e).copied().collect();
        let w_sq = |u: Complex64| {
            let x = e + d * u * u;
            d * others.iter().fold(Complex64::new(1.0, 0.0), |acc, b| acc * (x - b))
        };
        let u_zeros: Vec<Complex64> = others.iter().flat_map(|b| {
            let r = ((b - e) / d).sqrt();
            [r, -r]
        }).collect();
        let w_end = y_at[1];
        let (first, first_err, _) = adaptive(tol, 16, MAX_LEGENDRE_NODES, |n| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"));
            let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut sums = vec![Complex64::new(0.0, 0.0); g];
            let mut w = w_end;
            let mut u_prev = 1.0;
            for (u, weight) in pairs {
                let u0 = u_prev;
                w = continue_root(w_sq, &u_zeros, |s| Complex64::new(u0 + (u - u0) * s, 0.0), w)?;
                let x = e + d * u * u;
                for (k, xk) in integrand_powers(x, g).enumerate() {
                    sums[k] += xk * 2.0 * d / w * weight;
                }
                u_prev = u;
            }
            Ok(sums)
        })?;
        err += first_err;
        for k in 0..g {
            total[k] += first[k];
        }

        for leg in 1..legs {
            let (a, b) = (vertices[leg], vertices[leg + 1]);
            let dd = b - a;
            let zeros: Vec<Complex64> = self.sorted.iter().map(|e| (e - a) / dd).collect();
            let y_b = y_at[leg + 1];
            let (vals, leg_err, _) = adaptive(tol, 16, MAX_LEGENDRE_NODES, |n| {
                let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"));
                let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
                pairs.sort_by(|p, q| q.0.total_cmp(&p.0));
                let mut sums = vec![Complex64::new(0.0, 0.0); g];
                let mut y = y_b;
                let mut s_prev = 1.0;
                for (s, weight) in pairs {
                    let s0 = s_prev;
                    y = continue_root(
                        |t: Complex64| f(a + dd * t),
                        &zeros,
                        |r| Complex64::new(s0 + (s - s0) * r, 0.0),
                        y,
                    )?;
                    let x = a + dd * s;
                    for (k, xk) in integrand_powers(x, g).enumerate() {
                        sums[k] += xk * dd / y * weight;
                    }
                    s_prev = s;
                }
                Ok(sums)
            })?;
            err += leg_err;
            for k in 0..g {
                total[k] += vals[k];
            }
        }
        Ok((total, err))
    }
}

/// Normalized period matrix of the curve.
pub fn period_matrix(curve: &HyperellipticCurve, tol: f64) -> Result<PeriodMatrix> {
    Ok(CurvePeriods::compute(curve, tol)?.tau().clone())
}

/// Abel-Jacobi image `int_{p_0}^{p}` of the normalized differentials, with
/// `p_0` the curve's basepoint.
pub fn abel_jacobi(periods: &CurvePeriods, p: &CurvePoint, tol: f64) -> Result<AbelJacobiResult> {
    periods.abel_jacobi(p, tol)
}
