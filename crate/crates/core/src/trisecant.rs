//! Determinantal equations of translates of `W^n` in a principally polarized
//! abelian variety, Kummer collinearity and the trisecant scan.
//!
//! For points `c_1, ..., c_{n+2}` and `xi` with `2 xi = c_1 + ... + c_{n+2}`,
//! the locus is cut out by the `(n+2) x (n+2)` minors of
//!
//! ```text
//! M[sigma][j] = theta_sigma(z - xi + c_j),     sigma in {0,1}^g,
//! ```
//!
//! one equation per strictly increasing choice of rows (repeated rows give
//! identically vanishing determinants). With `x = z - xi` and `n = 1`, a zero
//! means the Kummer images of `x + c_1, x + c_2, x + c_3` lie on a line.
//!
//! Vanishing is judged on scale-free quantities: minors divided by the
//! product of the column norms of their submatrix, and singular value ratios
//! of the column-normalized matrix. Both are invariant under the lattice
//! automorphy factors, so their zero loci are well defined on the torus.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppav::{
    chart_norm, halve_point, is_two_torsion, reduce, torus_distance, two_torsion_points, AbelianPoint,
    AbelianPointJson, PeriodMatrix,
};
use crate::theta::{sigma_bits, EvalParams, SecondOrderTheta};

/// The points `c_1, ..., c_{n+2}` together with a half `xi` of their sum.
#[derive(Debug, Clone)]
pub struct PointConfiguration {
    points: Vec<AbelianPoint>,
    xi: AbelianPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfigurationJson {
    pub points: Vec<AbelianPointJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<AbelianPointJson>,
}

impl PointConfiguration {
    pub fn new(points: Vec<AbelianPoint>, xi: AbelianPoint, tau: &PeriodMatrix) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::ConfigInvalid(format!("need at least 2 points, got {}", points.len())));
        }
        for p in points.iter().chain([&xi]) {
            if p.g() != tau.g() {
                return Err(Error::DimensionMismatch { expected: tau.g(), found: p.g() });
            }
            if !p.is_finite() {
                return Err(Error::NonFinite("configuration point"));
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if torus_distance(&points[i], &points[j], tau) <= 1e-9 {
                    return Err(Error::ConfigInvalid(format!("points {} and {} coincide modulo the lattice", j + 1, i + 1)));
                }
            }
        }
        let sum = points.iter().skip(1).fold(points[0].clone(), |acc, p| &acc + p);
        let defect = torus_distance(&xi.scale(2.0), &sum, tau);
        if defect > 1e-9 {
            return Err(Error::ConfigInvalid(format!("2 xi differs from the sum of the points by {defect:e}")));
        }
        Ok(Self { points, xi })
    }

    /// Uses the first of the `4^g` halves of the sum.
    pub fn with_default_xi(points: Vec<AbelianPoint>, tau: &PeriodMatrix) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::ConfigInvalid("no points".into()))?;
        if first.g() != tau.g() {
            return Err(Error::DimensionMismatch { expected: tau.g(), found: first.g() });
        }
        let sum = points.iter().skip(1).fold(first.clone(), |acc, p| &acc + p);
        let xi = halve_point(&sum, tau).swap_remove(0);
        Self::new(points, xi, tau)
    }

    pub fn from_json(json: &PointConfigurationJson, tau: &PeriodMatrix) -> Result<Self> {
        let points = json.points.iter().map(AbelianPoint::from_json).collect::<Result<Vec<_>>>()?;
        match &json.xi {
            Some(xi) => Self::new(points, AbelianPoint::from_json(xi)?, tau),
            None => Self::with_default_xi(points, tau),
        }
    }

    pub fn to_json(&self) -> PointConfigurationJson {
        PointConfigurationJson {
            points: self.points.iter().map(AbelianPoint::to_json).collect(),
            xi: Some(self.xi.to_json()),
        }
    }

    pub fn points(&self) -> &[AbelianPoint] {
        &self.points
    }

    pub fn xi(&self) -> &AbelianPoint {
        &self.xi
    }

    /// `n` in `|H| = n + 2`.
    pub fn n(&self) -> usize {
        self.points.len() - 2
    }

    /// Same points in a different order, same `xi`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { points: order.iter().map(|&i| self.points[i].clone()).collect(), xi: self.xi.clone() }
    }
}

/// `M[sigma][j] = theta_sigma(z - xi + c_j)`.
#[derive(Debug, Clone)]
pub struct ThetaMatrix {
    pub entries: DMatrix<Complex64>,
    pub z: AbelianPoint,
    pub eps: f64,
}

pub fn build_theta_matrix(
    tau: &PeriodMatrix,
    config: &PointConfiguration,
    z: &AbelianPoint,
    eps: f64,
) -> Result<ThetaMatrix> {
    let theta = SecondOrderTheta::new(tau, &EvalParams::new(eps)?)?;
    build_theta_matrix_with(&theta, config, z)
}

pub fn build_theta_matrix_with(
    theta: &SecondOrderTheta,
    config: &PointConfiguration,
    z: &AbelianPoint,
) -> Result<ThetaMatrix> {
    let g = theta.g();
    if z.g() != g || config.xi.g() != g {
        return Err(Error::ConfigInvalid(format!("configuration and point must have dimension {g}")));
    }
    let shift = z - &config.xi;
    let cols = config.points.len();
    let mut entries = DMatrix::zeros(1 << g, cols);
    for (j, c) in config.points.iter().enumerate() {
        let values = theta.eval(&(&shift + c))?;
        for (s, v) in values.into_iter().enumerate() {
            entries[(s, j)] = v;
        }
    }
    Ok(ThetaMatrix { entries, z: z.clone(), eps: theta.eps() })
}

/// The row subsets indexing the `k x k` minors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinorSystem {
    pub g: usize,
    pub k: usize,
    pub row_subsets: Vec<Vec<usize>>,
}

impl MinorSystem {
    pub fn count(&self) -> usize {
        self.row_subsets.len()
    }
}

impl fmt::Display for MinorSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rows in &self.row_subsets {
            let labels: Vec<String> = rows
                .iter()
                .map(|&r| sigma_bits(r, self.g).iter().map(|b| char::from(b'0' + b)).collect())
                .collect();
            writeln!(f, "det over rows {{{}}} of theta_sigma(z - xi + c_j), j = 1..{} = 0", labels.join(","), self.k)?;
        }
        Ok(())
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < n - k + i {
                current[i] += 1;
                for j in i + 1..k {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn minor_system(g: usize, k: usize) -> Result<MinorSystem> {
    let rows = 1usize << g;
    if k > rows {
        return Err(Error::KTooLarge { k, rows });
    }
    if k < 2 {
        return Err(Error::InvalidInput(format!("minor size must be at least 2, got {k}")));
    }
    Ok(MinorSystem { g, k, row_subsets: combinations(rows, k) })
}

/// Values of every minor and their normalized sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationReport {
    pub rows: Vec<Vec<usize>>,
    pub minors: Vec<Complex64>,
    pub normalized: Vec<f64>,
    pub max_normalized_residual: f64,
}

pub fn evaluate_equations(m: &ThetaMatrix, sys: &MinorSystem) -> Result<EquationReport> {
    evaluate_minors(&m.entries, sys)
}

pub fn evaluate_minors(m: &DMatrix<Complex64>, sys: &MinorSystem) -> Result<EquationReport> {
    if m.nrows() != 1 << sys.g || m.ncols() != sys.k {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{}, system expects {}x{}",
            m.nrows(),
            m.ncols(),
            1 << sys.g,
            sys.k
        )));
    }
    let mut minors = Vec::with_capacity(sys.count());
    let mut normalized = Vec::with_capacity(sys.count());
    for rows in &sys.row_subsets {
        let sub = m.select_rows(rows.iter());
        let det = sub.clone().determinant();
        let norms: f64 = sub.column_iter().map(|c| c.norm()).product();
        minors.push(det);
        normalized.push(det.norm() / norms.max(f64::MIN_POSITIVE));
    }
    let max_normalized_residual = normalized.iter().copied().fold(0.0, f64::max);
    Ok(EquationReport { rows: sys.row_subsets.clone(), minors, normalized, max_normalized_residual })
}

pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numeric_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidEps(rel_tol));
    }
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => Ok(s.iter().filter(|&&v| v > rel_tol * top).count()),
        _ => Ok(0),
    }
}

/// Point of `P^{2^g - 1}` given by homogeneous coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KummerPoint {
    pub coords: Vec<Complex64>,
}

impl KummerPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        let max = coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::AllCoordinatesVanish);
        }
        Ok(Self { coords })
    }

    fn unit(&self) -> DVector<Complex64> {
        let v = DVector::from_column_slice(&self.coords);
        let n = v.norm();
        v / Complex64::new(n, 0.0)
    }

    /// Fubini-Study distance, in radians.
    pub fn angle(&self, other: &Self) -> f64 {
        let a = self.unit();
        let b = other.unit();
        let ip = b.dotc(&a);
        let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
        let diff = (&a - &b * phase).norm();
        2.0 * (0.5 * diff).min(1.0).asin()
    }

    pub fn projectively_equal(&self, other: &Self, tol: f64) -> bool {
        self.angle(other) <= tol
    }
}

pub fn kummer_point(z: &AbelianPoint, tau: &PeriodMatrix, eps: f64) -> Result<KummerPoint> {
    KummerPoint::new(SecondOrderTheta::new(tau, &EvalParams::new(eps)?)?.eval(z)?)
}

pub fn kummer_point_with(theta: &SecondOrderTheta, z: &AbelianPoint) -> Result<KummerPoint> {
    KummerPoint::new(theta.eval(z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collinearity {
    pub collinear: bool,
    /// `sigma_3 / sigma_1` of the column-normalized coordinate matrix.
    pub witness: f64,
}

fn normalized_columns(points: &[KummerPoint]) -> DMatrix<Complex64> {
    let rows = points[0].coords.len();
    let mut m = DMatrix::zeros(rows, points.len());
    for (j, p) in points.iter().enumerate() {
        m.set_column(j, &p.unit());
    }
    m
}

/// Singular value ratio `sigma_3 / sigma_1`; zero when there are fewer than
/// three singular values.
fn third_ratio(m: &DMatrix<Complex64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.get(2)) {
        (Some(&top), Some(&third)) if top > 0.0 => third / top,
        _ => 0.0,
    }
}

pub fn collinearity_test(points: &[KummerPoint], rel_tol: f64) -> Result<Collinearity> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 points, got {}", points.len())));
    }
    let dim = points[0].coords.len();
    if let Some(p) = points.iter().find(|p| p.coords.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.coords.len() });
    }
    let m = normalized_columns(points);
    let rank = numeric_rank(&m, rel_tol)?;
    Ok(Collinearity { collinear: rank <= 2, witness: third_ratio(&m) })
}

/// Verdicts of the two formulations of trisecant membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// Collinearity witness `sigma_3 / sigma_1`.
    pub residual: f64,
    /// Largest normalized `3 x 3` minor at `z = x + xi`.
    pub max_normalized_minor: f64,
    pub minors_vanish: bool,
    pub routes_agree: bool,
}

pub fn trisecant_membership(
    tau: &PeriodMatrix,
    config: &PointConfiguration,
    x: &AbelianPoint,
    rel_tol: f64,
    eps: f64,
) -> Result<Membership> {
    let theta = SecondOrderTheta::new(tau, &EvalParams::new(eps)?)?;
    trisecant_membership_with(&theta, config, x, rel_tol)
}

pub fn trisecant_membership_with(
    theta: &SecondOrderTheta,
    config: &PointConfiguration,
    x: &AbelianPoint,
    rel_tol: f64,
) -> Result<Membership> {
    if config.points.len() != 3 {
        return Err(Error::ConfigInvalid(format!("trisecant test needs 3 points, got {}", config.points.len())));
    }
    let kummer = config
        .points
        .iter()
        .map(|c| kummer_point_with(theta, &(x + c)))
        .collect::<Result<Vec<_>>>()?;
    let line = collinearity_test(&kummer, rel_tol)?;

    let g = theta.g();
    let max_normalized_minor = match minor_system(g, 3) {
        Ok(sys) => {
            let m = build_theta_matrix_with(theta, config, &(x + &config.xi))?;
            evaluate_equations(&m, &sys)?.max_normalized_residual
        }
        // Fewer than three rows: every 3 x 3 minor condition is vacuous.
        Err(Error::KTooLarge { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    let minors_vanish = max_normalized_minor <= rel_tol;
    Ok(Membership {
        member: line.collinear,
        residual: line.witness,
        max_normalized_minor,
        minors_vanish,
        routes_agree: minors_vanish == line.collinear,
    })
}

/// Smallest collinearity witness over the `4^g` shifts of `x` by two-torsion
/// points, with the index of the minimizing shift.
pub fn min_witness_over_half_periods(
    theta: &SecondOrderTheta,
    tau: &PeriodMatrix,
    config: &PointConfiguration,
    x: &AbelianPoint,
) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for (k, t) in two_torsion_points(tau).iter().enumerate() {
        let w = collinearity_witness(theta, config, &(x + t))?;
        if w < best.0 {
            best = (w, k);
        }
    }
    Ok(best)
}

pub fn collinearity_witness(theta: &SecondOrderTheta, config: &PointConfiguration, x: &AbelianPoint) -> Result<f64> {
    let kummer = config
        .points
        .iter()
        .map(|c| kummer_point_with(theta, &(x + c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(third_ratio(&normalized_columns(&kummer)))
}

/// Index `i = 2g - 2 - mg + deg H` of the `W^i` whose translate the
/// determinantal locus is, defined when `2g - 2 >= mg - deg H >= g - 1`.
pub fn brill_noether_index(g: i64, m: i64, deg_h: i64) -> Result<i64> {
    if g < 1 || m < 1 || deg_h < 1 {
        return Err(Error::InvalidInput(format!("need g, m, deg H >= 1, got ({g}, {m}, {deg_h})")));
    }
    let excess = m * g - deg_h;
    if excess > 2 * g - 2 {
        return Err(Error::OutOfRange(format!("mg - deg H = {excess} exceeds 2g - 2 = {}", 2 * g - 2)));
    }
    if excess < g - 1 {
        return Err(Error::OutOfRange(format!("mg - deg H = {excess} is below g - 1 = {}", g - 1)));
    }
    Ok(2 * g - 2 - excess)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    /// Grid points per real dimension.
    pub grid: usize,
    /// Collinearity witness below which a point is a hit.
    pub tol: f64,
    pub eps: f64,
    /// Grid local minima below this witness are refined.
    pub screen: f64,
    /// Gauss-Newton steps per refined candidate.
    pub refine_steps: usize,
    /// Cap on individual second-order theta evaluations.
    pub max_theta_evals: u64,
    /// Tolerance of the two-torsion and degeneracy certificates.
    pub torsion_tol: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            grid: 16,
            tol: 1e-4,
            eps: 1e-12,
            screen: 0.05,
            refine_steps: 10,
            max_theta_evals: 2_000_000_000,
            torsion_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanHit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual: f64,
    /// `2x + c_1 + c_2 + c_3` is a two-torsion point.
    pub two_torsion: bool,
    /// `2x + c_i + c_j` lies in the lattice for some pair: two of the three
    /// Kummer points coincide.
    pub degenerate: bool,
    /// Found by refining a grid minimum rather than on the grid itself.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub g: usize,
    pub grid_resolution: usize,
    pub tolerance: f64,
    pub eps: f64,
    pub config: PointConfigurationJson,
    pub grid_points: u64,
    pub min_grid_residual: f64,
    pub candidates: usize,
    pub theta_evaluations: u64,
    /// Genus one: three points of `P^1` are always collinear.
    pub vacuous: bool,
    pub hits: Vec<ScanHit>,
    #[serde(skip)]
    pub elapsed_ms: u128,
}

impl ScanReport {
    /// Hits that are neither two-torsion nor degenerate.
    pub fn nondegenerate_hits(&self) -> impl Iterator<Item = &ScanHit> {
        self.hits.iter().filter(|h| !h.two_torsion && !h.degenerate)
    }
}

fn grid_chart(index: usize, g: usize, res: usize) -> (Vec<f64>, Vec<f64>) {
    let mut coords = vec![0.0; 2 * g];
    let mut rest = index;
    for c in coords.iter_mut().rev() {
        *c = (rest % res) as f64 / res as f64 - 0.5;
        rest /= res;
    }
    // Chart order per coordinate: x_1, y_1, x_2, y_2, ...
    let x = (0..g).map(|i| coords[2 * i]).collect();
    let y = (0..g).map(|i| coords[2 * i + 1]).collect();
    (x, y)
}

fn grid_neighbors(index: usize, dims: usize, res: usize) -> impl Iterator<Item = usize> {
    (0..dims).flat_map(move |d| {
        let stride = res.pow((dims - 1 - d) as u32);
        let digit = (index / stride) % res;
        let base = index - digit * stride;
        [base + ((digit + 1) % res) * stride, base + ((digit + res - 1) % res) * stride]
    })
}

/// Unnormalized `3 x 3` minors of the Kummer column matrix, divided by the
/// product of column norms at a fixed reference scale.
fn minor_vector(theta: &SecondOrderTheta, config: &PointConfiguration, x: &AbelianPoint, sys: &MinorSystem) -> Result<Vec<Complex64>> {
    let g = theta.g();
    let mut m = DMatrix::zeros(1 << g, 3);
    for (j, c) in config.points.iter().enumerate() {
        for (s, v) in theta.eval(&(x + c))?.into_iter().enumerate() {
            m[(s, j)] = v;
        }
    }
    Ok(sys.row_subsets.iter().map(|rows| m.select_rows(rows.iter()).determinant()).collect())
}

/// Gauss-Newton on the minors, which are holomorphic in `x`; the minimum
/// norm step moves towards the nearest point of the zero locus. Returns the
/// final point, its witness and the number of theta evaluations spent.
fn refine(
    theta: &SecondOrderTheta,
    config: &PointConfiguration,
    start: &AbelianPoint,
    steps: usize,
    target: f64,
) -> Result<(AbelianPoint, f64, u64)> {
    let g = theta.g();
    let sys = minor_system(g, 3)?;
    let per_matrix = 3 * (1u64 << g);
    let mut evals = 0u64;
    let mut x = start.clone();
    let mut witness = collinearity_witness(theta, config, &x)?;
    evals += per_matrix;
    let h = 1e-6;
    for _ in 0..steps {
        if witness <= target {
            break;
        }
        let f0 = minor_vector(theta, config, &x, &sys)?;
        evals += per_matrix;
        let scale = f0.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut jac = DMatrix::zeros(f0.len(), g);
        for k in 0..g {
            let mut e = vec![Complex64::new(0.0, 0.0); g];
            e[k] = Complex64::new(h, 0.0);
            let step = AbelianPoint::new(e);
            let fp = minor_vector(theta, config, &(&x + &step), &sys)?;
            let fm = minor_vector(theta, config, &(&x - &step), &sys)?;
            evals += 2 * per_matrix;
            for r in 0..f0.len() {
                jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h) / scale;
            }
        }
        let rhs = DVector::from_iterator(f0.len(), f0.iter().map(|v| -v / scale));
        let svd = jac.svd(true, true);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let delta = match svd.solve(&rhs, 1e-8 * top.max(f64::MIN_POSITIVE)) {
            Ok(d) => d,
            Err(_) => break,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..6 {
            let trial = &x + &AbelianPoint::new(delta.iter().map(|d| d * t).collect());
            let w = collinearity_witness(theta, config, &trial)?;
            evals += per_matrix;
            if w < witness {
                x = trial;
                witness = w;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((x, witness, evals))
}

fn certify(tau: &PeriodMatrix, config: &PointConfiguration, x: &AbelianPoint, tol: f64) -> (bool, bool) {
    let c = config.points();
    let sum = c.iter().fold(x.scale(2.0), |acc, p| &acc + p);
    let two_torsion = is_two_torsion(&sum, tau, tol);
    let mut degenerate = false;
    for i in 0..c.len() {
        for j in 0..i {
            let s = &(&x.scale(2.0) + &c[i]) + &c[j];
            degenerate |= chart_norm(&s, tau) <= tol;
        }
    }
    (two_torsion, degenerate)
}

/// Scans the fundamental domain for points `x` whose three Kummer images
/// `x + c_j` are collinear. Deterministic for fixed inputs, regardless of how
/// the work is split across threads.
pub fn krichever_scan(tau: &PeriodMatrix, config: &PointConfiguration, params: &ScanParams) -> Result<ScanReport> {
    let started = Instant::now();
    if params.grid < 4 {
        return Err(Error::InvalidInput(format!("grid resolution must be at least 4, got {}", params.grid)));
    }
    if !(params.tol > 0.0 && params.tol < 1.0) {
        return Err(Error::InvalidEps(params.tol));
    }
    if config.points.len() != 3 {
        return Err(Error::ConfigInvalid(format!("scan needs 3 points, got {}", config.points.len())));
    }
    let g = tau.g();
    let dims = 2 * g;
    let theta = SecondOrderTheta::new(tau, &EvalParams::new(params.eps)?)?;
    let grid_points = (params.grid as u64).checked_pow(dims as u32).ok_or(Error::BudgetExceeded {
        needed: u64::MAX,
        budget: params.max_theta_evals,
    })?;
    let per_point = 3 * (1u64 << g);
    let grid_cost = grid_points.saturating_mul(per_point);
    if grid_cost > params.max_theta_evals {
        return Err(Error::BudgetExceeded { needed: grid_cost, budget: params.max_theta_evals });
    }
    let residuals: Vec<f64> = (0..grid_points as usize)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = grid_chart(idx, g, params.grid);
            collinearity_witness(&theta, config, &tau.from_chart(&x, &y))
        })
        .collect::<Result<_>>()?;
    let min_grid_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);

    let vacuous = g == 1;
    let mut direct = Vec::new();
    let mut candidates = Vec::new();
    for (idx, &r) in residuals.iter().enumerate() {
        if r <= params.tol {
            direct.push(idx);
        } else if !vacuous
            && r <= params.screen
            && grid_neighbors(idx, dims, params.grid).all(|nb| residuals[nb] >= r)
        {
            candidates.push(idx);
        }
    }
    // Worst case of one refinement: initial witness plus, per step, the
    // minors, 2g difference quotients and six line-search trials.
    let per_refine = per_point * (1 + params.refine_steps as u64 * (1 + 2 * g as u64 + 6));
    let refine_budget = per_refine.saturating_mul(candidates.len() as u64);
    if grid_cost.saturating_add(refine_budget) > params.max_theta_evals {
        return Err(Error::BudgetExceeded { needed: grid_cost + refine_budget, budget: params.max_theta_evals });
    }
    let refined: Vec<(AbelianPoint, f64, u64)> = candidates
        .par_iter()
        .map(|&idx| {
            let (x, y) = grid_chart(idx, g, params.grid);
            refine(&theta, config, &tau.from_chart(&x, &y), params.refine_steps, params.tol * 1e-2)
        })
        .collect::<Result<_>>()?;

    let mut theta_evaluations = grid_cost;
    let mut hits: Vec<ScanHit> = Vec::new();
    let push = |p: &AbelianPoint, residual: f64, was_refined: bool, hits: &mut Vec<ScanHit>| {
        let p = reduce(p, tau);
        let (x, y) = tau.chart(&p);
        let (two_torsion, degenerate) = certify(tau, config, &p, params.torsion_tol);
        hits.push(ScanHit { x, y, residual, two_torsion, degenerate, refined: was_refined });
    };
    for &idx in &direct {
        let (x, y) = grid_chart(idx, g, params.grid);
        push(&tau.from_chart(&x, &y), residuals[idx], false, &mut hits);
    }
    for (point, residual, evals) in &refined {
        theta_evaluations += evals;
        if *residual <= params.tol {
            push(point, *residual, true, &mut hits);
        }
    }
    Ok(ScanReport {
        g,
        grid_resolution: params.grid,
        tolerance: params.tol,
        eps: params.eps,
        config: config.to_json(),
        grid_points,
        min_grid_residual,
        candidates: candidates.len(),
        theta_evaluations,
        vacuous,
        hits,
        elapsed_ms: started.elapsed().as_millis(),
    })
}
