//! Metric, inverse metric and scalar curvature of toric Kähler metrics in
//! symplectic coordinates, plus the toric Laplacian, affine (extremal)
//! fits, closed forms for labeled simplices and the cone-angle model.
//!
//! The metric on the open dense set is `G dx² + G⁻¹ dθ²` with
//! `G = Hess g`. Scalar curvature uses the normalization in which the
//! Fubini–Study metric on the standard triangle has `S = 4`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{interior_grid, LabeledPolytope};
use crate::potential::{jet, Jet, PotentialExpr};

/// Which formula evaluates the scalar curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// `S = −Σ ∂_j∂_k g^{jk}` with analytic third/fourth derivatives.
    Compact,
    /// Divergence of `G⁻¹ ∇ log Det G`, expanded analytically. Uses
    /// `Σ_j ∂_j g^{jk} = −Σ_j g^{jk} ∂_j log Det G`, so the sign is the one
    /// that agrees with [`Route::Compact`]: `S = +Σ ∂_j(g^{jk} ∂_k log Det G)`.
    Log,
    /// Nested central differences of `G⁻¹`.
    Fd,
}

/// Inverse metric and the derivative data the curvature routes share.
struct MetricJet {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    /// `∂_l G`
    dg: Vec<DMatrix<f64>>,
    /// `∂_l ∂_m G`, indexed `l * n + m`
    ddg: Vec<DMatrix<f64>>,
}

fn invert_pd(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let chol = g.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
    Ok(chol.inverse())
}

fn metric_jet(expr: &PotentialExpr, x: &[f64], order: usize) -> Result<MetricJet> {
    let j: Jet = jet(expr, x, order)?;
    let n = expr.dim();
    let ginv = invert_pd(&j.hessian, x)?;
    let dg = if order >= 3 { (0..n).map(|l| j.third.slice(l)).collect() } else { Vec::new() };
    let ddg = if order >= 4 {
        (0..n).flat_map(|l| (0..n).map(move |m| (l, m))).map(|(l, m)| j.fourth.slice2(l, m)).collect()
    } else {
        Vec::new()
    };
    Ok(MetricJet { g: j.hessian, ginv, dg, ddg })
}

/// `G = Hess g` and `G⁻¹` at `x`; errors unless `G` is positive definite.
pub fn metric(expr: &PotentialExpr, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = metric_jet(expr, x, 2)?;
    Ok((m.g, m.ginv))
}

/// The full metric `diag(G, G⁻¹)` on `(x, θ)`.
pub fn block_metric(expr: &PotentialExpr, x: &[f64]) -> Result<DMatrix<f64>> {
    let (g, ginv) = metric(expr, x)?;
    let n = g.nrows();
    let mut full = DMatrix::zeros(2 * n, 2 * n);
    full.view_mut((0, 0), (n, n)).copy_from(&g);
    full.view_mut((n, n), (n, n)).copy_from(&ginv);
    Ok(full)
}

fn scalar_compact(m: &MetricJet) -> f64 {
    let n = m.g.nrows();
    let h = &m.ginv;
    // A_l = H (∂_l G) H
    let a: Vec<DMatrix<f64>> = m.dg.iter().map(|d| h * d * h).collect();
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            // ∂_j∂_k H = A_j (∂_k G) H + A_k (∂_j G) H − H (∂_j∂_k G) H
            let t1 = (a[j].row(j) * &m.dg[k] * h.column(k))[0];
            let t2 = (a[k].row(j) * &m.dg[j] * h.column(k))[0];
            let t3 = (h.row(j) * &m.ddg[j * n + k] * h.column(k))[0];
            s -= t1 + t2 - t3;
        }
    }
    s
}

fn scalar_log(m: &MetricJet) -> f64 {
    let n = m.g.nrows();
    let h = &m.ginv;
    let hd: Vec<DMatrix<f64>> = m.dg.iter().map(|d| h * d).collect();
    // L_k = ∂_k log Det G = tr(H ∂_k G)
    let l: Vec<f64> = hd.iter().map(|x| x.trace()).collect();
    let mut s = 0.0;
    for j in 0..n {
        let dh_j = -(&hd[j] * h); // ∂_j H = −H (∂_j G) H
        for k in 0..n {
            // ∂_j L_k = −tr(H ∂_jG H ∂_kG) + tr(H ∂_j∂_k G)
            let dl = -(&hd[j] * &hd[k]).trace() + (h * &m.ddg[j * n + k]).trace();
            s += dh_j[(j, k)] * l[k] + h[(j, k)] * dl;
        }
    }
    s
}

/// Step used by the finite-difference route: `min(1e-4, 0.1·min ℓ)`.
pub fn fd_step(expr: &PotentialExpr, x: &[f64]) -> f64 {
    (0.1 * expr.min_form_value(x)).min(1e-4)
}

/// Smallest step the FD route accepts before declaring the point too close
/// to the boundary.
const MIN_FD_STEP: f64 = 1e-7;

fn scalar_fd(expr: &PotentialExpr, x: &[f64]) -> Result<f64> {
    let n = expr.dim();
    let h = fd_step(expr, x);
    if !(h >= MIN_FD_STEP) {
        return Err(Error::StepTooSmall { point: x.to_vec(), step: h });
    }
    let ginv_at = |dx: &[(usize, f64)]| -> Result<DMatrix<f64>> {
        let mut y = x.to_vec();
        for &(i, d) in dx {
            y[i] += d;
        }
        Ok(metric(expr, &y)?.1)
    };
    let centre = ginv_at(&[])?;
    let mut s = 0.0;
    for j in 0..n {
        let plus = ginv_at(&[(j, h)])?;
        let minus = ginv_at(&[(j, -h)])?;
        s -= (plus[(j, j)] - 2.0 * centre[(j, j)] + minus[(j, j)]) / (h * h);
        for k in 0..n {
            if k == j {
                continue;
            }
            let pp = ginv_at(&[(j, h), (k, h)])?;
            let pm = ginv_at(&[(j, h), (k, -h)])?;
            let mp = ginv_at(&[(j, -h), (k, h)])?;
            let mm = ginv_at(&[(j, -h), (k, -h)])?;
            s -= (pp[(j, k)] - pm[(j, k)] - mp[(j, k)] + mm[(j, k)]) / (4.0 * h * h);
        }
    }
    Ok(s)
}

/// Scalar curvature of the metric defined by `expr` at `x`.
pub fn scalar_curvature(expr: &PotentialExpr, x: &[f64], route: Route) -> Result<f64> {
    match route {
        Route::Compact => Ok(scalar_compact(&metric_jet(expr, x, 4)?)),
        Route::Log => Ok(scalar_log(&metric_jet(expr, x, 4)?)),
        Route::Fd => scalar_fd(expr, x),
    }
}

/// Per-point curvature data from both analytic routes.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub s_compact: f64,
    pub s_log: f64,
    pub det_g: f64,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
}

pub fn curvature_sample(expr: &PotentialExpr, x: &[f64]) -> Result<CurvatureSample> {
    let m = metric_jet(expr, x, 4)?;
    Ok(CurvatureSample {
        point: x.to_vec(),
        s_compact: scalar_compact(&m),
        s_log: scalar_log(&m),
        det_g: crate::potential::stable_det(&m.g),
        g: m.g,
        ginv: m.ginv,
    })
}

/// Value, gradient and Hessian of a scalar function on the polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionJet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

impl FunctionJet {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self { value, gradient: vec![0.0; dim], hessian: DMatrix::zeros(dim, dim) }
    }

    /// `c + ⟨ξ, x⟩`
    pub fn affine(c: f64, xi: &[f64], x: &[f64]) -> Self {
        let value = c + xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        Self { value, gradient: xi.to_vec(), hessian: DMatrix::zeros(xi.len(), xi.len()) }
    }
}

/// Toric Laplacian `Δf = −Det G Σ g^{jk} ∂_j((Det G)⁻¹ ∂_k f)`, expanded as
/// `Σ g^{jk}(−f_{jk} + f_k ∂_j log Det G)`.
pub fn laplacian(expr: &PotentialExpr, f: &FunctionJet, x: &[f64]) -> Result<f64> {
    let m = metric_jet(expr, x, 3)?;
    let n = m.g.nrows();
    check_fjet(f, n)?;
    let dlog: Vec<f64> = m.dg.iter().map(|d| (&m.ginv * d).trace()).collect();
    let mut out = 0.0;
    for j in 0..n {
        for k in 0..n {
            out += m.ginv[(j, k)] * (-f.hessian[(j, k)] + f.gradient[k] * dlog[j]);
        }
    }
    Ok(out)
}

/// Divergence form of the same operator, `−Σ_j ∂_j(Σ_k g^{jk} f_k)`.
pub fn laplacian_divergence(expr: &PotentialExpr, f: &FunctionJet, x: &[f64]) -> Result<f64> {
    let m = metric_jet(expr, x, 3)?;
    let n = m.g.nrows();
    check_fjet(f, n)?;
    let mut out = 0.0;
    for j in 0..n {
        let dh = -(&m.ginv * &m.dg[j] * &m.ginv);
        for k in 0..n {
            out -= dh[(j, k)] * f.gradient[k] + m.ginv[(j, k)] * f.hessian[(j, k)];
        }
    }
    Ok(out)
}

fn check_fjet(f: &FunctionJet, n: usize) -> Result<()> {
    if f.gradient.len() != n || f.hessian.nrows() != n || f.hessian.ncols() != n {
        return Err(Error::Domain(format!("function jet must have dimension {n}")));
    }
    Ok(())
}

/// `Σ_{jk} g^{jk} a_j b_k`: the metric pairing of the differentials of two
/// θ-invariant functions.
pub fn gradient_pairing(ginv: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    (a.transpose() * ginv * b)[0]
}

fn check_labels(m: &[f64]) -> Result<usize> {
    if m.len() < 2 {
        return Err(Error::Domain("need at least two labels".into()));
    }
    if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("labels must be positive, got {v}")));
    }
    Ok(m.len() - 1)
}

/// Closed-form scalar curvature of the extremal metric on `P^n_m` (unit
/// scale): `(2n/(n+1))Σ1/m_r + (2(n+2)/(n+1))Σ_j(1/m_{n+1} − 1/m_j)x_j`.
pub fn closed_form_scalar_simplex(m: &[f64], x: &[f64]) -> Result<f64> {
    let n = check_labels(m)?;
    if x.len() != n {
        return Err(Error::Domain(format!("point has length {}, expected {n}", x.len())));
    }
    let nf = n as f64;
    let c0 = 2.0 * nf / (nf + 1.0) * m.iter().map(|v| 1.0 / v).sum::<f64>();
    let xi = closed_form_xi(m)?;
    Ok(c0 + xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
}

/// Slope `ξ_m` of the extremal scalar curvature on `P^n_m`.
pub fn closed_form_xi(m: &[f64]) -> Result<Vec<f64>> {
    let n = check_labels(m)?;
    let nf = n as f64;
    let k = 2.0 * (nf + 2.0) / (nf + 1.0);
    Ok(m[..n].iter().map(|mj| k * (1.0 / m[n] - 1.0 / mj)).collect())
}

fn simplex_forms(m: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = check_labels(m)?;
    if x.len() != n {
        return Err(Error::Domain(format!("point has length {}, expected {n}", x.len())));
    }
    let psi: f64 = x.iter().sum();
    let mut l: Vec<f64> = (0..n).map(|r| m[r] * (1.0 + x[r])).collect();
    l.push(m[n] * (1.0 - psi));
    Ok(l)
}

/// Closed-form `G⁻¹` for the extremal potential on `P^n_m` (unit scale).
pub fn simplex_ginv_closed_form(m: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    let l = simplex_forms(m, x)?;
    let n = l.len() - 1;
    let nf = n as f64;
    let sum: f64 = l.iter().zip(m).map(|(lr, mr)| lr / (mr * mr)).sum();
    Ok(DMatrix::from_fn(n, n, |j, k| {
        let djk = if j == k { l[j] / (m[j] * m[j]) } else { 0.0 };
        let mjk2 = m[j] * m[j] * m[k] * m[k];
        2.0 * (djk - (m[j] + m[k]) / (nf + 1.0) * l[j] * l[k] / mjk2
            + l[j] * l[k] / (m[j] * m[k]) * sum / ((nf + 1.0) * (nf + 1.0)))
    }))
}

/// Closed-form `Det G` for the extremal potential on `P^n_m` (unit scale).
/// Returns `+∞` on the boundary.
pub fn simplex_det_closed_form(m: &[f64], x: &[f64]) -> Result<f64> {
    let l = simplex_forms(m, x)?;
    let n = l.len() - 1;
    let nf = n as f64;
    let sigma: f64 = l.iter().sum();
    let prod_l: f64 = l.iter().product();
    let prod_m2: f64 = m.iter().map(|v| v * v).product();
    Ok(1.0 / (prod_l * 2f64.powi(n as i32) * sigma / ((nf + 1.0).powi(2) * prod_m2)))
}

/// Least-squares affine model `S ≈ c₀ + ⟨ξ, x⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalFit {
    pub constant: f64,
    pub xi: Vec<f64>,
    pub residual_max: f64,
    pub residual_rms: f64,
    pub extremal: bool,
}

/// Default tolerance on `residual_max` for the extremal verdict.
pub const EXTREMAL_TOL: f64 = 1e-8;

/// Fits `c₀ + ⟨ξ, x⟩` to `(x, S)` samples by the normal equations.
pub fn fit_affine(points: &[Vec<f64>], values: &[f64], tol: f64) -> Result<ExtremalFit> {
    assert_eq!(points.len(), values.len());
    let Some(n) = points.first().map(Vec::len) else {
        return Err(Error::Domain("cannot fit an empty sample set".into()));
    };
    let a = DMatrix::from_fn(points.len(), n + 1, |i, j| if j == 0 { 1.0 } else { points[i][j - 1] });
    let b = DVector::from_column_slice(values);
    let ata = a.transpose() * &a;
    let eig = ata.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) {
        return Err(Error::Singular(format!(
            "affinely dependent sample points (normal-matrix eigenvalues {lo:e}..{hi:e})"
        )));
    }
    let coef = ata
        .cholesky()
        .ok_or_else(|| Error::Singular("normal equations not positive definite".into()))?
        .solve(&(a.transpose() * &b));
    let resid = &a * &coef - &b;
    let residual_max = resid.amax();
    let residual_rms = (resid.norm_squared() / points.len() as f64).sqrt();
    Ok(ExtremalFit {
        constant: coef[0],
        xi: coef.iter().skip(1).copied().collect(),
        residual_max,
        residual_rms,
        extremal: residual_max < tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { resolution: 64, margin: 0.05 }
    }
}

/// Samples `S` over the interior grid of `p` and fits an affine function.
pub fn extremal_check(expr: &PotentialExpr, p: &LabeledPolytope, grid: GridSpec, route: Route) -> Result<ExtremalFit> {
    let points = interior_grid(p, grid.resolution, grid.margin)?;
    let values = points.iter().map(|x| scalar_curvature(expr, x, route)).collect::<Result<Vec<_>>>()?;
    fit_affine(&points, &values, EXTREMAL_TOL)
}

/// Quadrature settings for [`cone_angle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Largest cut-off `x₀`.
    pub x0: f64,
    /// Number of cut-offs `x₀, x₀/4, x₀/16, …` used for extrapolation.
    pub levels: usize,
    /// Composite Gauss–Legendre panels per integral.
    pub panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { x0: 0.1, levels: 4, panels: 16 }
    }
}

// 5-point Gauss–Legendre on [-1, 1]
const GL_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            GL_NODES.iter().zip(GL_WEIGHTS).map(|(t, w)| w * f(mid + 0.5 * h * t)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Cone angle of the normal model with potential `½ m x log(mx)`: the
/// limit of circumference over geodesic radius as the circle shrinks to
/// the fixed point.
pub fn cone_angle(m: f64, q: QuadratureSpec) -> Result<f64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Domain(format!("cone label must be positive, got {m}")));
    }
    if !(q.x0 > 0.0 && q.levels >= 1 && q.panels >= 1) {
        return Err(Error::Domain("invalid quadrature spec".into()));
    }
    let model = crate::potential::PotentialExpr::new(
        1,
        vec![crate::potential::PotentialTerm::Entropy {
            coeff: 0.5,
            form: crate::potential::AffineForm { normal: vec![1.0], label: m, offset: 0.0 },
        }],
    )?;
    let g2 = |x: f64| jet(&model, &[x], 2).map(|j| j.hessian[(0, 0)]);

    let mut ratios = Vec::with_capacity(q.levels);
    let mut x0 = q.x0;
    for _ in 0..q.levels {
        // R = ∫₀^{x₀} √g''(x) dx with x = t² to remove the endpoint singularity
        let s = x0.sqrt();
        let integrand = |t: f64| if t > 0.0 { g2(t * t).map(|v| 2.0 * t * v.sqrt()).unwrap_or(f64::NAN) } else { 0.0 };
        let radius = gauss_legendre(integrand, 0.0, s, q.panels);
        // circle of fixed x has length 2π √(1/g''(x₀))
        let length = 2.0 * std::f64::consts::PI / g2(x0)?.sqrt();
        ratios.push(length / radius);
        x0 /= 4.0;
    }
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("cone quadrature produced a non-finite value".into()));
    }
    // Richardson extrapolation in √x₀ (halved each level)
    let mut table = ratios;
    let mut factor = 2.0;
    while table.len() > 1 {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 2.0;
    }
    Ok(table[0])
}
