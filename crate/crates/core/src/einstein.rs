//! The `(1,1,m)` family of extremal metrics on the standard triangle and
//! their conformally Einstein rescalings `S⁻²g`.
//!
//! For an extremal Kähler surface with non-constant `S`, the rescaled
//! metric is Einstein iff `D = S³ − 6SΔS − 12|dS|²` is constant, and its
//! scalar curvature is `S* = S³(6Δ(S⁻¹) + 1)`.

use serde::{Deserialize, Serialize};

use crate::curvature::{
    fit_affine, gradient_pairing, laplacian, metric, scalar_curvature, FunctionJet, GridSpec, Route, EXTREMAL_TOL,
};
use crate::error::{Error, Result};
use crate::polytope::{interior_grid, make_labeled_simplex, LabeledPolytope};
use crate::potential::{extremal_simplex_potential, AffineForm, PotentialExpr, PotentialTerm};

/// `|S|` below this is treated as a zero of `S` when forming `S⁻¹`.
pub const POLE_TOL: f64 = 1e-9;

/// `P²_{(1,1,m)}`: `ℓ₁ = 1+x₁`, `ℓ₂ = 1+x₂`, `ℓ₃ = m(1−x₁−x₂)`.
pub fn family_polytope(m: f64) -> Result<LabeledPolytope> {
    check_m(m)?;
    make_labeled_simplex(2, &[1.0, 1.0, m], 1.0)
}

/// Extremal potential of the family member with label `m` on the third facet.
pub fn family_potential(m: f64) -> Result<PotentialExpr> {
    extremal_simplex_potential(&family_polytope(m)?)
}

fn check_m(m: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Domain(format!("family parameter m must be a positive real, got {m}")));
    }
    Ok(())
}

/// `S_m(x) = (4/3m)(2m + 1 + 2(1−m)ψ)`, `ψ = x₁ + x₂`.
pub fn family_scalar_closed(m: f64, x: &[f64]) -> f64 {
    let psi = x[0] + x[1];
    4.0 / (3.0 * m) * (2.0 * m + 1.0 + 2.0 * (1.0 - m) * psi)
}

/// Whether `S_m > 0` on the closed triangle. `S_m` is affine in `ψ`, and
/// `ψ` ranges over `[−2, 1]`, so the endpoint values decide.
pub fn family_scalar_positive(m: f64) -> bool {
    family_scalar_closed(m, &[-1.0, -1.0]) > 0.0 && family_scalar_closed(m, &[1.0, 0.0]) > 0.0
}

/// Closed-form scalar curvature of `S_m⁻² g_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SStar {
    pub value: f64,
    /// Set for `m = +∞`, where the value is the limit 0.
    pub at_infinity: bool,
    pub ricci_flat: bool,
}

/// `S*_m = (4/m)³(2m − 1)`; `m = +∞` gives the limit 0.
pub fn sstar_closed_form(m: f64) -> Result<SStar> {
    if m == f64::INFINITY {
        return Ok(SStar { value: 0.0, at_infinity: true, ricci_flat: true });
    }
    check_m(m)?;
    let value = (4.0 / m).powi(3) * (2.0 * m - 1.0);
    Ok(SStar { value, at_infinity: false, ricci_flat: value == 0.0 })
}

/// `g_∞ = ½(Σ_r ℓ_r log ℓ_r − 3 log(1−ψ))` on the unit-labeled triangle.
pub fn taub_nut_limit_potential() -> PotentialExpr {
    let p = make_labeled_simplex(2, &[1.0, 1.0, 1.0], 1.0).expect("standard triangle");
    let mut terms: Vec<PotentialTerm> =
        p.facets().iter().map(|f| PotentialTerm::Entropy { coeff: 0.5, form: AffineForm::from(f) }).collect();
    terms.push(PotentialTerm::Log { coeff: -1.5, form: AffineForm::from(&p.facets()[2]) });
    PotentialExpr::new(2, terms).expect("dimension 2").with_domain(&p)
}

/// Scalar curvature of `g_∞`: `(8/3)(1−ψ)`.
pub fn taub_nut_scalar_closed(x: &[f64]) -> f64 {
    8.0 / 3.0 * (1.0 - x[0] - x[1])
}

/// Per-point Derdzinski and conformal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsteinPoint {
    pub x: Vec<f64>,
    pub s: f64,
    pub laplacian_s: f64,
    pub grad_s_sq: f64,
    pub derdzinski: f64,
    pub sstar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsteinReport {
    pub points: Vec<EinsteinPoint>,
    pub derdzinski_mean: f64,
    pub derdzinski_spread: f64,
    /// `spread / |mean|`
    pub derdzinski_relative_spread: f64,
    pub sstar_mean: f64,
    pub sstar_spread: f64,
    /// `(4/m)³(2m − 1)` when the report is for a family member.
    pub sstar_closed: Option<f64>,
    /// Largest `|S* − S*_closed|` over the grid, when a closed form exists.
    pub sstar_max_error: Option<f64>,
    pub positivity: bool,
    pub constant_scalar: bool,
    pub notes: Vec<String>,
}

impl EinsteinReport {
    /// True when `D` is constant to `tol` (relative) and, when applicable, the
    /// conformal scalar curvature matches its closed form to `sstar_tol`.
    pub fn consistent(&self, tol: f64, sstar_tol: f64) -> bool {
        self.derdzinski_relative_spread < tol && self.sstar_max_error.is_none_or(|e| e < sstar_tol)
    }
}

/// How `S`, `dS` and `ΔS` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EinsteinPath {
    /// `S` must be affine on the grid; its slope feeds `dS` and `ΔS`
    /// through order-3 jets.
    Analytic,
    /// `S` is differentiated by central differences.
    Fd,
}

/// Value, gradient and Hessian of `S` by central differences of the
/// analytic pointwise curvature.
fn scalar_jet_fd(expr: &PotentialExpr, x: &[f64]) -> Result<FunctionJet> {
    let n = x.len();
    let h = (0.05 * expr.min_form_value(x)).min(1e-3);
    let s_at = |dx: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(i, d) in dx {
            y[i] += d;
        }
        scalar_curvature(expr, &y, Route::Compact)
    };
    let s0 = s_at(&[])?;
    let mut grad = vec![0.0; n];
    let mut hess = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        let (p, m) = (s_at(&[(j, h)])?, s_at(&[(j, -h)])?);
        grad[j] = (p - m) / (2.0 * h);
        hess[(j, j)] = (p - 2.0 * s0 + m) / (h * h);
        for k in j + 1..n {
            let v = (s_at(&[(j, h), (k, h)])? - s_at(&[(j, h), (k, -h)])? - s_at(&[(j, -h), (k, h)])?
                + s_at(&[(j, -h), (k, -h)])?)
                / (4.0 * h * h);
            hess[(j, k)] = v;
            hess[(k, j)] = v;
        }
    }
    Ok(FunctionJet { value: s0, gradient: grad, hessian: hess })
}

/// `S* = S³(6Δ(S⁻¹) + 1)` at one point, given the jet of `S` there.
pub fn conformal_from_jet(expr: &PotentialExpr, s: &FunctionJet, x: &[f64]) -> Result<f64> {
    if s.value.abs() < POLE_TOL {
        return Err(Error::ScalarCurvaturePole { point: x.to_vec(), value: s.value });
    }
    let n = x.len();
    let v = s.value;
    // f = 1/S: ∇f = −∇S/S², Hess f = 2∇S∇Sᵀ/S³ − Hess S/S²
    let inv = FunctionJet {
        value: 1.0 / v,
        gradient: s.gradient.iter().map(|g| -g / (v * v)).collect(),
        hessian: nalgebra::DMatrix::from_fn(n, n, |a, b| {
            2.0 * s.gradient[a] * s.gradient[b] / (v * v * v) - s.hessian[(a, b)] / (v * v)
        }),
    };
    Ok(v.powi(3) * (6.0 * laplacian(expr, &inv, x)? + 1.0))
}

fn spread(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / count;
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    (mean, hi - lo)
}

/// Derdzinski functional and conformal scalar curvature over the interior
/// grid of `p`.
pub fn derdzinski_test(
    expr: &PotentialExpr,
    p: &LabeledPolytope,
    grid: GridSpec,
    path: EinsteinPath,
) -> Result<EinsteinReport> {
    let points = interior_grid(p, grid.resolution, grid.margin)?;
    let mut notes = Vec::new();

    let jets: Vec<FunctionJet> = match path {
        EinsteinPath::Analytic => {
            let values =
                points.iter().map(|x| scalar_curvature(expr, x, Route::Compact)).collect::<Result<Vec<_>>>()?;
            let fit = fit_affine(&points, &values, EXTREMAL_TOL.max(1e-8 * values[0].abs()))?;
            if !fit.extremal {
                return Err(Error::Unsupported(format!(
                    "scalar curvature is not affine on the grid (residual {:e}); use the FD path",
                    fit.residual_max
                )));
            }
            points
                .iter()
                .zip(&values)
                .map(|(x, &s)| FunctionJet {
                    value: s,
                    gradient: fit.xi.clone(),
                    hessian: nalgebra::DMatrix::zeros(x.len(), x.len()),
                })
                .collect()
        }
        EinsteinPath::Fd => points.iter().map(|x| scalar_jet_fd(expr, x)).collect::<Result<Vec<_>>>()?,
    };

    let mut out = Vec::with_capacity(points.len());
    for (x, s) in points.iter().zip(&jets) {
        let (_, ginv) = metric(expr, x)?;
        let lap = laplacian(expr, s, x)?;
        let grad_sq = gradient_pairing(&ginv, &s.gradient, &s.gradient);
        let d = s.value.powi(3) - 6.0 * s.value * lap - 12.0 * grad_sq;
        let sstar = conformal_from_jet(expr, s, x)?;
        out.push(EinsteinPoint {
            x: x.clone(),
            s: s.value,
            laplacian_s: lap,
            grad_s_sq: grad_sq,
            derdzinski: d,
            sstar,
        });
    }

    let (d_mean, d_spread) = spread(out.iter().map(|p| p.derdzinski));
    let (s_mean, s_spread) = spread(out.iter().map(|p| p.sstar));
    let constant_scalar = jets.iter().all(|j| j.gradient.iter().all(|g| g.abs() < 1e-10));
    if constant_scalar {
        notes.push("scalar curvature is constant: the Derdzinski criterion does not apply".into());
    }
    let positivity = out.iter().all(|p| p.s > 0.0);

    Ok(EinsteinReport {
        derdzinski_relative_spread: if d_mean == 0.0 { d_spread } else { d_spread / d_mean.abs() },
        points: out,
        derdzinski_mean: d_mean,
        derdzinski_spread: d_spread,
        sstar_mean: s_mean,
        sstar_spread: s_spread,
        sstar_closed: None,
        sstar_max_error: None,
        positivity,
        constant_scalar,
        notes,
    })
}

/// Conformal scalar curvature `S*` at one point, with `S` affine of slope
/// `xi` (the extremal case).
pub fn conformal_scalar(expr: &PotentialExpr, x: &[f64], xi: &[f64]) -> Result<f64> {
    let s = scalar_curvature(expr, x, Route::Compact)?;
    let sj = FunctionJet { value: s, gradient: xi.to_vec(), hessian: nalgebra::DMatrix::zeros(x.len(), x.len()) };
    conformal_from_jet(expr, &sj, x)
}

/// Full report for the family member `m`, including the closed-form
/// comparisons.
pub fn family_report(m: f64, grid: GridSpec) -> Result<EinsteinReport> {
    let p = family_polytope(m)?;
    let g = extremal_simplex_potential(&p)?;
    let mut rep = derdzinski_test(&g, &p, grid, EinsteinPath::Analytic)?;
    let closed = sstar_closed_form(m)?.value;
    rep.sstar_closed = Some(closed);
    rep.sstar_max_error = Some(rep.points.iter().map(|p| (p.sstar - closed).abs()).fold(0.0, f64::max));
    rep.positivity = family_scalar_positive(m);
    if m <= 0.5 {
        rep.notes.push(format!(
            "S_m vanishes on the closed triangle for m = {m} ≤ 1/2 (at the vertex (−1,−1) when m = 1/2)"
        ));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::metric;
    use crate::potential::{canonical_potential, jet};

    #[test]
    fn closed_scalar_examples() {
        assert!((family_scalar_closed(1.0, &[0.3, -0.7]) - 4.0).abs() < 1e-15);
        assert!(family_scalar_closed(0.5, &[-1.0, -1.0]).abs() < 1e-15);
        assert!((family_scalar_closed(2.0, &[0.5, 0.5]) - 2.0).abs() < 1e-15);
        assert!((family_scalar_closed(2.0, &[0.0, 0.0]) - 10.0 / 3.0).abs() < 1e-15);
        assert!(family_scalar_positive(0.51) && !family_scalar_positive(0.5));
    }

    #[test]
    fn sstar_closed_examples() {
        assert_eq!(sstar_closed_form(1.0).unwrap().value, 64.0);
        assert_eq!(sstar_closed_form(2.0).unwrap().value, 24.0);
        let half = sstar_closed_form(0.5).unwrap();
        assert!(half.value == 0.0 && half.ricci_flat);
        let inf = sstar_closed_form(f64::INFINITY).unwrap();
        assert!(inf.value == 0.0 && inf.at_infinity);
        assert!(sstar_closed_form(0.0).is_err());
    }

    #[test]
    fn family_matches_closed_scalar() {
        let g = family_potential(2.0).unwrap();
        for x in [[0.0, 0.0], [0.4, -0.3], [-0.8, 0.9]] {
            let s = scalar_curvature(&g, &x, Route::Compact).unwrap();
            assert!((s - family_scalar_closed(2.0, &x)).abs() < 1e-10);
            let swapped = scalar_curvature(&g, &[x[1], x[0]], Route::Compact).unwrap();
            assert!((s - swapped).abs() < 1e-12);
        }
    }

    #[test]
    fn taub_nut_hessian_and_scalar() {
        let g = taub_nut_limit_potential();
        let h = jet(&g, &[0.0, 0.0], 2).unwrap().hessian;
        assert!((h[(0, 0)] - 2.5).abs() < 1e-14 && (h[(1, 1)] - 2.5).abs() < 1e-14);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-14);
        let s = scalar_curvature(&g, &[0.0, 0.0], Route::Compact).unwrap();
        assert!((s - 8.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn family_converges_to_taub_nut() {
        let x = [0.1, -0.2];
        let (g_inf, _) = metric(&taub_nut_limit_potential(), &x).unwrap();
        let mut prev = f64::INFINITY;
        for m in [1e3, 1e6] {
            let (gm, _) = metric(&family_potential(m).unwrap(), &x).unwrap();
            let err = (gm - &g_inf).amax();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn unit_member_is_vacuous_but_consistent() {
        let rep = family_report(1.0, GridSpec { resolution: 8, margin: 0.05 }).unwrap();
        assert!(rep.constant_scalar);
        assert!((rep.derdzinski_mean - 64.0).abs() < 1e-9);
        assert!(rep.sstar_max_error.unwrap() < 1e-10);
    }

    #[test]
    fn pole_is_reported() {
        // m = 1/2: S = (8/3)(2 + ψ) vanishes at the vertex (−1,−1)
        let g = family_potential(0.5).unwrap();
        let x = [-1.0 + 1e-12, -1.0 + 1e-12];
        let xi = crate::curvature::closed_form_xi(&[1.0, 1.0, 0.5]).unwrap();
        let s = FunctionJet::affine(16.0 / 3.0, &xi, &x);
        assert!(s.value.abs() < POLE_TOL);
        let err = conformal_from_jet(&g, &s, &x);
        assert!(matches!(err, Err(Error::ScalarCurvaturePole { .. })), "{err:?}");
        assert!(conformal_scalar(&g, &[0.0, 0.0], &xi).is_ok());
    }

    #[test]
    fn analytic_path_rejects_non_extremal() {
        let p = make_labeled_simplex(2, &[1.0, 1.0, 1.0], 1.0).unwrap();
        let mut g = canonical_potential(&p);
        g.push(PotentialTerm::Monomial { coeff: 0.05, exponents: vec![2, 2] }).unwrap();
        let grid = GridSpec { resolution: 8, margin: 0.1 };
        assert!(matches!(derdzinski_test(&g, &p, grid, EinsteinPath::Analytic), Err(Error::Unsupported(_))));
        let rep = derdzinski_test(&g, &p, grid, EinsteinPath::Fd).unwrap();
        assert!(rep.derdzinski_relative_spread > 1e-3);
    }
}
