//! Symplectic potentials as exact sums of `c·ℓ log ℓ`, `c·log ℓ` and
//! monomial terms, with closed-form derivatives up to fourth order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, IntMatrix};
use crate::polytope::{as_labeled_simplex, AffineFunctional, LabeledPolytope};

/// Affine data carried by a potential term: `ℓ(x) = label·⟨normal, x⟩ − offset`.
///
/// Unlike polytope facets the normal is real and need not be primitive,
/// so sums such as `ℓ_Σ = Σ ℓ_r` are representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineForm {
    pub normal: Vec<f64>,
    pub label: f64,
    pub offset: f64,
}

impl AffineForm {
    pub fn weight(&self) -> Vec<f64> {
        self.normal.iter().map(|v| self.label * v).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.label * self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }

    /// Sum of several forms, stored with label 1.
    pub fn sum<'a>(forms: impl IntoIterator<Item = &'a AffineForm>, dim: usize) -> AffineForm {
        let mut normal = vec![0.0; dim];
        let mut offset = 0.0;
        for f in forms {
            for (acc, w) in normal.iter_mut().zip(f.weight()) {
                *acc += w;
            }
            offset += f.offset;
        }
        AffineForm { normal, label: 1.0, offset }
    }
}

impl From<&AffineFunctional> for AffineForm {
    fn from(f: &AffineFunctional) -> Self {
        AffineForm { normal: f.normal().iter().map(|&v| v as f64).collect(), label: f.label(), offset: f.offset() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialTerm {
    /// `c·ℓ log ℓ`
    Entropy { coeff: f64, form: AffineForm },
    /// `c·log ℓ`
    Log { coeff: f64, form: AffineForm },
    /// `c·Π x_i^{e_i}`
    Monomial { coeff: f64, exponents: Vec<u32> },
}

impl PotentialTerm {
    fn form(&self) -> Option<&AffineForm> {
        match self {
            PotentialTerm::Entropy { form, .. } | PotentialTerm::Log { form, .. } => Some(form),
            PotentialTerm::Monomial { .. } => None,
        }
    }

    fn dim(&self) -> usize {
        match self {
            PotentialTerm::Entropy { form, .. } | PotentialTerm::Log { form, .. } => form.normal.len(),
            PotentialTerm::Monomial { exponents, .. } => exponents.len(),
        }
    }
}

/// A potential `g` on the interior of a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialExpr {
    dim: usize,
    terms: Vec<PotentialTerm>,
    domain: Option<LabeledPolytope>,
}

impl PotentialExpr {
    pub fn new(dim: usize, terms: Vec<PotentialTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("potential dimension must be positive".into()));
        }
        if let Some(i) = terms.iter().position(|t| t.dim() != dim) {
            return Err(Error::Domain(format!("term {i} has dimension {}, expected {dim}", terms[i].dim())));
        }
        Ok(Self { dim, terms, domain: None })
    }

    pub fn with_domain(mut self, p: &LabeledPolytope) -> Self {
        self.domain = Some(p.clone());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[PotentialTerm] {
        &self.terms
    }

    pub fn domain(&self) -> Option<&LabeledPolytope> {
        self.domain.as_ref()
    }

    pub fn push(&mut self, term: PotentialTerm) -> Result<()> {
        if term.dim() != self.dim {
            return Err(Error::Domain("term dimension mismatch".into()));
        }
        self.terms.push(term);
        Ok(())
    }

    /// Returns `self + other` (term lists concatenated).
    pub fn plus(&self, other: &PotentialExpr) -> Result<PotentialExpr> {
        if other.dim != self.dim {
            return Err(Error::Domain("potential dimension mismatch".into()));
        }
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out)
    }

    /// Smallest value of any affine form referenced by a log-bearing term;
    /// `+∞` when there are none.
    pub fn min_form_value(&self, x: &[f64]) -> f64 {
        self.terms.iter().filter_map(PotentialTerm::form).map(|f| f.eval(x)).fold(f64::INFINITY, f64::min)
    }

    /// Same potential in coordinates `y = Ux` for unimodular `U`: affine
    /// forms pick up `U^{-T}` on their normals. Monomial terms are not
    /// covariant and are rejected.
    pub fn transformed(&self, u: &IntMatrix) -> Result<PotentialExpr> {
        if u.rows() != self.dim || u.cols() != self.dim {
            return Err(Error::Domain("transform has the wrong size".into()));
        }
        let inv_t = lattice::unimodular_inverse(u)?.transpose();
        let map = |f: &AffineForm| AffineForm {
            normal: (0..self.dim).map(|i| (0..self.dim).map(|j| inv_t.get(i, j) as f64 * f.normal[j]).sum()).collect(),
            label: f.label,
            offset: f.offset,
        };
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                PotentialTerm::Entropy { coeff, form } => Ok(PotentialTerm::Entropy { coeff: *coeff, form: map(form) }),
                PotentialTerm::Log { coeff, form } => Ok(PotentialTerm::Log { coeff: *coeff, form: map(form) }),
                PotentialTerm::Monomial { .. } => {
                    Err(Error::Unsupported("monomial terms do not transform covariantly".into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PotentialExpr::new(self.dim, terms)
    }
}

/// Fully symmetric tensor of rank 3 or 4, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    dim: usize,
    rank: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Self { dim, rank, data: vec![0.0; dim.pow(rank as u32)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    fn entries_mut(&mut self) -> impl Iterator<Item = (Vec<usize>, &mut f64)> {
        let (dim, rank) = (self.dim, self.rank);
        self.data.iter_mut().enumerate().map(move |(k, v)| {
            let mut idx = vec![0; rank];
            let mut rest = k;
            for slot in idx.iter_mut().rev() {
                *slot = rest % dim;
                rest /= dim;
            }
            (idx, v)
        })
    }

    /// `∂_l G` as a matrix (rank 3) for a fixed leading index.
    pub fn slice(&self, l: usize) -> DMatrix<f64> {
        assert_eq!(self.rank, 3);
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(&[l, a, b]))
    }

    /// `∂_l ∂_m G` as a matrix (rank 4).
    pub fn slice2(&self, l: usize, m: usize) -> DMatrix<f64> {
        assert_eq!(self.rank, 4);
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(&[l, m, a, b]))
    }

    /// Largest deviation between entries related by an index permutation.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.data.len() {
            let mut idx = vec![0; self.rank];
            let mut rest = k;
            for slot in idx.iter_mut().rev() {
                *slot = rest % self.dim;
                rest /= self.dim;
            }
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            worst = worst.max((self.get(&idx) - self.get(&sorted)).abs());
        }
        worst
    }
}

/// Derivatives of a potential at a point. Orders above `order` are left
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub order: usize,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub third: SymTensor,
    pub fourth: SymTensor,
}

impl Jet {
    fn zeros(dim: usize, order: usize) -> Self {
        Self {
            order,
            value: 0.0,
            gradient: vec![0.0; dim],
            hessian: DMatrix::zeros(dim, dim),
            third: SymTensor::zeros(if order >= 3 { dim } else { 0 }, 3),
            fourth: SymTensor::zeros(if order >= 4 { dim } else { 0 }, 4),
        }
    }
}

/// Jet of `expr` at `x` up to `order` (0..=4).
pub fn jet(expr: &PotentialExpr, x: &[f64], order: usize) -> Result<Jet> {
    if order > 4 {
        return Err(Error::Domain(format!("jet order {order} exceeds 4")));
    }
    if x.len() != expr.dim {
        return Err(Error::Domain(format!("point has length {}, expected {}", x.len(), expr.dim)));
    }
    let n = expr.dim;
    let mut j = Jet::zeros(n, order);

    for (t, term) in expr.terms.iter().enumerate() {
        match term {
            PotentialTerm::Entropy { coeff, form } | PotentialTerm::Log { coeff, form } => {
                let l = form.eval(x);
                if !(l > 0.0) {
                    return Err(Error::OutsideDomain { index: t, value: l });
                }
                let w = form.weight();
                // scalar factors multiplying w^{⊗k} for k = 0..4
                let f: [f64; 5] = if matches!(term, PotentialTerm::Entropy { .. }) {
                    [l * l.ln(), l.ln() + 1.0, 1.0 / l, -1.0 / (l * l), 2.0 / (l * l * l)]
                } else {
                    let l2 = l * l;
                    [l.ln(), 1.0 / l, -1.0 / l2, 2.0 / (l2 * l), -6.0 / (l2 * l2)]
                };
                add_rank_one(&mut j, coeff, &w, &f, order);
            }
            PotentialTerm::Monomial { coeff, exponents } => add_monomial(&mut j, *coeff, exponents, x, order),
        }
    }
    Ok(j)
}

fn add_rank_one(j: &mut Jet, c: &f64, w: &[f64], f: &[f64; 5], order: usize) {
    let n = w.len();
    j.value += c * f[0];
    if order >= 1 {
        for a in 0..n {
            j.gradient[a] += c * f[1] * w[a];
        }
    }
    // products are taken over sorted indices so permuted entries are
    // bitwise identical
    let product = |idx: &[usize]| {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted.iter().map(|&i| w[i]).product::<f64>()
    };
    if order >= 2 {
        for a in 0..n {
            for b in 0..n {
                j.hessian[(a, b)] += c * f[2] * product(&[a, b]);
            }
        }
    }
    if order >= 3 {
        for (idx, v) in j.third.entries_mut() {
            *v += c * f[3] * product(&idx);
        }
    }
    if order >= 4 {
        for (idx, v) in j.fourth.entries_mut() {
            *v += c * f[4] * product(&idx);
        }
    }
}

/// `∂^α (c x^e)` where `α` is given as a list of differentiation indices.
fn monomial_derivative(c: f64, e: &[u32], x: &[f64], idx: &[usize]) -> f64 {
    let mut alpha = vec![0u32; e.len()];
    for &i in idx {
        alpha[i] += 1;
    }
    let mut out = c;
    for i in 0..e.len() {
        if alpha[i] > e[i] {
            return 0.0;
        }
        let falling: u32 = (0..alpha[i]).map(|k| e[i] - k).product();
        out *= falling as f64 * x[i].powi((e[i] - alpha[i]) as i32);
    }
    out
}

fn add_monomial(j: &mut Jet, c: f64, e: &[u32], x: &[f64], order: usize) {
    let n = e.len();
    j.value += monomial_derivative(c, e, x, &[]);
    if order >= 1 {
        for a in 0..n {
            j.gradient[a] += monomial_derivative(c, e, x, &[a]);
        }
    }
    if order >= 2 {
        for a in 0..n {
            for b in 0..n {
                j.hessian[(a, b)] += monomial_derivative(c, e, x, &[a, b]);
            }
        }
    }
    if order >= 3 {
        for (idx, v) in j.third.entries_mut() {
            *v += monomial_derivative(c, e, x, &idx);
        }
    }
    if order >= 4 {
        for (idx, v) in j.fourth.entries_mut() {
            *v += monomial_derivative(c, e, x, &idx);
        }
    }
}

/// Guillemin potential `½ Σ_r ℓ_r log ℓ_r`.
pub fn canonical_potential(p: &LabeledPolytope) -> PotentialExpr {
    let terms = p.facets().iter().map(|f| PotentialTerm::Entropy { coeff: 0.5, form: AffineForm::from(f) }).collect();
    PotentialExpr::new(p.dim(), terms).expect("facets share the polytope dimension").with_domain(p)
}

/// Extremal potential on a labeled simplex:
/// `½(Σ_r ℓ_r log ℓ_r − ℓ_Σ log ℓ_Σ)` with `ℓ_Σ = Σ_r ℓ_r`.
pub fn extremal_simplex_potential(p: &LabeledPolytope) -> Result<PotentialExpr> {
    if as_labeled_simplex(p).is_none() {
        return Err(Error::Unsupported("extremal potential is only defined on labeled simplices".into()));
    }
    let forms: Vec<AffineForm> = p.facets().iter().map(AffineForm::from).collect();
    let sigma = AffineForm::sum(&forms, p.dim());
    if let Some(v) = p.vertices().iter().find(|v| sigma.eval(&v.point) <= 0.0) {
        return Err(Error::Domain(format!("ℓ_Σ is not positive at vertex {:?}", v.point)));
    }
    let mut terms: Vec<PotentialTerm> =
        forms.into_iter().map(|form| PotentialTerm::Entropy { coeff: 0.5, form }).collect();
    terms.push(PotentialTerm::Entropy { coeff: -0.5, form: sigma });
    Ok(PotentialExpr::new(p.dim(), terms)?.with_domain(p))
}

/// Determinant by Cholesky (LU if not positive definite). nalgebra's
/// closed-form 2×2 and 3×3 determinants cancel badly when a Hessian has a
/// large rank-one part near a facet.
pub(crate) fn stable_det(g: &DMatrix<f64>) -> f64 {
    match g.clone().cholesky() {
        Some(c) => c.l_dirty().diagonal().iter().map(|d| d * d).product(),
        None => g.clone().lu().determinant(),
    }
}

/// `δ(x) = 1 / (Det(Hess g)(x) · Π_r ℓ_r(x))`.
pub fn boundary_delta(p: &LabeledPolytope, expr: &PotentialExpr, x: &[f64]) -> Result<f64> {
    let values = p.eval(x);
    if let Some((r, &v)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::OutsideDomain { index: r, value: v });
    }
    let prod: f64 = values.iter().product();
    let inv = match scaled_det_cauchy_binet(expr, x, prod)? {
        Some(v) => v,
        None => stable_det(&jet(expr, x, 2)?.hessian) * prod,
    };
    if inv == 0.0 || !inv.is_finite() {
        return Err(Error::Singular(format!("δ⁻¹ = {inv:e} at {x:?}")));
    }
    Ok(1.0 / inv)
}

/// Largest number of `n`-subsets summed by [`scaled_det_cauchy_binet`].
const MAX_CAUCHY_BINET_TERMS: u64 = 50_000;

/// `scale · Det(Hess g)` from the rank-one structure of the Hessian,
/// `Σ_k a_k u_k u_kᵀ`, by Cauchy–Binet: `Σ_S det(U_S)² Π_{k∈S} a_k`.
/// Each summand is a product, so near the boundary the large `a_k` meet
/// the small `scale` factor without the cancellation a plain determinant
/// of an ill-conditioned Hessian suffers. Returns `None` when there are
/// too many subsets.
fn scaled_det_cauchy_binet(expr: &PotentialExpr, x: &[f64], scale: f64) -> Result<Option<f64>> {
    let n = expr.dim();
    let mut rank_one: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut monomials = Vec::new();
    for term in expr.terms() {
        match term {
            PotentialTerm::Entropy { coeff, form } => rank_one.push((coeff / form.eval(x), form.weight())),
            PotentialTerm::Log { coeff, form } => {
                let l = form.eval(x);
                rank_one.push((-coeff / (l * l), form.weight()));
            }
            PotentialTerm::Monomial { .. } => monomials.push(term.clone()),
        }
    }
    if !monomials.is_empty() {
        let h = jet(&PotentialExpr::new(n, monomials)?, x, 2)?.hessian;
        let eig = h.symmetric_eigen();
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda != 0.0 {
                rank_one.push((lambda, eig.eigenvectors.column(i).iter().copied().collect()));
            }
        }
    }
    let k = rank_one.len();
    if k < n {
        // rank below n: the determinant vanishes identically
        return Ok(Some(0.0));
    }
    let count = (0..n as u64).try_fold(1u64, |acc, i| acc.checked_mul(k as u64 - i).map(|v| v / (i + 1)));
    if count.is_none_or(|c| c > MAX_CAUCHY_BINET_TERMS) {
        return Ok(None);
    }
    let mut total = 0.0;
    crate::polytope::for_each_subset(k, n, |subset| {
        let u = DMatrix::from_fn(n, n, |i, j| rank_one[subset[i]].1[j]);
        let minor = u.lu().determinant();
        total += subset.iter().fold(scale * minor * minor, |acc, &s| acc * rank_one[s].0);
        Ok(())
    })?;
    Ok(Some(total))
}

/// Sampling plan for [`verify_compatibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityPlan {
    pub grid_resolution: usize,
    pub grid_margin: f64,
    /// Starting distance `ε` of approach sequences (in ℓ units).
    pub approach_eps: f64,
    /// Sequence uses `ℓ = ε·2^{-k}` for `k = 0..=approach_steps`.
    pub approach_steps: u32,
    /// Allowed max/min ratio of δ along one sequence.
    pub delta_ratio_bound: f64,
    /// Allowed final increment of `g − g_P` along one sequence.
    pub smooth_increment_bound: f64,
}

impl Default for CompatibilityPlan {
    fn default() -> Self {
        Self {
            grid_resolution: 16,
            grid_margin: 0.05,
            approach_eps: 0.1,
            approach_steps: 12,
            delta_ratio_bound: 1e3,
            smooth_increment_bound: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSample {
    pub point: Vec<f64>,
    /// Facet set being approached.
    pub target: Vec<usize>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub pd_ok: bool,
    /// Smallest Hessian eigenvalue seen on the interior grid.
    pub min_eigenvalue: f64,
    pub delta_samples: Vec<DeltaSample>,
    pub delta_range: (f64, f64),
    pub delta_ok: bool,
    pub smooth_ok: bool,
    pub pass: bool,
    pub reasons: Vec<String>,
}

/// Sample-based necessary conditions for `expr` to define a compatible
/// toric Kähler metric on `p`: positive definite Hessian inside, δ
/// bounded and positive along boundary approaches, and `g − g_P` settling
/// down near the boundary.
pub fn verify_compatibility(
    p: &LabeledPolytope,
    expr: &PotentialExpr,
    plan: &CompatibilityPlan,
) -> Result<CompatibilityReport> {
    let mut reasons = Vec::new();

    let grid = crate::polytope::interior_grid(p, plan.grid_resolution, plan.grid_margin)?;
    let mut min_eig = f64::INFINITY;
    for x in &grid {
        match jet(expr, x, 2) {
            Ok(j) => {
                let eig = j.hessian.symmetric_eigenvalues().min();
                min_eig = min_eig.min(eig);
            }
            Err(e) => {
                reasons.push(format!("evaluation failed at {x:?}: {e}"));
                min_eig = f64::NEG_INFINITY;
            }
        }
    }
    let pd_ok = min_eig > 0.0;
    if !pd_ok {
        reasons.push(format!("Hessian not positive definite (min eigenvalue {min_eig:e})"));
    }

    let canonical = canonical_potential(p);
    let centre = p.centroid();
    let mut targets: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for r in 0..p.num_facets() {
        let on_facet: Vec<&[f64]> =
            p.vertices().iter().filter(|v| v.face.active.contains(&r)).map(|v| v.point.as_slice()).collect();
        let mut f = vec![0.0; p.dim()];
        for v in &on_facet {
            for (a, b) in f.iter_mut().zip(v.iter()) {
                *a += b / on_facet.len() as f64;
            }
        }
        targets.push((vec![r], f));
    }
    for v in p.vertices() {
        targets.push((v.face.active.iter().copied().collect(), v.point.clone()));
    }

    let mut samples = Vec::new();
    let mut delta_ok = true;
    let mut smooth_ok = true;
    for (target, end) in &targets {
        // along centre→end every active ℓ scales like (1 − s)
        let base = p.facets()[target[0]].eval(&centre);
        let eps = plan.approach_eps.min(0.5 * base);
        let mut seq = Vec::new();
        let mut diffs = Vec::new();
        for k in 0..=plan.approach_steps {
            let s = 1.0 - eps * 0.5f64.powi(k as i32) / base;
            let x: Vec<f64> = centre.iter().zip(end).map(|(c, e)| c + s * (e - c)).collect();
            match boundary_delta(p, expr, &x) {
                Ok(d) => seq.push(d),
                Err(e) => {
                    reasons.push(format!("δ evaluation failed approaching {target:?}: {e}"));
                    delta_ok = false;
                    seq.push(f64::NAN);
                }
            }
            let d = jet(expr, &x, 0).and_then(|a| jet(&canonical, &x, 0).map(|b| a.value - b.value));
            diffs.push(d.unwrap_or(f64::NAN));
            samples.push(DeltaSample { point: x, target: target.clone(), delta: *seq.last().unwrap() });
        }
        let lo = seq.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = seq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > 0.0 && hi.is_finite() && hi / lo <= plan.delta_ratio_bound) {
            delta_ok = false;
            reasons.push(format!("δ not bounded/positive approaching facets {target:?}: range [{lo:e}, {hi:e}]"));
        }
        let last = diffs.len() - 1;
        let inc = (diffs[last] - diffs[last - 1]).abs();
        if !(inc <= plan.smooth_increment_bound) {
            smooth_ok = false;
            reasons.push(format!("g − g_P does not settle approaching facets {target:?} (last increment {inc:e})"));
        }
    }

    let finite = samples.iter().map(|s| s.delta).filter(|d| d.is_finite());
    let delta_range = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let pass = pd_ok && delta_ok && smooth_ok;
    Ok(CompatibilityReport {
        pd_ok,
        min_eigenvalue: min_eig,
        delta_samples: samples,
        delta_range,
        delta_ok,
        smooth_ok,
        pass,
        reasons,
    })
}

/// On-disk potential format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialJson {
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TermJson {
    Entropy { coeff: f64, normal: Vec<f64>, label: f64, offset: f64 },
    Log { coeff: f64, normal: Vec<f64>, label: f64, offset: f64 },
    Monomial { coeff: f64, exponents: Vec<u32> },
}

impl PotentialExpr {
    pub fn from_json(s: &str) -> Result<Self> {
        let j: PotentialJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let dim = j
            .terms
            .first()
            .map(|t| match t {
                TermJson::Entropy { normal, .. } | TermJson::Log { normal, .. } => normal.len(),
                TermJson::Monomial { exponents, .. } => exponents.len(),
            })
            .ok_or_else(|| Error::Parse("potential has no terms".into()))?;
        let terms = j
            .terms
            .into_iter()
            .map(|t| match t {
                TermJson::Entropy { coeff, normal, label, offset } => {
                    PotentialTerm::Entropy { coeff, form: AffineForm { normal, label, offset } }
                }
                TermJson::Log { coeff, normal, label, offset } => {
                    PotentialTerm::Log { coeff, form: AffineForm { normal, label, offset } }
                }
                TermJson::Monomial { coeff, exponents } => PotentialTerm::Monomial { coeff, exponents },
            })
            .collect();
        PotentialExpr::new(dim, terms)
    }

    pub fn to_json(&self) -> String {
        let terms = self
            .terms
            .iter()
            .map(|t| match t.clone() {
                PotentialTerm::Entropy { coeff, form } => {
                    TermJson::Entropy { coeff, normal: form.normal, label: form.label, offset: form.offset }
                }
                PotentialTerm::Log { coeff, form } => {
                    TermJson::Log { coeff, normal: form.normal, label: form.label, offset: form.offset }
                }
                PotentialTerm::Monomial { coeff, exponents } => TermJson::Monomial { coeff, exponents },
            })
            .collect();
        serde_json::to_string(&PotentialJson { terms }).expect("potential serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::make_labeled_simplex;

    fn simplex(m: &[f64]) -> LabeledPolytope {
        make_labeled_simplex(m.len() - 1, m, 1.0).unwrap()
    }

    #[test]
    fn canonical_interval() {
        let p = simplex(&[1.0, 1.0]);
        let g = canonical_potential(&p);
        let j = jet(&g, &[0.0], 2).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.gradient[0], 0.0);
        assert!((j.hessian[(0, 0)] - 1.0).abs() < 1e-15);
        for x in [-0.7, -0.2, 0.3, 0.9] {
            let h = jet(&g, &[x], 2).unwrap().hessian[(0, 0)];
            assert!((h - 1.0 / (1.0 - x * x)).abs() < 1e-12 * h);
        }
        assert_eq!(canonical_potential(&simplex(&[1.0, 1.0, 1.0])).terms().len(), 3);
    }

    #[test]
    fn extremal_interval() {
        let g = extremal_simplex_potential(&simplex(&[1.0, 2.0])).unwrap();
        let h = jet(&g, &[0.0], 2).unwrap().hessian[(0, 0)];
        assert!((h - 4.0 / 3.0).abs() < 1e-14);

        // m = (1,1): ℓ_Σ ≡ 2 so g − g_P = −log 2
        let p = simplex(&[1.0, 1.0]);
        let e = extremal_simplex_potential(&p).unwrap();
        let c = canonical_potential(&p);
        for x in [-0.5, 0.1, 0.8] {
            let (je, jc) = (jet(&e, &[x], 2).unwrap(), jet(&c, &[x], 2).unwrap());
            assert!((je.value - jc.value + 2f64.ln()).abs() < 1e-14);
            assert!((je.hessian[(0, 0)] - jc.hessian[(0, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn extremal_requires_simplex() {
        let f = |n: Vec<i64>, off: f64| AffineFunctional::new(n, 1.0, off).unwrap();
        let sq = LabeledPolytope::new(
            2,
            vec![f(vec![1, 0], 0.0), f(vec![0, 1], 0.0), f(vec![-1, 0], -1.0), f(vec![0, -1], -1.0)],
        )
        .unwrap();
        assert!(matches!(extremal_simplex_potential(&sq), Err(Error::Unsupported(_))));
    }

    #[test]
    fn monomial_hessian() {
        let g = PotentialExpr::new(2, vec![PotentialTerm::Monomial { coeff: 1.0, exponents: vec![2, 1] }]).unwrap();
        let j = jet(&g, &[1.0, 1.0], 2).unwrap();
        assert_eq!(j.hessian, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 0.0]));
    }

    #[test]
    fn domain_errors_name_the_term() {
        let g = canonical_potential(&simplex(&[1.0, 1.0]));
        assert!(matches!(jet(&g, &[1.0], 2), Err(Error::OutsideDomain { index: 1, .. })));
        assert!(jet(&g, &[0.0], 5).is_err());
    }

    #[test]
    fn empty_potential_is_zero() {
        let g = PotentialExpr::new(2, vec![]).unwrap();
        let j = jet(&g, &[0.3, 0.1], 4).unwrap();
        assert_eq!(j.value, 0.0);
        assert!(j.hessian.iter().all(|&v| v == 0.0));
        let p = simplex(&[1.0, 1.0, 1.0]);
        let rep = verify_compatibility(&p, &g, &CompatibilityPlan::default()).unwrap();
        assert!(!rep.pd_ok && !rep.pass);
    }

    #[test]
    fn delta_canonical_interval_is_one() {
        let p = simplex(&[1.0, 1.0]);
        let g = canonical_potential(&p);
        for x in [-0.99, -0.3, 0.0, 0.5, 0.999] {
            assert!((boundary_delta(&p, &g, &[x]).unwrap() - 1.0).abs() < 1e-10);
        }
        assert!(boundary_delta(&p, &g, &[1.0]).is_err());
    }

    #[test]
    fn delta_extremal_11_is_one() {
        // 2^n ℓ_Σ / ((n+1)^2 Π m^2) with n = 1, ℓ_Σ = 2
        let p = simplex(&[1.0, 1.0]);
        let g = extremal_simplex_potential(&p).unwrap();
        for x in [-0.9, 0.0, 0.4] {
            assert!((boundary_delta(&p, &g, &[x]).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn compatibility_verdicts() {
        let plan = CompatibilityPlan::default();
        let p = simplex(&[1.0, 1.0, 1.0]);
        let rep = verify_compatibility(&p, &canonical_potential(&p), &plan).unwrap();
        assert!(rep.pass, "{:?}", rep.reasons);

        let q = simplex(&[1.0, 1.0, 2.0]);
        let rep = verify_compatibility(&q, &extremal_simplex_potential(&q).unwrap(), &plan).unwrap();
        assert!(rep.pass, "{:?}", rep.reasons);

        let mut bad = canonical_potential(&p);
        bad.push(PotentialTerm::Log { coeff: -1.0, form: AffineForm::from(&p.facets()[0]) }).unwrap();
        let rep = verify_compatibility(&p, &bad, &plan).unwrap();
        assert!(!rep.pass);
        assert!(!rep.delta_ok);
        assert!(rep.reasons.iter().any(|r| r.contains("[0]")), "{:?}", rep.reasons);
    }

    #[test]
    fn json_roundtrip() {
        let p = simplex(&[1.0, 2.0, 3.0]);
        let mut g = extremal_simplex_potential(&p).unwrap();
        g.push(PotentialTerm::Monomial { coeff: 0.25, exponents: vec![1, 2] }).unwrap();
        let back = PotentialExpr::from_json(&g.to_json()).unwrap();
        assert_eq!(back.terms(), g.terms());
        let txt = r#"{"terms":[{"kind":"log","coeff":-1.5,"normal":[-1,-1],"label":1,"offset":-1}]}"#;
        let h = PotentialExpr::from_json(txt).unwrap();
        assert!(matches!(h.terms()[0], PotentialTerm::Log { coeff, .. } if coeff == -1.5));
    }
}
