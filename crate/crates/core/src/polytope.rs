//! Labeled rational simple polytopes and their lattice invariants.
//!
//! A labeled polytope is cut out by affine functionals
//! `ℓ_r(x) = ⟨x, m_r μ_r⟩ − λ_r ≥ 0` where `μ_r` is a primitive inward
//! integer normal and `m_r > 0` is the facet label. Labels may be real
//! (conical models); lattice computations require them to be integers.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, IntMatrix};

/// Relative tolerance for vertex activation, in the polytope's own length
/// scale.
pub const ACTIVATION_TOL: f64 = 1e-9;

/// Labels within this distance of an integer count as integral.
const INTEGRAL_TOL: f64 = 1e-12;

/// One facet: `ℓ(x) = ⟨x, label·normal⟩ − offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFunctional {
    normal: Vec<i64>,
    label: f64,
    offset: f64,
}

impl AffineFunctional {
    pub fn new(normal: Vec<i64>, label: f64, offset: f64) -> Result<Self> {
        if normal.is_empty() {
            return Err(Error::Domain("facet normal is empty".into()));
        }
        let g = lattice::gcd_all(&normal);
        if g != 1 {
            return Err(Error::InvalidPolytope(format!("normal {normal:?} is not primitive (gcd {g})")));
        }
        if !(label.is_finite() && label > 0.0) {
            return Err(Error::Domain(format!("label must be a positive real, got {label}")));
        }
        if !offset.is_finite() {
            return Err(Error::Domain(format!("offset must be finite, got {offset}")));
        }
        Ok(Self { normal, label, offset })
    }

    pub fn normal(&self) -> &[i64] {
        &self.normal
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// True iff the label is a positive integer.
    pub fn integral(&self) -> bool {
        self.integral_label().is_some()
    }

    pub fn integral_label(&self) -> Option<i64> {
        let r = self.label.round();
        ((self.label - r).abs() <= INTEGRAL_TOL && r >= 1.0 && r < i64::MAX as f64).then_some(r as i64)
    }

    /// The gradient `m·μ` of the functional.
    pub fn weight(&self) -> Vec<f64> {
        self.normal.iter().map(|&v| self.label * v as f64).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.normal.len());
        self.label * self.normal.iter().zip(x).map(|(&n, &xi)| n as f64 * xi).sum::<f64>() - self.offset
    }
}

/// Set of facets containing a point, optionally with the point itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDescriptor {
    pub active: BTreeSet<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub point: Option<Vec<f64>>,
}

impl FaceDescriptor {
    pub fn from_facets(active: impl IntoIterator<Item = usize>) -> Self {
        Self { active: active.into_iter().collect(), point: None }
    }

    pub fn is_interior(&self) -> bool {
        self.active.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub point: Vec<f64>,
    pub face: FaceDescriptor,
}

/// β and an integer basis of its kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    /// n×d matrix whose columns are `m_r μ_r`.
    pub beta: IntMatrix,
    pub kernel_basis: Vec<Vec<i64>>,
}

/// A validated labeled polytope.
///
/// Construction enumerates vertices and rejects unbounded, empty,
/// non-simple and redundant inputs, so every value of this type satisfies
/// the simple/rational invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPolytope {
    dim: usize,
    facets: Vec<AffineFunctional>,
    vertices: Vec<Vertex>,
}

impl LabeledPolytope {
    pub fn new(dim: usize, facets: Vec<AffineFunctional>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if let Some((r, f)) = facets.iter().enumerate().find(|(_, f)| f.dim() != dim) {
            return Err(Error::InvalidPolytope(format!(
                "facet {r} has a normal of length {}, expected {dim}",
                f.dim()
            )));
        }
        if facets.len() <= dim {
            return Err(Error::InvalidPolytope(format!(
                "{} facets cannot bound a {dim}-dimensional polytope",
                facets.len()
            )));
        }
        let vertices = enumerate_vertices(dim, &facets)?;
        let p = Self { dim, facets, vertices };
        p.check_bounded()?;
        p.check_interior()?;
        for r in 0..p.facets.len() {
            if !p.vertices.iter().any(|v| v.face.active.contains(&r)) {
                return Err(Error::InvalidPolytope(format!("facet {r} is active at no vertex (redundant)")));
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[AffineFunctional] {
        &self.facets
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    /// All facet values `ℓ_r(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.facets.iter().map(|f| f.eval(x)).collect()
    }

    pub fn min_facet_value(&self, x: &[f64]) -> f64 {
        self.facets.iter().map(|f| f.eval(x)).fold(f64::INFINITY, f64::min)
    }

    /// Length scale used for activation: `max |λ_r|`, at least 1.
    pub fn length_scale(&self) -> f64 {
        self.facets.iter().map(|f| f.offset.abs()).fold(1.0, f64::max)
    }

    pub fn default_tol(&self) -> f64 {
        ACTIVATION_TOL * self.length_scale()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn all_integral(&self) -> bool {
        self.facets.iter().all(AffineFunctional::integral)
    }

    /// Average of the vertices; an interior point of the polytope.
    pub fn centroid(&self) -> Vec<f64> {
        mean_point(self.vertices.iter().map(|v| v.point.as_slice()), self.dim)
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for i in 0..self.dim {
                lo[i] = lo[i].min(v.point[i]);
                hi[i] = hi[i].max(v.point[i]);
            }
        }
        (lo, hi)
    }

    /// Images of the polytope under `x ↦ Ux` for unimodular `U`: normals go
    /// to `U^{-T}μ`, so that `ℓ'_r(Ux) = ℓ_r(x)`.
    pub fn transformed(&self, u: &IntMatrix) -> Result<Self> {
        if u.rows() != self.dim || u.cols() != self.dim {
            return Err(Error::Domain("transform has the wrong size".into()));
        }
        let inv_t = lattice::unimodular_inverse(u)?.transpose();
        let facets = self
            .facets
            .iter()
            .map(|f| AffineFunctional::new(inv_t.mul_vec(&f.normal)?, f.label, f.offset))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, facets)
    }

    fn check_bounded(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidPolytope("no vertices: region is empty or contains a line".into()));
        }
        // simple polyhedron with a vertex is bounded iff every edge leaving
        // every vertex is blocked by some facet
        for v in &self.vertices {
            let active: Vec<usize> = v.face.active.iter().copied().collect();
            let a = weight_matrix(&self.facets, &active, self.dim);
            let inv = a
                .try_inverse()
                .ok_or_else(|| Error::InvalidPolytope(format!("dependent normals at vertex {:?}", v.point)))?;
            for e in 0..self.dim {
                let dir = inv.column(e);
                let blocked = self.facets.iter().enumerate().any(|(r, f)| {
                    !v.face.active.contains(&r)
                        && f.weight().iter().zip(dir.iter()).map(|(w, d)| w * d).sum::<f64>() < -1e-12
                });
                if !blocked {
                    return Err(Error::InvalidPolytope(format!(
                        "unbounded edge leaving vertex {:?} (facets {:?})",
                        v.point, active
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_interior(&self) -> Result<()> {
        let c = self.centroid();
        if self.min_facet_value(&c) <= self.default_tol() {
            return Err(Error::InvalidPolytope("polytope has empty interior".into()));
        }
        Ok(())
    }
}

fn mean_point<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for p in points {
        for (a, x) in acc.iter_mut().zip(p) {
            *a += x;
        }
        count += 1;
    }
    acc.iter().map(|a| a / count.max(1) as f64).collect()
}

fn weight_matrix(facets: &[AffineFunctional], idx: &[usize], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), dim, |i, j| facets[idx[i]].label * facets[idx[i]].normal[j] as f64)
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx)?;
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return Ok(()) };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn enumerate_vertices(dim: usize, facets: &[AffineFunctional]) -> Result<Vec<Vertex>> {
    let scale = facets.iter().map(|f| f.offset.abs()).fold(1.0, f64::max);
    let tol = ACTIVATION_TOL * scale;
    let mut vertices: Vec<Vertex> = Vec::new();

    for_each_subset(facets.len(), dim, |subset| {
        let a = weight_matrix(facets, subset, dim);
        let b = DVector::from_iterator(dim, subset.iter().map(|&r| facets[r].offset));
        let Some(x) = a.lu().solve(&b) else { return Ok(()) };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(());
        }
        let values: Vec<f64> = facets.iter().map(|f| f.eval(&x)).collect();
        if values.iter().any(|&v| v < -tol) {
            return Ok(());
        }
        let active: BTreeSet<usize> =
            values.iter().enumerate().filter(|(_, v)| v.abs() <= tol).map(|(r, _)| r).collect();
        if active.len() != dim {
            return Err(Error::InvalidPolytope(format!(
                "vertex {x:?} has {} active facets {active:?}, expected {dim} (not simple)",
                active.len()
            )));
        }
        if active.iter().copied().eq(subset.iter().copied()) {
            vertices.push(Vertex { point: x.clone(), face: FaceDescriptor { active, point: Some(x) } });
        }
        Ok(())
    })?;
    Ok(vertices)
}

/// Labeled simplex `P^n_m`: `ℓ_r = m_r(scale + x_r)` for `r ≤ n` and
/// `ℓ_{n+1} = m_{n+1}(scale − Σx_j)`.
pub fn make_labeled_simplex(n: usize, labels: &[f64], scale: f64) -> Result<LabeledPolytope> {
    if n == 0 {
        return Err(Error::Domain("simplex dimension must be positive".into()));
    }
    if labels.len() != n + 1 {
        return Err(Error::Domain(format!("expected {} labels, got {}", n + 1, labels.len())));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    let mut facets = Vec::with_capacity(n + 1);
    for (r, &m) in labels.iter().enumerate().take(n) {
        let mut normal = vec![0; n];
        normal[r] = 1;
        facets.push(AffineFunctional::new(normal, m, -m * scale)?);
    }
    facets.push(AffineFunctional::new(vec![-1; n], labels[n], -labels[n] * scale)?);
    LabeledPolytope::new(n, facets)
}

/// True when the polytope has the facet layout produced by
/// [`make_labeled_simplex`]; returns the labels and scale.
pub fn as_labeled_simplex(p: &LabeledPolytope) -> Option<(Vec<f64>, f64)> {
    let n = p.dim();
    if p.num_facets() != n + 1 {
        return None;
    }
    let f = p.facets();
    let scale = -f[0].offset / f[0].label;
    for (r, fr) in f.iter().enumerate() {
        let expect: Vec<i64> = if r < n { (0..n).map(|j| i64::from(j == r)).collect() } else { vec![-1; n] };
        if fr.normal != expect || ((-fr.offset / fr.label) - scale).abs() > 1e-12 * scale.abs().max(1.0) {
            return None;
        }
    }
    Some((f.iter().map(|f| f.label).collect(), scale))
}

pub fn vertices(p: &LabeledPolytope) -> &[Vertex] {
    p.vertices()
}

/// Facets active at `x`: `|ℓ_r(x)| ≤ tol`.
pub fn active_facets(p: &LabeledPolytope, x: &[f64], tol: f64) -> Result<FaceDescriptor> {
    if x.len() != p.dim() {
        return Err(Error::Domain(format!("point has length {}, expected {}", x.len(), p.dim())));
    }
    let values = p.eval(x);
    if let Some((r, v)) = values.iter().enumerate().find(|(_, &v)| v < -tol) {
        return Err(Error::Domain(format!("point {x:?} lies outside facet {r} (ℓ = {v:e})")));
    }
    let active = values.iter().enumerate().filter(|(_, v)| v.abs() <= tol).map(|(r, _)| r).collect();
    Ok(FaceDescriptor { active, point: Some(x.to_vec()) })
}

/// Order of the orbifold structure group at a face: the index of the
/// lattice spanned by `{m_r μ_r : r active}` inside its rational
/// saturation in ℤⁿ. Equals the product of the Smith invariant factors of
/// the generator matrix.
pub fn orbifold_group_order(p: &LabeledPolytope, face: &FaceDescriptor) -> Result<u64> {
    let mut columns = Vec::with_capacity(face.active.len());
    for &r in &face.active {
        let f = p.facets().get(r).ok_or_else(|| Error::Domain(format!("no facet {r}")))?;
        let m = f
            .integral_label()
            .ok_or_else(|| Error::Unsupported(format!("facet {r} has non-integral label {}", f.label())))?;
        columns.push(f.normal().iter().map(|&v| v.checked_mul(m).ok_or(Error::Overflow)).collect::<Result<Vec<_>>>()?);
    }
    if columns.is_empty() {
        return Ok(1);
    }
    let gens = IntMatrix::from_columns(p.dim(), &columns);
    let factors = lattice::smith_invariants(&gens)?;
    if factors.len() != columns.len() {
        return Err(Error::InvalidPolytope(format!(
            "normals of facets {:?} are linearly dependent (not a simple face)",
            face.active
        )));
    }
    factors.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64).ok_or(Error::Overflow))
}

/// Weighted projective space weights `a` to simplex labels
/// `m_r = Π_{k≠r} a_k` and the covering degree `(Π a_k)^{n−1}`.
pub fn weighted_to_labeled(a: &[i64]) -> Result<(Vec<i64>, u64)> {
    if a.len() < 2 {
        return Err(Error::Domain("need at least two weights".into()));
    }
    if let Some(&w) = a.iter().find(|&&w| w <= 0) {
        return Err(Error::Domain(format!("weights must be positive, got {w}")));
    }
    if lattice::gcd_all(a) != 1 {
        return Err(Error::Domain(format!("weights {a:?} are not coprime")));
    }
    let n = a.len() - 1;
    let labels = (0..a.len())
        .map(|r| {
            a.iter()
                .enumerate()
                .filter(|&(k, _)| k != r)
                .try_fold(1i64, |acc, (_, &w)| acc.checked_mul(w).ok_or(Error::Overflow))
        })
        .collect::<Result<Vec<_>>>()?;
    let prod = a.iter().try_fold(1u64, |acc, &w| acc.checked_mul(w as u64).ok_or(Error::Overflow))?;
    let degree = prod.checked_pow((n - 1) as u32).ok_or(Error::Overflow)?;
    Ok((labels, degree))
}

/// β (columns `m_r μ_r`) and a ℤ-basis of its kernel.
pub fn beta_and_kernel(p: &LabeledPolytope) -> Result<LatticeReport> {
    let columns = p
        .facets()
        .iter()
        .enumerate()
        .map(|(r, f)| {
            let m = f
                .integral_label()
                .ok_or_else(|| Error::Unsupported(format!("facet {r} has non-integral label {}", f.label())))?;
            f.normal().iter().map(|&v| v.checked_mul(m).ok_or(Error::Overflow)).collect()
        })
        .collect::<Result<Vec<Vec<i64>>>>()?;
    let beta = IntMatrix::from_columns(p.dim(), &columns);
    if lattice::rank(&beta)? != p.dim() {
        return Err(Error::InvalidPolytope("β is not surjective over ℚ".into()));
    }
    let kernel_basis = lattice::integer_kernel_basis(&beta)?;
    Ok(LatticeReport { beta, kernel_basis })
}

/// Cell-centred lattice over the bounding box with `resolution` points per
/// axis, keeping the points where `min_r ℓ_r ≥ margin`. The first
/// coordinate varies slowest.
pub fn interior_grid(p: &LabeledPolytope, resolution: usize, margin: f64) -> Result<Vec<Vec<f64>>> {
    if resolution == 0 {
        return Err(Error::Domain("grid resolution must be positive".into()));
    }
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::Domain(format!("margin must be positive, got {margin}")));
    }
    let (lo, hi) = p.bounding_box();
    let n = p.dim();
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let h = (hi[i] - lo[i]) / resolution as f64;
            (0..resolution).map(|k| lo[i] + (k as f64 + 0.5) * h).collect()
        })
        .collect();

    let total = resolution.checked_pow(n as u32).ok_or(Error::Overflow)?;
    let mut points = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let x: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| axes[i][k]).collect();
        let v = p.min_facet_value(&x);
        best = best.max(v);
        if v >= margin {
            points.push(x);
        }
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid { margin, max_margin: best.max(0.0) });
    }
    Ok(points)
}

/// On-disk polytope format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeJson {
    pub dim: usize,
    pub facets: Vec<FacetJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetJson {
    pub normal: Vec<i64>,
    pub label: f64,
    pub offset: f64,
}

impl From<&LabeledPolytope> for PolytopeJson {
    fn from(p: &LabeledPolytope) -> Self {
        Self {
            dim: p.dim,
            facets: p
                .facets
                .iter()
                .map(|f| FacetJson { normal: f.normal.clone(), label: f.label, offset: f.offset })
                .collect(),
        }
    }
}

impl TryFrom<PolytopeJson> for LabeledPolytope {
    type Error = Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        let facets = j
            .facets
            .into_iter()
            .map(|f| AffineFunctional::new(f.normal, f.label, f.offset))
            .collect::<Result<Vec<_>>>()?;
        LabeledPolytope::new(j.dim, facets)
    }
}

impl LabeledPolytope {
    pub fn from_json(s: &str) -> Result<Self> {
        let j: PolytopeJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        j.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PolytopeJson::from(self)).expect("polytope serializes")
    }
}
