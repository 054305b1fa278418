//! Oracles and samplers shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use toric_kahler::polytope::{make_labeled_simplex, LabeledPolytope};
use toric_kahler::potential::{jet, PotentialExpr};

/// Uniform point in the unit-scale simplex `P^n` (`x_r ≥ −1`, `Σx ≤ 1`)
/// whose barycentric coordinates are all at least `min_bary`.
pub fn random_simplex_point(rng: &mut StdRng, n: usize, min_bary: f64) -> Vec<f64> {
    loop {
        // sorted uniforms give uniform barycentric coordinates
        let mut cuts: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let bary: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        if bary.iter().all(|&b| b >= min_bary) {
            // vertices: v_0 = (−1,…,−1), v_i = v_0 + (n+1) e_i
            return (0..n).map(|i| -1.0 + (n as f64 + 1.0) * bary[i + 1]).collect();
        }
    }
}

pub fn random_labels(rng: &mut StdRng, n: usize, max: u32) -> Vec<f64> {
    (0..=n).map(|_| rng.gen_range(1..=max) as f64).collect()
}

pub fn simplex(m: &[f64]) -> LabeledPolytope {
    make_labeled_simplex(m.len() - 1, m, 1.0).unwrap()
}

/// Independent n×n solve by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Brute-force vertices: intersect every n-subset of facets, keep feasible
/// points, deduplicate.
pub fn brute_force_vertices(p: &LabeledPolytope) -> Vec<Vec<f64>> {
    let n = p.dim();
    let d = p.num_facets();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let idx: Vec<usize> = (0..d).filter(|r| mask & (1 << r) != 0).collect();
        let a: Vec<Vec<f64>> = idx.iter().map(|&r| p.facets()[r].weight()).collect();
        let b: Vec<f64> = idx.iter().map(|&r| p.facets()[r].offset()).collect();
        let Some(x) = solve(a, b) else { continue };
        if p.facets().iter().all(|f| f.eval(&x) >= -1e-9) && !out.iter().any(|v| dist(v, &x) < 1e-9) {
            out.push(x);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Central-difference derivative of the order-`k` jet component along
/// axis `i`, producing an order-`k+1` component. `component(x)` returns
/// the flattened order-k tensor.
pub fn fd_component(component: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    component(&xp).iter().zip(component(&xm)).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

/// Order-`k` jet component flattened in row-major index order.
pub fn jet_component(expr: &PotentialExpr, x: &[f64], k: usize) -> Vec<f64> {
    let j = jet(expr, x, k).unwrap();
    let n = x.len();
    match k {
        0 => vec![j.value],
        1 => j.gradient,
        2 => (0..n * n).map(|t| j.hessian[(t / n, t % n)]).collect(),
        3 => (0..n * n * n).map(|t| j.third.get(&[t / (n * n), (t / n) % n, t % n])).collect(),
        4 => (0..n.pow(4)).map(|t| j.fourth.get(&[t / n.pow(3), (t / (n * n)) % n, (t / n) % n, t % n])).collect(),
        _ => unreachable!(),
    }
}

/// Worst relative mismatch between the analytic order-`k` jet and the
/// central difference of the order-`k−1` jet.
pub fn jet_fd_mismatch(expr: &PotentialExpr, x: &[f64], k: usize, h: f64) -> f64 {
    let n = x.len();
    let analytic = jet_component(expr, x, k);
    let mut worst = 0.0f64;
    for i in 0..n {
        let fd = fd_component(|y| jet_component(expr, y, k - 1), x, i, h);
        // analytic entries with leading index i
        let block = analytic.len() / n;
        for (t, v) in fd.iter().enumerate() {
            let a = analytic[i * block + t];
            worst = worst.max((a - v).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Polytope-free point check.
pub fn all_positive(p: &LabeledPolytope, x: &[f64], margin: f64) -> bool {
    p.min_facet_value(x) >= margin
}
