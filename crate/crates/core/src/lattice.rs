//! Exact integer linear algebra: Smith invariant factors, integer kernels,
//! and the gcd helpers used for lattice indices.
//!
//! Entries are stored as `i64`; elimination runs in `i128` and reports
//! [`Error::Overflow`] instead of wrapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<i64>>", try_from = "Vec<Vec<i64>>")]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from its columns, all of which must have equal length.
    pub fn from_columns(rows: usize, columns: &[Vec<i64>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "column length mismatch");
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Domain("ragged integer matrix".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[i64]>::to_vec).collect()
    }

    /// Exact matrix-vector product.
    pub fn mul_vec(&self, v: &[i64]) -> Result<Vec<i64>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let s: i128 = (0..self.cols).map(|j| self.get(i, j) as i128 * v[j] as i128).sum();
                i64::try_from(s).map_err(|_| Error::Overflow)
            })
            .collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        assert_eq!(self.cols, other.rows);
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let s: i128 = (0..self.cols).map(|k| self.get(i, k) as i128 * other.get(k, j) as i128).sum();
                out.set(i, j, i64::try_from(s).map_err(|_| Error::Overflow)?);
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    fn to_wide(&self) -> Vec<Vec<i128>> {
        self.to_rows().into_iter().map(|r| r.into_iter().map(i128::from).collect()).collect()
    }
}

impl From<IntMatrix> for Vec<Vec<i64>> {
    fn from(m: IntMatrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntMatrix::from_rows(&rows)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a as i64
}

/// Gcd of all entries; 0 for the zero vector.
pub fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0, |g, &x| gcd(g, x))
}

fn narrow(v: i128) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::Overflow)
}

fn checked(v: Option<i128>) -> Result<i128> {
    v.filter(|x| x.unsigned_abs() <= i64::MAX as u128).ok_or(Error::Overflow)
}

/// Nonzero invariant factors `d_1 | d_2 | ... | d_r` of the Smith normal
/// form, all positive. Their count is the rank of the matrix.
pub fn smith_invariants(mat: &IntMatrix) -> Result<Vec<i64>> {
    let mut a = mat.to_wide();
    let (rows, cols) = (mat.rows(), mat.cols());
    let mut factors = Vec::new();

    for t in 0..rows.min(cols) {
        // smallest nonzero entry of the trailing block becomes the pivot
        let Some((pi, pj)) = smallest_entry(&a, t) else { break };
        a.swap(t, pi);
        for row in a.iter_mut() {
            row.swap(t, pj);
        }

        loop {
            let mut dirty = false;
            for i in t + 1..rows {
                if a[i][t] != 0 {
                    let q = a[i][t] / a[t][t];
                    for j in t..cols {
                        a[i][j] = checked(a[i][j].checked_sub(q * a[t][j]))?;
                    }
                    if a[i][t] != 0 {
                        dirty = true;
                    }
                }
            }
            for j in t + 1..cols {
                if a[t][j] != 0 {
                    let q = a[t][j] / a[t][t];
                    for i in t..rows {
                        a[i][j] = checked(a[i][j].checked_sub(q * a[i][t]))?;
                    }
                    if a[t][j] != 0 {
                        dirty = true;
                    }
                }
            }
            if !dirty {
                // pivot must divide the whole trailing block
                let bad = (t + 1..rows)
                    .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
                    .find(|&(i, j)| a[i][j] % a[t][t] != 0);
                match bad {
                    None => break,
                    Some((i, _)) => {
                        for j in t..cols {
                            a[t][j] = checked(a[t][j].checked_add(a[i][j]))?;
                        }
                        continue;
                    }
                }
            }
            // move the smallest remaining entry of row/column t to the pivot
            let mut best = (t, t);
            for i in t..rows {
                if a[i][t] != 0 && a[i][t].abs() < a[best.0][best.1].abs() {
                    best = (i, t);
                }
            }
            for j in t..cols {
                if a[t][j] != 0 && a[t][j].abs() < a[best.0][best.1].abs() {
                    best = (t, j);
                }
            }
            if best.1 == t {
                a.swap(t, best.0);
            } else {
                for row in a.iter_mut() {
                    row.swap(t, best.1);
                }
            }
        }
        factors.push(narrow(a[t][t].abs())?);
    }
    Ok(factors)
}

fn smallest_entry(a: &[Vec<i128>], t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, row) in a.iter().enumerate().skip(t) {
        for (j, &v) in row.iter().enumerate().skip(t) {
            if v != 0 && best.is_none_or(|(bi, bj)| v.abs() < a[bi][bj].abs()) {
                best = Some((i, j));
            }
        }
    }
    best
}

pub fn rank(mat: &IntMatrix) -> Result<usize> {
    Ok(smith_invariants(mat)?.len())
}

/// A ℤ-basis of `ker(mat) ∩ ℤ^cols`, found by unimodular column reduction.
/// Each basis vector is sign-normalized so its first nonzero entry is
/// positive.
pub fn integer_kernel_basis(mat: &IntMatrix) -> Result<Vec<Vec<i64>>> {
    let mut a = mat.to_wide();
    let (rows, cols) = (mat.rows(), mat.cols());
    let mut v = IntMatrix::identity(cols).to_wide();
    let mut pivot = 0;

    for i in 0..rows {
        if pivot == cols {
            break;
        }
        loop {
            let best = (pivot..cols).filter(|&j| a[i][j] != 0).min_by_key(|&j| a[i][j].abs());
            let Some(b) = best else { break };
            swap_cols(&mut a, pivot, b);
            swap_cols(&mut v, pivot, b);
            let mut done = true;
            for j in pivot + 1..cols {
                if a[i][j] != 0 {
                    let q = a[i][j] / a[i][pivot];
                    col_axpy(&mut a, j, pivot, q)?;
                    col_axpy(&mut v, j, pivot, q)?;
                    if a[i][j] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if a[i][pivot] != 0 {
            pivot += 1;
        }
    }

    (pivot..cols)
        .map(|j| {
            let mut k: Vec<i64> = v.iter().map(|row| narrow(row[j])).collect::<Result<_>>()?;
            if k.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                k.iter_mut().for_each(|x| *x = -*x);
            }
            Ok(k)
        })
        .collect()
}

fn swap_cols(a: &mut [Vec<i128>], p: usize, q: usize) {
    for row in a.iter_mut() {
        row.swap(p, q);
    }
}

/// column `dst` -= q * column `src`
fn col_axpy(a: &mut [Vec<i128>], dst: usize, src: usize, q: i128) -> Result<()> {
    for row in a.iter_mut() {
        let prod = row[src].checked_mul(q).ok_or(Error::Overflow)?;
        row[dst] = checked(row[dst].checked_sub(prod))?;
    }
    Ok(())
}

/// Exact determinant of a square integer matrix (fraction-free Bareiss).
pub fn determinant(mat: &IntMatrix) -> Result<i64> {
    assert_eq!(mat.rows(), mat.cols());
    let n = mat.rows();
    if n == 0 {
        return Ok(1);
    }
    let mut a = mat.to_wide();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| a[i][k] != 0) else { return Ok(0) };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = a[i][j]
                    .checked_mul(a[k][k])
                    .zip(a[i][k].checked_mul(a[k][j]))
                    .and_then(|(x, y)| x.checked_sub(y))
                    .ok_or(Error::Overflow)?;
                a[i][j] = num / prev;
            }
        }
        prev = a[k][k];
    }
    narrow(sign * a[n - 1][n - 1])
}

/// Inverse of a unimodular integer matrix.
pub fn unimodular_inverse(mat: &IntMatrix) -> Result<IntMatrix> {
    let n = mat.rows();
    if n != mat.cols() {
        return Err(Error::Domain("unimodular inverse needs a square matrix".into()));
    }
    let det = determinant(mat)?;
    if det.abs() != 1 {
        return Err(Error::Domain(format!("matrix has determinant {det}, not ±1")));
    }
    // inverse = adj / det, with adj built from (n-1)-minors
    let mut inv = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let minor_rows: Vec<Vec<i64>> = (0..n)
                .filter(|&r| r != j)
                .map(|r| (0..n).filter(|&c| c != i).map(|c| mat.get(r, c)).collect())
                .collect();
            let minor = if n == 1 { 1 } else { determinant(&IntMatrix::from_rows(&minor_rows)?)? };
            let cof = if (i + j) % 2 == 0 { minor } else { -minor };
            inv.set(i, j, cof * det);
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn smith_of_diagonal() {
        assert_eq!(smith_invariants(&m(&[&[2, 0], &[0, 2]])).unwrap(), vec![2, 2]);
        assert_eq!(smith_invariants(&m(&[&[2, 0], &[0, 3]])).unwrap(), vec![1, 6]);
    }

    #[test]
    fn smith_detects_rank() {
        assert_eq!(rank(&m(&[&[1, 2], &[2, 4]])).unwrap(), 1);
        assert_eq!(smith_invariants(&m(&[&[0, 0], &[0, 0]])).unwrap(), Vec::<i64>::new());
        assert_eq!(smith_invariants(&m(&[&[0, 1], &[-2, -2]])).unwrap(), vec![1, 2]);
    }

    #[test]
    fn smith_product_is_abs_det() {
        let a = m(&[&[4, 7, 2], &[1, -3, 5], &[6, 0, 9]]);
        let prod: i64 = smith_invariants(&a).unwrap().iter().product();
        assert_eq!(prod, determinant(&a).unwrap().abs());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(integer_kernel_basis(&m(&[&[1, 0, -1], &[0, 1, -1]])).unwrap(), vec![vec![1, 1, 1]]);
        assert_eq!(integer_kernel_basis(&m(&[&[1, -2]])).unwrap(), vec![vec![2, 1]]);
        assert_eq!(integer_kernel_basis(&m(&[&[2, 0, -1], &[0, 2, -1]])).unwrap(), vec![vec![1, 1, 2]]);
    }

    #[test]
    fn unimodular_inverse_roundtrip() {
        let u = m(&[&[2, 1], &[1, 1]]);
        let inv = unimodular_inverse(&u).unwrap();
        assert_eq!(u.mul(&inv).unwrap(), IntMatrix::identity(2));
        assert!(unimodular_inverse(&m(&[&[2, 0], &[0, 1]])).is_err());
    }

    #[test]
    fn gcd_helpers() {
        assert_eq!(gcd(-4, 6), 2);
        assert_eq!(gcd_all(&[0, -3, 9]), 3);
        assert_eq!(gcd_all(&[]), 0);
    }
}
