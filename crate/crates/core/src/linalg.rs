//! Dense and sparse linear algebra used by the assembly and eigensolve paths.
//!
//! Everything here is deterministic and single-threaded: reductions run in
//! fixed index order so that results are bitwise reproducible.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "tr_mul_vec dimension");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn tr_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out.row_mut(i).iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: T, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Largest entrywise asymmetry relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let scale = self.max_abs().max(T::min_positive_value());
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let v = half * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Self {
        let mut trip: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < rows && c < cols, "triplet out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &Mat<T>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != T::zero() {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), trip)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "csr mul_vec dimension");
        (0..self.rows)
            .map(|i| self.row(i).fold(T::zero(), |s, (j, v)| s + v * x[j]))
            .collect()
    }

    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "csr tr_mul_vec dimension");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * xi;
            }
        }
        out
    }

    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.mul_vec(y))
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        self.bilinear(x, x)
    }

    pub fn to_dense(&self) -> Mat<T> {
        let mut m = Mat::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// `Σ cₖ·Mₖ` over matrices of equal shape.
    pub fn linear_combination(terms: &[(T, &CsrMatrix<T>)]) -> Self {
        let (rows, cols) = terms
            .first()
            .map_or((0, 0), |(_, m)| (m.rows, m.cols));
        let trip = terms.iter().flat_map(|&(c, m)| {
            assert_eq!((m.rows, m.cols), (rows, cols), "shape mismatch");
            m.triplets().map(move |(i, j, v)| (i, j, c * v))
        });
        Self::from_triplets(rows, cols, trip)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn asymmetry(&self) -> T {
        let scale = self.max_abs().max(T::min_positive_value());
        let mut worst = T::zero();
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst / scale
    }

    /// Half-bandwidth: `max |i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }
}

/// Banded `L·D·Lᵀ` factorization of a symmetric matrix without pivoting.
///
/// Optionally bordered by one extra row/column `[S b; bᵀ 0]`, which is how
/// constrained pencils are counted. The pivots give the inertia by
/// Sylvester's law, and when all of them are positive the factor doubles
/// as a Cholesky solver.
#[derive(Debug, Clone)]
pub struct BandedLdl<T> {
    n: usize,
    bw: usize,
    // lower band, row-major: entry (i, j) for j in [i - bw, i) at i * bw + (j + bw - i)
    lower: Vec<T>,
    pivots: Vec<T>,
    border: Option<(Vec<T>, T)>,
}

impl<T: Real> BandedLdl<T> {
    pub fn factor(mat: &CsrMatrix<T>) -> Self {
        Self::factor_impl(mat, None)
    }

    pub fn factor_bordered(mat: &CsrMatrix<T>, border: &[T]) -> Self {
        Self::factor_impl(mat, Some(border))
    }

    fn factor_impl(mat: &CsrMatrix<T>, border: Option<&[T]>) -> Self {
        let n = mat.rows();
        let bw = mat.bandwidth();
        let mut lower = vec![T::zero(); n * bw.max(1)];
        let mut pivots = vec![T::zero(); n];
        let idx = |i: usize, j: usize| i * bw + (j + bw - i);
        let tiny = T::epsilon() * mat.max_abs().max(T::one());

        let mut row_buf = vec![T::zero(); bw + 1];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            row_buf.iter_mut().for_each(|v| *v = T::zero());
            let mut diag = T::zero();
            for (j, v) in mat.row(i) {
                if j >= lo && j < i {
                    row_buf[j - lo] = v;
                } else if j == i {
                    diag = v;
                }
            }
            for j in lo..i {
                let jlo = j.saturating_sub(bw).max(lo);
                let mut s = row_buf[j - lo];
                for k in jlo..j {
                    s -= lower[idx(i, k)] * lower[idx(j, k)] * pivots[k];
                }
                lower[idx(i, j)] = s / pivots[j];
            }
            let mut d = diag;
            for k in lo..i {
                let l = lower[idx(i, k)];
                d -= l * l * pivots[k];
            }
            if d.abs() < tiny {
                d = if d < T::zero() { -tiny } else { tiny };
            }
            pivots[i] = d;
        }

        let border = border.map(|b| {
            assert_eq!(b.len(), n, "border length");
            let mut lb = vec![T::zero(); n];
            for k in 0..n {
                let mut s = b[k];
                for j in k.saturating_sub(bw)..k {
                    s -= lb[j] * lower[idx(k, j)] * pivots[j];
                }
                lb[k] = s / pivots[k];
            }
            let mut d = T::zero();
            for k in 0..n {
                d -= lb[k] * lb[k] * pivots[k];
            }
            (lb, d)
        });

        Self {
            n,
            bw,
            lower,
            pivots,
            border,
        }
    }

    /// Number of negative pivots, including the border pivot if present.
    pub fn negative_count(&self) -> usize {
        let core = self.pivots.iter().filter(|&&d| d < T::zero()).count();
        core + self
            .border
            .as_ref()
            .map_or(0, |(_, d)| usize::from(*d < T::zero()))
    }

    pub fn is_positive_definite(&self) -> bool {
        self.border.is_none() && self.pivots.iter().all(|&d| d > T::zero())
    }

    pub fn pivots(&self) -> &[T] {
        &self.pivots
    }

    /// Solves `S x = b` (unbordered factor only).
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert!(self.border.is_none(), "solve on bordered factor");
        assert_eq!(b.len(), self.n);
        let bw = self.bw;
        let idx = |i: usize, j: usize| i * bw + (j + bw - i);
        let mut x = b.to_vec();
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..i {
                let l = self.lower[idx(i, j)];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in 0..self.n {
            x[i] /= self.pivots[i];
        }
        for i in (0..self.n).rev() {
            for j in i.saturating_sub(bw)..i {
                let l = self.lower[idx(i, j)];
                x[j] = x[j] - l * x[i];
            }
        }
        x
    }
}

/// Dense lower Cholesky factor `M = L Lᵀ`.
pub fn cholesky<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    let n = m.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Numeric(format!(
                "matrix not positive definite (pivot {j} = {d})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            let (ri, rj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`, row-oriented.
fn forward_solve_rows<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik == T::zero() {
                continue;
            }
            let (head, tail) = x.data.split_at_mut(i * x.cols);
            let src = &head[k * x.cols..(k + 1) * x.cols];
            for (t, &s) in tail[..x.cols].iter_mut().zip(src) {
                *t -= lik * s;
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`, row-oriented.
fn backward_solve_rows_tr<T: Real>(l: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[(k, i)];
            if lki == T::zero() {
                continue;
            }
            let (head, tail) = x.data.split_at_mut(k * x.cols);
            let dst = &mut head[i * x.cols..(i + 1) * x.cols];
            for (t, &s) in dst.iter_mut().zip(&tail[..x.cols]) {
                *t -= lki * s;
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    x
}

/// Solves the dense system `A x = b` by LU with partial pivoting.
pub fn lu_solve<T: Real>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)] == T::zero() || !m[(p, k)].is_finite() {
            return Err(Error::Numeric(format!("singular matrix at column {k}")));
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        let piv = m[(k, k)];
        for i in k + 1..n {
            let f = m[(i, k)] / piv;
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let v = m[(k, j)];
                m[(i, j)] -= f * v;
            }
            let xk = x[k];
            x[i] -= f * xk;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Ok(x)
}

/// Eigen-decomposition of a real symmetric matrix: eigenvalues ascending,
/// orthonormal eigenvectors as columns.
///
/// Householder tridiagonalization followed by the implicit QL iteration.
pub fn symmetric_eigen<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let mut v = a.clone();
    v.symmetrize();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

fn tridiagonalize<T: Real>(v: &mut Mat<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
                v[(j, i)] = zero;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[(k, j)] -= upd;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = zero;
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

fn tridiagonal_ql<T: Real>(v: &mut Mat<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    const MAX_SWEEPS: usize = 60;
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::Numeric(format!(
                        "QL iteration did not converge for eigenvalue {l} (off-diagonal {})",
                        e[l]
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = v.row_mut(k);
                        let hk = row[i + 1];
                        row[i + 1] = s * row[i] + c * hk;
                        row[i] = c * row[i] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}

/// Symmetric-definite generalized eigenproblem `A w = λ M w`.
///
/// Reduces to standard form with the Cholesky factor of `M`; eigenvectors
/// come back `M`-orthonormal, eigenvalues ascending.
pub fn generalized_symmetric_eigen<T: Real>(a: &Mat<T>, m: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.rows();
    assert_eq!((n, n), (m.rows(), m.cols()), "pencil shapes differ");
    let l = cholesky(m)?;
    let x = forward_solve_rows(&l, a);
    let mut c = forward_solve_rows(&l, &x.transpose());
    c.symmetrize();
    let (values, q) = symmetric_eigen(&c)?;
    let w = backward_solve_rows_tr(&l, &q);
    Ok((values, w))
}
