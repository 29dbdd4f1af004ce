//! Dense real linear algebra for small matrices.
//!
//! Everything here is sized for state dimensions up to [`MAX_EIG_DIM`]; the
//! algorithms are the textbook dense ones (partial-pivot LU, Householder
//! Hessenberg reduction with Francis double-shift QR, cyclic Jacobi for
//! symmetric problems, column-pivoted QR for rank).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest matrix accepted by [`eigenvalues`].
pub const MAX_EIG_DIM: usize = 16;

/// Relative pivot threshold below which [`solve_linear`] reports a singular matrix.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-13;

/// Default relative tolerance for [`rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrices and vectors must have at least one entry")]
    Empty,
    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),
    #[error("matrix is not symmetric (asymmetry {asymmetry:e} relative to norm {norm:e})")]
    NotSymmetric { asymmetry: f64, norm: f64 },
    #[error("singular matrix: pivot {pivot:e} in column {column} below threshold")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("eigenvalue iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("dimension {0} exceeds the supported maximum of {MAX_EIG_DIM}")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LinalgError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Zero matrix. Panics on a zero dimension.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(LinalgError::Empty);
        }
        check_finite(diag)?;
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        Ok(m)
    }

    /// A single-row matrix.
    pub fn row_vector(v: &[f64]) -> Result<Self> {
        Self::new(1, v.len(), v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Mat, s: f64) -> Result<Mat> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &ColVec) -> Result<ColVec> {
        if self.cols != v.dim() {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.mul_slice_into(v.as_slice(), &mut out);
        Ok(ColVec(out))
    }

    /// `out = self * x` without shape checks beyond debug assertions.
    #[inline]
    pub fn mul_slice_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetric_part(&self) -> Result<Mat> {
        self.require_square()?;
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        Ok(s)
    }

    pub fn vstack(blocks: &[&Mat]) -> Result<Mat> {
        let first = blocks.first().ok_or(LinalgError::Empty)?;
        let cols = first.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(LinalgError::DimensionMismatch(format!(
                    "vstack of {}-column and {}-column blocks",
                    cols, b.cols
                )));
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub(crate) fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    fn same_shape(&self, other: &Mat) -> Result<()> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries((0..self.rows).map(|i| self.row(i))).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.to_rows()
    }
}

// Operator forms panic on shape mismatch; the checked methods return errors.
impl Add for &Mat {
    type Output = Mat;

    fn add(self, rhs: &Mat) -> Mat {
        self.add_scaled(rhs, 1.0).expect("matrix shapes differ")
    }
}

impl Sub for &Mat {
    type Output = Mat;

    fn sub(self, rhs: &Mat) -> Mat {
        self.add_scaled(rhs, -1.0).expect("matrix shapes differ")
    }
}

impl Mul for &Mat {
    type Output = Mat;

    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("inner dimensions differ")
    }
}

impl Mul<&ColVec> for &Mat {
    type Output = ColVec;

    fn mul(self, rhs: &ColVec) -> ColVec {
        self.mul_vec(rhs).expect("inner dimensions differ")
    }
}

/// Column vector with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ColVec(Vec<f64>);

impl ColVec {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(LinalgError::Empty);
        }
        check_finite(&data)?;
        Ok(Self(data))
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "vector dimension must be positive");
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &ColVec) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> ColVec {
        ColVec(self.0.iter().map(|v| v * s).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

impl Index<usize> for ColVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ColVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Debug for ColVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ColVec{:?}", self.0)
    }
}

impl TryFrom<Vec<f64>> for ColVec {
    type Error = LinalgError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ColVec::new(v)
    }
}

impl From<ColVec> for Vec<f64> {
    fn from(v: ColVec) -> Self {
        v.0
    }
}

impl Add for &ColVec {
    type Output = ColVec;

    fn add(self, rhs: &ColVec) -> ColVec {
        assert_eq!(self.dim(), rhs.dim(), "vector lengths differ");
        ColVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ColVec {
    type Output = ColVec;

    fn sub(self, rhs: &ColVec) -> ColVec {
        assert_eq!(self.dim(), rhs.dim(), "vector lengths differ");
        ColVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &ColVec {
    type Output = ColVec;

    fn neg(self) -> ColVec {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexScalar {
    pub re: f64,
    pub im: f64,
}

impl ComplexScalar {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl fmt::Display for ComplexScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im >= 0.0 {
            write!(f, "{:.6e}+{:.6e}i", self.re, self.im)
        } else {
            write!(f, "{:.6e}-{:.6e}i", self.re, -self.im)
        }
    }
}

struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    /// Smallest |pivot| and its column.
    min_pivot: (f64, usize),
}

fn lu_factor(a: &Mat) -> Lu {
    let n = a.rows;
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut min_pivot = (f64::INFINITY, 0);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
            .unwrap_or(k);
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[k * n + k];
        if pivot.abs() < min_pivot.0 {
            min_pivot = (pivot.abs(), k);
        }
        if pivot == 0.0 {
            continue;
        }
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            lu[i * n + k] = f;
            if f != 0.0 {
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
    }
    Lu { n, lu, perm, sign, min_pivot }
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    fn determinant(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i]).product::<f64>() * self.sign
    }
}

fn factor_nonsingular(a: &Mat) -> Result<Lu> {
    a.require_square()?;
    let scale = a.norm_inf();
    let lu = lu_factor(a);
    let (pivot, column) = lu.min_pivot;
    if scale == 0.0 || pivot < SINGULAR_PIVOT_RTOL * scale {
        return Err(LinalgError::SingularMatrix { column, pivot });
    }
    Ok(lu)
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve_linear(a: &Mat, b: &ColVec) -> Result<ColVec> {
    let n = a.require_square()?;
    if b.dim() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "right-hand side of length {} for a {n}x{n} system",
            b.dim()
        )));
    }
    let lu = factor_nonsingular(a)?;
    ColVec::new(lu.solve(b.as_slice()))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    let n = a.require_square()?;
    let lu = factor_nonsingular(a)?;
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    check_finite(&inv.data)?;
    Ok(inv)
}

/// Determinant via LU; exact zero pivots give zero rather than an error.
pub fn determinant(a: &Mat) -> Result<f64> {
    a.require_square()?;
    Ok(lu_factor(a).determinant())
}

/// Reduces a square matrix to upper Hessenberg form with Householder reflections.
fn hessenberg(a: &mut [f64], n: usize) {
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let alpha_norm = norm2(&(k + 1..n).map(|i| a[i * n + k]).collect::<Vec<_>>());
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        for i in k + 1..n {
            v[i] = a[i * n + k];
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H = I - 2 v vᵀ / vᵀv applied from the left then the right.
        for j in 0..n {
            let s: f64 = (k + 1..n).map(|i| v[i] * a[i * n + j]).sum();
            let f = 2.0 * s / vnorm2;
            for i in k + 1..n {
                a[i * n + j] -= f * v[i];
            }
        }
        for i in 0..n {
            let s: f64 = (k + 1..n).map(|j| a[i * n + j] * v[j]).sum();
            let f = 2.0 * s / vnorm2;
            for j in k + 1..n {
                a[i * n + j] -= f * v[j];
            }
        }
        for i in k + 2..n {
            a[i * n + k] = 0.0;
        }
    }
}

fn sign_of(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (EISPACK `hqr` layout).
fn hessenberg_qr(a: &mut [f64], n: usize, max_iter: usize) -> Result<Vec<ComplexScalar>> {
    let idx = |i: usize, j: usize| i * n + j;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let anorm: f64 = (0..n)
        .flat_map(|i| (i.saturating_sub(1)..n).map(move |j| (i, j)))
        .map(|(i, j)| a[idx(i, j)].abs())
        .sum();
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let mut total_iter = 0usize;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let mut s = a[idx(l - 1, l - 1)].abs() + a[idx(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[idx(l, l - 1)].abs() + s == s {
                    a[idx(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[idx(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[idx(nu - 1, nu - 1)];
            let mut w = a[idx(nu, nu - 1)] * a[idx(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + sign_of(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if total_iter >= max_iter {
                return Err(LinalgError::NoConvergence(max_iter));
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nu {
                    a[idx(i, i)] -= x;
                }
                let s = a[idx(nu, nu - 1)].abs() + a[idx(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_iter += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[idx(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[idx(m + 1, m)] + a[idx(m, m + 1)];
                q = a[idx(m + 1, m + 1)] - z - rr - ss;
                r = a[idx(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[idx(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[idx(m - 1, m - 1)].abs() + z.abs() + a[idx(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[idx(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[idx(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[idx(k, k - 1)];
                    q = a[idx(k + 1, k - 1)];
                    r = if k != nu - 1 { a[idx(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[idx(k, k - 1)] = -a[idx(k, k - 1)];
                        }
                    } else {
                        a[idx(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[idx(k, j)] + q * a[idx(k + 1, j)];
                        if k != nu - 1 {
                            pp += r * a[idx(k + 2, j)];
                            a[idx(k + 2, j)] -= pp * z;
                        }
                        a[idx(k + 1, j)] -= pp * y;
                        a[idx(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[idx(i, k)] + y * a[idx(i, k + 1)];
                        if k != nu - 1 {
                            pp += z * a[idx(i, k + 2)];
                            a[idx(i, k + 2)] -= pp * r;
                        }
                        a[idx(i, k + 1)] -= pp * q;
                        a[idx(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| ComplexScalar { re, im }).collect())
}

/// All eigenvalues of a square matrix, sorted by decreasing real part.
///
/// Hessenberg reduction followed by shifted QR, capped at `100 n` iterations.
pub fn eigenvalues(a: &Mat) -> Result<Vec<ComplexScalar>> {
    let n = a.require_square()?;
    if n > MAX_EIG_DIM {
        return Err(LinalgError::TooLarge(n));
    }
    let mut h = a.data.clone();
    hessenberg(&mut h, n);
    let mut eig = hessenberg_qr(&mut h, n, 100 * n)?;
    eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(eig)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max))
}

fn require_symmetric(s: &Mat) -> Result<usize> {
    let n = s.require_square()?;
    let norm = s.norm_inf();
    let asymmetry = (s - &s.transpose()).norm_inf();
    if asymmetry > 1e-9 * norm {
        return Err(LinalgError::NotSymmetric { asymmetry, norm });
    }
    Ok(n)
}

/// Eigenvalues of the symmetric part of `s`, ascending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(s: &Mat) -> Result<Vec<f64>> {
    let n = require_symmetric(s)?;
    let mut a = s.symmetric_part()?.data;
    let idx = |i: usize, j: usize| i * n + j;
    let frob2: f64 = a.iter().map(|v| v * v).sum();
    if frob2 > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[idx(i, j)].powi(2)).sum();
            if off <= 1e-32 * frob2 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[idx(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                    let t = sign_of(1.0, theta) / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[idx(k, p)];
                        let akq = a[idx(k, q)];
                        a[idx(k, p)] = c * akp - sn * akq;
                        a[idx(k, q)] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[idx(p, k)];
                        let aqk = a[idx(q, k)];
                        a[idx(p, k)] = c * apk - sn * aqk;
                        a[idx(q, k)] = sn * apk + c * aqk;
                    }
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[idx(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Largest eigenvalue of `(s + sᵀ)/2`.
pub fn max_eig_symmetric(s: &Mat) -> Result<f64> {
    Ok(*symmetric_eigenvalues(s)?.last().expect("nonempty"))
}

/// Cholesky test: every pivot must exceed `1e-12 · trace(s)/n`.
pub fn is_positive_definite(s: &Mat) -> bool {
    let Ok(n) = require_symmetric(s) else {
        return false;
    };
    let trace = s.trace();
    if trace <= 0.0 {
        return false;
    }
    let floor = 1e-12 * trace / n as f64;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let d = s[(j, j)] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d <= floor {
            return false;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]) - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = v / djj;
        }
    }
    true
}

/// Magnitudes of the diagonal of R from a column-pivoted Householder QR.
pub fn pivoted_qr_diagonal(a: &Mat) -> Vec<f64> {
    let (m, n) = (a.rows, a.cols);
    let mut r = a.data.clone();
    let idx = |i: usize, j: usize| i * n + j;
    let mut diag = Vec::with_capacity(m.min(n));
    for k in 0..m.min(n) {
        let col_norm = |r: &[f64], j: usize| norm2(&(k..m).map(|i| r[idx(i, j)]).collect::<Vec<_>>());
        let (jmax, nmax) = (k..n)
            .map(|j| (j, col_norm(&r, j)))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if jmax != k {
            for i in 0..m {
                r.swap(idx(i, k), idx(i, jmax));
            }
        }
        if nmax == 0.0 {
            diag.push(0.0);
            continue;
        }
        let x0 = r[idx(k, k)];
        let alpha = if x0 >= 0.0 { -nmax } else { nmax };
        let mut v: Vec<f64> = (k..m).map(|i| r[idx(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[idx(i, j)]).sum();
                let f = 2.0 * s / vnorm2;
                for i in k..m {
                    r[idx(i, j)] -= f * v[i - k];
                }
            }
        }
        diag.push(r[idx(k, k)].abs());
    }
    diag
}

/// Numerical rank: pivoted-QR diagonal entries above `tol` times the largest.
pub fn rank(a: &Mat, tol: f64) -> usize {
    let diag = pivoted_qr_diagonal(a);
    let largest = diag.first().copied().unwrap_or(0.0);
    if largest == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&d| d > tol * largest).count()
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat) -> f64 {
    let ata = &a.transpose() * a;
    max_eig_symmetric(&ata).expect("AᵀA is symmetric").max(0.0).sqrt()
}

/// Smallest singular value (square root of the smallest eigenvalue of AᵀA).
pub fn smallest_singular_value(a: &Mat) -> f64 {
    let ata = &a.transpose() * a;
    symmetric_eigenvalues(&ata).expect("AᵀA is symmetric")[0].max(0.0).sqrt()
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn row_equilibrate(a: &Mat) -> Mat {
    let mut out = a.clone();
    for i in 0..a.rows {
        let nrm = norm2(a.row(i));
        if nrm > 0.0 {
            for j in 0..a.cols {
                out[(i, j)] /= nrm;
            }
        }
    }
    out
}
