//! Small dense linear algebra.
//!
//! Everything here is sized for desk-scale problems: row-major storage,
//! Jacobi-type decompositions, no blocking. Norms derived from singular
//! values go through the Jacobi SVD so results are deterministic.

mod eig;
mod svd;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eig::{lambda_min_pp, sym_eig, SymEigResult, RANK_EPS};
pub use svd::{numerical_rank, singular_values, svd, svd_with_cap, SvdResult, DEFAULT_SIZE_CAP};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm1(&self) -> f64 {
        norm1(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.0)
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("DenseMatrix::new", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns(rows: usize, columns: &[&[f64]]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::dims("DenseMatrix::from_columns", rows, c.len()));
            }
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        Ok(m)
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            axpy(yi, self.row(i), &mut out);
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims("matmul", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        Ok(out)
    }

    /// `A Aᵀ`
    pub fn aat(&self) -> DenseMatrix {
        self.scaled_aat(None)
    }

    /// `A D Aᵀ` for a diagonal `D` given by its entries; `None` means identity.
    pub fn scaled_aat(&self, d: Option<&[f64]>) -> DenseMatrix {
        let m = self.rows;
        let mut out = Self::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let (ri, rj) = (self.row(i), self.row(j));
                let v = match d {
                    Some(d) => ri.iter().zip(rj).zip(d).map(|((a, b), w)| a * b * w).sum(),
                    None => dot(ri, rj),
                };
                out.data[i * m + j] = v;
                out.data[j * m + i] = v;
            }
        }
        out
    }

    /// `Aᵀ A`
    pub fn ata(&self) -> DenseMatrix {
        self.transpose().aat()
    }

    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = Self::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (jj, &j) in idx.iter().enumerate() {
                out.data[i * idx.len() + jj] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Horizontal concatenation `[self other]`.
    pub fn hcat(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::dims("hcat", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims(
                "elementwise",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// Trace inner product `⟨A, B⟩ = trace(Aᵀ B)`.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Scalar soft-thresholding `sign(s)·max(|s|−μ, 0)`.
#[inline]
pub fn shrink_scalar(s: f64, mu: f64) -> f64 {
    if s > mu {
        s - mu
    } else if s < -mu {
        s + mu
    } else {
        0.0
    }
}

/// Componentwise soft-thresholding with threshold `mu`.
pub fn shrink(v: &[f64], mu: f64) -> Result<DenseVector> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("shrink threshold must be positive, got {mu}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("shrink input"));
    }
    Ok(DenseVector(v.iter().map(|&s| shrink_scalar(s, mu)).collect()))
}

/// Singular value soft-thresholding `U·diag(shrink(σ, μ))·Vᵀ`.
pub fn sv_shrink(x: &DenseMatrix, mu: f64) -> Result<DenseMatrix> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("shrink threshold must be positive, got {mu}")));
    }
    let dec = svd(x)?;
    let shrunk: Vec<f64> = dec.sigma.iter().map(|&s| (s - mu).max(0.0)).collect();
    Ok(dec.reconstruct_with(&shrunk))
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("spectral_norm input"));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += a·x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(&[1.5], 1.0).unwrap().as_slice(), &[0.5]);
        assert_eq!(shrink(&[-0.3], 1.0).unwrap().as_slice(), &[0.0]);
        assert_eq!(shrink(&[2.0, -2.0, 0.5], 0.5).unwrap().as_slice(), &[1.5, -1.5, 0.0]);
    }

    #[test]
    fn shrink_rejects_bad_input() {
        assert!(matches!(shrink(&[f64::NAN], 1.0), Err(Error::NonFinite(_))));
        assert!(shrink(&[1.0], 0.0).is_err());
        assert!(shrink(&[1.0], -1.0).is_err());
    }

    #[test]
    fn sv_shrink_diagonal() {
        let out = sv_shrink(&DenseMatrix::from_diag(&[3.0, 1.0]), 1.0).unwrap();
        let want = DenseMatrix::from_diag(&[2.0, 0.0]);
        assert!(out.sub(&want).unwrap().max_abs() < 1e-14);
        let z = sv_shrink(&DenseMatrix::zeros(3, 2), 1.0).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
        let two_i = DenseMatrix::identity(4).scale(2.0);
        assert!((spectral_norm(&two_i).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_basics() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(a.matvec_t(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        let g = a.aat();
        assert_eq!(g.as_slice(), &[14.0, 32.0, 32.0, 77.0]);
        assert_eq!(a.transpose().transpose(), a);
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }
}
