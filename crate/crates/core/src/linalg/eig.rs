//! Cyclic Jacobi eigensolver for symmetric matrices.

use super::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Relative cutoff (against `λ_max`) below which an eigenvalue counts as zero.
pub const RANK_EPS: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const OFFDIAG_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymEigResult {
    /// Ascending.
    pub eigenvalues: DenseVector,
    /// Orthonormal columns, matched to `eigenvalues`.
    pub eigenvectors: DenseMatrix,
}

pub fn sym_eig(s: &DenseMatrix) -> Result<SymEigResult> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::dims("sym_eig", "square matrix", format!("{}x{}", n, s.cols())));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let scale = s.max_abs();
    let asym = s.max_asymmetry();
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let mut a: Vec<f64> = s.as_slice().to_vec();
    // symmetrize exactly
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let mut v = DenseMatrix::identity(n).into_vec();
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= OFFDIAG_TOL * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigNoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, col, v[k * n + src]);
        }
    }
    Ok(SymEigResult {
        eigenvalues: DenseVector::from(eigenvalues),
        eigenvectors: vecs,
    })
}

/// Smallest eigenvalue strictly above `RANK_EPS · λ_max` of a symmetric PSD matrix.
pub fn lambda_min_pp(s: &DenseMatrix) -> Result<f64> {
    let eig = sym_eig(s)?;
    let lmax = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Err(Error::NoPositiveEigenvalue);
    }
    eig.eigenvalues
        .iter()
        .copied()
        .find(|&l| l > RANK_EPS * lmax)
        .ok_or(Error::NoPositiveEigenvalue)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_cases() {
        let e = sym_eig(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 2.0]);
        let z = sym_eig(&DenseMatrix::zeros(3, 3)).unwrap();
        assert!(z.eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn residuals_small() {
        let s = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.0],
            vec![-2.0, 0.0, 5.0, -1.0],
            vec![0.5, 1.0, -1.0, 2.0],
        ])
        .unwrap();
        let e = sym_eig(&s).unwrap();
        for k in 0..4 {
            let q = e.eigenvectors.column(k);
            let sq = s.matvec(&q);
            let res: f64 = sq
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - e.eigenvalues[k] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-12 * 7.0, "residual {res}");
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn asymmetric_rejected() {
        let s = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&s), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn lambda_min_pp_examples() {
        assert_eq!(lambda_min_pp(&DenseMatrix::from_diag(&[0.0, 2.0, 5.0])).unwrap(), 2.0);
        assert_eq!(lambda_min_pp(&DenseMatrix::identity(3)).unwrap(), 1.0);
        assert!(matches!(lambda_min_pp(&DenseMatrix::zeros(2, 2)), Err(Error::NoPositiveEigenvalue)));
    }
}
