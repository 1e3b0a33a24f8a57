//! One-sided (Hestenes) Jacobi SVD with cyclic sweeps.

use super::{dot, DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Largest row or column count accepted by [`svd`].
pub const DEFAULT_SIZE_CAP: usize = 512;

const MAX_SWEEPS: usize = 80;
const ROTATION_TOL: f64 = 1e-14;

/// Thin SVD: `U` is `rows × p`, `V` is `cols × p`, `p = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: DenseVector,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(&self.sigma)
    }

    /// `U·diag(s)·Vᵀ` for replacement singular values `s`.
    pub fn reconstruct_with(&self, s: &[f64]) -> DenseMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(m, n);
        for (k, &sk) in s.iter().enumerate() {
            if sk == 0.0 {
                continue;
            }
            for i in 0..m {
                let uik = self.u.get(i, k) * sk;
                if uik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + uik * self.v.get(j, k));
                }
            }
        }
        out
    }
}

pub fn svd(x: &DenseMatrix) -> Result<SvdResult> {
    svd_with_cap(x, DEFAULT_SIZE_CAP)
}

pub fn svd_with_cap(x: &DenseMatrix, cap: usize) -> Result<SvdResult> {
    if x.rows() > cap || x.cols() > cap {
        return Err(Error::SizeCap {
            rows: x.rows(),
            cols: x.cols(),
            cap,
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if x.rows() < x.cols() {
        let t = one_sided_jacobi(&x.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    one_sided_jacobi(x)
}

/// Singular values in descending order.
pub fn singular_values(x: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd(x)?.sigma.into_inner())
}

/// Number of singular values above `RANK_EPS · σ_max`.
pub fn numerical_rank(x: &DenseMatrix) -> Result<usize> {
    if x.rows() == 0 || x.cols() == 0 {
        return Ok(0);
    }
    let s = singular_values(x)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > super::RANK_EPS * smax).count())
}

// Requires rows >= cols.
fn one_sided_jacobi(x: &DenseMatrix) -> Result<SvdResult> {
    let (m, n) = (x.rows(), x.cols());
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let smax = norms[order.first().copied().unwrap_or(0)].max(0.0);
    let tiny = smax * (m.max(n) as f64) * f64::EPSILON * 1e-2;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    let mut sigma = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        v_cols.push(v[j].clone());
        if norms[j] > tiny && norms[j] > 0.0 {
            u_cols.push(w[j].iter().map(|e| e / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &pending, m);

    let u_refs: Vec<&[f64]> = u_cols.iter().map(Vec::as_slice).collect();
    let v_refs: Vec<&[f64]> = v_cols.iter().map(Vec::as_slice).collect();
    Ok(SvdResult {
        u: DenseMatrix::from_columns(m, &u_refs)?,
        sigma: DenseVector::from(sigma),
        v: DenseMatrix::from_columns(n, &v_refs)?,
    })
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

// Fills the columns listed in `pending` with unit vectors orthogonal to all
// other columns (Gram-Schmidt on the standard basis).
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    let mut next_basis = 0;
    for &slot in pending {
        while next_basis < m {
            let mut cand = vec![0.0; m];
            cand[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == slot || (pending.contains(&k) && other.iter().all(|&e| e == 0.0)) {
                        continue;
                    }
                    let proj = dot(&cand, other);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= proj * o;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 0.5 {
                cols[slot] = cand.into_iter().map(|e| e / nrm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_defect(q: &DenseMatrix) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        g.sub(&DenseMatrix::identity(q.cols())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_and_identity() {
        let s = svd(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(s.sigma.as_slice(), &[2.0, 1.0]);
        let s = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.sigma.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn rank_deficient_gets_orthonormal_u() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]])
            .unwrap();
        let s = svd(&a).unwrap();
        assert!((s.sigma[0] - 3.0).abs() < 1e-13);
        assert!(s.sigma[1].abs() < 1e-13 && s.sigma[2].abs() < 1e-13);
        assert!(orthonormality_defect(&s.u) < 1e-12);
        assert!(orthonormality_defect(&s.v) < 1e-12);
        assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let s = svd(&DenseMatrix::zeros(4, 2)).unwrap();
        assert!(s.sigma.iter().all(|&v| v == 0.0));
        assert!(orthonormality_defect(&s.u) < 1e-14);
    }

    #[test]
    fn wide_matrix_uses_transpose() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, -2.0, 0.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!((s.u.rows(), s.u.cols(), s.v.rows(), s.v.cols()), (2, 2, 4, 2));
        assert!((s.sigma[0] - 3.0).abs() < 1e-15 && (s.sigma[1] - 2.0).abs() < 1e-15);
        assert!(s.reconstruct().sub(&a).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn size_cap_enforced() {
        let a = DenseMatrix::zeros(5, 3);
        assert!(matches!(svd_with_cap(&a, 4), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn rank_of_outer_product() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(numerical_rank(&a).unwrap(), 1);
        assert_eq!(numerical_rank(&DenseMatrix::identity(3)).unwrap(), 3);
        assert_eq!(numerical_rank(&DenseMatrix::zeros(2, 2)).unwrap(), 0);
    }
}
