use lbreg::linalg::{
    dot, lambda_min_pp, norm2, nuclear_norm, shrink, shrink_scalar, singular_values, sub, svd, sym_eig, DenseMatrix,
};
use lbreg::rng::Normal;
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::new(rows, cols, Normal::new(seed).vec(rows * cols)).unwrap()
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

proptest! {
    #[test]
    fn shrink_is_nonexpansive(
        pair in (1usize..20).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )),
        mu in 0.0f64..3.0,
    ) {
        let (a, b) = pair;
        let d = norm2(&sub(&shrink(&a, mu).unwrap(), &shrink(&b, mu).unwrap()));
        prop_assert!(d <= norm2(&sub(&a, &b)) + 1e-12);
    }

    #[test]
    fn shrink_inequality(s in -6.0f64..6.0, t in -6.0f64..6.0) {
        let st = shrink_scalar(t, 1.0);
        let lhs = (s - t) * (shrink_scalar(s, 1.0) - st);
        let mid = st.abs() / (st.abs() + 2.0) * (s - t).powi(2);
        prop_assert!(lhs - mid >= -1e-12);
        prop_assert!(mid >= 0.0);
    }

    #[test]
    fn shrink_inequality_equality_case(t in prop_oneof![1.0001f64..8.0, -8.0f64..-1.0001]) {
        let s = -t.signum();
        let st = shrink_scalar(t, 1.0);
        let lhs = (s - t) * (shrink_scalar(s, 1.0) - st);
        let mid = st.abs() / (st.abs() + 2.0) * (s - t).powi(2);
        prop_assert!((lhs - mid).abs() <= 1e-12);
    }

    #[test]
    fn svd_reconstructs(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let a = gaussian(rows, cols, seed);
        let f = svd(&a).unwrap();
        prop_assert!(max_abs_diff(&f.reconstruct(), &a) <= 1e-12 * a.max_abs().max(1.0) * 10.0);
        prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.sigma.iter().all(|&s| s >= 0.0));
        let r = f.sigma.len();
        let utu = f.u.transpose().matmul(&f.u).unwrap();
        let vtv = f.v.transpose().matmul(&f.v).unwrap();
        prop_assert!(max_abs_diff(&utu, &DenseMatrix::identity(r)) <= 1e-12);
        prop_assert!(max_abs_diff(&vtv, &DenseMatrix::identity(r)) <= 1e-12);
    }

    #[test]
    fn sym_eig_residual(n in 1usize..9, seed in any::<u64>()) {
        let g = gaussian(n, n, seed);
        let s = g.add(&g.transpose()).unwrap();
        let e = sym_eig(&s).unwrap();
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for (i, &lam) in e.eigenvalues.iter().enumerate() {
            let q = e.eigenvectors.column(i);
            let r = sub(&s.matvec(&q), &q.iter().map(|v| lam * v).collect::<Vec<_>>());
            prop_assert!(norm2(&r) <= 1e-11 * s.max_abs().max(1.0));
        }
    }

    #[test]
    fn sym_eig_matches_singular_values_squared(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let a = gaussian(rows, cols, seed);
        let mut from_eig: Vec<f64> = sym_eig(&a.ata()).unwrap().eigenvalues.iter().rev().copied().collect();
        from_eig.truncate(rows.min(cols));
        let sv = singular_values(&a).unwrap();
        for (l, s) in from_eig.iter().zip(&sv) {
            prop_assert!((l - s * s).abs() <= 1e-10 * (1.0 + sv[0] * sv[0]));
        }
    }

    #[test]
    fn unitarily_invariant_norm_inequalities(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let x = gaussian(rows, cols, seed);
        let y = gaussian(rows, cols, seed.wrapping_add(1));
        let sx = singular_values(&x).unwrap();
        let sy = singular_values(&y).unwrap();
        let d = x.sub(&y).unwrap();
        let l1: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b).abs()).sum();
        let l2: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!(l1 <= nuclear_norm(&d).unwrap() + 1e-10);
        prop_assert!(l2 <= d.frobenius_norm().powi(2) + 1e-10);
    }
}

/// Smallest Rayleigh quotient over the range of `a`, found by shifted power
/// iteration on an orthonormal basis of that range.
fn rayleigh_min_on_range(s: &DenseMatrix, a: &DenseMatrix) -> f64 {
    let f = svd(a).unwrap();
    let tol = 1e-10 * f.sigma[0];
    let basis: Vec<Vec<f64>> = (0..f.sigma.len()).filter(|&i| f.sigma[i] > tol).map(|i| f.u.column(i)).collect();
    let r = basis.len();
    let mut t = DenseMatrix::zeros(r, r);
    for i in 0..r {
        let si = s.matvec(&basis[i]);
        for (j, bj) in basis.iter().enumerate() {
            t.set(i, j, dot(bj, &si));
        }
    }
    let shift = t.frobenius_norm();
    let mut v: Vec<f64> = Normal::new(99).vec(r);
    let mut best = f64::INFINITY;
    for _ in 0..20_000 {
        let tv = t.matvec(&v);
        let w: Vec<f64> = v.iter().zip(&tv).map(|(a, b)| shift * a - b).collect();
        let nw = norm2(&w);
        v = w.into_iter().map(|x| x / nw).collect();
        best = dot(&v, &t.matvec(&v));
    }
    // samples of the range never beat the minimizer
    let mut normal = Normal::new(7);
    for _ in 0..200 {
        let c = normal.vec(r);
        let y: Vec<f64> = (0..s.rows()).map(|i| basis.iter().zip(&c).map(|(b, ci)| b[i] * ci).sum()).collect();
        let q = dot(&y, &s.matvec(&y)) / dot(&y, &y);
        assert!(q >= best - 1e-9);
    }
    best
}

#[test]
fn lambda_min_pp_matches_rayleigh_minimum() {
    for seed in 0..6u64 {
        let (m, r, n) = (6, 3 + (seed as usize % 3), 9);
        // rank-r matrix so the range is a proper subspace
        let a = gaussian(m, r, seed).matmul(&gaussian(r, n, seed + 100)).unwrap();
        let d: Vec<f64> = Normal::new(seed + 200).vec(n).iter().map(|v| 0.5 + v.abs()).collect();
        let s = a.scaled_aat(Some(&d));
        let pp = lambda_min_pp(&s).unwrap();
        let ray = rayleigh_min_on_range(&s, &a);
        assert!((pp - ray).abs() <= 1e-6 * pp.max(1.0), "seed {seed}: {pp} vs {ray}");
    }
}
