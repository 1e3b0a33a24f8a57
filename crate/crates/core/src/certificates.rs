//! Recovery and convergence certificates computed by brute force at desk scale.
//!
//! Enumerations (RIP constants, `λ_A`, `v_min`) refuse to run past fixed caps
//! instead of falling back to estimates. Each enumeration is split across
//! rayon workers and reduced in subset order, so results do not depend on
//! scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    dot, lambda_min_pp, norm1, norm2, norm_inf, shrink_scalar, singular_values, svd, sym_eig, DenseMatrix,
    DenseVector, RANK_EPS,
};
use crate::models::Model;
use crate::rng::Normal;
use crate::solvers::Trace;

/// Supports enumerated by [`rip_constant`] before refusing.
pub const RIP_SUPPORT_CAP: u128 = 2_000_000;
/// Largest column count for the `λ_A` and `v_min` subset enumerations.
pub const SUBSET_COLUMN_CAP: usize = 16;
/// Absolute slack allowed in the convergence inequalities.
pub const CONVERGENCE_SLACK: f64 = 1e-8;

const PROJECTION_TOL: f64 = 1e-9;
const CHUNK: u128 = 2048;

// ---------------------------------------------------------------------------
// thresholds

/// `θ(δ) = sqrt(4(1+5δ−4δ²)/((1−δ)(32−25δ)))`.
pub fn theta(delta: f64) -> f64 {
    (4.0 * (1.0 + 5.0 * delta - 4.0 * delta * delta) / ((1.0 - delta) * (32.0 - 25.0 * delta))).sqrt()
}

/// The RIP constant at which `θ` reaches 1, `(77 − √1337)/82`.
pub fn theta_crossing() -> f64 {
    (77.0 - 1337f64.sqrt()) / 82.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableConstants {
    pub c1: f64,
    pub c2: f64,
    pub c1_bar: f64,
    pub c2_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryThresholds {
    pub delta: f64,
    pub theta: f64,
    /// `(θ⁻¹ − 1)⁻¹`; `None` when `θ ≥ 1`.
    pub alpha_multiplier: Option<f64>,
    /// `alpha_multiplier · ‖x⁰‖∞`.
    pub alpha_required: Option<f64>,
    pub exact_recovery_guaranteed: bool,
    pub c3: f64,
    pub c4: f64,
    pub c3_theta: f64,
    /// Populated only when `C₃θ < 1`.
    pub stable: Option<StableConstants>,
}

pub fn recovery_thresholds(
    delta: f64,
    alpha: f64,
    xs_inf: f64,
    xz_inf: f64,
    x_inf: f64,
) -> Result<RecoveryThresholds> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0,1), got {delta}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if xs_inf < 0.0 || xz_inf < 0.0 || x_inf < 0.0 {
        return Err(Error::InvalidArgument("signal norms must be nonnegative".into()));
    }
    if !(alpha > xz_inf) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must exceed ‖x_Z‖∞ = {xz_inf} for C3 and C4 to exist"
        )));
    }
    let th = theta(delta);
    let alpha_multiplier = (th < 1.0).then(|| 1.0 / (1.0 / th - 1.0));
    let alpha_required = alpha_multiplier.map(|c| c * x_inf);
    let c3 = (alpha + xs_inf) / (alpha - xz_inf);
    let c4 = 2.0 * alpha / (alpha - xz_inf);
    let c3_theta = c3 * th;
    let stable = (c3_theta < 1.0).then(|| {
        let gap = 1.0 - c3_theta;
        let denom = (1.0 - delta) * (32.0 - 25.0 * delta);
        let sq = (1.0 - delta).sqrt();
        StableConstants {
            c1: 2.0 * 2f64.sqrt() * (1.0 + c3) / (sq * gap),
            c2: (1.0 + th) * c4 / gap,
            c1_bar: 2.0 / sq * (4.0 * c3 / gap * ((2.0 - delta) / denom).sqrt() + 1.0),
            c2_bar: 2.0 * c4 / gap * (2.0 * (2.0 - delta) / denom).sqrt(),
        }
    });
    Ok(RecoveryThresholds {
        delta,
        theta: th,
        alpha_multiplier,
        alpha_required,
        exact_recovery_guaranteed: alpha_required.is_some_and(|r| alpha >= r),
        c3,
        c4,
        c3_theta,
        stable,
    })
}

// ---------------------------------------------------------------------------
// null space and SSP

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NspReport {
    pub margin: f64,
    pub pass: bool,
}

fn nsp_weight(alpha: f64, scale: f64) -> Result<f64> {
    if !(alpha > 0.0) || scale < 0.0 || scale.is_nan() {
        return Err(Error::InvalidArgument("need alpha > 0 and a nonnegative signal norm".into()));
    }
    Ok(if alpha.is_infinite() { 1.0 } else { 1.0 + scale / alpha })
}

/// `‖h_{Sᶜ}‖₁ − (1 + ‖x⁰‖∞/α)‖h_S‖₁`; `alpha = ∞` gives the unaugmented margin.
pub fn nsp_check(h: &[f64], support: &[usize], alpha: f64, x_inf: f64) -> Result<NspReport> {
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("null-space vector must be nonzero".into()));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= h.len()) {
        return Err(Error::InvalidArgument(format!("support index {i} out of range")));
    }
    let w = nsp_weight(alpha, x_inf)?;
    let mut on = vec![false; h.len()];
    for &i in support {
        on[i] = true;
    }
    let (mut hs, mut hz) = (0.0, 0.0);
    for (v, &s) in h.iter().zip(&on) {
        if s {
            hs += v.abs();
        } else {
            hz += v.abs();
        }
    }
    let margin = hz - w * hs;
    Ok(NspReport {
        margin,
        pass: margin >= 0.0,
    })
}

/// `Σ_{i>r} σᵢ(H) − (1 + ‖X⁰‖₂/α)·Σ_{i≤r} σᵢ(H)`.
pub fn nsp_check_matrix(h: &DenseMatrix, rank: usize, alpha: f64, x_spec: f64) -> Result<NspReport> {
    if h.is_zero() {
        return Err(Error::InvalidArgument("null-space matrix must be nonzero".into()));
    }
    let w = nsp_weight(alpha, x_spec)?;
    let s = singular_values(h)?;
    let r = rank.min(s.len());
    let head: f64 = s[..r].iter().sum();
    let tail: f64 = s[r..].iter().sum();
    let margin = tail - w * head;
    Ok(NspReport {
        margin,
        pass: margin >= 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SspBounds {
    /// `(2 + ‖x⁰‖∞/α)²·k·Δ`
    pub exact_m_needed: f64,
    /// `4(1 + C₃)²·k·Δ`
    pub stable_m_needed: f64,
    pub exact_ok: bool,
    pub stable_ok: bool,
}

/// Measurement counts sufficient under the spherical section property with
/// constant `Δ`; `k` is the sparsity or the rank.
pub fn ssp_bounds(m: usize, k: usize, big_delta: f64, alpha: f64, x_inf: f64, c3: f64) -> Result<SspBounds> {
    if !(big_delta > 0.0) {
        return Err(Error::InvalidArgument(format!("Delta must be positive, got {big_delta}")));
    }
    let w = nsp_weight(alpha, x_inf)? + 1.0;
    let kd = k as f64 * big_delta;
    let exact = w * w * kd;
    let stable = 4.0 * (1.0 + c3).powi(2) * kd;
    Ok(SspBounds {
        exact_m_needed: exact,
        stable_m_needed: stable,
        exact_ok: m as f64 >= exact,
        stable_ok: m as f64 >= stable,
    })
}

/// Orthonormal basis of `Null(A)` as columns.
pub fn null_space_basis(a: &DenseMatrix) -> Result<DenseMatrix> {
    let g = a.ata();
    let eig = sym_eig(&g)?;
    let lmax = eig.eigenvalues.last().copied().unwrap_or(0.0);
    let cut = RANK_EPS * lmax.max(0.0);
    let cols: Vec<Vec<f64>> = (0..a.cols())
        .filter(|&j| eig.eigenvalues[j] <= cut)
        .map(|j| eig.eigenvectors.column(j))
        .collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    DenseMatrix::from_columns(a.cols(), &refs)
}

/// Smallest `‖h‖₁/‖h‖₂` over `samples` Gaussian directions in `Null(A)`.
///
/// This is an upper bound on the true null-space minimum, never a certificate.
pub fn ssp_ratio_estimate(a: &DenseMatrix, samples: usize, seed: u64) -> Result<f64> {
    let basis = null_space_basis(a)?;
    let d = basis.cols();
    if d == 0 {
        return Err(Error::InvalidArgument("null space is trivial".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut normal = Normal::new(seed);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let c = normal.vec(d);
        let h = basis.matvec(&c);
        let n2 = norm2(&h);
        if n2 > 0.0 {
            best = best.min(norm1(&h) / n2);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiplessReport {
    /// `‖(A_SᵀA_S)⁻¹‖₂`, at most 2.
    pub cond_op: f64,
    /// `max_{i∉S} ‖A_Sᵀaᵢ‖₂`, at most 1.
    pub cond_coh: f64,
    /// `‖v_S − sign(x⁰_S)‖₂`, at most 1/4.
    pub cond_sign: f64,
    /// `‖v_{Sᶜ}‖∞`, at most 1/4.
    pub cond_off: f64,
    pub pass: bool,
}

/// Checks a supplied dual certificate `y` (with `v = Aᵀy`) for the support
/// `support` carrying signs `signs`.
pub fn ripless_check(a: &DenseMatrix, support: &[usize], signs: &[f64], y: &[f64]) -> Result<RiplessReport> {
    if support.len() != signs.len() {
        return Err(Error::dims("ripless_check (signs)", support.len(), signs.len()));
    }
    if y.len() != a.rows() {
        return Err(Error::dims("ripless_check (y)", a.rows(), y.len()));
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument("support must be nonempty".into()));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= a.cols()) {
        return Err(Error::InvalidArgument(format!("support index {i} out of range")));
    }
    let a_s = a.select_columns(support);
    let eig = sym_eig(&a_s.ata())?;
    let lmin = eig.eigenvalues[0];
    let lmax = *eig.eigenvalues.last().unwrap();
    if !(lmin > RANK_EPS * lmax) {
        return Err(Error::RankDeficient);
    }
    let cond_op = 1.0 / lmin;
    let mut on = vec![false; a.cols()];
    for &i in support {
        on[i] = true;
    }
    let v = a.matvec_t(y);
    let mut cond_coh: f64 = 0.0;
    let mut cond_off: f64 = 0.0;
    for j in (0..a.cols()).filter(|&j| !on[j]) {
        let aj = a.column(j);
        cond_coh = cond_coh.max(norm2(&a_s.matvec_t(&aj)));
        cond_off = cond_off.max(v[j].abs());
    }
    let diff: Vec<f64> = support.iter().zip(signs).map(|(&i, s)| v[i] - s.signum()).collect();
    let cond_sign = norm2(&diff);
    Ok(RiplessReport {
        cond_op,
        cond_coh,
        cond_sign,
        cond_off,
        pass: cond_op <= 2.0 && cond_coh <= 1.0 && cond_sign <= 0.25 && cond_off <= 0.25,
    })
}

// ---------------------------------------------------------------------------
// enumeration helpers

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        loop {
            let rest = binomial(n - next - 1, k - slot - 1);
            if rank < rest {
                break;
            }
            rank -= rest;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Applies `f` to every `k`-subset of `0..n` in parallel chunks and returns
/// the per-subset results in lexicographic order of the chunks.
fn for_each_combination<T, F>(n: usize, k: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync,
{
    let total = binomial(n, k);
    let chunks = total.div_ceil(CHUNK);
    (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let start = c as u128 * CHUNK;
            let len = CHUNK.min(total - start) as usize;
            let mut comb = unrank_combination(n, k, start);
            let mut out = Vec::with_capacity(len);
            for i in 0..len {
                out.push(f(&comb));
                if i + 1 < len {
                    next_combination(&mut comb, n);
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

// ---------------------------------------------------------------------------
// RIP

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RipReport {
    pub k: usize,
    pub delta_k: f64,
    /// Smallest eigenvalue of `A_SᵀA_S` over all supports and where it occurs.
    pub lambda_min: f64,
    pub min_support: Vec<usize>,
    pub lambda_max: f64,
    pub max_support: Vec<usize>,
}

pub fn rip_constant(a: &DenseMatrix, k: usize) -> Result<RipReport> {
    rip_constant_with_cap(a, k, RIP_SUPPORT_CAP)
}

pub fn rip_constant_with_cap(a: &DenseMatrix, k: usize, cap: u128) -> Result<RipReport> {
    let n = a.cols();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let count = binomial(n, k);
    if count > cap {
        return Err(Error::EnumerationCap {
            count,
            cap,
            hint: "use a randomized RIP estimate instead",
        });
    }
    let gram = a.ata();
    let per_support = for_each_combination(n, k, |s| {
        let mut g = DenseMatrix::zeros(k, k);
        for (p, &i) in s.iter().enumerate() {
            for (q, &j) in s.iter().enumerate() {
                g.set(p, q, gram.get(i, j));
            }
        }
        sym_eig(&g).map(|e| (e.eigenvalues[0], e.eigenvalues[k - 1], s.to_vec()))
    });
    let mut lo = (f64::INFINITY, Vec::new());
    let mut hi = (f64::NEG_INFINITY, Vec::new());
    // strict comparisons keep the first support in lexicographic order
    for r in per_support {
        let (l, u, s) = r?;
        if l < lo.0 {
            lo = (l, s.clone());
        }
        if u > hi.0 {
            hi = (u, s);
        }
    }
    Ok(RipReport {
        k,
        delta_k: (hi.0 - 1.0).max(1.0 - lo.0).max(0.0),
        lambda_min: lo.0,
        min_support: lo.1,
        lambda_max: hi.0,
        max_support: hi.1,
    })
}

// ---------------------------------------------------------------------------
// λ_A, ν, v_min

fn check_subset_cap(cols: usize) -> Result<()> {
    if cols > SUBSET_COLUMN_CAP {
        return Err(Error::EnumerationCap {
            count: (1u128 << cols.min(127)) - 1,
            cap: (1u128 << SUBSET_COLUMN_CAP) - 1,
            hint: "subset enumeration is exponential in the column count",
        });
    }
    Ok(())
}

fn outer_sum(m: usize, base: Option<&DenseMatrix>, cols: &[Vec<f64>], mask: u64) -> DenseMatrix {
    let mut data = base.cloned().unwrap_or_else(|| DenseMatrix::zeros(m, m)).into_vec();
    for (j, c) in cols.iter().enumerate() {
        if mask >> j & 1 == 0 {
            continue;
        }
        for p in 0..m {
            if c[p] == 0.0 {
                continue;
            }
            for q in 0..m {
                data[p * m + q] += c[p] * c[q];
            }
        }
    }
    DenseMatrix::new(m, m, data).expect("square")
}

/// Parallel minimum of `value(mask)` over the given masks; `None` entries skip.
fn min_over_masks<F>(masks: Vec<u64>, value: F) -> Result<Option<f64>>
where
    F: Fn(u64) -> Result<Option<f64>> + Sync,
{
    let vals: Vec<Result<Option<f64>>> = masks.par_chunks(CHUNK as usize).map(|ch| {
        let mut best: Option<f64> = None;
        for &mask in ch {
            if let Some(v) = value(mask)? {
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        Ok(best)
    }).collect();
    let mut best: Option<f64> = None;
    for v in vals {
        if let Some(v) = v? {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    Ok(best)
}

/// `min λ⁺⁺_min(CCᵀ)` over nonzero column submatrices `C` of `A`.
pub fn lambda_a(a: &DenseMatrix) -> Result<f64> {
    if a.is_zero() {
        return Err(Error::InvalidArgument("A must be nonzero".into()));
    }
    let n = a.cols();
    check_subset_cap(n)?;
    let m = a.rows();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let masks: Vec<u64> = (1..1u64 << n).collect();
    let best = min_over_masks(masks, |mask| {
        if (0..n).all(|j| mask >> j & 1 == 0 || cols[j].iter().all(|&v| v == 0.0)) {
            return Ok(None);
        }
        Ok(Some(lambda_min_pp(&outer_sum(m, None, &cols, mask))?))
    })?;
    best.ok_or(Error::NoPositiveEigenvalue)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongConvexityReport {
    pub lambda_a: f64,
    pub nu: f64,
    /// `α‖A‖₂²`
    pub l: f64,
    /// `ν/(α²‖A‖₂⁴)`
    pub h_star: f64,
    pub decay_factor: f64,
    pub omega: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub norm_a: f64,
}

pub fn nu_constant(a: &DenseMatrix, x_star: &[f64], alpha: f64) -> Result<StrongConvexityReport> {
    let la = lambda_a(a)?;
    nu_constant_with_lambda(a, x_star, alpha, la)
}

/// [`nu_constant`] with a precomputed `λ_A`.
pub fn nu_constant_with_lambda(
    a: &DenseMatrix,
    x_star: &[f64],
    alpha: f64,
    lambda_a: f64,
) -> Result<StrongConvexityReport> {
    if x_star.len() != a.cols() {
        return Err(Error::dims("nu_constant", a.cols(), x_star.len()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let xinf = norm_inf(x_star);
    if xinf == 0.0 {
        return Err(Error::InvalidArgument("x* must be nonzero".into()));
    }
    let eps = support_threshold(xinf);
    let min_abs = x_star
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > eps)
        .fold(f64::INFINITY, f64::min);
    let r = min_abs / alpha;
    let omega = r / (2.0 + r);
    let nu = lambda_a * alpha * min_abs / (min_abs + 2.0 * alpha);
    let norm_a = crate::linalg::spectral_norm(a)?;
    let a2 = norm_a * norm_a;
    let lmax_aat = a2;
    let kappa = lambda_a / lmax_aat;
    let h_star = nu / (alpha * alpha * a2 * a2);
    Ok(StrongConvexityReport {
        lambda_a,
        nu,
        l: alpha * a2,
        h_star,
        decay_factor: 1.0 - omega * omega * kappa * kappa,
        omega,
        kappa,
        alpha,
        norm_a,
    })
}

/// `min λ⁺⁺_min(Ā·D·Āᵀ + CCᵀ)` over `m × p` column submatrices `C` of `B̄`
/// with `r ≤ p ≤ ℓ`, `r = rank([Ā B̄]) − rank(Ā)`.
pub fn v_min(a_bar: &DenseMatrix, b_bar: &DenseMatrix, d: &[f64]) -> Result<f64> {
    if a_bar.is_zero() {
        return Err(Error::InvalidArgument("A must be nonzero".into()));
    }
    if d.len() != a_bar.cols() {
        return Err(Error::dims("v_min (D)", a_bar.cols(), d.len()));
    }
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("D must be positive".into()));
    }
    let m = a_bar.rows();
    let ell = b_bar.cols();
    if ell > 0 && b_bar.rows() != m {
        return Err(Error::dims("v_min (B)", m, b_bar.rows()));
    }
    check_subset_cap(ell)?;
    let base = a_bar.scaled_aat(Some(d));
    if ell == 0 {
        return lambda_min_pp(&base);
    }
    let rank_a = crate::linalg::numerical_rank(a_bar)?;
    let rank_ab = crate::linalg::numerical_rank(&a_bar.hcat(b_bar)?)?;
    let r = rank_ab.saturating_sub(rank_a) as u32;
    let cols: Vec<Vec<f64>> = (0..ell).map(|j| b_bar.column(j)).collect();
    let masks: Vec<u64> = (0..1u64 << ell).filter(|m| m.count_ones() >= r).collect();
    let best = min_over_masks(masks, |mask| Ok(Some(lambda_min_pp(&outer_sum(m, Some(&base), &cols, mask))?)))?;
    best.ok_or(Error::NoPositiveEigenvalue)
}

// ---------------------------------------------------------------------------
// dual solution set

fn support_threshold(x_inf: f64) -> f64 {
    1e-10 * x_inf
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSet {
    pub s_plus: Vec<usize>,
    pub s_minus: Vec<usize>,
    pub s_zero: Vec<usize>,
    /// `1 + x*_i/α` on `S₊`.
    pub rhs_plus: Vec<f64>,
    /// `−1 + x*_i/α` on `S₋`.
    pub rhs_minus: Vec<f64>,
    pub x_star: DenseVector,
    pub alpha: f64,
}

impl SolutionSet {
    /// `(column, target)` pairs of the equality constraints.
    pub fn equalities(&self) -> Vec<(usize, f64)> {
        self.s_plus
            .iter()
            .copied()
            .zip(self.rhs_plus.iter().copied())
            .chain(self.s_minus.iter().copied().zip(self.rhs_minus.iter().copied()))
            .collect()
    }

    /// Largest violation of the defining equalities and boxes at `y`.
    pub fn violation(&self, a: &DenseMatrix, y: &[f64]) -> f64 {
        let v = a.matvec_t(y);
        let eq = self.equalities().into_iter().map(|(i, t)| (v[i] - t).abs());
        let bx = self.s_zero.iter().map(|&i| (v[i].abs() - 1.0).max(0.0));
        eq.chain(bx).fold(0.0, f64::max)
    }

    pub fn contains(&self, a: &DenseMatrix, y: &[f64], tol: f64) -> bool {
        self.violation(a, y) <= tol
    }
}

pub fn solution_set(model: &Model, x_star: &[f64]) -> Result<SolutionSet> {
    let a = model
        .op()
        .dense_matrix()
        .ok_or_else(|| Error::InvalidArgument("the dual solution set is only built for vector models".into()))?;
    if model.sigma() != 0.0 {
        return Err(Error::InvalidArgument("the dual solution set needs sigma = 0".into()));
    }
    if x_star.len() != a.cols() {
        return Err(Error::dims("solution_set", a.cols(), x_star.len()));
    }
    let ax = a.matvec(x_star);
    let residual = norm2(&crate::linalg::sub(&ax, model.b()));
    if !(residual <= 1e-6 * norm2(model.b()).max(1.0)) {
        return Err(Error::Inconsistent { residual });
    }
    let alpha = model.alpha();
    let eps = support_threshold(norm_inf(x_star));
    let mut ss = SolutionSet {
        s_plus: Vec::new(),
        s_minus: Vec::new(),
        s_zero: Vec::new(),
        rhs_plus: Vec::new(),
        rhs_minus: Vec::new(),
        x_star: DenseVector::from(x_star.to_vec()),
        alpha,
    };
    for (i, &x) in x_star.iter().enumerate() {
        if x > eps {
            ss.s_plus.push(i);
            ss.rhs_plus.push(1.0 + x / alpha);
        } else if x < -eps {
            ss.s_minus.push(i);
            ss.rhs_minus.push(-1.0 + x / alpha);
        } else {
            ss.s_zero.push(i);
        }
    }
    Ok(ss)
}

/// Refines an approximate primal optimum of the equality model on its sign
/// pattern: `x_S = V Σ⁻¹ Uᵀ b − α(I − VVᵀ)s` from the SVD of `A_S`, which is
/// the least-squares solution on the support when `A_S` has full column rank.
pub fn polish_solution(model: &Model, x_approx: &[f64]) -> Result<DenseVector> {
    let a = model
        .op()
        .dense_matrix()
        .ok_or_else(|| Error::InvalidArgument("polishing is only defined for vector models".into()))?;
    if x_approx.len() != a.cols() {
        return Err(Error::dims("polish_solution", a.cols(), x_approx.len()));
    }
    let xinf = norm_inf(x_approx);
    if xinf == 0.0 {
        return Err(Error::InvalidArgument("x must be nonzero".into()));
    }
    let eps = 1e-9 * xinf;
    let support: Vec<usize> = (0..a.cols()).filter(|&i| x_approx[i].abs() > eps).collect();
    let signs: Vec<f64> = support.iter().map(|&i| x_approx[i].signum()).collect();
    let dec = svd(&a.select_columns(&support))?;
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let p = dec.sigma.len();
    let rank = dec.sigma.iter().filter(|&&s| s > RANK_EPS * smax).count();
    let b = model.b();
    let mut xs = vec![0.0; support.len()];
    let mut vvts = vec![0.0; support.len()];
    for k in 0..rank.min(p) {
        let u = dec.u.column(k);
        let v = dec.v.column(k);
        let coef = dot(&u, b) / dec.sigma[k];
        let proj = dot(&v, &signs);
        for j in 0..support.len() {
            xs[j] += v[j] * coef;
            vvts[j] += v[j] * proj;
        }
    }
    let alpha = model.alpha();
    let mut x = vec![0.0; a.cols()];
    for (j, &i) in support.iter().enumerate() {
        x[i] = xs[j] - alpha * (signs[j] - vvts[j]);
        if x[i] * signs[j] <= 0.0 {
            return Err(Error::Inconsistent {
                residual: (x[i] - x_approx[i]).abs(),
            });
        }
    }
    let residual = norm2(&crate::linalg::sub(&a.matvec(&x), b));
    if !(residual <= 1e-9 * norm2(b).max(1.0)) {
        return Err(Error::Inconsistent { residual });
    }
    Ok(DenseVector::from(x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub y_proj: DenseVector,
    pub dist: f64,
    pub kkt_residual: f64,
}

/// Euclidean projection onto `Y*` by a primal-dual active-set method.
///
/// Each step projects onto the affine set cut out by the equalities and the
/// currently active box sides, drops box sides whose multipliers have the
/// wrong sign and adds the most violated inactive side. The active set of the
/// previous call seeds the next one. If the active-set loop stalls, a
/// proximal gradient solve of the multiplier problem picks a new active set.
#[derive(Debug, Clone)]
pub struct YstarProjector<'a> {
    ss: &'a SolutionSet,
    cols: Vec<Vec<f64>>,
    m: usize,
    norm_a: f64,
    hint: Vec<(usize, f64)>,
}

struct AffineSolve {
    y: Vec<f64>,
    mu: Vec<f64>,
}

impl<'a> YstarProjector<'a> {
    pub fn new(ss: &'a SolutionSet, a: &DenseMatrix) -> Result<Self> {
        if ss.x_star.len() != a.cols() {
            return Err(Error::dims("YstarProjector", ss.x_star.len(), a.cols()));
        }
        Ok(Self {
            ss,
            cols: (0..a.cols()).map(|j| a.column(j)).collect(),
            m: a.rows(),
            norm_a: crate::linalg::spectral_norm(a)?,
            hint: Vec::new(),
        })
    }

    pub fn project(&mut self, y: &[f64]) -> Result<Projection> {
        if y.len() != self.m {
            return Err(Error::dims("project_ystar", self.m, y.len()));
        }
        let hint = std::mem::take(&mut self.hint);
        let (res, bounds) = self.active_set(y, hint)?;
        if let Some(p) = res {
            self.hint = bounds;
            return Ok(p);
        }
        let seeded = self.prox_gradient_bounds(y);
        let (res, bounds) = self.active_set(y, seeded)?;
        match res {
            Some(p) => {
                self.hint = bounds;
                Ok(p)
            }
            None => {
                let eq = self.ss.equalities();
                let active: Vec<(usize, f64)> = eq.iter().chain(&bounds).copied().collect();
                let sol = self.affine(y, &active)?;
                Err(Error::Projection {
                    residual: self.kkt_residual(y, &sol, &active, eq.len()),
                })
            }
        }
    }

    fn affine(&self, y: &[f64], active: &[(usize, f64)]) -> Result<AffineSolve> {
        let w = active.len();
        if w == 0 {
            return Ok(AffineSolve {
                y: y.to_vec(),
                mu: Vec::new(),
            });
        }
        let refs: Vec<&[f64]> = active.iter().map(|&(i, _)| self.cols[i].as_slice()).collect();
        let g = DenseMatrix::from_columns(self.m, &refs)?;
        let c: Vec<f64> = active.iter().map(|&(_, t)| t).collect();
        let dec = svd(&g)?;
        let smax = dec.sigma.first().copied().unwrap_or(0.0);
        let mut yp = y.to_vec();
        let mut mu = vec![0.0; w];
        for k in 0..dec.sigma.len() {
            let s = dec.sigma[k];
            if !(s > RANK_EPS * smax) {
                continue;
            }
            let u = dec.u.column(k);
            let v = dec.v.column(k);
            let uy = dot(&u, y);
            let vc = dot(&v, &c);
            let shift = vc / s - uy;
            for (p, uk) in yp.iter_mut().zip(&u) {
                *p += shift * uk;
            }
            let coef = uy / s - vc / (s * s);
            for (mj, vj) in mu.iter_mut().zip(&v) {
                *mj += coef * vj;
            }
        }
        Ok(AffineSolve { y: yp, mu })
    }

    fn kkt_residual(&self, y: &[f64], sol: &AffineSolve, active: &[(usize, f64)], n_eq: usize) -> f64 {
        let mut r = y.iter().zip(&sol.y).map(|(a, b)| a - b).collect::<Vec<_>>();
        for (&(i, _), &mj) in active.iter().zip(&sol.mu) {
            crate::linalg::axpy(-mj, &self.cols[i], &mut r);
        }
        let stationarity = norm_inf(&r);
        let feas = active
            .iter()
            .map(|&(i, t)| (dot(&self.cols[i], &sol.y) - t).abs())
            .chain(self.ss.s_zero.iter().map(|&i| (dot(&self.cols[i], &sol.y).abs() - 1.0).max(0.0)))
            .fold(0.0, f64::max);
        let sign = active[n_eq.min(active.len())..]
            .iter()
            .zip(&sol.mu[n_eq.min(sol.mu.len())..])
            .map(|(&(_, side), &mj)| (-side * mj).max(0.0))
            .fold(0.0, f64::max);
        let ys = norm_inf(y).max(1.0);
        let ms = norm_inf(&sol.mu).max(1.0);
        (stationarity.max(feas) / ys).max(sign / ms)
    }

    fn active_set(
        &self,
        y: &[f64],
        mut bounds: Vec<(usize, f64)>,
    ) -> Result<(Option<Projection>, Vec<(usize, f64)>)> {
        let eq = self.ss.equalities();
        let n_eq = eq.len();
        let max_iter = 4 * self.cols.len() + 40;
        let mut in_bounds = vec![false; self.cols.len()];
        for &(i, _) in &bounds {
            in_bounds[i] = true;
        }
        for _ in 0..max_iter {
            let active: Vec<(usize, f64)> = eq.iter().chain(&bounds).copied().collect();
            let sol = self.affine(y, &active)?;
            let ms = norm_inf(&sol.mu).max(1.0);
            let worst_sign = bounds
                .iter()
                .enumerate()
                .map(|(j, &(_, side))| (j, side * sol.mu[n_eq + j]))
                .filter(|&(_, v)| v < -1e-12 * ms)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, _)) = worst_sign {
                in_bounds[bounds[j].0] = false;
                bounds.remove(j);
                continue;
            }
            let ys = norm_inf(y).max(1.0);
            let worst_viol = self
                .ss
                .s_zero
                .iter()
                .filter(|&&i| !in_bounds[i])
                .map(|&i| {
                    let t = dot(&self.cols[i], &sol.y);
                    (i, t, t.abs() - 1.0)
                })
                .filter(|&(_, _, v)| v > 1e-12 * ys)
                .max_by(|a, b| a.2.total_cmp(&b.2));
            if let Some((i, t, _)) = worst_viol {
                in_bounds[i] = true;
                bounds.push((i, t.signum()));
                continue;
            }
            let resid = self.kkt_residual(y, &sol, &active, n_eq);
            if resid <= PROJECTION_TOL {
                let dist = norm2(&crate::linalg::sub(y, &sol.y));
                return Ok((
                    Some(Projection {
                        y_proj: DenseVector::from(sol.y),
                        dist,
                        kkt_residual: resid,
                    }),
                    bounds,
                ));
            }
            return Ok((None, bounds));
        }
        Ok((None, bounds))
    }

    // FISTA on min ½‖Gw‖² − (Gw)ᵀy + cᵀλ + ‖ζ‖₁ with w = (λ, ζ), G = [A_E A_0].
    fn prox_gradient_bounds(&self, y: &[f64]) -> Vec<(usize, f64)> {
        let eq = self.ss.equalities();
        let idx: Vec<usize> = eq.iter().map(|&(i, _)| i).chain(self.ss.s_zero.iter().copied()).collect();
        let n_eq = eq.len();
        let w_len = idx.len();
        let step = 1.0 / (self.norm_a * self.norm_a).max(f64::MIN_POSITIVE);
        let mut w = vec![0.0; w_len];
        let mut z = w.clone();
        let mut t = 1.0f64;
        for _ in 0..20_000 {
            let mut gz = vec![0.0; self.m];
            for (j, &i) in idx.iter().enumerate() {
                if z[j] != 0.0 {
                    crate::linalg::axpy(z[j], &self.cols[i], &mut gz);
                }
            }
            let r: Vec<f64> = gz.iter().zip(y).map(|(a, b)| a - b).collect();
            let mut w_next = vec![0.0; w_len];
            for (j, &i) in idx.iter().enumerate() {
                let mut g = dot(&self.cols[i], &r);
                if j < n_eq {
                    g += eq[j].1;
                }
                let v = z[j] - step * g;
                w_next[j] = if j < n_eq { v } else { shrink_scalar(v, step) };
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let change = w_next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            for j in 0..w_len {
                z[j] = w_next[j] + beta * (w_next[j] - w[j]);
            }
            w = w_next;
            t = t_next;
            if change <= 1e-15 * norm_inf(&w).max(1.0) {
                break;
            }
        }
        idx[n_eq..]
            .iter()
            .zip(&w[n_eq..])
            .filter(|(_, &v)| v != 0.0)
            .map(|(&i, &v)| (i, v.signum()))
            .collect()
    }
}

pub fn project_ystar(ss: &SolutionSet, a: &DenseMatrix, y: &[f64]) -> Result<Projection> {
    YstarProjector::new(ss, a)?.project(y)
}

// ---------------------------------------------------------------------------
// convergence checks

/// `⟨y − P(y), ∇f(y)⟩ − ν‖y − P(y)‖²`, nonnegative under restricted strong convexity.
pub fn rescvx_slack(model: &Model, projector: &mut YstarProjector<'_>, nu: f64, y: &[f64]) -> Result<f64> {
    let p = projector.project(y)?;
    let grad = model.dual_gradient(y)?;
    let d: Vec<f64> = y.iter().zip(p.y_proj.iter()).map(|(a, b)| a - b).collect();
    Ok(dot(&d, &grad) - nu * dot(&d, &d))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCheck {
    pub dyk_ok: bool,
    pub dyk2_ok: bool,
    pub dyk3_ok: bool,
    pub rescvx_ok: bool,
    /// Smallest `bound − observed` over all records and inequalities.
    pub worst_slack: f64,
    /// `dist(y_k, Y*)` per record.
    pub dist: Vec<f64>,
}

/// Checks the geometric distance bound, the objective bound, the primal
/// bound and restricted strong convexity at every record of a fixed-step trace.
pub fn verify_convergence(
    model: &Model,
    trace: &Trace,
    ss: &SolutionSet,
    report: &StrongConvexityReport,
    h: f64,
) -> Result<ConvergenceCheck> {
    let a = model
        .op()
        .dense_matrix()
        .ok_or_else(|| Error::InvalidArgument("convergence theory covers vector models only".into()))?;
    let alpha = model.alpha();
    let na = report.norm_a;
    let a4 = alpha * alpha * na.powi(4);
    let h_max = 2.0 * report.nu / a4;
    if !(h > 0.0 && h < h_max) {
        return Err(Error::InvalidArgument(format!(
            "step {h:e} outside the admissible range (0, {h_max:e})"
        )));
    }
    let ys = trace.ys()?;
    let xs = trace.xs()?;
    let q = 1.0 - 2.0 * h * report.nu + h * h * a4;
    let mut proj = YstarProjector::new(ss, a)?;
    let mut dist = Vec::with_capacity(ys.len());
    let mut out = ConvergenceCheck {
        dyk_ok: true,
        dyk2_ok: true,
        dyk3_ok: true,
        rescvx_ok: true,
        worst_slack: f64::INFINITY,
        dist: Vec::new(),
    };
    let mut d0 = 0.0;
    for (idx, ((rec, y), x)) in trace.records.iter().zip(&ys).zip(&xs).enumerate() {
        let p = proj.project(y)?;
        let d = p.dist;
        if idx == 0 {
            d0 = d;
        }
        let k = rec.k as f64;
        let qk = q.powf(k);
        let s1 = qk.sqrt() * d0 - d;
        let f_star = model.dual_objective(&p.y_proj)?;
        let s2 = 0.5 * report.l * qk * d0 * d0 - (rec.f - f_star);
        let xerr = norm2(&crate::linalg::sub(x.as_flat(), &ss.x_star));
        let s3 = alpha * na * d - xerr;
        let grad = model.dual_gradient(y)?;
        let diff: Vec<f64> = y.iter().zip(p.y_proj.iter()).map(|(a, b)| a - b).collect();
        let s4 = dot(&diff, &grad) - report.nu * d * d;
        out.dyk_ok &= s1 >= -CONVERGENCE_SLACK;
        out.dyk2_ok &= s2 >= -CONVERGENCE_SLACK;
        out.dyk3_ok &= s3 >= -CONVERGENCE_SLACK;
        out.rescvx_ok &= s4 >= -CONVERGENCE_SLACK;
        out.worst_slack = out.worst_slack.min(s1).min(s2).min(s3).min(s4);
        dist.push(d);
    }
    out.dist = dist;
    Ok(out)
}
