//! Gradient descent on the smooth dual: fixed step, kicking, and
//! Barzilai-Borwein with a nonmonotone Armijo line search.
//!
//! Record `k` of a [`Trace`] holds the dual iterate `y_k` together with
//! `x = α·shrink(𝒜*y_k)`, the primal iterate produced from it. For kicking
//! runs `k` counts fixed-step-equivalent iterations, so skipped stagnant
//! stretches show up as gaps in `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, norm_inf, DenseVector};
use crate::models::{DualEval, DualPoint, Model, PrimalPoint, PrimalShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fixed,
    Kicking,
    Bb,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Kicking => "kicking",
            Variant::Bb => "bb",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(Variant::Fixed),
            "kicking" | "kick" => Ok(Variant::Kicking),
            "bb" => Ok(Variant::Bb),
            other => Err(Error::Parse(format!("unknown solver variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbParams {
    pub h_min: f64,
    pub h_max: f64,
    /// Weight of the nonmonotone reference average.
    pub eta: f64,
    pub c_armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for BbParams {
    fn default() -> Self {
        Self {
            h_min: 1e-10,
            h_max: 1e10,
            eta: 0.85,
            c_armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub variant: Variant,
    /// Step size; `None` picks `ν/(α²‖𝒜‖⁴)` if `nu` is set, else `1/(α‖𝒜‖²)`.
    pub h: Option<f64>,
    pub nu: Option<f64>,
    /// Stop once `‖∇f(y)‖₂ < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub bb: BbParams,
    #[serde(skip)]
    pub y0: Option<DenseVector>,
    /// Store `y` and `x` in every record.
    pub keep_iterates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Fixed,
            h: None,
            nu: None,
            tol: 1e-6,
            max_iter: 100_000,
            bb: BbParams::default(),
            y0: None,
            keep_iterates: true,
        }
    }
}

impl SolverOptions {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self
    }

    pub fn without_iterates(mut self) -> Self {
        self.keep_iterates = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) || !h.is_finite() {
                return bad(format!("step size must be positive, got {h}"));
            }
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) || !nu.is_finite() {
                return bad(format!("nu must be positive, got {nu}"));
            }
        }
        let bb = &self.bb;
        if !(bb.h_min > 0.0 && bb.h_min <= bb.h_max) {
            return bad(format!("need 0 < h_min <= h_max, got {} and {}", bb.h_min, bb.h_max));
        }
        for (name, v) in [("eta", bb.eta), ("c_armijo", bb.c_armijo), ("backtrack", bb.backtrack)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    /// Fixed-step-equivalent iteration index.
    pub k: usize,
    pub y: Option<DualPoint>,
    pub x: Option<PrimalPoint>,
    pub f: f64,
    pub grad_norm: f64,
    /// Step taken to arrive at this record (0 for the start).
    pub step: f64,
    pub kicked: bool,
    /// `‖𝒜x − b‖₂`
    pub primal_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub variant: Variant,
    /// Nominal step size (the first step for BB).
    pub h: f64,
    pub records: Vec<TraceRecord>,
    pub status: Status,
    pub final_y: DualPoint,
    pub final_x: PrimalPoint,
}

impl Trace {
    /// Number of solver iterations performed (kicks count once).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the starting record")
    }

    pub fn has_iterates(&self) -> bool {
        self.records.iter().all(|r| r.y.is_some() && r.x.is_some())
    }

    /// Dual iterates; errors if the trace was recorded without them.
    pub fn ys(&self) -> Result<Vec<&DualPoint>> {
        self.records.iter().map(|r| r.y.as_ref().ok_or(Error::MissingIterates)).collect()
    }

    pub fn xs(&self) -> Result<Vec<&PrimalPoint>> {
        self.records.iter().map(|r| r.x.as_ref().ok_or(Error::MissingIterates)).collect()
    }
}

/// `ν/(α²‖A‖⁴)`, half the largest step covered by linear convergence theory.
pub fn safe_step(nu: f64, alpha: f64, norm_a: f64) -> f64 {
    nu / (alpha * alpha * norm_a.powi(4))
}

pub fn solve(model: &Model, opts: &SolverOptions) -> Result<Trace> {
    match opts.variant {
        Variant::Fixed => lbreg_fixed(model, opts),
        Variant::Kicking => lbreg_kicking(model, opts),
        Variant::Bb => lbreg_bb(model, opts),
    }
}

pub fn lbreg_fixed(model: &Model, opts: &SolverOptions) -> Result<Trace> {
    run_fixed(model, opts, false, Variant::Fixed)
}

pub fn lbreg_kicking(model: &Model, opts: &SolverOptions) -> Result<Trace> {
    run_fixed(model, opts, true, Variant::Kicking)
}

struct Setup {
    y: Vec<f64>,
    h: f64,
}

fn setup(model: &Model, opts: &SolverOptions) -> Result<Setup> {
    opts.validate()?;
    if model.b().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("b = 0: the solution is x = 0".into()));
    }
    if model.op().is_zero() {
        return Err(Error::InvalidArgument("sensing operator is zero".into()));
    }
    let m = model.measurements();
    let y = match &opts.y0 {
        Some(y0) if y0.len() != m => return Err(Error::dims("SolverOptions::y0", m, y0.len())),
        Some(y0) => y0.to_vec(),
        None => vec![0.0; m],
    };
    let h = match opts.h {
        Some(h) => h,
        None => {
            let na = model.op().norm()?;
            match opts.nu {
                Some(nu) => safe_step(nu, model.alpha(), na),
                None => 1.0 / (model.alpha() * na * na),
            }
        }
    };
    Ok(Setup { y, h })
}

/// Evaluation that also covers `y = 0` when `σ > 0`, where the minimum-norm
/// subgradient `−b·(1 − σ/‖b‖)₊` stands in for the gradient.
fn evaluate(model: &Model, y: &[f64], iteration: usize, h: f64) -> Result<DualEval> {
    let ev = if model.sigma() > 0.0 && y.iter().all(|&v| v == 0.0) {
        let bn = norm2(model.b());
        let scale = (1.0 - model.sigma() / bn).max(0.0);
        DualEval {
            f: 0.0,
            grad: model.b().iter().map(|&b| -b * scale).collect(),
            x: vec![0.0; model.op().primal_shape().len()],
            residual: bn,
        }
    } else {
        model.evaluate(y)?
    };
    if !ev.f.is_finite() || ev.grad.iter().any(|g| !g.is_finite()) || ev.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration, step: h });
    }
    Ok(ev)
}

struct Recorder {
    keep: bool,
    shape: PrimalShape,
    records: Vec<TraceRecord>,
}

impl Recorder {
    fn push(&mut self, k: usize, y: &[f64], ev: &DualEval, step: f64, kicked: bool) {
        let (yy, xx) = if self.keep {
            (
                Some(DenseVector::from(y.to_vec())),
                Some(PrimalPoint::from_flat(self.shape, ev.x.clone())),
            )
        } else {
            (None, None)
        };
        self.records.push(TraceRecord {
            k,
            y: yy,
            x: xx,
            f: ev.f,
            grad_norm: norm2(&ev.grad),
            step,
            kicked,
            primal_residual: ev.residual,
        });
    }

    fn finish(self, variant: Variant, h: f64, status: Status, y: Vec<f64>, x: Vec<f64>) -> Trace {
        Trace {
            variant,
            h,
            records: self.records,
            status,
            final_y: DenseVector::from(y),
            final_x: PrimalPoint::from_flat(self.shape, x),
        }
    }
}

fn run_fixed(model: &Model, opts: &SolverOptions, kicking: bool, variant: Variant) -> Result<Trace> {
    let Setup { mut y, h } = setup(model, opts)?;
    // kicking relies on a constant gradient during stagnation, which only
    // holds for componentwise shrinkage without the σ‖y‖ term
    let can_kick = kicking && !model.is_matrix() && model.sigma() == 0.0;
    let mut rec = Recorder {
        keep: opts.keep_iterates,
        shape: model.op().primal_shape(),
        records: Vec::new(),
    };
    let mut k = 0usize;
    let mut ev = evaluate(model, &y, 0, h)?;
    rec.push(0, &y, &ev, 0.0, false);
    let mut prev_x: Option<Vec<f64>> = None;
    let mut status = Status::MaxIter;

    for it in 1..=opts.max_iter {
        if norm2(&ev.grad) < opts.tol {
            status = Status::Converged;
            break;
        }
        let mut jump = 1usize;
        if can_kick && prev_x.as_deref() == Some(ev.x.as_slice()) {
            jump = kick_length(model, &y, &ev.grad, h);
        }
        axpy(-(jump as f64) * h, &ev.grad, &mut y);
        k += jump;
        let next = evaluate(model, &y, it, h)?;
        prev_x = Some(std::mem::replace(&mut ev, next).x);
        rec.push(k, &y, &ev, jump as f64 * h, jump > 1);
    }
    if status == Status::MaxIter && norm2(&ev.grad) < opts.tol {
        status = Status::Converged;
    }
    Ok(rec.finish(variant, h, status, y, ev.x))
}

/// Number of constant-gradient steps until the first dead coordinate of
/// `v = Aᵀy` leaves `[−1, 1]`; 1 if none is moving.
fn kick_length(model: &Model, y: &[f64], grad: &[f64], h: f64) -> usize {
    let v = model.op().adjoint_flat(y);
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let w = model.op().adjoint_flat(&neg);
    let mut best: Option<(f64, usize)> = None;
    for (i, (&vi, &wi)) in v.iter().zip(&w).enumerate() {
        if vi.abs() > 1.0 || wi == 0.0 {
            continue;
        }
        let s = ((wi.signum() - vi) / (h * wi)).floor() + 1.0;
        if best.is_none_or(|(bs, _)| s < bs) {
            best = Some((s, i));
        }
    }
    let Some((s, i)) = best else { return 1 };
    // cap keeps the index arithmetic finite for nearly stationary coordinates
    let mut s = s.clamp(1.0, 1e15) as usize;
    let exits = |s: usize| (v[i] + s as f64 * h * w[i]).abs() > 1.0;
    while s > 1 && exits(s - 1) {
        s -= 1;
    }
    while !exits(s) && s < 1_000_000_000_000_000 {
        s += 1;
    }
    s.max(1)
}

const ARMIJO_ROUNDING: f64 = 1e-13;

pub fn lbreg_bb(model: &Model, opts: &SolverOptions) -> Result<Trace> {
    let Setup { mut y, .. } = setup(model, opts)?;
    let bb = opts.bb;
    let h0 = 1.0 / model.lipschitz()?;
    let mut rec = Recorder {
        keep: opts.keep_iterates,
        shape: model.op().primal_shape(),
        records: Vec::new(),
    };
    let mut ev = evaluate(model, &y, 0, h0)?;
    rec.push(0, &y, &ev, 0.0, false);
    let mut c_ref = ev.f;
    let mut q = 1.0;
    let mut h = h0;
    let mut status = Status::MaxIter;
    let mut y_new = vec![0.0; y.len()];

    for it in 1..=opts.max_iter {
        let gsq = dot(&ev.grad, &ev.grad);
        if gsq.sqrt() < opts.tol {
            status = Status::Converged;
            break;
        }
        let mut step = h;
        let mut backtracks = 0;
        let next = loop {
            y_new.copy_from_slice(&y);
            axpy(-step, &ev.grad, &mut y_new);
            let cand = evaluate(model, &y_new, it, step)?;
            // allowance for rounding in f once the decrease drops below machine precision
            let slack = ARMIJO_ROUNDING * c_ref.abs().max(1.0);
            if cand.f <= c_ref - bb.c_armijo * step * gsq + slack {
                break cand;
            }
            backtracks += 1;
            if backtracks > bb.max_backtracks {
                return Err(Error::LineSearch(bb.max_backtracks));
            }
            step *= bb.backtrack;
        };
        let s: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
        let gd: Vec<f64> = next.grad.iter().zip(&ev.grad).map(|(a, b)| a - b).collect();
        let sty = dot(&s, &gd);
        h = if sty > 0.0 {
            (dot(&s, &s) / sty).clamp(bb.h_min, bb.h_max)
        } else {
            bb.h_max
        };
        let q_next = bb.eta * q + 1.0;
        c_ref = (bb.eta * q * c_ref + next.f) / q_next;
        q = q_next;
        std::mem::swap(&mut y, &mut y_new);
        ev = next;
        rec.push(it, &y, &ev, step, false);
    }
    if status == Status::MaxIter && norm2(&ev.grad) < opts.tol {
        status = Status::Converged;
    }
    Ok(rec.finish(Variant::Bb, h0, status, y, ev.x))
}

/// Re-runs the primal-dual form `x ← α·shrink(v)`, `v ← v + h·𝒜*(b − 𝒜x)`
/// from the first recorded `y` and checks `v_k = 𝒜*y_k` at every record.
pub fn v_form_check(model: &Model, trace: &Trace) -> Result<bool> {
    if model.sigma() > 0.0 {
        return Err(Error::InvalidArgument("the v-form only covers sigma = 0".into()));
    }
    let ys = trace.ys()?;
    let op = model.op();
    let mut v = op.adjoint_flat(&ys[0]);
    let mut k = trace.records[0].k;
    for (rec, y) in trace.records.iter().zip(&ys).skip(1) {
        while k < rec.k {
            let x = model.primal_from_adjoint(&v)?;
            let ax = op.apply_flat(&x);
            let r: Vec<f64> = model.b().iter().zip(&ax).map(|(b, a)| b - a).collect();
            axpy(trace.h, &op.adjoint_flat(&r), &mut v);
            k += 1;
        }
        let target = op.adjoint_flat(y);
        let diff = v.iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !(diff <= 1e-10 * norm_inf(&target).max(1.0)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::models::SensingOperator;

    fn scalar_model(alpha: f64) -> Model {
        Model::basis_pursuit(DenseMatrix::identity(1), vec![1.0].into(), alpha).unwrap()
    }

    #[test]
    fn one_dimensional_fixed_point() {
        let t = lbreg_fixed(&scalar_model(2.0), &SolverOptions::default().with_step(0.1)).unwrap();
        assert_eq!(t.status, Status::Converged);
        assert!((t.final_y[0] - 1.5).abs() < 1e-6);
        assert!((t.final_x.as_flat()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_b_rejected() {
        let m = Model::basis_pursuit(DenseMatrix::identity(2), vec![0.0, 0.0].into(), 1.0).unwrap();
        assert!(lbreg_fixed(&m, &SolverOptions::default()).is_err());
        assert!(lbreg_bb(&m, &SolverOptions::default()).is_err());
    }

    #[test]
    fn kick_crosses_dead_zone() {
        let m = scalar_model(2.0);
        let opts = SolverOptions::new(Variant::Kicking).with_step(0.01);
        let t = lbreg_kicking(&m, &opts).unwrap();
        let kick = t.records.iter().find(|r| r.kicked).unwrap();
        let prev = &t.records[t.records.iter().position(|r| r.kicked).unwrap() - 1];
        assert_eq!(prev.k, 1);
        assert_eq!(kick.k - prev.k, 100);
        let fixed = lbreg_fixed(&m, &SolverOptions::default().with_step(0.01)).unwrap();
        let yk = fixed.records[kick.k].y.as_ref().unwrap()[0];
        assert!((kick.y.as_ref().unwrap()[0] - yk).abs() < 1e-10);
        assert!(t.iterations() < fixed.iterations());
    }

    #[test]
    fn divergence_reported() {
        let m = Model::basis_pursuit(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap(),
            vec![1.0, 1.0].into(),
            5.0,
        )
        .unwrap();
        let r = lbreg_fixed(&m, &SolverOptions::default().with_step(1e200).with_max_iter(50));
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn bb_first_step_is_inverse_lipschitz() {
        let m = Model::basis_pursuit(
            DenseMatrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 2.0]]).unwrap(),
            vec![3.0, -1.0].into(),
            4.0,
        )
        .unwrap();
        let t = lbreg_bb(&m, &SolverOptions::new(Variant::Bb)).unwrap();
        let l = m.lipschitz().unwrap();
        assert!((t.h - 1.0 / l).abs() < 1e-15);
        assert!((t.records[1].step - 1.0 / l).abs() < 1e-15);
        assert_eq!(t.status, Status::Converged);
    }

    #[test]
    fn safe_step_examples() {
        assert_eq!(safe_step(1.0, 1.0, 1.0), 1.0);
        assert!((safe_step(10.0 / 7.0, 30.0, 1.0) - 10.0 / 6300.0).abs() < 1e-15);
    }

    #[test]
    fn v_form_examples() {
        let m = Model::basis_pursuit(
            DenseMatrix::from_rows(&[vec![1.0, 0.5, -0.3], vec![0.2, 1.0, 0.7]]).unwrap(),
            vec![1.0, 2.0].into(),
            3.0,
        )
        .unwrap();
        let mut t = lbreg_fixed(&m, &SolverOptions::default().with_tol(1e-14).with_max_iter(60)).unwrap();
        assert!(v_form_check(&m, &t).unwrap());
        let y = t.records[10].y.as_mut().unwrap();
        y[0] += 1e-3;
        assert!(!v_form_check(&m, &t).unwrap());
        let t0 = lbreg_fixed(&m, &SolverOptions::default().with_max_iter(0)).unwrap();
        assert_eq!(t0.iterations(), 0);
        assert!(v_form_check(&m, &t0).unwrap());
    }

    #[test]
    fn noisy_model_starts_at_origin() {
        let op = SensingOperator::dense(DenseMatrix::identity(2)).unwrap();
        let m = Model::new(op.clone(), vec![3.0, 4.0].into(), 10.0, 1.0).unwrap();
        let t = lbreg_bb(&m, &SolverOptions::new(Variant::Bb)).unwrap();
        assert_eq!(t.status, Status::Converged);
        let x = t.final_x.as_flat();
        let r = norm2(&[x[0] - 3.0, x[1] - 4.0]);
        assert!((r - 1.0).abs() < 1e-5, "residual {r}");
        // ‖b‖ ≤ σ: zero is optimal immediately
        let m0 = Model::new(op, vec![0.3, 0.4].into(), 10.0, 1.0).unwrap();
        let t0 = lbreg_fixed(&m0, &SolverOptions::default()).unwrap();
        assert_eq!(t0.iterations(), 0);
        assert!(t0.final_x.as_flat().iter().all(|&v| v == 0.0));
    }
}
