//! Experiment drivers: phase-transition sweeps and solver convergence runs.
//!
//! Every random object is drawn from a seed derived from the master seed and
//! the cell coordinates, so trials can run in any order and on any number of
//! threads and still produce the same output.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{polish_solution, solution_set, YstarProjector};
use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf, sub, DenseMatrix, DenseVector};
use crate::models::Model;
use crate::rng::{mix_seed, Normal};
use crate::solvers::{solve, SolverOptions, Status, Trace, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// Unit magnitudes with random signs (Bernoulli).
    #[serde(alias = "bernoulli")]
    Flat,
    Gaussian,
    /// `i`-th largest magnitude `i⁻²`.
    #[serde(alias = "powerlaw", alias = "power-law")]
    PowerLaw,
}

impl SignalKind {
    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::Flat => "flat",
            SignalKind::Gaussian => "gaussian",
            SignalKind::PowerLaw => "power_law",
        }
    }
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "flat" | "bernoulli" => Ok(SignalKind::Flat),
            "gaussian" => Ok(SignalKind::Gaussian),
            "power_law" | "powerlaw" => Ok(SignalKind::PowerLaw),
            other => Err(Error::Parse(format!("unknown signal kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalSpec {
    pub n: usize,
    pub k: usize,
    pub kind: SignalKind,
    pub seed: u64,
}

/// `k`-sparse signal with uniformly random support and `‖x‖∞ = 1`.
pub fn gen_signal(spec: SignalSpec) -> Result<DenseVector> {
    let SignalSpec { n, k, kind, seed } = spec;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut normal = Normal::new(seed);
    let support = index::sample(normal.rng(), n, k).into_vec();
    let mut vals: Vec<f64> = match kind {
        SignalKind::Flat => vec![1.0; k],
        SignalKind::Gaussian => normal.vec(k),
        SignalKind::PowerLaw => (1..=k).map(|i| (i as f64).powi(-2)).collect(),
    };
    if kind != SignalKind::Gaussian {
        for v in vals.iter_mut() {
            if normal.rng().random::<bool>() {
                *v = -*v;
            }
        }
    }
    let scale = norm_inf(&vals);
    if scale == 0.0 {
        return Err(Error::NonFinite("signal normalization"));
    }
    let mut x = vec![0.0; n];
    for (&i, v) in support.iter().zip(vals) {
        x[i] = v / scale;
    }
    Ok(DenseVector::from(x))
}

/// I.i.d. standard normal entries.
pub fn gen_gaussian_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut normal = Normal::new(seed);
    DenseMatrix::new(m, n, normal.vec(m * n)).expect("sizes match")
}

/// `‖x* − x⁰‖₂ / ‖x⁰‖₂`.
pub fn relative_error(x_star: &[f64], x_true: &[f64]) -> Result<f64> {
    if x_star.len() != x_true.len() {
        return Err(Error::dims("relative_error", x_true.len(), x_star.len()));
    }
    let d = norm2(x_true);
    if d == 0.0 {
        return Err(Error::InvalidArgument("reference signal is zero".into()));
    }
    Ok(norm2(&sub(x_star, x_true)) / d)
}

// ---------------------------------------------------------------------------
// phase transitions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    /// `[start, end, step]`, end inclusive.
    pub m_range: [usize; 3],
    pub k_range: [usize; 3],
    pub trials: usize,
    /// Multiples of `‖x⁰‖∞`.
    pub alphas: Vec<f64>,
    pub kind: SignalKind,
    pub error_levels: Vec<f64>,
    pub master_seed: u64,
    /// Centered 3-point moving average on the cutoff curves.
    pub smoothing: bool,
    /// A trial counts as a success when its relative error is at most this.
    pub success_threshold: f64,
    /// Adds a wall_time column to trials.csv (breaks byte-for-byte reproducibility).
    pub record_wall_time: bool,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m_range: [10, 60, 5],
            k_range: [1, 20, 1],
            trials: 25,
            alphas: vec![1.0, 10.0, 1000.0],
            kind: SignalKind::Flat,
            error_levels: vec![1e-3, 1e-5],
            master_seed: 2024,
            smoothing: false,
            success_threshold: 1e-3,
            record_wall_time: false,
            solver: SolverOptions {
                max_iter: 20_000,
                ..SolverOptions::new(Variant::Bb).without_iterates()
            },
        }
    }
}

fn expand_range(r: [usize; 3], what: &str) -> Result<Vec<usize>> {
    let [start, end, step] = r;
    if step == 0 || start > end {
        return Err(Error::InvalidArgument(format!("{what} range {r:?} is empty or has zero step")));
    }
    Ok((start..=end).step_by(step).collect())
}

impl ExperimentConfig {
    /// Full-size grid: `n = 400`, `m = 40..200`, `k = 1..80`, 100 trials.
    pub fn full_scale() -> Self {
        Self {
            n: 400,
            m_range: [40, 200, 1],
            k_range: [1, 80, 1],
            trials: 100,
            alphas: vec![1.0, 10.0, 25.0, 1000.0],
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ms(&self) -> Result<Vec<usize>> {
        expand_range(self.m_range, "m")
    }

    pub fn ks(&self) -> Result<Vec<usize>> {
        expand_range(self.k_range, "k")
    }

    pub fn validate(&self) -> Result<()> {
        let ks = self.ks()?;
        let ms = self.ms()?;
        if ks[0] == 0 {
            return Err(Error::InvalidArgument("sparsity k = 0 gives a zero signal".into()));
        }
        if *ks.last().unwrap() > self.n {
            return Err(Error::InvalidArgument("k range exceeds n".into()));
        }
        if ms[0] == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidArgument("alphas must be a nonempty list of positive values".into()));
        }
        if self.error_levels.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument("error levels must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub m: usize,
    pub k: usize,
    pub alpha_multiple: f64,
    pub trial: usize,
    /// `∞` when the solver failed.
    pub rel_error: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub m: usize,
    pub k: usize,
    pub alpha_multiple: f64,
    pub mean_rel_error: f64,
    pub success_rate: f64,
    /// Binomial standard error of `success_rate`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub level: f64,
    pub alpha: f64,
    pub k: usize,
    /// Smallest `m` whose mean relative error is within `level`.
    pub m_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PhaseOutput {
    pub trials: Vec<TrialResult>,
    pub cells: Vec<CellSummary>,
    pub curves: Vec<CurvePoint>,
}

impl PhaseOutput {
    pub fn cell(&self, m: usize, k: usize, alpha: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.m == m && c.k == k && c.alpha_multiple == alpha)
    }
}

/// Seed of the `(m, k, trial)` instance; shared by all `α` so the models are
/// compared on identical data.
pub fn instance_seed(master: u64, m: usize, k: usize, trial: usize) -> u64 {
    mix_seed(&[master, m as u64, k as u64, trial as u64])
}

/// Sensing matrix and signal of one phase-transition instance.
pub fn phase_instance(cfg: &ExperimentConfig, m: usize, k: usize, trial: usize) -> Result<(DenseMatrix, DenseVector)> {
    let seed = instance_seed(cfg.master_seed, m, k, trial);
    let a = gen_gaussian_matrix(m, cfg.n, mix_seed(&[seed, 1]));
    let x0 = gen_signal(SignalSpec {
        n: cfg.n,
        k,
        kind: cfg.kind,
        seed: mix_seed(&[seed, 2]),
    })?;
    Ok((a, x0))
}

fn run_cell_instance(cfg: &ExperimentConfig, m: usize, k: usize, trial: usize) -> Result<Vec<TrialResult>> {
    let (a, x0) = phase_instance(cfg, m, k, trial)?;
    let b = DenseVector::from(a.matvec(&x0));
    let xinf = norm_inf(&x0);
    let mut opts = cfg.solver.clone();
    opts.variant = Variant::Bb;
    opts.keep_iterates = false;
    let mut out = Vec::with_capacity(cfg.alphas.len());
    for &mult in &cfg.alphas {
        let start = Instant::now();
        let res = Model::basis_pursuit(a.clone(), b.clone(), mult * xinf).and_then(|model| solve(&model, &opts));
        let elapsed = start.elapsed().as_secs_f64();
        let (rel_error, iterations) = match res {
            Ok(t) => (relative_error(t.final_x.as_flat(), &x0)?, t.iterations()),
            Err(_) => (f64::INFINITY, 0),
        };
        out.push(TrialResult {
            m,
            k,
            alpha_multiple: mult,
            trial,
            rel_error,
            iterations,
            wall_time: cfg.record_wall_time.then_some(elapsed),
        });
    }
    Ok(out)
}

pub fn run_phase(cfg: &ExperimentConfig) -> Result<PhaseOutput> {
    cfg.validate()?;
    let ms = cfg.ms()?;
    let ks = cfg.ks()?;
    let jobs: Vec<(usize, usize, usize)> = ms
        .iter()
        .flat_map(|&m| ks.iter().flat_map(move |&k| (0..cfg.trials).map(move |t| (m, k, t))))
        .collect();
    let per_job: Vec<Result<Vec<TrialResult>>> =
        jobs.par_iter().map(|&(m, k, t)| run_cell_instance(cfg, m, k, t)).collect();
    let mut trials = Vec::with_capacity(jobs.len() * cfg.alphas.len());
    for r in per_job {
        trials.extend(r?);
    }
    // emission order: (m, k, alpha index, trial)
    let alpha_index = |a: f64| cfg.alphas.iter().position(|&x| x == a).unwrap_or(usize::MAX);
    trials.sort_by_key(|t| (t.m, t.k, alpha_index(t.alpha_multiple), t.trial));
    let cells = summarize(&trials, cfg.success_threshold);
    let curves = cutoff_curves(&cells, &cfg.error_levels, &cfg.alphas, &ks, cfg.smoothing);
    Ok(PhaseOutput { trials, cells, curves })
}

/// Per-cell mean error and success rate, in first-appearance order.
pub fn summarize(trials: &[TrialResult], success_threshold: f64) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, usize, u64)> = Vec::new();
    let mut groups: std::collections::HashMap<(usize, usize, u64), Vec<f64>> = std::collections::HashMap::new();
    for t in trials {
        let key = (t.m, t.k, t.alpha_multiple.to_bits());
        groups
            .entry(key)
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(t.rel_error);
    }
    keys.into_iter()
        .map(|key| {
            let errs = &groups[&key];
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let rate = errs.iter().filter(|&&e| e <= success_threshold).count() as f64 / n;
            CellSummary {
                m: key.0,
                k: key.1,
                alpha_multiple: f64::from_bits(key.2),
                mean_rel_error: mean,
                success_rate: rate,
                std_error: (rate * (1.0 - rate) / n).sqrt(),
            }
        })
        .collect()
}

/// `m*(k)` per error level and `α`; optionally smoothed over neighbouring `k`.
pub fn cutoff_curves(cells: &[CellSummary], levels: &[f64], alphas: &[f64], ks: &[usize], smoothing: bool) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for &level in levels {
        for &alpha in alphas {
            let raw: Vec<Option<f64>> = ks
                .iter()
                .map(|&k| {
                    cells
                        .iter()
                        .filter(|c| c.k == k && c.alpha_multiple == alpha && c.mean_rel_error <= level)
                        .map(|c| c.m)
                        .min()
                        .map(|m| m as f64)
                })
                .collect();
            let vals = if smoothing { smooth3(&raw) } else { raw };
            out.extend(ks.iter().zip(vals).map(|(&k, m_star)| CurvePoint { level, alpha, k, m_star }));
        }
    }
    out
}

/// Centered 3-point moving average over the defined neighbours.
pub fn smooth3(v: &[Option<f64>]) -> Vec<Option<f64>> {
    (0..v.len())
        .map(|i| {
            v[i]?;
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(v.len() - 1);
            let vals: Vec<f64> = v[lo..=hi].iter().flatten().copied().collect();
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// convergence runs

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvRow {
    pub k: usize,
    pub solver: &'static str,
    pub x_err: f64,
    pub y_err: f64,
    pub f: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub variant: Variant,
    pub trace: Trace,
    /// Projection of the final dual iterate onto the dual solution set.
    pub y_star: DenseVector,
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutput {
    pub a: DenseMatrix,
    pub x0: DenseVector,
    pub alpha: f64,
    pub x_star: DenseVector,
    pub runs: Vec<SolverRun>,
    pub rows: Vec<ConvRow>,
}

impl ConvergenceOutput {
    pub fn run(&self, variant: Variant) -> Option<&SolverRun> {
        self.runs.iter().find(|r| r.variant == variant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub kind: SignalKind,
    pub alpha_multiple: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            m: 64,
            n: 128,
            k: 12,
            kind: SignalKind::Gaussian,
            alpha_multiple: 10.0,
            seed: 7,
            tol: 1e-6,
            max_iter: 1_000_000,
        }
    }
}

/// Sensing matrix and signal of a convergence run. The matrix depends on the
/// seed only, and so does the support, so signal kinds share `A` and `supp(x⁰)`.
pub fn convergence_instance(cfg: &ConvergenceConfig) -> Result<(DenseMatrix, DenseVector)> {
    let a = gen_gaussian_matrix(cfg.m, cfg.n, mix_seed(&[cfg.seed, 1]));
    let x0 = gen_signal(SignalSpec {
        n: cfg.n,
        k: cfg.k,
        kind: cfg.kind,
        seed: mix_seed(&[cfg.seed, 2]),
    })?;
    Ok((a, x0))
}

/// Runs fixed step, kicking and BB on one instance and records
/// `‖x_k − x*‖₂`, `‖y_k − y*‖₂` per iteration, where `x*` is the consensus
/// primal solution and `y*` each solver's projected final iterate.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceOutput> {
    let (a, x0) = convergence_instance(cfg)?;
    let alpha = cfg.alpha_multiple * norm_inf(&x0);
    let b = DenseVector::from(a.matvec(&x0));
    let model = Model::basis_pursuit(a.clone(), b, alpha)?;
    let variants = [Variant::Fixed, Variant::Kicking, Variant::Bb];
    let traces: Vec<Trace> = variants
        .par_iter()
        .map(|&v| {
            let opts = SolverOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                ..SolverOptions::new(v)
            };
            solve(&model, &opts)
        })
        .collect::<Result<_>>()?;

    let bb_x = traces[2].final_x.as_flat();
    let x_star = polish_solution(&model, bb_x).unwrap_or_else(|_| DenseVector::from(bb_x.to_vec()));
    for t in &traces {
        let diff = norm_inf(&sub(t.final_x.as_flat(), &x_star));
        if diff > 1e-4 {
            return Err(Error::SolverDisagreement { difference: diff });
        }
    }
    let ss = solution_set(&model, &x_star)?;
    let mut runs = Vec::with_capacity(3);
    let mut rows = Vec::new();
    for (variant, trace) in variants.into_iter().zip(traces) {
        let mut proj = YstarProjector::new(&ss, &a)?;
        let y_star = proj.project(&trace.final_y)?.y_proj;
        for rec in &trace.records {
            let (Some(y), Some(x)) = (&rec.y, &rec.x) else {
                return Err(Error::MissingIterates);
            };
            rows.push(ConvRow {
                k: rec.k,
                solver: variant.name(),
                x_err: norm2(&sub(x.as_flat(), &x_star)),
                y_err: norm2(&sub(y, &y_star)),
                f: rec.f,
                grad_norm: rec.grad_norm,
            });
        }
        runs.push(SolverRun { variant, trace, y_star });
    }
    Ok(ConvergenceOutput {
        a,
        x0,
        alpha,
        x_star,
        runs,
        rows,
    })
}

/// `true` when the trace stopped on the gradient test.
pub fn converged(t: &Trace) -> bool {
    t.status == Status::Converged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_examples() {
        let spec = SignalSpec {
            n: 20,
            k: 3,
            kind: SignalKind::Flat,
            seed: 5,
        };
        let x = gen_signal(spec).unwrap();
        assert_eq!(x.iter().filter(|v| v.abs() == 1.0).count(), 3);
        assert_eq!(x.iter().filter(|&&v| v == 0.0).count(), 17);
        assert_eq!(gen_signal(spec).unwrap(), x);

        let p = gen_signal(SignalSpec {
            kind: SignalKind::PowerLaw,
            ..spec
        })
        .unwrap();
        let mut mags: Vec<f64> = p.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(mags, vec![1.0, 0.25, 1.0 / 9.0]);

        let g = gen_signal(SignalSpec {
            kind: SignalKind::Gaussian,
            ..spec
        })
        .unwrap();
        assert_eq!(norm_inf(&g), 1.0);
        assert!(gen_signal(SignalSpec { k: 0, ..spec }).is_err());
        assert!(gen_signal(SignalSpec { k: 21, ..spec }).is_err());
    }

    #[test]
    fn matrix_moments() {
        let a = gen_gaussian_matrix(100, 100, 3);
        let n = 1e4;
        let mean = a.as_slice().iter().sum::<f64>() / n;
        let var = a.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        assert_eq!(gen_gaussian_matrix(4, 5, 9), gen_gaussian_matrix(4, 5, 9));
    }

    #[test]
    fn relative_error_examples() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
        assert_eq!(relative_error(&[0.0; 3], &x).unwrap(), 1.0);
        assert_eq!(relative_error(&[2.0, -4.0, 1.0], &x).unwrap(), 1.0);
        assert!(relative_error(&x, &[0.0; 3]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.k_range = [0, 5, 1];
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            alphas: vec![],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_from_toml() {
        let cfg = ExperimentConfig::from_toml(
            "n = 30\nm_range = [10, 20, 5]\nk_range = [1, 3, 1]\ntrials = 2\nalphas = [1.0, 10.0]\nkind = \"gaussian\"\n\n[solver]\ntol = 1e-7\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 30);
        assert_eq!(cfg.kind, SignalKind::Gaussian);
        assert_eq!(cfg.solver.tol, 1e-7);
        assert_eq!(cfg.ms().unwrap(), vec![10, 15, 20]);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn smoothing_average() {
        let s = smooth3(&[Some(1.0), Some(4.0), None, Some(7.0)]);
        assert_eq!(s, vec![Some(2.5), Some(2.5), None, Some(7.0)]);
    }

    #[test]
    fn tiny_phase_run_is_deterministic() {
        let cfg = ExperimentConfig {
            n: 20,
            m_range: [8, 12, 4],
            k_range: [1, 2, 1],
            trials: 2,
            alphas: vec![1.0, 10.0],
            ..ExperimentConfig::default()
        };
        let a = run_phase(&cfg).unwrap();
        let b = run_phase(&cfg).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.trials.len(), 2 * 2 * 2 * 2);
        assert_eq!(a.curves.len(), 2 * 2 * 2);
    }
}
