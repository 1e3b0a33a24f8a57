//! Augmented ℓ1 and nuclear-norm models and their smooth Lagrange duals.
//!
//! A [`Model`] pairs a [`SensingOperator`] with measurements `b`, the
//! augmentation parameter `alpha` and a noise radius `sigma`. The dual
//! objective is
//!
//! ```text
//! f(y) = −bᵀy + σ‖y‖₂ + (α/2)‖shrink(𝒜*y)‖²
//! ```
//!
//! where `shrink` is componentwise soft-thresholding for vector models and
//! singular value soft-thresholding for matrix models. `sigma = 0` gives the
//! equality-constrained dual; the `σ‖y‖₂` term is dropped entirely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm1, norm2, shrink_scalar, singular_values, spectral_norm, svd, DenseMatrix, DenseVector};

/// Dual iterate `y ∈ ℝᵐ`.
pub type DualPoint = DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    DenseVector,
    EntrySampler,
    TraceList,
}

/// The linear map `A` (vectors) or `𝒜` (matrices).
#[derive(Debug, Clone)]
pub struct SensingOperator {
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(DenseMatrix),
    Sampler {
        n1: usize,
        n2: usize,
        entries: Vec<(usize, usize)>,
    },
    // one row per measurement matrix, each flattened row-major
    Trace { n1: usize, n2: usize, rows: DenseMatrix },
}

/// Shape of the primal variable an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalShape {
    Vector(usize),
    Matrix(usize, usize),
}

impl PrimalShape {
    pub fn len(&self) -> usize {
        match *self {
            PrimalShape::Vector(n) => n,
            PrimalShape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimalPoint {
    Vector(DenseVector),
    Matrix(DenseMatrix),
}

impl PrimalPoint {
    pub fn shape(&self) -> PrimalShape {
        match self {
            PrimalPoint::Vector(v) => PrimalShape::Vector(v.len()),
            PrimalPoint::Matrix(m) => PrimalShape::Matrix(m.rows(), m.cols()),
        }
    }

    /// Entries in row-major order.
    pub fn as_flat(&self) -> &[f64] {
        match self {
            PrimalPoint::Vector(v) => v.as_slice(),
            PrimalPoint::Matrix(m) => m.as_slice(),
        }
    }

    pub fn from_flat(shape: PrimalShape, flat: Vec<f64>) -> Self {
        match shape {
            PrimalShape::Vector(_) => PrimalPoint::Vector(DenseVector::from(flat)),
            PrimalShape::Matrix(r, c) => {
                PrimalPoint::Matrix(DenseMatrix::new(r, c, flat).expect("shape checked by caller"))
            }
        }
    }

    pub fn as_vector(&self) -> Option<&DenseVector> {
        match self {
            PrimalPoint::Vector(v) => Some(v),
            PrimalPoint::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DenseMatrix> {
        match self {
            PrimalPoint::Matrix(m) => Some(m),
            PrimalPoint::Vector(_) => None,
        }
    }

    /// ℓ2 norm for vectors, Frobenius norm for matrices.
    pub fn norm2(&self) -> f64 {
        norm2(self.as_flat())
    }
}

impl SensingOperator {
    pub fn dense(a: DenseMatrix) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::NonFinite("sensing matrix"));
        }
        Ok(Self { repr: Repr::Dense(a) })
    }

    /// Samples the entries `Ω` of an `n1 × n2` matrix, in the given order.
    pub fn entry_sampler(n1: usize, n2: usize, entries: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for &(i, j) in &entries {
            if i >= n1 || j >= n2 {
                return Err(Error::InvalidArgument(format!(
                    "sampled entry ({i},{j}) out of range for {n1}x{n2}"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate sampled entry ({i},{j})")));
            }
        }
        Ok(Self {
            repr: Repr::Sampler { n1, n2, entries },
        })
    }

    /// `b_i = trace(A_iᵀ X)` for a list of same-shape measurement matrices.
    pub fn trace_list(mats: &[DenseMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("trace list needs at least one matrix".into()))?;
        let (n1, n2) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(mats.len() * n1 * n2);
        for a in mats {
            if a.rows() != n1 || a.cols() != n2 {
                return Err(Error::dims(
                    "trace_list",
                    format!("{n1}x{n2}"),
                    format!("{}x{}", a.rows(), a.cols()),
                ));
            }
            if !a.is_finite() {
                return Err(Error::NonFinite("measurement matrix"));
            }
            data.extend_from_slice(a.as_slice());
        }
        Ok(Self {
            repr: Repr::Trace {
                n1,
                n2,
                rows: DenseMatrix::new(mats.len(), n1 * n2, data)?,
            },
        })
    }

    pub fn kind(&self) -> OperatorKind {
        match self.repr {
            Repr::Dense(_) => OperatorKind::DenseVector,
            Repr::Sampler { .. } => OperatorKind::EntrySampler,
            Repr::Trace { .. } => OperatorKind::TraceList,
        }
    }

    /// Number of measurements `m`.
    pub fn measurements(&self) -> usize {
        match &self.repr {
            Repr::Dense(a) => a.rows(),
            Repr::Sampler { entries, .. } => entries.len(),
            Repr::Trace { rows, .. } => rows.rows(),
        }
    }

    pub fn primal_shape(&self) -> PrimalShape {
        match &self.repr {
            Repr::Dense(a) => PrimalShape::Vector(a.cols()),
            Repr::Sampler { n1, n2, .. } | Repr::Trace { n1, n2, .. } => PrimalShape::Matrix(*n1, *n2),
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.primal_shape(), PrimalShape::Matrix(..))
    }

    pub fn dense_matrix(&self) -> Option<&DenseMatrix> {
        match &self.repr {
            Repr::Dense(a) => Some(a),
            _ => None,
        }
    }

    pub fn sampled_entries(&self) -> Option<&[(usize, usize)]> {
        match &self.repr {
            Repr::Sampler { entries, .. } => Some(entries),
            _ => None,
        }
    }

    /// The measurement matrices `A_i` of a trace-list operator.
    pub fn trace_matrices(&self) -> Option<Vec<DenseMatrix>> {
        match &self.repr {
            Repr::Trace { n1, n2, rows } => Some(
                (0..rows.rows())
                    .map(|i| DenseMatrix::new(*n1, *n2, rows.row(i).to_vec()).expect("validated"))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Applies the operator to a row-major flattened primal point.
    pub fn apply_flat(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(a) => a.matvec(x),
            Repr::Sampler { n2, entries, .. } => entries.iter().map(|&(i, j)| x[i * n2 + j]).collect(),
            Repr::Trace { rows, .. } => rows.matvec(x),
        }
    }

    /// Adjoint applied to `y`, flattened row-major.
    pub fn adjoint_flat(&self, y: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(a) => a.matvec_t(y),
            Repr::Sampler { n1, n2, entries } => {
                let mut out = vec![0.0; n1 * n2];
                for (&(i, j), &yk) in entries.iter().zip(y) {
                    out[i * n2 + j] = yk;
                }
                out
            }
            Repr::Trace { rows, .. } => rows.matvec_t(y),
        }
    }

    pub fn apply(&self, p: &PrimalPoint) -> Result<DenseVector> {
        if p.shape() != self.primal_shape() {
            return Err(Error::dims(
                "apply_op",
                format!("{:?}", self.primal_shape()),
                format!("{:?}", p.shape()),
            ));
        }
        Ok(DenseVector::from(self.apply_flat(p.as_flat())))
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<PrimalPoint> {
        if y.len() != self.measurements() {
            return Err(Error::dims("adjoint_op", self.measurements(), y.len()));
        }
        Ok(PrimalPoint::from_flat(self.primal_shape(), self.adjoint_flat(y)))
    }

    /// Explicit `m × N` matrix of the operator acting on flattened primals.
    pub fn to_matrix(&self) -> DenseMatrix {
        match &self.repr {
            Repr::Dense(a) => a.clone(),
            Repr::Trace { rows, .. } => rows.clone(),
            Repr::Sampler { n2, entries, .. } => {
                let n = self.primal_shape().len();
                let mut out = DenseMatrix::zeros(entries.len(), n);
                for (k, &(i, j)) in entries.iter().enumerate() {
                    out.set(k, i * n2 + j, 1.0);
                }
                out
            }
        }
    }

    /// Operator norm `‖𝒜‖₂`.
    pub fn norm(&self) -> Result<f64> {
        match &self.repr {
            Repr::Sampler { entries, .. } => Ok(if entries.is_empty() { 0.0 } else { 1.0 }),
            Repr::Dense(a) => spectral_norm(a),
            Repr::Trace { rows, .. } => spectral_norm(rows),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            Repr::Dense(a) => a.is_zero(),
            Repr::Sampler { entries, .. } => entries.is_empty(),
            Repr::Trace { rows, .. } => rows.is_zero(),
        }
    }
}

/// Everything a solver needs from one dual evaluation.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub f: f64,
    pub grad: Vec<f64>,
    /// `α·shrink(𝒜*y)`, flattened.
    pub x: Vec<f64>,
    /// `‖𝒜x − b‖₂`
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    op: SensingOperator,
    b: DenseVector,
    alpha: f64,
    sigma: f64,
}

impl Model {
    pub fn new(op: SensingOperator, b: DenseVector, alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {sigma}")));
        }
        if b.len() != op.measurements() {
            return Err(Error::dims("Model::new (b)", op.measurements(), b.len()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurements"));
        }
        Ok(Self { op, b, alpha, sigma })
    }

    /// Equality-constrained dense vector model.
    pub fn basis_pursuit(a: DenseMatrix, b: DenseVector, alpha: f64) -> Result<Self> {
        Self::new(SensingOperator::dense(a)?, b, alpha, 0.0)
    }

    pub fn op(&self) -> &SensingOperator {
        &self.op
    }

    pub fn b(&self) -> &DenseVector {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn measurements(&self) -> usize {
        self.op.measurements()
    }

    pub fn is_matrix(&self) -> bool {
        self.op.is_matrix()
    }

    /// `L = α‖𝒜‖₂²`, the Lipschitz constant of the smooth part of the dual gradient.
    pub fn lipschitz(&self) -> Result<f64> {
        let n = self.op.norm()?;
        Ok(self.alpha * n * n)
    }

    fn check_y(&self, y: &[f64], context: &'static str) -> Result<()> {
        if y.len() != self.measurements() {
            return Err(Error::dims(context, self.measurements(), y.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual point"));
        }
        Ok(())
    }

    /// Shrinkage image of `z = 𝒜*y` and its squared norm.
    fn shrink_image(&self, z: Vec<f64>) -> Result<(Vec<f64>, f64)> {
        match self.op.primal_shape() {
            PrimalShape::Vector(_) => {
                let s: Vec<f64> = z.into_iter().map(|v| shrink_scalar(v, 1.0)).collect();
                let sq = dot(&s, &s);
                Ok((s, sq))
            }
            PrimalShape::Matrix(r, c) => {
                let zm = DenseMatrix::new(r, c, z)?;
                let dec = svd(&zm)?;
                let shrunk: Vec<f64> = dec.sigma.iter().map(|&s| (s - 1.0).max(0.0)).collect();
                let sq = dot(&shrunk, &shrunk);
                Ok((dec.reconstruct_with(&shrunk).into_vec(), sq))
            }
        }
    }

    /// Objective, gradient and primal image at `y` in one pass.
    pub fn evaluate(&self, y: &[f64]) -> Result<DualEval> {
        self.check_y(y, "evaluate")?;
        let ynorm = norm2(y);
        if self.sigma > 0.0 && ynorm == 0.0 {
            return Err(Error::Nondifferentiable);
        }
        let (s, sq) = self.shrink_image(self.op.adjoint_flat(y))?;
        let x: Vec<f64> = s.iter().map(|v| self.alpha * v).collect();
        let ax = self.op.apply_flat(&x);
        let mut grad: Vec<f64> = ax.iter().zip(self.b.iter()).map(|(a, b)| a - b).collect();
        let residual = norm2(&grad);
        let mut f = -dot(&self.b, y) + 0.5 * self.alpha * sq;
        if self.sigma > 0.0 {
            f += self.sigma * ynorm;
            linalg::axpy(self.sigma / ynorm, y, &mut grad);
        }
        Ok(DualEval { f, grad, x, residual })
    }

    pub fn dual_objective(&self, y: &[f64]) -> Result<f64> {
        self.check_y(y, "dual_objective")?;
        let z = self.op.adjoint_flat(y);
        let sq: f64 = match self.op.primal_shape() {
            PrimalShape::Vector(_) => z.iter().map(|&v| shrink_scalar(v, 1.0).powi(2)).sum(),
            PrimalShape::Matrix(r, c) => singular_values(&DenseMatrix::new(r, c, z)?)?
                .iter()
                .map(|&s| (s - 1.0).max(0.0).powi(2))
                .sum(),
        };
        let mut f = -dot(&self.b, y) + 0.5 * self.alpha * sq;
        if self.sigma > 0.0 {
            f += self.sigma * norm2(y);
        }
        Ok(f)
    }

    pub fn dual_gradient(&self, y: &[f64]) -> Result<DenseVector> {
        Ok(DenseVector::from(self.evaluate(y)?.grad))
    }

    /// `α·shrink(z)` for an adjoint image `z`, flattened.
    pub fn primal_from_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.op.primal_shape().len() {
            return Err(Error::dims("primal_from_adjoint", self.op.primal_shape().len(), z.len()));
        }
        let (s, _) = self.shrink_image(z.to_vec())?;
        Ok(s.into_iter().map(|v| self.alpha * v).collect())
    }

    /// `α·shrink(𝒜*y)` (vector) or `α·sv_shrink(𝒜*y)` (matrix).
    pub fn primal_from_dual(&self, y: &[f64]) -> Result<PrimalPoint> {
        self.check_y(y, "primal_from_dual")?;
        let (s, _) = self.shrink_image(self.op.adjoint_flat(y))?;
        let x = s.into_iter().map(|v| self.alpha * v).collect();
        Ok(PrimalPoint::from_flat(self.op.primal_shape(), x))
    }

    /// `‖x‖₁ + ‖x‖₂²/(2α)` or `‖X‖_* + ‖X‖_F²/(2α)`.
    pub fn primal_objective(&self, p: &PrimalPoint) -> Result<f64> {
        if p.shape() != self.op.primal_shape() {
            return Err(Error::dims(
                "primal_objective",
                format!("{:?}", self.op.primal_shape()),
                format!("{:?}", p.shape()),
            ));
        }
        let flat = p.as_flat();
        let sparsity = match p {
            PrimalPoint::Vector(v) => norm1(v),
            PrimalPoint::Matrix(m) => singular_values(m)?.iter().sum(),
        };
        Ok(sparsity + dot(flat, flat) / (2.0 * self.alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> SensingOperator {
        SensingOperator::dense(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let op = SensingOperator::dense(DenseMatrix::identity(2)).unwrap();
        let x = PrimalPoint::Vector(vec![3.0, 4.0].into());
        assert_eq!(op.apply(&x).unwrap().as_slice(), &[3.0, 4.0]);

        let xm = PrimalPoint::Matrix(DenseMatrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap());
        let s = SensingOperator::entry_sampler(2, 2, vec![(0, 0)]).unwrap();
        assert_eq!(s.apply(&xm).unwrap().as_slice(), &[5.0]);

        let t = SensingOperator::trace_list(&[DenseMatrix::identity(2)]).unwrap();
        let x1 = PrimalPoint::Matrix(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        assert_eq!(t.apply(&x1).unwrap().as_slice(), &[5.0]);
    }

    #[test]
    fn adjoint_examples() {
        let op = SensingOperator::dense(DenseMatrix::identity(2)).unwrap();
        assert_eq!(op.adjoint(&[3.0, 4.0]).unwrap().as_flat(), &[3.0, 4.0]);
        let t = SensingOperator::trace_list(&[DenseMatrix::identity(2)]).unwrap();
        assert_eq!(t.adjoint(&[2.0]).unwrap(), PrimalPoint::Matrix(DenseMatrix::identity(2).scale(2.0)));
        let s = SensingOperator::entry_sampler(2, 3, vec![(1, 2), (0, 0)]).unwrap();
        let adj = s.adjoint(&[7.0, -1.0]).unwrap();
        assert_eq!(adj.as_flat(), &[-1.0, 0.0, 0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn shape_errors() {
        let op = SensingOperator::dense(DenseMatrix::identity(2)).unwrap();
        assert!(op.apply(&PrimalPoint::Vector(vec![1.0].into())).is_err());
        assert!(op.adjoint(&[1.0]).is_err());
        assert!(SensingOperator::entry_sampler(2, 2, vec![(2, 0)]).is_err());
        assert!(SensingOperator::entry_sampler(2, 2, vec![(0, 0), (0, 0)]).is_err());
        assert!(SensingOperator::trace_list(&[DenseMatrix::identity(2), DenseMatrix::identity(3)]).is_err());
    }

    #[test]
    fn objective_at_origin_is_zero() {
        let m = Model::new(dense(&[vec![1.0, 2.0], vec![0.5, -1.0]]), vec![1.0, 2.0].into(), 3.0, 0.5).unwrap();
        assert_eq!(m.dual_objective(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dead_shrink_region() {
        let m = Model::new(dense(&[vec![0.1, 0.2], vec![0.3, -0.1]]), vec![1.0, -2.0].into(), 3.0, 0.0).unwrap();
        let y = [0.5, 0.5];
        assert!((m.dual_objective(&y).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(m.dual_gradient(&y).unwrap().as_slice(), &[-1.0, 2.0]);
        assert_eq!(m.dual_gradient(&[0.0, 0.0]).unwrap().as_slice(), &[-1.0, 2.0]);
    }

    #[test]
    fn nondifferentiable_origin_with_noise() {
        let m = Model::new(dense(&[vec![1.0]]), vec![1.0].into(), 1.0, 0.1).unwrap();
        assert!(matches!(m.dual_gradient(&[0.0]), Err(Error::Nondifferentiable)));
    }

    #[test]
    fn primal_examples() {
        let m = Model::new(dense(&[vec![1.0]]), vec![1.0].into(), 2.0, 0.0).unwrap();
        assert_eq!(m.primal_from_dual(&[0.0]).unwrap().as_flat(), &[0.0]);
        assert_eq!(m.primal_from_dual(&[1.5]).unwrap().as_flat(), &[1.0]);
        let m3 = Model::new(dense(&[vec![1.0]]), vec![1.0].into(), 3.0, 0.0).unwrap();
        assert_eq!(m3.primal_objective(&PrimalPoint::Vector(vec![0.0].into())).unwrap(), 0.0);
        assert_eq!(m3.primal_objective(&PrimalPoint::Vector(vec![3.0].into())).unwrap(), 4.5);
    }

    #[test]
    fn model_validation() {
        let op = dense(&[vec![1.0]]);
        assert!(Model::new(op.clone(), vec![1.0].into(), 0.0, 0.0).is_err());
        assert!(Model::new(op.clone(), vec![1.0].into(), 1.0, -1.0).is_err());
        assert!(Model::new(op, vec![1.0, 2.0].into(), 1.0, 0.0).is_err());
    }

    #[test]
    fn operator_norms() {
        let s = SensingOperator::entry_sampler(3, 3, vec![(0, 1), (2, 2)]).unwrap();
        assert_eq!(s.norm().unwrap(), 1.0);
        assert!((spectral_norm(&s.to_matrix()).unwrap() - 1.0).abs() < 1e-15);
    }
}
