//! Linear-algebra substrate for finite-dimensional tensor-product Hilbert
//! spaces: subsystem layouts, pure states, density operators, Kronecker
//! products, operator embedding, partial traces, entropies and
//! eigendecomposition-based unitary time evolution.
//!
//! Conventions fixed here and relied on by the rest of the crate:
//!
//! * Joint basis indices are mixed-radix with the **leftmost layout factor as
//!   the most significant digit** (row-major Kronecker order).
//! * Qubit factors are two-dimensional with basis order `(|e>, |g>)`, i.e.
//!   index 0 is the excited state. The half-spin operators built by
//!   [`ops::sigma_z`] and friends follow this order, so `sigma_z |e> = +1/2 |e>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Tolerance for the pure-state normalization invariant.
pub const NORM_TOL: f64 = 1e-10;
/// Tolerance for the density-operator Hermiticity/trace invariants.
pub const DENSITY_TOL: f64 = 1e-10;
/// Tolerance for the Hermitian-operator Hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues below this cutoff are dropped from `lambda log lambda` sums.
pub const EIGENVALUE_CUTOFF: f64 = 1e-14;
/// Maximum relative Frobenius reconstruction error of an [`EigenSystem`].
pub const EIGEN_RECONSTRUCTION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("layout must contain at least one factor")]
    EmptyLayout,
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),
    #[error("qubit factor `{label}` must have dimension 2, got {dim}")]
    BadQubitDim { label: String, dim: usize },
    #[error("factor `{label}` must have positive dimension")]
    ZeroDim { label: String },
    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),
    #[error("tensor product of an empty factor list")]
    EmptyFactorList,
    #[error("tensor product factors must all be vectors or all be square matrices")]
    MixedRanks,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operands live on different layouts")]
    LayoutMismatch,
    #[error("state is not normalized: |psi| = {norm}")]
    NotNormalized { norm: f64 },
    #[error("matrix is not Hermitian: residual {residual}")]
    NotHermitian { residual: f64 },
    #[error("density operator trace is {trace}, expected 1")]
    BadTrace { trace: f64 },
    #[error("density operator has negative eigenvalue {min_eig}")]
    NotPositive { min_eig: f64 },
    #[error("eigendecomposition failed to reconstruct the operator: relative error {rel_err}")]
    EigenReconstruction { rel_err: f64 },
    #[error("partial trace keep set is empty")]
    EmptyKeepSet,
    #[error("factor permutation must mention every label exactly once")]
    BadPermutation,
}

type Result<T> = std::result::Result<T, HilbertError>;

/// Kind of tensor factor: a bosonic field mode (Fock-truncated) or a qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Field,
    Qubit,
}

/// One tensor factor of a [`SubsystemLayout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    label: String,
    kind: FactorKind,
    dim: usize,
}

impl Factor {
    pub fn field(label: impl Into<String>, dim: usize) -> Self {
        Factor { label: label.into(), kind: FactorKind::Field, dim }
    }

    pub fn qubit(label: impl Into<String>) -> Self {
        Factor { label: label.into(), kind: FactorKind::Qubit, dim: 2 }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Ordered tensor-factor structure of a joint Hilbert space.
///
/// Labels are unique, qubit factors have dimension 2, and the total dimension
/// is the product of the factor dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    factors: Vec<Factor>,
}

impl SubsystemLayout {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(HilbertError::EmptyLayout);
        }
        for (i, f) in factors.iter().enumerate() {
            if f.dim == 0 {
                return Err(HilbertError::ZeroDim { label: f.label.clone() });
            }
            if f.kind == FactorKind::Qubit && f.dim != 2 {
                return Err(HilbertError::BadQubitDim { label: f.label.clone(), dim: f.dim });
            }
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(HilbertError::DuplicateLabel(f.label.clone()));
            }
        }
        Ok(SubsystemLayout { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| HilbertError::UnknownLabel(label.to_string()))
    }

    pub fn factor(&self, label: &str) -> Result<&Factor> {
        Ok(&self.factors[self.position(label)?])
    }

    /// Stride of each factor in the joint index (leftmost most significant).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.factors.len()];
        for k in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.factors[k + 1].dim;
        }
        strides
    }

    /// Joint basis index of the given per-factor occupation numbers.
    pub fn basis_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.factors.len() {
            return Err(HilbertError::DimensionMismatch {
                expected: self.factors.len(),
                got: occupations.len(),
            });
        }
        let strides = self.strides();
        let mut idx = 0;
        for (k, (&occ, f)) in occupations.iter().zip(&self.factors).enumerate() {
            if occ >= f.dim {
                return Err(HilbertError::DimensionMismatch { expected: f.dim, got: occ });
            }
            idx += occ * strides[k];
        }
        Ok(idx)
    }

    /// Per-factor occupation numbers of a joint basis index.
    pub fn split_index(&self, mut idx: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut occ = Vec::with_capacity(self.factors.len());
        for s in strides {
            occ.push(idx / s);
            idx %= s;
        }
        occ
    }

    /// Sub-layout of the named factors, kept in their original order.
    pub fn sublayout(&self, labels: &[&str]) -> Result<SubsystemLayout> {
        if labels.is_empty() {
            return Err(HilbertError::EmptyKeepSet);
        }
        let mut positions = Vec::with_capacity(labels.len());
        for &l in labels {
            let p = self.position(l)?;
            if positions.contains(&p) {
                return Err(HilbertError::DuplicateLabel(l.to_string()));
            }
            positions.push(p);
        }
        positions.sort_unstable();
        let factors = positions.iter().map(|&p| self.factors[p].clone()).collect();
        SubsystemLayout::new(factors)
    }
}

/// Normalized complex state vector over a layout.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: DVector<C64>,
    layout: SubsystemLayout,
}

impl PureState {
    pub fn new(amplitudes: DVector<C64>, layout: SubsystemLayout) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(HilbertError::DimensionMismatch {
                expected: layout.total_dim(),
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(HilbertError::NotNormalized { norm });
        }
        Ok(PureState { amplitudes, layout })
    }

    /// Basis state with the given per-factor occupation numbers.
    pub fn basis(layout: SubsystemLayout, occupations: &[usize]) -> Result<Self> {
        let idx = layout.basis_index(occupations)?;
        let mut amplitudes = DVector::zeros(layout.total_dim());
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(PureState { amplitudes, layout })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(HilbertError::LayoutMismatch);
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// |<self|other>|^2.
    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn to_density(&self) -> DensityOperator {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator { matrix: m, layout: self.layout.clone() }
    }
}

fn hermiticity_residual(m: &DMatrix<C64>) -> f64 {
    let mut max = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let r = (m[(i, j)] - m[(j, i)].conj()).norm();
            if r > max {
                max = r;
            }
        }
    }
    max
}

/// Eigendecomposition of a complex Hermitian matrix by cyclic Jacobi
/// rotations. Returns unsorted eigenvalues and the unitary of eigenvectors
/// (columns). Jacobi is slower than tridiagonalization but unconditionally
/// accurate on the small, highly degenerate matrices used here.
fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v: DMatrix<C64> = DMatrix::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-30 * scale * scale;

    let off_sqr = |a: &DMatrix<C64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += a[(p, q)].norm_sqr();
            }
        }
        s
    };

    for _sweep in 0..60 {
        if off_sqr(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r * r <= tol / (n * n) as f64 {
                    continue;
                }
                let phase = apq / C64::new(r, 0.0);
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                // Small root of t^2 - 2 tau t - 1 = 0, which zeroes the
                // rotated (p, q) entry for this rotation convention.
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary rotation in the (p, q) plane:
                // U[p][p] = c, U[p][q] = -s*phase, U[q][p] = s*conj(phase),
                // U[q][q] = c; update A <- U^dagger A U, V <- V U.
                let cs = C64::new(c, 0.0);
                let sp = C64::new(s, 0.0) * phase;
                let spc = sp.conj();
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * cs + akq * spc;
                    a[(k, q)] = akq * cs - akp * sp;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * cs + aqk * sp;
                    a[(q, k)] = aqk * cs - apk * spc;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * cs + vkq * spc;
                    v[(k, q)] = vkq * cs - vkp * sp;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|k| a[(k, k)].re).collect();
    (eigenvalues, v)
}

/// Hermitian, positive-semidefinite, trace-one operator over a layout.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
    layout: SubsystemLayout,
}

impl DensityOperator {
    /// Full validation: Hermiticity, unit trace and positive spectrum.
    pub fn new(matrix: DMatrix<C64>, layout: SubsystemLayout) -> Result<Self> {
        let rho = Self::new_unchecked_spectrum(matrix, layout)?;
        let min_eig = rho.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(HilbertError::NotPositive { min_eig });
        }
        Ok(rho)
    }

    /// Hermiticity and trace validation only. Used on internal paths
    /// (outer products, partial traces) where positivity holds by
    /// construction.
    pub(crate) fn new_unchecked_spectrum(
        matrix: DMatrix<C64>,
        layout: SubsystemLayout,
    ) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(HilbertError::DimensionMismatch { expected: d, got: matrix.nrows() });
        }
        let residual = hermiticity_residual(&matrix);
        if residual > DENSITY_TOL {
            return Err(HilbertError::NotHermitian { residual });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(HilbertError::BadTrace { trace: trace.re });
        }
        Ok(DensityOperator { matrix, layout })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        psi.to_density()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Real spectrum, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let (mut vals, _) = hermitian_eigen(&self.matrix);
        vals.sort_by(|a, b| a.total_cmp(b));
        Ok(vals)
    }
}

/// Hermitian operator (observable or Hamiltonian) over a layout.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
    layout: SubsystemLayout,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>, layout: SubsystemLayout) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(HilbertError::DimensionMismatch { expected: d, got: matrix.nrows() });
        }
        let residual = hermiticity_residual(&matrix);
        if residual > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian { residual });
        }
        Ok(HermitianOperator { matrix, layout })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }
}

/// Sorted eigendecomposition of a Hermitian operator.
///
/// Columns of `eigenvectors` are the eigenvectors, in ascending-eigenvalue
/// order; `V diag(E) V^dagger` reconstructs the operator.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
}

impl EigenSystem {
    pub fn of(op: &HermitianOperator) -> Result<Self> {
        let (raw_values, raw_vectors) = hermitian_eigen(&op.matrix);
        let n = raw_values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| raw_values[a].total_cmp(&raw_values[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| raw_values[k]).collect();
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &raw_vectors.column(src));
        }
        let sys = EigenSystem { eigenvalues, eigenvectors };
        let rel_err = sys.reconstruction_error(&op.matrix);
        if rel_err > EIGEN_RECONSTRUCTION_TOL {
            return Err(HilbertError::EigenReconstruction { rel_err });
        }
        Ok(sys)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    fn reconstruction_error(&self, original: &DMatrix<C64>) -> f64 {
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&e| C64::new(e, 0.0)),
        ));
        let rebuilt = &self.eigenvectors * diag * self.eigenvectors.adjoint();
        let num = (rebuilt - original).norm();
        let den = original.norm().max(f64::MIN_POSITIVE);
        num / den
    }
}

/// Unitary time-evolution operator `exp(-i H t)` with a cached
/// eigendecomposition, reusable across a whole time grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigen: EigenSystem,
    layout: SubsystemLayout,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        Ok(Propagator { eigen: EigenSystem::of(h)?, layout: h.layout.clone() })
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    /// `V exp(-i E t) V^dagger psi0`.
    pub fn evolve(&self, psi0: &PureState, t: f64) -> Result<PureState> {
        if psi0.layout != self.layout {
            return Err(HilbertError::LayoutMismatch);
        }
        let mut coeffs = self.eigen.eigenvectors.adjoint() * &psi0.amplitudes;
        for (c, &e) in coeffs.iter_mut().zip(&self.eigen.eigenvalues) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        let amplitudes = &self.eigen.eigenvectors * coeffs;
        PureState::new(amplitudes, self.layout.clone())
    }
}

/// One-shot evolution; prefer [`Propagator`] when sweeping a time grid.
pub fn evolve(h: &HermitianOperator, psi0: &PureState, t: f64) -> Result<PureState> {
    Propagator::new(h)?.evolve(psi0, t)
}

/// Operand of [`tensor_product`]: all factors must share a rank.
#[derive(Debug, Clone, Copy)]
pub enum TensorFactor<'a> {
    Vector(&'a DVector<C64>),
    Matrix(&'a DMatrix<C64>),
}

/// Result of [`tensor_product`].
#[derive(Debug, Clone)]
pub enum TensorProduct {
    Vector(DVector<C64>),
    Matrix(DMatrix<C64>),
}

/// Kronecker product in layout order; leftmost factor is most significant.
pub fn tensor_product(factors: &[TensorFactor]) -> Result<TensorProduct> {
    if factors.is_empty() {
        return Err(HilbertError::EmptyFactorList);
    }
    let all_vectors = factors.iter().all(|f| matches!(f, TensorFactor::Vector(_)));
    let all_matrices = factors.iter().all(|f| matches!(f, TensorFactor::Matrix(_)));
    if all_vectors {
        let vs: Vec<&DVector<C64>> = factors
            .iter()
            .map(|f| match f {
                TensorFactor::Vector(v) => *v,
                TensorFactor::Matrix(_) => unreachable!(),
            })
            .collect();
        Ok(TensorProduct::Vector(kron_vectors(&vs)))
    } else if all_matrices {
        let ms: Vec<&DMatrix<C64>> = factors
            .iter()
            .map(|f| match f {
                TensorFactor::Matrix(m) => *m,
                TensorFactor::Vector(_) => unreachable!(),
            })
            .collect();
        for m in &ms {
            if m.nrows() != m.ncols() {
                return Err(HilbertError::DimensionMismatch {
                    expected: m.nrows(),
                    got: m.ncols(),
                });
            }
        }
        Ok(TensorProduct::Matrix(kron_matrices(&ms)))
    } else {
        Err(HilbertError::MixedRanks)
    }
}

pub fn kron_vectors(factors: &[&DVector<C64>]) -> DVector<C64> {
    let mut out = DVector::from_element(1, C64::new(1.0, 0.0));
    for &v in factors {
        let m = out.kronecker(v);
        out = DVector::from_column_slice(m.as_slice());
    }
    out
}

pub fn kron_matrices(factors: &[&DMatrix<C64>]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for &m in factors {
        out = out.kronecker(m);
    }
    out
}

/// Embed a single-factor operator into a layout: identity on every other
/// factor, `op` on the factor labeled `slot`.
pub fn embed_operator(
    op: &HermitianOperator,
    slot: &str,
    layout: &SubsystemLayout,
) -> Result<HermitianOperator> {
    let pos = layout.position(slot)?;
    let slot_dim = layout.factors[pos].dim;
    if op.matrix.nrows() != slot_dim {
        return Err(HilbertError::DimensionMismatch {
            expected: slot_dim,
            got: op.matrix.nrows(),
        });
    }
    let embedded = embed_matrix(&op.matrix, pos, layout);
    HermitianOperator::new(embedded, layout.clone())
}

/// Embed an arbitrary square matrix on factor `pos` of `layout`.
pub(crate) fn embed_matrix(
    m: &DMatrix<C64>,
    pos: usize,
    layout: &SubsystemLayout,
) -> DMatrix<C64> {
    let mut parts: Vec<DMatrix<C64>> = Vec::with_capacity(layout.factors.len());
    for (k, f) in layout.factors.iter().enumerate() {
        if k == pos {
            parts.push(m.clone());
        } else {
            parts.push(DMatrix::identity(f.dim, f.dim));
        }
    }
    let refs: Vec<&DMatrix<C64>> = parts.iter().collect();
    kron_matrices(&refs)
}

fn keep_positions(layout: &SubsystemLayout, keep: &[&str]) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(HilbertError::EmptyKeepSet);
    }
    let mut positions = Vec::with_capacity(keep.len());
    for &l in keep {
        let p = layout.position(l)?;
        if positions.contains(&p) {
            return Err(HilbertError::DuplicateLabel(l.to_string()));
        }
        positions.push(p);
    }
    positions.sort_unstable();
    Ok(positions)
}

/// Enumerate the joint-index offsets of a subset of factors.
fn subset_offsets(layout: &SubsystemLayout, positions: &[usize]) -> Vec<usize> {
    let strides = layout.strides();
    let dims: Vec<usize> = positions.iter().map(|&p| layout.factors[p].dim).collect();
    let total: usize = dims.iter().product();
    let mut offsets = Vec::with_capacity(total);
    let mut occ = vec![0usize; positions.len()];
    for _ in 0..total {
        let mut off = 0;
        for (k, &p) in positions.iter().enumerate() {
            off += occ[k] * strides[p];
        }
        offsets.push(off);
        for k in (0..occ.len()).rev() {
            occ[k] += 1;
            if occ[k] < dims[k] {
                break;
            }
            occ[k] = 0;
        }
    }
    offsets
}

/// Partial trace over all factors not named in `keep`. The result layout is
/// the kept factors in their original order, and the trace is preserved.
pub fn partial_trace(rho: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    let kept = keep_positions(&rho.layout, keep)?;
    if kept.len() == rho.layout.len() {
        return Ok(rho.clone());
    }
    let traced: Vec<usize> =
        (0..rho.layout.len()).filter(|p| !kept.contains(p)).collect();
    let keep_offsets = subset_offsets(&rho.layout, &kept);
    let trace_offsets = subset_offsets(&rho.layout, &traced);
    let d = keep_offsets.len();
    let mut out = DMatrix::zeros(d, d);
    for (i, &bi) in keep_offsets.iter().enumerate() {
        for (j, &bj) in keep_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &off in &trace_offsets {
                acc += rho.matrix[(bi + off, bj + off)];
            }
            out[(i, j)] = acc;
        }
    }
    let sub = SubsystemLayout::new(kept.iter().map(|&p| rho.layout.factors[p].clone()).collect())?;
    DensityOperator::new_unchecked_spectrum(out, sub)
}

/// Reduced density operator of a pure state, computed directly from the
/// amplitudes without forming the full outer product.
pub fn reduced_density(psi: &PureState, keep: &[&str]) -> Result<DensityOperator> {
    let kept = keep_positions(&psi.layout, keep)?;
    let traced: Vec<usize> =
        (0..psi.layout.len()).filter(|p| !kept.contains(p)).collect();
    let keep_offsets = subset_offsets(&psi.layout, &kept);
    let trace_offsets = if traced.is_empty() {
        vec![0usize]
    } else {
        subset_offsets(&psi.layout, &traced)
    };
    let d = keep_offsets.len();
    let mut out = DMatrix::zeros(d, d);
    for (i, &bi) in keep_offsets.iter().enumerate() {
        for (j, &bj) in keep_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &off in &trace_offsets {
                acc += psi.amplitudes[bi + off] * psi.amplitudes[bj + off].conj();
            }
            out[(i, j)] = acc;
        }
    }
    let sub = SubsystemLayout::new(kept.iter().map(|&p| psi.layout.factors[p].clone()).collect())?;
    DensityOperator::new_unchecked_spectrum(out, sub)
}

/// Reorder the tensor factors of a pure state. `order` lists every label of
/// the current layout exactly once, in the new order.
pub fn permute_factors(psi: &PureState, order: &[&str]) -> Result<PureState> {
    let layout = &psi.layout;
    if order.len() != layout.len() {
        return Err(HilbertError::BadPermutation);
    }
    let mut positions = Vec::with_capacity(order.len());
    for &l in order {
        let p = layout.position(l)?;
        if positions.contains(&p) {
            return Err(HilbertError::BadPermutation);
        }
        positions.push(p);
    }
    let new_layout =
        SubsystemLayout::new(positions.iter().map(|&p| layout.factors[p].clone()).collect())?;
    let mut amplitudes = DVector::zeros(layout.total_dim());
    for idx in 0..layout.total_dim() {
        let occ = layout.split_index(idx);
        let new_occ: Vec<usize> = positions.iter().map(|&p| occ[p]).collect();
        let new_idx = new_layout.basis_index(&new_occ)?;
        amplitudes[new_idx] = psi.amplitudes[idx];
    }
    PureState::new(amplitudes, new_layout)
}

/// Logarithm base used by entropy computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Two,
    E,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }
}

/// Subsystem von Neumann entropy `-Tr(rho log rho)`, from the eigenvalues of
/// `rho`; eigenvalues at or below the cutoff are skipped.
pub fn svne(rho: &DensityOperator, base: LogBase) -> Result<f64> {
    let mut s = 0.0;
    for lambda in rho.eigenvalues()? {
        if lambda > EIGENVALUE_CUTOFF {
            s -= lambda * base.log(lambda);
        }
    }
    Ok(s.max(0.0))
}

/// Subsystem linear entropy `1 - Tr(rho^2)`.
pub fn sle(rho: &DensityOperator) -> f64 {
    let purity: f64 = rho.matrix.iter().map(|z| z.norm_sqr()).sum();
    1.0 - purity
}

/// Expectation value `<psi| op |psi>` of a Hermitian operator.
pub fn expectation(op: &HermitianOperator, psi: &PureState) -> Result<f64> {
    if op.layout != psi.layout {
        return Err(HilbertError::LayoutMismatch);
    }
    let v = &op.matrix * &psi.amplitudes;
    Ok(psi.amplitudes.dotc(&v).re)
}

/// Primitive single-factor operator matrices.
pub mod ops {
    use super::C64;
    use nalgebra::DMatrix;

    pub fn identity(dim: usize) -> DMatrix<C64> {
        DMatrix::identity(dim, dim)
    }

    /// Photon annihilation operator on a Fock space truncated at `dim - 1`.
    pub fn annihilation(dim: usize) -> DMatrix<C64> {
        let mut a = DMatrix::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    pub fn creation(dim: usize) -> DMatrix<C64> {
        annihilation(dim).adjoint()
    }

    /// Photon number operator `a^dagger a`.
    pub fn number(dim: usize) -> DMatrix<C64> {
        let mut n = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            n[(k, k)] = C64::new(k as f64, 0.0);
        }
        n
    }

    /// Half-spin x operator `(|e><g| + |g><e|)/2` in basis order `(e, g)`.
    pub fn sigma_x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.0),
        ])
    }

    /// Half-spin y operator `i(|g><e| - |e><g|)/2` in basis order `(e, g)`.
    pub fn sigma_y() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(0.0, -0.5),
            C64::new(0.0, 0.5),
            C64::new(0.0, 0.0),
        ])
    }

    /// Half-spin z operator `(|e><e| - |g><g|)/2` in basis order `(e, g)`.
    pub fn sigma_z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-0.5, 0.0),
        ])
    }

    /// Raising operator `sigma_x + i sigma_y = |e><g|`.
    pub fn sigma_plus() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ])
    }

    /// Lowering operator `sigma_x - i sigma_y = |g><e|`.
    pub fn sigma_minus() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ])
    }
}
