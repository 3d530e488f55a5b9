//! Entropy and entanglement-indicator computations: tomographic entropies,
//! tomographic mutual information, the tomographic entanglement indicator
//! and its dominant-setting variant, and the quantum mutual information
//! reference measure.
//!
//! Logarithm conventions: tomographic entropies and mutual information are
//! in nats (natural log); von Neumann entropies and the quantum mutual
//! information are in bits (base 2). This mixed convention matches both
//! anchor values simultaneously: the Bell-pair indicator `ln 2 / 3 = 0.2310`
//! and the initial quantum mutual information of 2 bits.
//!
//! The per-setting mutual information is computed as
//! `S(A) + S(B) - S(A,B)`, which is non-negative for probability
//! distributions; bin widths cancel between the joint and marginal terms, so
//! grid refinement leaves the mutual information essentially unchanged.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hilbert::{
    partial_trace, reduced_density, svne, DensityOperator, FactorKind, HermitianOperator,
    HilbertError, LogBase, Propagator, PureState,
};
use crate::tomography::{
    spin_tomogram_xyz, Axis, JointTomogramEngine, QuadratureGrid, SpinTomogram, TomographyError,
};

/// Tolerance for marginal/joint consistency checks (probability mass).
pub const MARGINAL_TOL: f64 = 1e-8;
/// Tolerance for probability normalization of discrete distributions.
pub const DISCRETE_NORM_TOL: f64 = 1e-8;
/// Tolerance for normalization of gridded densities.
pub const GRID_NORM_TOL: f64 = 1e-6;
/// Negative probabilities beyond this magnitude are rejected.
pub const NEGATIVE_TOL: f64 = 1e-10;

/// Density values below this are skipped in streamed grid-entropy sums. The
/// worst-case contribution of a skipped cell is `w |ln w| dx^2 < 1e-15`, five
/// orders below the tightest tolerance used on those sums.
const ENTROPY_SKIP: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("probability vector has a negative entry {0}")]
    NegativeProbability(f64),
    #[error("distribution sums to {total}, expected 1 within {tol}")]
    NotNormalized { total: f64, tol: f64 },
    #[error("joint distribution shape {rows}x{cols} does not match marginals {len_a}/{len_b}")]
    ShapeMismatch { rows: usize, cols: usize, len_a: usize, len_b: usize },
    #[error("marginals inconsistent with joint: largest deviation {0}")]
    InconsistentMarginals(f64),
    #[error("setting list is empty")]
    EmptyInput,
    #[error("partition blocks overlap on `{0}`")]
    OverlappingBlocks(String),
    #[error("block must contain 1 or 2 qubits, got {0}")]
    UnsupportedBlockSize(usize),
    #[error("partition mixes field and qubit factors; use a pure field or pure qubit split")]
    MixedPartition,
    #[error("field indicator needs exactly the two field modes, got blocks {0}/{1}")]
    BadFieldBlocks(usize, usize),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

type Result<T> = std::result::Result<T, IndicatorError>;

/// Shannon entropy of a discrete probability vector, in nats; zero entries
/// are skipped.
pub fn entropy_discrete(p: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut s = 0.0;
    for &v in p {
        if v < -NEGATIVE_TOL {
            return Err(IndicatorError::NegativeProbability(v));
        }
        total += v;
        if v > 0.0 {
            s -= v * v.ln();
        }
    }
    if (total - 1.0).abs() > DISCRETE_NORM_TOL {
        return Err(IndicatorError::NotNormalized { total, tol: DISCRETE_NORM_TOL });
    }
    Ok(s)
}

/// Differential entropy of a sampled density via a Riemann sum, in nats:
/// `-sum w ln(w) * cell` where `cell` is the grid cell volume `dx^d`.
pub fn entropy_grid(w: &[f64], cell: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut s = 0.0;
    for &v in w {
        if v < -NEGATIVE_TOL {
            return Err(IndicatorError::NegativeProbability(v));
        }
        total += v;
        if v > 0.0 {
            s -= v * v.ln();
        }
    }
    total *= cell;
    if (total - 1.0).abs() > GRID_NORM_TOL {
        return Err(IndicatorError::NotNormalized { total, tol: GRID_NORM_TOL });
    }
    Ok(s * cell)
}

/// Joint distribution over a product of two outcome spaces, sampled on bins
/// of volume `cell_row * cell_col` (1 for discrete outcomes).
#[derive(Debug, Clone)]
pub struct Histogram2D {
    pub w: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub cell_row: f64,
    pub cell_col: f64,
}

/// Marginal distribution on bins of volume `cell`.
#[derive(Debug, Clone)]
pub struct Histogram1D {
    pub w: Vec<f64>,
    pub cell: f64,
}

impl Histogram2D {
    pub fn marginal_rows(&self) -> Histogram1D {
        let w = self
            .w
            .chunks(self.cols)
            .map(|row| row.iter().sum::<f64>() * self.cell_col)
            .collect();
        Histogram1D { w, cell: self.cell_row }
    }

    pub fn marginal_cols(&self) -> Histogram1D {
        let mut w = vec![0.0; self.cols];
        for row in self.w.chunks(self.cols) {
            for (acc, v) in w.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut w {
            *v *= self.cell_row;
        }
        Histogram1D { w, cell: self.cell_col }
    }
}

/// Mutual information `S(A) + S(B) - S(A,B)` in nats of a joint distribution
/// and its marginals. The marginals must be consistent with the joint.
pub fn mutual_information(
    joint: &Histogram2D,
    a: &Histogram1D,
    b: &Histogram1D,
) -> Result<f64> {
    if joint.w.len() != joint.rows * joint.cols
        || a.w.len() != joint.rows
        || b.w.len() != joint.cols
    {
        return Err(IndicatorError::ShapeMismatch {
            rows: joint.rows,
            cols: joint.cols,
            len_a: a.w.len(),
            len_b: b.w.len(),
        });
    }
    let ra = joint.marginal_rows();
    let rb = joint.marginal_cols();
    let mut worst = 0.0f64;
    for (x, y) in ra.w.iter().zip(&a.w) {
        worst = worst.max(((x - y) * a.cell).abs());
    }
    for (x, y) in rb.w.iter().zip(&b.w) {
        worst = worst.max(((x - y) * b.cell).abs());
    }
    if worst > MARGINAL_TOL {
        return Err(IndicatorError::InconsistentMarginals(worst));
    }
    let s_a = entropy_grid(&a.w, a.cell)?;
    let s_b = entropy_grid(&b.w, b.cell)?;
    let s_ab = entropy_grid(&joint.w, joint.cell_row * joint.cell_col)?;
    Ok(s_a + s_b - s_ab)
}

/// Basis setting of a per-setting mutual-information sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Setting {
    /// One measurement axis per qubit, in layout order.
    Spin(Vec<Axis>),
    /// Quadrature phases (theta_A, theta_B).
    Field(f64, f64),
}

/// Mutual information of one basis setting, in nats.
#[derive(Debug, Clone, Serialize)]
pub struct BasisSettingValue {
    pub setting: Setting,
    pub mi: f64,
}

/// Mean of the per-setting mutual informations: the tomographic
/// entanglement indicator.
pub fn xi_tei(values: &[BasisSettingValue]) -> Result<f64> {
    if values.is_empty() {
        return Err(IndicatorError::EmptyInput);
    }
    Ok(values.iter().map(|v| v.mi).sum::<f64>() / values.len() as f64)
}

/// Dominant-setting variant: mean over the settings whose mutual information
/// exceeds the mean by more than one (population) standard deviation. When
/// that subset is empty (e.g. zero variance), falls back to the full mean.
pub fn xi_tei_prime(values: &[BasisSettingValue]) -> Result<f64> {
    if values.is_empty() {
        return Err(IndicatorError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.mi).sum::<f64>() / n;
    let var = values.iter().map(|v| (v.mi - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean + var.sqrt();
    let dominant: Vec<f64> =
        values.iter().map(|v| v.mi).filter(|&mi| mi > threshold).collect();
    if dominant.is_empty() {
        Ok(mean)
    } else {
        Ok(dominant.iter().sum::<f64>() / dominant.len() as f64)
    }
}

fn check_disjoint(block_a: &[&str], block_b: &[&str]) -> Result<()> {
    for l in block_a {
        if block_b.contains(l) {
            return Err(IndicatorError::OverlappingBlocks(l.to_string()));
        }
    }
    Ok(())
}

/// Per-setting mutual informations between two qubit blocks of a density
/// operator, over all per-qubit x/y/z axis combinations (9 settings for 1+1
/// qubits, 81 for 2+2).
pub fn spin_setting_mis(
    rho: &DensityOperator,
    block_a: &[&str],
    block_b: &[&str],
) -> Result<Vec<BasisSettingValue>> {
    check_disjoint(block_a, block_b)?;
    if !(1..=2).contains(&block_a.len()) {
        return Err(IndicatorError::UnsupportedBlockSize(block_a.len()));
    }
    if !(1..=2).contains(&block_b.len()) {
        return Err(IndicatorError::UnsupportedBlockSize(block_b.len()));
    }
    let keep: Vec<&str> = block_a.iter().chain(block_b.iter()).copied().collect();
    let pair = partial_trace(rho, &keep)?;
    for f in pair.layout().factors() {
        if f.kind() != FactorKind::Qubit {
            return Err(IndicatorError::MixedPartition);
        }
    }
    let tomogram = spin_tomogram_xyz(&pair)?;
    mis_from_spin_tomogram(&tomogram, pair_positions(&pair, block_a)?, pair_positions(&pair, block_b)?)
}

fn pair_positions(rho: &DensityOperator, block: &[&str]) -> Result<Vec<usize>> {
    block.iter().map(|l| Ok(rho.layout().position(l)?)).collect()
}

/// Per-setting mutual informations of a spin tomogram between two blocks of
/// qubit positions. Works directly on the tomogram table, so it serves both
/// exact and shot-estimated data.
pub fn mis_from_spin_tomogram(
    tomogram: &SpinTomogram,
    block_a: Vec<usize>,
    block_b: Vec<usize>,
) -> Result<Vec<BasisSettingValue>> {
    let k = tomogram.num_qubits();
    for &q in block_a.iter().chain(&block_b) {
        if q >= k {
            return Err(IndicatorError::Hilbert(HilbertError::UnknownLabel(format!("q{q}"))));
        }
    }
    if block_a.len() + block_b.len() != k {
        return Err(IndicatorError::MixedPartition);
    }
    let rows = 1usize << block_a.len();
    let cols = 1usize << block_b.len();
    let mut out = Vec::with_capacity(tomogram.values.len());
    for (si, probs) in tomogram.values.iter().enumerate() {
        let mut joint = vec![0.0f64; rows * cols];
        for (outcome, &p) in probs.iter().enumerate() {
            let mut ia = 0usize;
            for &q in &block_a {
                ia = (ia << 1) | ((outcome >> (k - 1 - q)) & 1);
            }
            let mut ib = 0usize;
            for &q in &block_b {
                ib = (ib << 1) | ((outcome >> (k - 1 - q)) & 1);
            }
            joint[ia * cols + ib] += p;
        }
        let joint = Histogram2D { w: joint, rows, cols, cell_row: 1.0, cell_col: 1.0 };
        let mi = mutual_information(&joint, &joint.marginal_rows(), &joint.marginal_cols())?;
        out.push(BasisSettingValue { setting: Setting::Spin(tomogram.setting(si)), mi });
    }
    Ok(out)
}

/// Tomographic entanglement indicator between two qubit blocks: the mean of
/// [`spin_setting_mis`] over all axis combinations.
pub fn xi_tei_spins(
    rho: &DensityOperator,
    block_a: &[&str],
    block_b: &[&str],
) -> Result<f64> {
    xi_tei(&spin_setting_mis(rho, block_a, block_b)?)
}

/// Per-setting mutual informations between the two field modes of a two-mode
/// density operator, over the Cartesian product of the grid's phase set.
/// Joint tomogram slices are streamed rather than materialized.
pub fn field_setting_mis(
    rho_ab: &DensityOperator,
    grid: &QuadratureGrid,
) -> Result<Vec<BasisSettingValue>> {
    let factors = rho_ab.layout().factors();
    if factors.len() != 2 || factors.iter().any(|f| f.kind() != FactorKind::Field) {
        return Err(IndicatorError::Tomography(TomographyError::NotFieldLayout {
            expected: 2,
            got: format!("{factors:?}"),
        }));
    }
    let (dim_a, dim_b) = (factors[0].dim(), factors[1].dim());
    let engine = JointTomogramEngine::new(grid, dim_a, dim_b);
    let n = grid.n_points;
    let dx = grid.dx();
    let (lo, hi) = engine.support;
    // When the state is exactly symmetric under mode exchange, the mutual
    // information of slice (ta, tb) equals that of (tb, ta), so only the
    // upper triangle of the phase grid needs computing.
    let symmetric = dim_a == dim_b && mode_swap_symmetric(rho_ab.matrix(), dim_a);
    let thetas = &grid.theta_values;
    let n_t = thetas.len();
    let mut buf = vec![0.0f64; n * n];
    let mut mis = vec![f64::NAN; n_t * n_t];
    for (ti, &ta) in thetas.iter().enumerate() {
        for (tj, &tb) in thetas.iter().enumerate() {
            if symmetric && tj < ti {
                mis[ti * n_t + tj] = mis[tj * n_t + ti];
                continue;
            }
            engine.slice_into(rho_ab.matrix(), ta, tb, &mut buf)?;
            let mut wa = vec![0.0f64; n];
            let mut wb = vec![0.0f64; n];
            let mut s_joint = 0.0f64;
            for i in lo..hi {
                let row = &buf[i * n + lo..i * n + hi];
                let mut row_sum = 0.0;
                for (j, &w) in row.iter().enumerate() {
                    row_sum += w;
                    wb[lo + j] += w;
                    if w > ENTROPY_SKIP {
                        s_joint -= w * w.ln();
                    }
                }
                wa[i] = row_sum * dx;
            }
            s_joint *= dx * dx;
            for v in &mut wb {
                *v *= dx;
            }
            let entropy_1d = |w: &[f64]| -> f64 {
                let mut s = 0.0;
                for &v in &w[lo..hi] {
                    if v > ENTROPY_SKIP {
                        s -= v * v.ln();
                    }
                }
                s * dx
            };
            mis[ti * n_t + tj] = entropy_1d(&wa) + entropy_1d(&wb) - s_joint;
        }
    }
    let mut out = Vec::with_capacity(n_t * n_t);
    for (ti, &ta) in thetas.iter().enumerate() {
        for (tj, &tb) in thetas.iter().enumerate() {
            out.push(BasisSettingValue {
                setting: Setting::Field(ta, tb),
                mi: mis[ti * n_t + tj],
            });
        }
    }
    Ok(out)
}

/// Exact exchange symmetry of a two-mode density operator:
/// `rho[(m1,m2),(n1,n2)] == rho[(m2,m1),(n2,n1)]` within float noise.
fn mode_swap_symmetric(rho: &nalgebra::DMatrix<num_complex::Complex<f64>>, dim: usize) -> bool {
    for m1 in 0..dim {
        for m2 in 0..dim {
            for n1 in 0..dim {
                for n2 in 0..dim {
                    let a = rho[(m1 * dim + m2, n1 * dim + n2)];
                    let b = rho[(m2 * dim + m1, n2 * dim + n1)];
                    if (a - b).norm() > 1e-12 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Tomographic entanglement indicator between two field modes: the mean of
/// [`field_setting_mis`] over the phase-set Cartesian product.
pub fn xi_tei_fields(rho_ab: &DensityOperator, grid: &QuadratureGrid) -> Result<f64> {
    xi_tei(&field_setting_mis(rho_ab, grid)?)
}

/// Quantum mutual information of a bipartition, in bits:
/// `svne(rho_A) + svne(rho_B) - svne(rho_AB)`.
pub fn xi_qmi(
    rho: &DensityOperator,
    block_a: &[&str],
    block_b: &[&str],
) -> Result<f64> {
    check_disjoint(block_a, block_b)?;
    let all: Vec<&str> = block_a.iter().chain(block_b.iter()).copied().collect();
    let rho_ab = partial_trace(rho, &all)?;
    let s_a = svne(&partial_trace(&rho_ab, block_a)?, LogBase::Two)?;
    let s_b = svne(&partial_trace(&rho_ab, block_b)?, LogBase::Two)?;
    let s_ab = svne(&rho_ab, LogBase::Two)?;
    Ok(s_a + s_b - s_ab)
}

/// [`xi_qmi`] of a pure state, via direct reduced densities.
pub fn xi_qmi_pure(
    psi: &PureState,
    block_a: &[&str],
    block_b: &[&str],
) -> Result<f64> {
    check_disjoint(block_a, block_b)?;
    let all: Vec<&str> = block_a.iter().chain(block_b.iter()).copied().collect();
    let rho_ab = reduced_density(psi, &all)?;
    let s_a = svne(&partial_trace(&rho_ab, block_a)?, LogBase::Two)?;
    let s_b = svne(&partial_trace(&rho_ab, block_b)?, LogBase::Two)?;
    let s_ab = svne(&rho_ab, LogBase::Two)?;
    Ok(s_a + s_b - s_ab)
}

/// Uniform time grid in scaled time `gt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub gt_start: f64,
    pub gt_step: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn gts(&self) -> Vec<f64> {
        (0..self.n_steps).map(|k| self.gt_start + k as f64 * self.gt_step).collect()
    }
}

impl Default for TimeGrid {
    /// 300 steps of 0.02 in units of pi/g, i.e. gt from 0 to 5.98 pi.
    fn default() -> Self {
        TimeGrid { gt_start: 0.0, gt_step: 0.02 * std::f64::consts::PI, n_steps: 300 }
    }
}

/// Bipartition of the layout by factor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    pub a: Vec<String>,
    pub b: Vec<String>,
}

impl Bipartition {
    pub fn new(a: &[&str], b: &[&str]) -> Self {
        Bipartition {
            a: a.iter().map(|s| s.to_string()).collect(),
            b: b.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn label(&self) -> (String, String) {
        (self.a.join("+"), self.b.join("+"))
    }
}

/// Indicators of one bipartition at one instant. Tomographic indicators are
/// in nats, the quantum mutual information in bits.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorSample {
    pub gt: f64,
    pub partition: (String, String),
    pub xi_tei: f64,
    pub xi_tei_prime: f64,
    pub xi_qmi: f64,
}

/// All requested partitions at one instant.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorRow {
    pub gt: f64,
    pub samples: Vec<IndicatorSample>,
}

enum PartitionKind {
    Fields,
    Qubits,
}

fn classify_partition(
    layout: &crate::hilbert::SubsystemLayout,
    part: &Bipartition,
) -> Result<PartitionKind> {
    let mut kinds = Vec::new();
    for l in part.a.iter().chain(&part.b) {
        kinds.push(layout.factor(l).map_err(IndicatorError::Hilbert)?.kind());
    }
    if kinds.iter().all(|&k| k == FactorKind::Field) {
        if part.a.len() != 1 || part.b.len() != 1 {
            return Err(IndicatorError::BadFieldBlocks(part.a.len(), part.b.len()));
        }
        Ok(PartitionKind::Fields)
    } else if kinds.iter().all(|&k| k == FactorKind::Qubit) {
        Ok(PartitionKind::Qubits)
    } else {
        Err(IndicatorError::MixedPartition)
    }
}

fn partition_sample(
    psi: &PureState,
    part: &Bipartition,
    kind: &PartitionKind,
    grid: &QuadratureGrid,
    gt: f64,
) -> Result<IndicatorSample> {
    let a: Vec<&str> = part.a.iter().map(String::as_str).collect();
    let b: Vec<&str> = part.b.iter().map(String::as_str).collect();
    let all: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
    let rho_ab = reduced_density(psi, &all)?;
    let settings = match kind {
        PartitionKind::Fields => field_setting_mis(&rho_ab, grid)?,
        PartitionKind::Qubits => spin_setting_mis(&rho_ab, &a, &b)?,
    };
    let s_a = svne(&partial_trace(&rho_ab, &a)?, LogBase::Two)?;
    let s_b = svne(&partial_trace(&rho_ab, &b)?, LogBase::Two)?;
    let s_ab = svne(&rho_ab, LogBase::Two)?;
    // The sampled quantities are non-negative; sums of float noise may dip
    // a hair below zero for product states.
    let clamp = |x: f64| -> Result<f64> {
        if x < -NEGATIVE_TOL {
            return Err(IndicatorError::NegativeProbability(x));
        }
        Ok(x.max(0.0))
    };
    Ok(IndicatorSample {
        gt,
        partition: part.label(),
        xi_tei: clamp(xi_tei(&settings)?)?,
        xi_tei_prime: clamp(xi_tei_prime(&settings)?)?,
        xi_qmi: clamp(s_a + s_b - s_ab)?,
    })
}

/// Evolve `psi0` under `h` across the time grid and compute, per instant and
/// per requested bipartition, the tomographic indicators and the quantum
/// mutual information. Rows are computed in parallel and returned in grid
/// order.
pub fn indicator_time_series(
    h: &HermitianOperator,
    psi0: &PureState,
    time_grid: &TimeGrid,
    partitions: &[Bipartition],
    quad_grid: &QuadratureGrid,
) -> Result<Vec<IndicatorRow>> {
    let kinds: Vec<PartitionKind> = partitions
        .iter()
        .map(|p| classify_partition(psi0.layout(), p))
        .collect::<Result<_>>()?;
    let propagator = Propagator::new(h)?;
    time_grid
        .gts()
        .into_par_iter()
        .map(|gt| {
            let psi = propagator.evolve(psi0, gt)?;
            let samples = partitions
                .iter()
                .zip(&kinds)
                .map(|(p, k)| partition_sample(&psi, p, k, quad_grid, gt))
                .collect::<Result<Vec<_>>>()?;
            Ok(IndicatorRow { gt, samples })
        })
        .collect()
}
