//! Optical tomograms, spin tomograms, joint tomograms and reduced tomograms
//! computed from density operators, plus the versioned tomogram JSON schema.
//!
//! Quadrature convention: the rotated quadrature at phase 0 is
//! `X = (a + a^dag)/sqrt(2)`, and the overlap of a rotated quadrature
//! eigenstate with a Fock state is `<X,theta|n> = exp(i n theta) psi_n(X)`
//! with `psi_n` the real harmonic-oscillator eigenfunction. The opposite
//! phase sign is an equally valid convention; it leaves every tomogram of the
//! states used here unchanged, and the choice is pinned by the closed-form
//! vacuum/one-photon tests below.
//!
//! Spin tomograms measure along axes from `{x, y, z}` (the three mutually
//! unbiased qubit bases); outcome index 0 is the +1/2 projection. Axis
//! settings are enumerated in lexicographic (x, y, z) order per qubit.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{DensityOperator, FactorKind, HilbertError};

/// Negative tomogram values above this magnitude indicate an invalid density
/// operator; smaller negatives are floating-point noise and are clamped to 0.
pub const CLAMP_TOL: f64 = 1e-12;
/// Tolerance on the normalization of optical tomogram slices.
pub const OPTICAL_NORM_TOL: f64 = 1e-6;
/// Tolerance on the normalization of spin tomogram settings.
pub const SPIN_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("quadrature grid needs at least 64 points, got {0}")]
    GridTooCoarse(usize),
    #[error("quadrature grid must be symmetric with positive extent, got x_max = {0}")]
    BadGridExtent(f64),
    #[error("grid phase angles must be distinct values in [0, pi)")]
    BadThetaSet,
    #[error("expected a layout of {expected} field factor(s), got {got}")]
    NotFieldLayout { expected: usize, got: String },
    #[error("expected a layout of qubit factors only")]
    NotQubitLayout,
    #[error("each qubit needs at least one measurement axis")]
    EmptyAxisList,
    #[error("tomogram value {value} at {context} is negative beyond the clamp tolerance")]
    NegativeValue { value: f64, context: String },
    #[error("tomogram slice at {context} sums to {total}, expected 1")]
    NotNormalized { total: f64, context: String },
    #[error("keep set is empty or out of range")]
    BadKeepSet,
    #[error("tomogram file is malformed: {0}")]
    BadFile(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

type Result<T> = std::result::Result<T, TomographyError>;

/// Symmetric quadrature grid and tomographic phase set.
///
/// Defaults follow the repo-wide convention: `X` in `[-8, 8]` with 321 points
/// (spacing 0.05) and 16 equally spaced phases in `[0, pi)` starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub theta_values: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(x_max: f64, n_points: usize, n_theta: usize) -> Result<Self> {
        let theta_values: Vec<f64> =
            (0..n_theta).map(|k| k as f64 * std::f64::consts::PI / n_theta as f64).collect();
        Self::with_thetas(x_max, n_points, theta_values)
    }

    pub fn with_thetas(x_max: f64, n_points: usize, theta_values: Vec<f64>) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(TomographyError::BadGridExtent(x_max));
        }
        if n_points < 64 {
            return Err(TomographyError::GridTooCoarse(n_points));
        }
        if theta_values.is_empty() {
            return Err(TomographyError::BadThetaSet);
        }
        for (i, &t) in theta_values.iter().enumerate() {
            if !(0.0..std::f64::consts::PI).contains(&t) {
                return Err(TomographyError::BadThetaSet);
            }
            if theta_values[..i].contains(&t) {
                return Err(TomographyError::BadThetaSet);
            }
        }
        Ok(QuadratureGrid { x_min: -x_max, x_max, n_points, theta_values })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|i| self.x_min + i as f64 * dx).collect()
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid::new(8.0, 321, 16).expect("default grid is valid")
    }
}

/// Harmonic-oscillator eigenfunction `psi_n(x)` via the stable recurrence
/// `psi_{n+1} = x sqrt(2/(n+1)) psi_n - sqrt(n/(n+1)) psi_{n-1}`.
pub fn hermite_psi(n: usize, x: f64) -> f64 {
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n == 0 {
        return psi0;
    }
    let mut prev = psi0;
    let mut cur = x * std::f64::consts::SQRT_2 * psi0;
    for k in 1..n {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All `psi_m(x)` for `m < dim` in one recurrence pass.
fn hermite_psi_row(dim: usize, x: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(dim);
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    row.push(psi0);
    if dim > 1 {
        row.push(x * std::f64::consts::SQRT_2 * psi0);
    }
    for k in 1..dim.saturating_sub(1) {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * row[k] - (kf / (kf + 1.0)).sqrt() * row[k - 1];
        row.push(next);
    }
    row
}

/// Overlap `<X_theta, theta | n> = exp(i n theta) psi_n(x)`.
pub fn quadrature_overlap(n: usize, x: f64, theta: f64) -> C64 {
    C64::from_polar(hermite_psi(n, x), n as f64 * theta)
}

/// Optical tomogram `w(X_theta, theta)` of a single field mode, sampled on a
/// quadrature grid; `values[theta_index][x_index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalTomogram {
    pub grid: QuadratureGrid,
    pub values: Vec<Vec<f64>>,
}

fn clamp_value(w: f64, context: impl Fn() -> String) -> Result<f64> {
    if w < -CLAMP_TOL {
        return Err(TomographyError::NegativeValue { value: w, context: context() });
    }
    Ok(w.max(0.0))
}

fn check_slice_norm(total: f64, context: impl Fn() -> String) -> Result<()> {
    if (total - 1.0).abs() > OPTICAL_NORM_TOL {
        return Err(TomographyError::NotNormalized { total, context: context() });
    }
    Ok(())
}

fn single_field_dim(rho: &DensityOperator) -> Result<usize> {
    let factors = rho.layout().factors();
    if factors.len() != 1 || factors[0].kind() != FactorKind::Field {
        return Err(TomographyError::NotFieldLayout {
            expected: 1,
            got: format!("{factors:?}"),
        });
    }
    Ok(factors[0].dim())
}

/// Optical tomogram `w(X, theta) = <X,theta| rho |X,theta>` of a single-mode
/// field state.
pub fn optical_tomogram(rho: &DensityOperator, grid: &QuadratureGrid) -> Result<OpticalTomogram> {
    let dim = single_field_dim(rho)?;
    let xs = grid.xs();
    let dx = grid.dx();
    let mut values = Vec::with_capacity(grid.theta_values.len());
    for (ti, &theta) in grid.theta_values.iter().enumerate() {
        // w(x) = sum_{m,n} rho_mn e^{i(m-n)theta} psi_m(x) psi_n(x);
        // fold Hermitian pairs into real coefficients.
        let mut slice = Vec::with_capacity(xs.len());
        let mut total = 0.0;
        for &x in &xs {
            let psi = hermite_psi_row(dim, x);
            let mut w = 0.0;
            for m in 0..dim {
                w += rho.matrix()[(m, m)].re * psi[m] * psi[m];
                for n in (m + 1)..dim {
                    let phase = C64::from_polar(1.0, (m as f64 - n as f64) * theta);
                    w += 2.0 * (rho.matrix()[(m, n)] * phase).re * psi[m] * psi[n];
                }
            }
            let w = clamp_value(w, || format!("theta[{ti}], x={x}"))?;
            total += w * dx;
            slice.push(w);
        }
        check_slice_norm(total, || format!("theta[{ti}]"))?;
        values.push(slice);
    }
    Ok(OpticalTomogram { grid: grid.clone(), values })
}

/// Joint two-mode optical tomogram on the grid Cartesian product;
/// `values[theta_a][theta_b][x_a][x_b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFieldTomogram {
    pub grid: QuadratureGrid,
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Precomputed tables for evaluating joint two-mode tomogram slices of a
/// fixed (grid, dimensions) combination across many states and phases. The
/// state-independent oscillator-function products dominate the setup cost,
/// so one engine is shared across a whole time series.
pub(crate) struct JointTomogramEngine {
    pub dim_b: usize,
    pub n_x: usize,
    pub dx: f64,
    /// Index range outside which every oscillator-function product is below
    /// 1e-16; cells there are mathematically negligible and left at zero.
    pub support: (usize, usize),
    /// Unordered index pairs (m <= n) per mode.
    pairs_a: Vec<(usize, usize)>,
    pairs_b: Vec<(usize, usize)>,
    /// `prod[p][i] = psi_m(x_i) psi_n(x_i)` for pair p = (m, n).
    prod_a: Vec<Vec<f64>>,
    prod_b: Vec<Vec<f64>>,
}

fn index_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(dim * (dim + 1) / 2);
    for m in 0..dim {
        for n in m..dim {
            pairs.push((m, n));
        }
    }
    pairs
}

impl JointTomogramEngine {
    pub fn new(grid: &QuadratureGrid, dim_a: usize, dim_b: usize) -> Self {
        let xs = grid.xs();
        let dim = dim_a.max(dim_b);
        let psi: Vec<Vec<f64>> = xs.iter().map(|&x| hermite_psi_row(dim, x)).collect();
        let pairs_a = index_pairs(dim_a);
        let pairs_b = index_pairs(dim_b);
        let table = |pairs: &[(usize, usize)]| -> Vec<Vec<f64>> {
            pairs
                .iter()
                .map(|&(m, n)| xs.iter().enumerate().map(|(i, _)| psi[i][m] * psi[i][n]).collect())
                .collect()
        };
        let prod_a = table(&pairs_a);
        let prod_b = table(&pairs_b);
        let n_x = xs.len();
        let alive = |i: usize| -> bool {
            prod_a.iter().chain(&prod_b).any(|row| row[i].abs() > 1e-16)
        };
        let lo = (0..n_x).find(|&i| alive(i)).unwrap_or(0);
        let hi = (0..n_x).rfind(|&i| alive(i)).map_or(n_x, |i| i + 1);
        JointTomogramEngine {
            dim_b,
            n_x,
            dx: grid.dx(),
            support: (lo, hi),
            prod_a,
            prod_b,
            pairs_a,
            pairs_b,
        }
    }

    /// Real pair-coefficient matrix of `rho_ab` at phases (theta_a, theta_b):
    /// the joint tomogram is `w(x_i, x_j) = sum_{p,q} C[p][q] prod_a[p][i]
    /// prod_b[q][j]`. Off-diagonal pairs absorb both Hermitian-conjugate
    /// orderings, so C is real.
    fn coefficients(&self, rho: &DMatrix<C64>, theta_a: f64, theta_b: f64) -> Vec<Vec<f64>> {
        let np = self.pairs_a.len();
        let nq = self.pairs_b.len();
        let mut coeff = vec![vec![0.0f64; nq]; np];
        for (p, &(m1, n1)) in self.pairs_a.iter().enumerate() {
            for (q, &(m2, n2)) in self.pairs_b.iter().enumerate() {
                // Ordered representatives of the unordered pair combination.
                let mut acc = C64::new(0.0, 0.0);
                let mut add = |a1: usize, b1: usize, a2: usize, b2: usize| {
                    let row = a1 * self.dim_b + a2;
                    let col = b1 * self.dim_b + b2;
                    let phase = C64::from_polar(
                        1.0,
                        (a1 as f64 - b1 as f64) * theta_a + (a2 as f64 - b2 as f64) * theta_b,
                    );
                    acc += rho[(row, col)] * phase;
                };
                add(m1, n1, m2, n2);
                if m2 != n2 {
                    add(m1, n1, n2, m2);
                }
                if m1 != n1 {
                    add(n1, m1, m2, n2);
                    if m2 != n2 {
                        add(n1, m1, n2, m2);
                    }
                }
                coeff[p][q] = acc.re;
            }
        }
        coeff
    }

    /// Fill `out` (row-major `n_x * n_x`, starting out zeroed) with the joint
    /// tomogram slice at (theta_a, theta_b), clamping float noise and
    /// checking normalization. Cells outside the support box are never
    /// written; with a zeroed buffer they are exact zeros across reuses.
    pub fn slice_into(
        &self,
        rho: &DMatrix<C64>,
        theta_a: f64,
        theta_b: f64,
        out: &mut [f64],
    ) -> Result<()> {
        assert_eq!(out.len(), self.n_x * self.n_x);
        let (lo, hi) = self.support;
        let coeff = self.coefficients(rho, theta_a, theta_b);
        // m[q][i] = sum_p C[p][q] prod_a[p][i]
        let nq = self.pairs_b.len();
        let mut mixed = vec![vec![0.0f64; self.n_x]; nq];
        for (p, row) in coeff.iter().enumerate() {
            for (q, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let pa = &self.prod_a[p];
                let mq = &mut mixed[q];
                for i in lo..hi {
                    mq[i] += c * pa[i];
                }
            }
        }
        let mut total = 0.0;
        for i in lo..hi {
            let row = &mut out[i * self.n_x + lo..i * self.n_x + hi];
            row.fill(0.0);
            for (mq, prod) in mixed.iter().zip(&self.prod_b) {
                let scale = mq[i];
                if scale == 0.0 {
                    continue;
                }
                for (w, &b) in row.iter_mut().zip(&prod[lo..hi]) {
                    *w += scale * b;
                }
            }
            for (j, w) in row.iter_mut().enumerate() {
                if *w < 0.0 {
                    *w = clamp_value(*w, || {
                        format!("theta_a={theta_a}, theta_b={theta_b}, cell ({i},{})", lo + j)
                    })?;
                }
                total += *w;
            }
        }
        check_slice_norm(total * self.dx * self.dx, || {
            format!("theta_a={theta_a}, theta_b={theta_b}")
        })?;
        Ok(())
    }
}

fn two_field_dims(rho: &DensityOperator) -> Result<(usize, usize)> {
    let factors = rho.layout().factors();
    if factors.len() != 2 || factors.iter().any(|f| f.kind() != FactorKind::Field) {
        return Err(TomographyError::NotFieldLayout {
            expected: 2,
            got: format!("{factors:?}"),
        });
    }
    Ok((factors[0].dim(), factors[1].dim()))
}

/// Joint optical tomogram `w(X_A, theta_A; X_B, theta_B)` of a two-mode field
/// state, on the full `theta x theta x X x X` grid. For hot paths that only
/// need per-slice reductions, the indicator layer streams slices instead of
/// materializing this structure.
pub fn joint_optical_tomogram(
    rho: &DensityOperator,
    grid: &QuadratureGrid,
) -> Result<JointFieldTomogram> {
    let (dim_a, dim_b) = two_field_dims(rho)?;
    let engine = JointTomogramEngine::new(grid, dim_a, dim_b);
    let n_x = grid.n_points;
    let mut buf = vec![0.0f64; n_x * n_x];
    let mut values = Vec::with_capacity(grid.theta_values.len());
    for &ta in &grid.theta_values {
        let mut per_tb = Vec::with_capacity(grid.theta_values.len());
        for &tb in &grid.theta_values {
            engine.slice_into(rho.matrix(), ta, tb, &mut buf)?;
            let slice: Vec<Vec<f64>> =
                (0..n_x).map(|i| buf[i * n_x..(i + 1) * n_x].to_vec()).collect();
            per_tb.push(slice);
        }
        values.push(per_tb);
    }
    Ok(JointFieldTomogram { grid: grid.clone(), values })
}

/// Which mode of a joint field tomogram to keep when marginalizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSide {
    A,
    B,
}

/// Reduce a joint field tomogram to one mode by integrating out the other.
/// The discarded mode's phase is irrelevant (any complete quadrature basis
/// integrates to the same marginal); the first listed phase is used.
pub fn reduce_joint_optical(
    joint: &JointFieldTomogram,
    keep: FieldSide,
) -> Result<OpticalTomogram> {
    let grid = &joint.grid;
    let n_x = grid.n_points;
    let dx = grid.dx();
    let mut values = Vec::with_capacity(grid.theta_values.len());
    for ti in 0..grid.theta_values.len() {
        let mut slice = vec![0.0f64; n_x];
        match keep {
            FieldSide::A => {
                let sl = &joint.values[ti][0];
                for i in 0..n_x {
                    slice[i] = sl[i].iter().sum::<f64>() * dx;
                }
            }
            FieldSide::B => {
                let sl = &joint.values[0][ti];
                for j in 0..n_x {
                    slice[j] = sl.iter().map(|row| row[j]).sum::<f64>() * dx;
                }
            }
        }
        values.push(slice);
    }
    Ok(OpticalTomogram { grid: grid.clone(), values })
}

/// Measurement axis of a qubit tomogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const XYZ: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Rotation whose columns are the axis eigenstates (+1/2 then -1/2)
    /// expressed in the computational basis order `(e, g)`.
    pub fn eigenbasis(self) -> DMatrix<C64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Axis::Z => DMatrix::identity(2, 2),
            Axis::X => DMatrix::from_row_slice(2, 2, &[
                C64::new(s, 0.0),
                C64::new(s, 0.0),
                C64::new(s, 0.0),
                C64::new(-s, 0.0),
            ]),
            Axis::Y => DMatrix::from_row_slice(2, 2, &[
                C64::new(s, 0.0),
                C64::new(s, 0.0),
                C64::new(0.0, s),
                C64::new(0.0, -s),
            ]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Spin tomogram: outcome probabilities per axis setting.
///
/// `axes[k]` lists the measurement axes of qubit `k`; settings enumerate the
/// Cartesian product of those lists in order (lexicographic when every qubit
/// uses the default x, y, z). `values[setting][outcome]` with the outcome
/// tuple packed most-significant-first (qubit 0 first) and bit 0 meaning the
/// +1/2 projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinTomogram {
    pub axes: Vec<Vec<Axis>>,
    pub values: Vec<Vec<f64>>,
    /// Per-setting shot count when estimated from sampled counts.
    pub shots: Option<u64>,
}

impl SpinTomogram {
    pub fn num_qubits(&self) -> usize {
        self.axes.len()
    }

    pub fn num_settings(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Axis tuple of a setting index.
    pub fn setting(&self, mut index: usize) -> Vec<Axis> {
        let mut out = vec![Axis::Z; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            let n = self.axes[k].len();
            out[k] = self.axes[k][index % n];
            index /= n;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.axes.iter().any(|a| a.is_empty()) {
            return Err(TomographyError::EmptyAxisList);
        }
        let outcomes = 1usize << self.axes.len();
        if self.values.len() != self.num_settings() {
            return Err(TomographyError::BadFile(format!(
                "expected {} settings, got {}",
                self.num_settings(),
                self.values.len()
            )));
        }
        for (si, row) in self.values.iter().enumerate() {
            if row.len() != outcomes {
                return Err(TomographyError::BadFile(format!(
                    "setting {si} has {} outcomes, expected {outcomes}",
                    row.len()
                )));
            }
            let mut total = 0.0;
            for (oi, &p) in row.iter().enumerate() {
                if p < -CLAMP_TOL {
                    return Err(TomographyError::NegativeValue {
                        value: p,
                        context: format!("setting {si}, outcome {oi}"),
                    });
                }
                total += p;
            }
            if (total - 1.0).abs() > SPIN_NORM_TOL {
                return Err(TomographyError::NotNormalized {
                    total,
                    context: format!("setting {si}"),
                });
            }
        }
        Ok(())
    }
}

/// Spin tomogram of a k-qubit density operator: projective outcome
/// probabilities in every rotated product eigenbasis.
pub fn spin_tomogram(rho: &DensityOperator, axes: &[Vec<Axis>]) -> Result<SpinTomogram> {
    let factors = rho.layout().factors();
    if factors.iter().any(|f| f.kind() != FactorKind::Qubit) || factors.is_empty() {
        return Err(TomographyError::NotQubitLayout);
    }
    let k = factors.len();
    if axes.len() != k {
        return Err(TomographyError::BadFile(format!(
            "axes given for {} qubits, layout has {k}",
            axes.len()
        )));
    }
    if axes.iter().any(|a| a.is_empty()) {
        return Err(TomographyError::EmptyAxisList);
    }
    let n_settings: usize = axes.iter().map(|a| a.len()).product();
    let outcomes = 1usize << k;
    let mut values = Vec::with_capacity(n_settings);
    let mut choice = vec![0usize; k];
    for _ in 0..n_settings {
        let basis: Vec<DMatrix<C64>> =
            choice.iter().zip(axes).map(|(&c, list)| list[c].eigenbasis()).collect();
        let refs: Vec<&DMatrix<C64>> = basis.iter().collect();
        let u = crate::hilbert::kron_matrices(&refs);
        let rotated = u.adjoint() * rho.matrix() * &u;
        let mut row = Vec::with_capacity(outcomes);
        for o in 0..outcomes {
            row.push(clamp_value(rotated[(o, o)].re, || format!("outcome {o}"))?);
        }
        values.push(row);
        for k_ in (0..k).rev() {
            choice[k_] += 1;
            if choice[k_] < axes[k_].len() {
                break;
            }
            choice[k_] = 0;
        }
    }
    let tomogram = SpinTomogram { axes: axes.to_vec(), values, shots: None };
    tomogram.validate()?;
    Ok(tomogram)
}

/// Spin tomogram over the default x, y, z axes for every qubit.
pub fn spin_tomogram_xyz(rho: &DensityOperator) -> Result<SpinTomogram> {
    let k = rho.layout().len();
    spin_tomogram(rho, &vec![Axis::XYZ.to_vec(); k])
}

/// Marginal spin tomogram over a subset of qubits.
///
/// Discarded qubits are measured completely in any axis, so the marginal is
/// independent of their setting; the first listed axis is used. Equals the
/// tomogram of the partial-traced density operator.
pub fn reduce_spin_tomogram(t: &SpinTomogram, keep: &[usize]) -> Result<SpinTomogram> {
    let k = t.num_qubits();
    if keep.is_empty() || keep.iter().any(|&q| q >= k) {
        return Err(TomographyError::BadKeepSet);
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() {
        return Err(TomographyError::BadKeepSet);
    }
    let kept_axes: Vec<Vec<Axis>> = keep_sorted.iter().map(|&q| t.axes[q].clone()).collect();
    let n_kept_settings: usize = kept_axes.iter().map(|a| a.len()).product();
    let kept_outcomes = 1usize << keep_sorted.len();

    // Full-setting index with kept qubits at the given choices and discarded
    // qubits pinned to their first axis.
    let full_setting_index = |kept_choice: &[usize]| -> usize {
        let mut idx = 0;
        let mut pos = 0;
        for q in 0..k {
            idx *= t.axes[q].len();
            if let Some(slot) = keep_sorted.iter().position(|&kq| kq == q) {
                idx += kept_choice[slot];
                pos += 1;
            }
        }
        let _ = pos;
        idx
    };

    let mut values = Vec::with_capacity(n_kept_settings);
    let mut choice = vec![0usize; keep_sorted.len()];
    for _ in 0..n_kept_settings {
        let src = &t.values[full_setting_index(&choice)];
        let mut row = vec![0.0f64; kept_outcomes];
        for (outcome, &p) in src.iter().enumerate() {
            let mut kept_outcome = 0usize;
            for &q in &keep_sorted {
                let bit = (outcome >> (k - 1 - q)) & 1;
                kept_outcome = (kept_outcome << 1) | bit;
            }
            row[kept_outcome] += p;
        }
        values.push(row);
        for k_ in (0..choice.len()).rev() {
            choice[k_] += 1;
            if choice[k_] < kept_axes[k_].len() {
                break;
            }
            choice[k_] = 0;
        }
    }
    let out = SpinTomogram { axes: kept_axes, values, shots: t.shots };
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Versioned tomogram JSON schema
// ---------------------------------------------------------------------------

/// Current schema version of tomogram files.
pub const TOMOGRAM_SCHEMA_VERSION: u32 = 1;

/// On-disk tomogram file. The `values` arrays round-trip bit-exactly
/// (serde_json emits shortest representations that re-parse to the same
/// `f64`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TomogramFile {
    Spin {
        version: u32,
        axes: Vec<Vec<Axis>>,
        values: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        counts: Option<Vec<Vec<u64>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        shots: Option<u64>,
    },
    Optical {
        version: u32,
        grid: QuadratureGrid,
        values: Vec<Vec<f64>>,
    },
    JointOptical {
        version: u32,
        grid: QuadratureGrid,
        values: Vec<Vec<Vec<Vec<f64>>>>,
    },
}

impl TomogramFile {
    pub fn from_spin(t: &SpinTomogram) -> Self {
        TomogramFile::Spin {
            version: TOMOGRAM_SCHEMA_VERSION,
            axes: t.axes.clone(),
            values: t.values.clone(),
            counts: None,
            shots: t.shots,
        }
    }

    pub fn from_optical(t: &OpticalTomogram) -> Self {
        TomogramFile::Optical {
            version: TOMOGRAM_SCHEMA_VERSION,
            grid: t.grid.clone(),
            values: t.values.clone(),
        }
    }

    pub fn from_joint_optical(t: &JointFieldTomogram) -> Self {
        TomogramFile::JointOptical {
            version: TOMOGRAM_SCHEMA_VERSION,
            grid: t.grid.clone(),
            values: t.values.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tomogram files serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TomogramFile =
            serde_json::from_str(text).map_err(|e| TomographyError::BadFile(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn version(&self) -> u32 {
        match self {
            TomogramFile::Spin { version, .. }
            | TomogramFile::Optical { version, .. }
            | TomogramFile::JointOptical { version, .. } => *version,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version() != TOMOGRAM_SCHEMA_VERSION {
            return Err(TomographyError::BadFile(format!(
                "unsupported schema version {}",
                self.version()
            )));
        }
        match self {
            TomogramFile::Spin { axes, values, counts, shots, .. } => {
                let t = SpinTomogram {
                    axes: axes.clone(),
                    values: values.clone(),
                    shots: *shots,
                };
                t.validate()?;
                if let Some(counts) = counts {
                    let shots = shots.ok_or_else(|| {
                        TomographyError::BadFile("counts arrays require a shots field".into())
                    })?;
                    if counts.len() != values.len() {
                        return Err(TomographyError::BadFile(
                            "counts and values shapes differ".into(),
                        ));
                    }
                    for (si, row) in counts.iter().enumerate() {
                        if row.len() != values[si].len() {
                            return Err(TomographyError::BadFile(
                                "counts and values shapes differ".into(),
                            ));
                        }
                        if row.iter().sum::<u64>() != shots {
                            return Err(TomographyError::BadFile(format!(
                                "setting {si} counts do not sum to shots"
                            )));
                        }
                    }
                }
                Ok(())
            }
            TomogramFile::Optical { grid, values, .. } => {
                let t = OpticalTomogram { grid: grid.clone(), values: values.clone() };
                validate_optical(&t)
            }
            TomogramFile::JointOptical { grid, values, .. } => {
                let n_t = grid.theta_values.len();
                let n_x = grid.n_points;
                if values.len() != n_t
                    || values.iter().any(|per_tb| per_tb.len() != n_t)
                    || values
                        .iter()
                        .flatten()
                        .any(|sl| sl.len() != n_x || sl.iter().any(|row| row.len() != n_x))
                {
                    return Err(TomographyError::BadFile("joint value shape mismatch".into()));
                }
                let dx = grid.dx();
                for (ti, per_tb) in values.iter().enumerate() {
                    for (tj, sl) in per_tb.iter().enumerate() {
                        let total: f64 =
                            sl.iter().flatten().sum::<f64>() * dx * dx;
                        check_slice_norm(total, || format!("slice ({ti},{tj})"))?;
                    }
                }
                Ok(())
            }
        }
    }

    pub fn as_spin(&self) -> Result<SpinTomogram> {
        match self {
            TomogramFile::Spin { axes, values, counts, shots, .. } => {
                if let (Some(counts), Some(shots)) = (counts, shots) {
                    // Counts take precedence: probabilities derived from them.
                    let values = counts
                        .iter()
                        .map(|row| row.iter().map(|&c| c as f64 / *shots as f64).collect())
                        .collect();
                    let t = SpinTomogram { axes: axes.clone(), values, shots: Some(*shots) };
                    t.validate()?;
                    Ok(t)
                } else {
                    Ok(SpinTomogram {
                        axes: axes.clone(),
                        values: values.clone(),
                        shots: *shots,
                    })
                }
            }
            _ => Err(TomographyError::BadFile("expected a spin tomogram".into())),
        }
    }
}

fn validate_optical(t: &OpticalTomogram) -> Result<()> {
    if t.values.len() != t.grid.theta_values.len()
        || t.values.iter().any(|row| row.len() != t.grid.n_points)
    {
        return Err(TomographyError::BadFile("optical value shape mismatch".into()));
    }
    let dx = t.grid.dx();
    for (ti, row) in t.values.iter().enumerate() {
        for (xi, &w) in row.iter().enumerate() {
            if w < -CLAMP_TOL {
                return Err(TomographyError::NegativeValue {
                    value: w,
                    context: format!("theta[{ti}], x[{xi}]"),
                });
            }
        }
        check_slice_norm(row.iter().sum::<f64>() * dx, || format!("theta[{ti}]"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityOperator, Factor, PureState, SubsystemLayout};
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn field_layout(dim: usize) -> SubsystemLayout {
        SubsystemLayout::new(vec![Factor::field("A", dim)]).unwrap()
    }

    fn fock_density(dim: usize, n: usize) -> DensityOperator {
        let psi = PureState::basis(field_layout(dim), &[n]).unwrap();
        psi.to_density()
    }

    #[test]
    fn hermite_psi_closed_forms() {
        let expected0 = std::f64::consts::PI.powf(-0.25);
        assert!((hermite_psi(0, 0.0) - expected0).abs() < 1e-12);
        assert!((expected0 - 0.751126).abs() < 1e-6);
        assert!(hermite_psi(1, 0.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_psi_grid_quadrature_is_normalized() {
        let grid = QuadratureGrid::default();
        let dx = grid.dx();
        for n in 0..=4 {
            let total: f64 = grid.xs().iter().map(|&x| hermite_psi(n, x).powi(2) * dx).sum();
            assert!((total - 1.0).abs() < 1e-8, "n = {n}: {total}");
        }
    }

    #[test]
    fn hermite_rows_match_single_evaluations() {
        for &x in &[-3.3, 0.0, 0.4, 2.9] {
            for (n, value) in hermite_psi_row(5, x).into_iter().enumerate() {
                assert!((value - hermite_psi(n, x)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_overlap_conventions() {
        // theta = 0 is real; the modulus is theta-independent.
        assert!((quadrature_overlap(3, 0.7, 0.0).im).abs() < 1e-15);
        let m0 = quadrature_overlap(2, 1.1, 0.3).norm();
        let m1 = quadrature_overlap(2, 1.1, 2.9).norm();
        assert!((m0 - m1).abs() < 1e-14);
    }

    #[test]
    fn vacuum_tomogram_from_overlap_is_gaussian() {
        let grid = QuadratureGrid::new(8.0, 129, 4).unwrap();
        for &theta in &grid.theta_values {
            for &x in grid.xs().iter().step_by(16) {
                let w = quadrature_overlap(0, x, theta).norm_sqr();
                let expected = (-x * x).exp() / std::f64::consts::PI.sqrt();
                assert!((w - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optical_tomogram_of_vacuum() {
        let grid = QuadratureGrid::default();
        let tom = optical_tomogram(&fock_density(2, 0), &grid).unwrap();
        for row in &tom.values {
            for (i, &x) in grid.xs().iter().enumerate() {
                let expected = (-x * x).exp() / std::f64::consts::PI.sqrt();
                assert!((row[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optical_tomogram_of_one_photon_and_mixture() {
        let grid = QuadratureGrid::default();
        let one = optical_tomogram(&fock_density(2, 1), &grid).unwrap();
        for row in &one.values {
            for (i, &x) in grid.xs().iter().enumerate() {
                let expected = 2.0 * x * x * (-x * x).exp() / std::f64::consts::PI.sqrt();
                assert!((row[i] - expected).abs() < 1e-12);
            }
        }
        let layout = field_layout(2);
        let mixture = DensityOperator::new(
            nalgebra::DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0)])),
            layout,
        )
        .unwrap();
        let mixed = optical_tomogram(&mixture, &grid).unwrap();
        let vac = optical_tomogram(&fock_density(2, 0), &grid).unwrap();
        for ti in 0..grid.theta_values.len() {
            for i in 0..grid.n_points {
                let expected = 0.5 * vac.values[ti][i] + 0.5 * one.values[ti][i];
                assert!((mixed.values[ti][i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optical_tomogram_rejects_non_field_layout() {
        let layout = SubsystemLayout::new(vec![Factor::qubit("C")]).unwrap();
        let rho = PureState::basis(layout, &[0]).unwrap().to_density();
        assert!(matches!(
            optical_tomogram(&rho, &QuadratureGrid::default()),
            Err(TomographyError::NotFieldLayout { .. })
        ));
    }

    fn two_mode_vacuum() -> DensityOperator {
        let layout =
            SubsystemLayout::new(vec![Factor::field("A", 2), Factor::field("B", 2)]).unwrap();
        PureState::basis(layout, &[0, 0]).unwrap().to_density()
    }

    /// A correlated two-mode state: (|0 0> + |1 1>)/sqrt(2).
    fn two_mode_correlated() -> DensityOperator {
        let layout =
            SubsystemLayout::new(vec![Factor::field("A", 2), Factor::field("B", 2)]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amp = DVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        PureState::new(amp, layout).unwrap().to_density()
    }

    #[test]
    fn joint_tomogram_of_product_vacuum_factorizes() {
        let grid = QuadratureGrid::new(8.0, 65, 3).unwrap();
        let joint = joint_optical_tomogram(&two_mode_vacuum(), &grid).unwrap();
        let xs = grid.xs();
        for per_tb in &joint.values {
            for sl in per_tb {
                for (i, &xa) in xs.iter().enumerate() {
                    for (j, &xb) in xs.iter().enumerate() {
                        let expected = (-xa * xa - xb * xb).exp() / std::f64::consts::PI;
                        assert!((sl[i][j] - expected).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn joint_slices_are_normalized() {
        let grid = QuadratureGrid::new(8.0, 129, 4).unwrap();
        let joint = joint_optical_tomogram(&two_mode_correlated(), &grid).unwrap();
        let dx = grid.dx();
        for per_tb in &joint.values {
            for sl in per_tb {
                let total: f64 = sl.iter().flatten().sum::<f64>() * dx * dx;
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn joint_marginal_matches_single_mode_tomogram() {
        let grid = QuadratureGrid::new(8.0, 129, 4).unwrap();
        let rho = two_mode_correlated();
        let joint = joint_optical_tomogram(&rho, &grid).unwrap();
        let marginal = reduce_joint_optical(&joint, FieldSide::A).unwrap();
        let rho_a = crate::hilbert::partial_trace(&rho, &["A"]).unwrap();
        let direct = optical_tomogram(&rho_a, &grid).unwrap();
        for ti in 0..grid.theta_values.len() {
            for i in 0..grid.n_points {
                assert!((marginal.values[ti][i] - direct.values[ti][i]).abs() < 1e-8);
            }
        }
    }

    fn bell_density() -> DensityOperator {
        let layout =
            SubsystemLayout::new(vec![Factor::qubit("C"), Factor::qubit("D")]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amp = DVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        PureState::new(amp, layout).unwrap().to_density()
    }

    #[test]
    fn spin_tomogram_of_excited_qubit() {
        let layout = SubsystemLayout::new(vec![Factor::qubit("C")]).unwrap();
        let rho = PureState::basis(layout, &[0]).unwrap().to_density(); // |e>
        let t = spin_tomogram_xyz(&rho).unwrap();
        // Settings are [x], [y], [z] in order.
        assert!((t.values[2][0] - 1.0).abs() < 1e-12);
        assert!(t.values[2][1].abs() < 1e-12);
        assert!((t.values[0][0] - 0.5).abs() < 1e-12);
        assert!((t.values[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spin_tomogram_of_bell_state_zz_setting() {
        let t = spin_tomogram_xyz(&bell_density()).unwrap();
        // Nine settings in lexicographic order: (x,x), (x,y), ..., (z,z).
        let zz = &t.values[8];
        // Outcomes: (+,+), (+,-), (-,+), (-,-) = (ee), (eg), (ge), (gg).
        assert!((zz[0] - 0.5).abs() < 1e-12);
        assert!(zz[1].abs() < 1e-12);
        assert!(zz[2].abs() < 1e-12);
        assert!((zz[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spin_settings_sum_to_one() {
        let t = spin_tomogram_xyz(&bell_density()).unwrap();
        assert_eq!(t.values.len(), 9);
        for row in &t.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spin_tomogram_rejects_field_factor() {
        let rho = fock_density(2, 0);
        assert!(matches!(
            spin_tomogram_xyz(&rho),
            Err(TomographyError::NotQubitLayout)
        ));
    }

    #[test]
    fn reduce_spin_tomogram_of_product_is_exact_factor() {
        let layout =
            SubsystemLayout::new(vec![Factor::qubit("C"), Factor::qubit("D")]).unwrap();
        // |e> (x) |+x>: product state.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amp = DVector::from_vec(vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let rho = PureState::new(amp, layout).unwrap().to_density();
        let joint = spin_tomogram_xyz(&rho).unwrap();
        let reduced = reduce_spin_tomogram(&joint, &[0]).unwrap();
        let rho_c = crate::hilbert::partial_trace(&rho, &["C"]).unwrap();
        let direct = spin_tomogram_xyz(&rho_c).unwrap();
        for (a, b) in reduced.values.iter().zip(&direct.values) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduce_spin_tomogram_bell_marginal_is_uniform() {
        let joint = spin_tomogram_xyz(&bell_density()).unwrap();
        let reduced = reduce_spin_tomogram(&joint, &[1]).unwrap();
        for row in &reduced.values {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reduce_then_tomogram_commutes_with_trace_then_tomogram() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(97);
        let layout =
            SubsystemLayout::new(vec![Factor::qubit("C"), Factor::qubit("D")]).unwrap();
        for _ in 0..20 {
            let d = layout.total_dim();
            let mut v =
                DVector::from_fn(d, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            v /= c(v.norm(), 0.0);
            let rho = PureState::new(v, layout.clone()).unwrap().to_density();
            let reduced = reduce_spin_tomogram(&spin_tomogram_xyz(&rho).unwrap(), &[0]).unwrap();
            let traced =
                spin_tomogram_xyz(&crate::hilbert::partial_trace(&rho, &["C"]).unwrap()).unwrap();
            for (a, b) in reduced.values.iter().zip(&traced.values) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn reduce_rejects_empty_or_bad_keep() {
        let t = spin_tomogram_xyz(&bell_density()).unwrap();
        assert!(matches!(
            reduce_spin_tomogram(&t, &[]),
            Err(TomographyError::BadKeepSet)
        ));
        assert!(matches!(
            reduce_spin_tomogram(&t, &[5]),
            Err(TomographyError::BadKeepSet)
        ));
    }

    #[test]
    fn tomogram_json_round_trips_bit_exactly() {
        let t = spin_tomogram_xyz(&bell_density()).unwrap();
        let file = TomogramFile::from_spin(&t);
        let json = file.to_json();
        let back = TomogramFile::from_json(&json).unwrap();
        assert_eq!(file, back);
        if let (TomogramFile::Spin { values: a, .. }, TomogramFile::Spin { values: b, .. }) =
            (&file, &back)
        {
            for (ra, rb) in a.iter().zip(b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        } else {
            panic!("kind changed in round trip");
        }
    }

    #[test]
    fn tomogram_json_rejects_bad_version_and_denormalized_values() {
        let t = spin_tomogram_xyz(&bell_density()).unwrap();
        let mut file = TomogramFile::from_spin(&t);
        if let TomogramFile::Spin { version, .. } = &mut file {
            *version = 99;
        }
        let json = serde_json::to_string(&file).unwrap();
        assert!(TomogramFile::from_json(&json).is_err());

        let bad = TomogramFile::Spin {
            version: TOMOGRAM_SCHEMA_VERSION,
            axes: vec![vec![Axis::Z]],
            values: vec![vec![0.7, 0.7]],
            counts: None,
            shots: None,
        };
        let json = serde_json::to_string(&bad).unwrap();
        assert!(TomogramFile::from_json(&json).is_err());
    }

    #[test]
    fn joint_and_optical_files_round_trip_and_validate() {
        let grid = QuadratureGrid::new(8.0, 65, 2).unwrap();
        let joint = joint_optical_tomogram(&two_mode_correlated(), &grid).unwrap();
        let file = TomogramFile::from_joint_optical(&joint);
        let back = TomogramFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, back);

        let optical = optical_tomogram(&fock_density(2, 1), &grid).unwrap();
        let file = TomogramFile::from_optical(&optical);
        let back = TomogramFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, back);
        assert!(matches!(back.as_spin(), Err(TomographyError::BadFile(_))));
    }

    #[test]
    fn grid_validation() {
        assert!(QuadratureGrid::new(8.0, 10, 4).is_err());
        assert!(QuadratureGrid::new(-1.0, 321, 4).is_err());
        assert!(QuadratureGrid::with_thetas(8.0, 321, vec![0.0, 0.0]).is_err());
        assert!(QuadratureGrid::with_thetas(8.0, 321, vec![3.5]).is_err());
        let g = QuadratureGrid::default();
        assert_eq!(g.n_points, 321);
        assert!((g.dx() - 0.05).abs() < 1e-12);
        assert_eq!(g.theta_values.len(), 16);
    }
}
