//! Dense complex matrix algebra shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Vectorization is row-major,
//! so that `vec(E ρ E†) = (E ⊗ E*) vec(ρ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QnkError, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default residual tolerance for hermiticity, trace and unitarity checks.
pub const TOL: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Left-to-right Kronecker product of a list of factors.
pub fn tensor_all<'a, I>(factors: I) -> ComplexMatrix
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    factors
        .into_iter()
        .fold(ComplexMatrix::from_element(1, 1, ONE), |acc, f| acc.kronecker(f))
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn check_finite(m: &ComplexMatrix) -> Result<()> {
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            let z = m[(r, col)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(QnkError::NonFinite { row: r, col });
            }
        }
    }
    Ok(())
}

fn require_square(m: &ComplexMatrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(QnkError::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

/// `‖U†U − I‖_F`.
pub fn unitarity_residual(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let prod = m.adjoint() * m;
    frobenius_distance(&prod, &identity(m.nrows()))
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    unitarity_residual(m) < tol
}

pub fn require_unitary(m: &ComplexMatrix, tol: f64) -> Result<()> {
    let residual = unitarity_residual(m);
    if residual < tol {
        Ok(())
    } else {
        Err(QnkError::NonUnitary { residual })
    }
}

pub fn hermiticity_residual(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for col in r..m.ncols() {
            worst = worst.max((m[(r, col)] - m[(col, r)].conj()).norm());
        }
    }
    worst
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &ComplexMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

const MAX_CONDITION: f64 = 1e12;

/// Inverse via the adjoint when `m` is unitary to [`TOL`], otherwise an LU solve.
pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_square(m, "inverse input")?;
    if is_unitary(m, TOL) {
        return Ok(m.adjoint());
    }
    let condition = condition_number(m);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(QnkError::Singular { condition });
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(QnkError::Singular { condition })
}

/// Normalizes the largest-magnitude entry to a positive real, removing a global phase.
pub fn strip_global_phase(m: &ComplexMatrix) -> ComplexMatrix {
    let lead = m
        .iter()
        .copied()
        .fold(ZERO, |best, z| if z.norm() > best.norm() + 1e-14 { z } else { best });
    if lead.norm() == 0.0 {
        return m.clone();
    }
    let phase = lead.conj() / lead.norm();
    m.map(|z| z * phase)
}

/// Frobenius distance after removing the global phase from both operands.
pub fn distance_up_to_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    // align b's phase to a using the overlap tr(a† b)
    let overlap: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    if overlap.norm() < 1e-300 {
        return frobenius_distance(&strip_global_phase(a), &strip_global_phase(b));
    }
    let phase = overlap.conj() / overlap.norm();
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y * phase).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Reduced matrix on the subsystems listed in `keep`.
///
/// Subsystems are ordered big-endian: `dims[0]` is the most significant factor.
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let n = require_square(m, "partial trace input")?;
    let total: usize = dims.iter().product();
    if total != n {
        return Err(QnkError::DimensionMismatch(format!(
            "subsystem dims {dims:?} multiply to {total}, matrix is {n}x{n}"
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(QnkError::DimensionMismatch(format!(
            "subsystem index {bad} out of range for {} subsystems",
            dims.len()
        )));
    }
    let kept: Vec<bool> = (0..dims.len()).map(|s| keep.contains(&s)).collect();
    let kept_dim: usize = dims.iter().zip(&kept).filter(|(_, &k)| k).map(|(d, _)| d).product();
    let traced_dim = n / kept_dim;

    // full index -> (kept index, traced index)
    let mut full_of = vec![vec![0usize; traced_dim]; kept_dim];
    for full in 0..n {
        let mut rem = full;
        let mut digits = vec![0usize; dims.len()];
        for s in (0..dims.len()).rev() {
            digits[s] = rem % dims[s];
            rem /= dims[s];
        }
        let (mut ki, mut ti) = (0usize, 0usize);
        for s in 0..dims.len() {
            if kept[s] {
                ki = ki * dims[s] + digits[s];
            } else {
                ti = ti * dims[s] + digits[s];
            }
        }
        full_of[ki][ti] = full;
    }

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    for r in 0..kept_dim {
        for col in 0..kept_dim {
            let mut acc = ZERO;
            for t in 0..traced_dim {
                acc += m[(full_of[r][t], full_of[col][t])];
            }
            out[(r, col)] = acc;
        }
    }
    Ok(out)
}

/// Row-major stacking of a square matrix.
pub fn vec_matrix(m: &ComplexMatrix) -> DVector<Complex64> {
    let (rows, cols) = m.shape();
    DVector::from_iterator(rows * cols, (0..rows).flat_map(|r| (0..cols).map(move |col| m[(r, col)])))
}

/// Inverse of [`vec_matrix`] for a length-`d²` vector.
pub fn unvec_matrix(v: &DVector<Complex64>) -> Result<ComplexMatrix> {
    let d = perfect_sqrt(v.len()).ok_or_else(|| {
        QnkError::DimensionMismatch(format!("vector length {} is not a perfect square", v.len()))
    })?;
    Ok(ComplexMatrix::from_fn(d, d, |r, col| v[r * d + col]))
}

pub fn perfect_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// A validated density matrix: Hermitian, unit trace and positive semidefinite to [`TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        require_square(&matrix, "density matrix")?;
        check_finite(&matrix)?;
        let herm = hermiticity_residual(&matrix);
        if herm > tol {
            return Err(QnkError::InvalidState(format!("not Hermitian (residual {herm:.3e})")));
        }
        let tr = trace(&matrix);
        if (tr - ONE).norm() > tol {
            return Err(QnkError::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = hermitian_part(&matrix)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol {
            return Err(QnkError::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(QnkError::InvalidState("zero state vector".into()));
        }
        let psi = psi / Complex64::from(norm);
        Self::new(&psi * psi.adjoint())
    }

    pub fn basis(d: usize, k: usize) -> Self {
        let mut m = ComplexMatrix::zeros(d, d);
        m[(k, k)] = ONE;
        Self { matrix: m }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: identity(d) / Complex64::from(d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Eigenvalues in ascending order, clipped below at zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = hermitian_part(&self.matrix)
            .symmetric_eigenvalues()
            .iter()
            .map(|&x| x.max(0.0))
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self {
            matrix: tensor(&self.matrix, &other.matrix),
        }
    }
}

fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// A vectorized state `vec(ρ)` of length `dim²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecState {
    dim: usize,
    data: DVector<Complex64>,
}

impl VecState {
    pub fn from_data(data: DVector<Complex64>) -> Result<Self> {
        let dim = perfect_sqrt(data.len()).ok_or_else(|| {
            QnkError::DimensionMismatch(format!(
                "vector length {} is not a perfect square",
                data.len()
            ))
        })?;
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &DVector<Complex64> {
        &self.data
    }

    /// Applies a `d² × d²` superoperator.
    pub fn apply(&self, superop: &ComplexMatrix) -> Result<VecState> {
        if superop.ncols() != self.data.len() || superop.nrows() != self.data.len() {
            return Err(QnkError::DimensionMismatch(format!(
                "superoperator is {}x{}, state has length {}",
                superop.nrows(),
                superop.ncols(),
                self.data.len()
            )));
        }
        Ok(VecState {
            dim: self.dim,
            data: superop * &self.data,
        })
    }
}

pub fn vectorize(rho: &DensityMatrix) -> VecState {
    VecState {
        dim: rho.dim(),
        data: vec_matrix(rho.matrix()),
    }
}

pub fn unvectorize(v: &VecState) -> Result<DensityMatrix> {
    DensityMatrix::new(unvec_matrix(&v.data)?)
}

/// `½ ‖ρ − σ‖₁`, computed from singular values.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QnkError::DimensionMismatch(format!(
            "trace distance between dims {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    Ok(0.5 * trace_norm(&(rho.matrix() - sigma.matrix())))
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    m.clone().singular_values().iter().sum()
}

/// `u = Σ_j λ_j |j⟩⟨j|` with orthonormal eigenvectors in the columns of `eigenvectors`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: ComplexMatrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.eigenvectors.nrows();
        let mut out = ComplexMatrix::zeros(d, d);
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvectors.column(j);
            out += (v * v.adjoint()) * lambda;
        }
        out
    }

    pub fn eigenvalue_sum(&self) -> Complex64 {
        self.eigenvalues.iter().sum()
    }
}

/// Spectral decomposition of a normal matrix via the complex Schur form.
pub fn spectral_decomposition(u: &ComplexMatrix) -> Result<SpectralDecomposition> {
    let d = require_square(u, "spectral decomposition input")?;
    let scale = frobenius(u).max(1.0);
    let normality = frobenius_distance(&(u * u.adjoint()), &(u.adjoint() * u));
    if normality > TOL * scale {
        return Err(QnkError::NonNormal { residual: normality });
    }
    let schur = nalgebra::Schur::try_new(u.clone(), 1e-15, 10_000)
        .ok_or(QnkError::NonNormal { residual: f64::NAN })?;
    let (q, t) = schur.unpack();
    let eigenvalues: Vec<Complex64> = (0..d).map(|j| t[(j, j)]).collect();
    let decomposition = SpectralDecomposition {
        eigenvalues,
        eigenvectors: q,
    };
    let residual = frobenius_distance(&decomposition.reconstruct(), u);
    if residual > TOL * scale {
        return Err(QnkError::NonNormal { residual });
    }
    Ok(decomposition)
}
