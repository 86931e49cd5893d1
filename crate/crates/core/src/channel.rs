//! Trace-preserving quantum operations in Kraus form, their natural
//! representation `Σ E_i ⊗ E_i*`, dilation extraction and Choi reshuffling.

use serde::{Deserialize, Serialize};

use crate::error::{QnkError, Result};
use crate::json::MatrixJson;
use crate::linalg::{
    frobenius, frobenius_distance, identity, perfect_sqrt, require_unitary, tensor, unvec_matrix,
    vec_matrix, ComplexMatrix, DensityMatrix, ZERO, TOL,
};

/// Kraus operators with norm below this are dropped from dilation output.
const PRUNE_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Channel {
    dim: usize,
    kraus: Vec<ComplexMatrix>,
    natural: ComplexMatrix,
}

impl Channel {
    /// Builds a channel, checking `Σ E_i†E_i = I` to [`TOL`].
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| QnkError::InvalidArgument("channel needs at least one Kraus operator".into()))?;
        let dim = first.nrows();
        if let Some(bad) = kraus.iter().find(|e| e.shape() != (dim, dim)) {
            return Err(QnkError::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {dim}x{dim}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        for e in &kraus {
            crate::linalg::check_finite(e)?;
        }
        let residual = tp_residual(&kraus);
        if residual > TOL {
            return Err(QnkError::NotTracePreserving { residual });
        }
        let natural = natural_from_kraus(&kraus);
        Ok(Self { dim, kraus, natural })
    }

    pub fn identity(dim: usize) -> Self {
        Self::unitary(&identity(dim)).expect("identity is unitary")
    }

    pub fn unitary(u: &ComplexMatrix) -> Result<Self> {
        require_unitary(u, TOL)?;
        Self::new(vec![u.clone()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// Natural representation `Σ_i E_i ⊗ E_i*`.
    pub fn natural(&self) -> &ComplexMatrix {
        &self.natural
    }

    /// `Σ E_i ρ E_i†`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(QnkError::DimensionMismatch(format!(
                "channel acts on dim {}, state has dim {}",
                self.dim,
                rho.dim()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for e in &self.kraus {
            out += e * rho.matrix() * e.adjoint();
        }
        DensityMatrix::new(out)
    }

    /// The channel that applies `self` first and then `next`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if next.dim != self.dim {
            return Err(QnkError::DimensionMismatch(format!(
                "cannot compose dims {} and {}",
                self.dim, next.dim
            )));
        }
        let kraus = next
            .kraus
            .iter()
            .flat_map(|f| self.kraus.iter().map(move |e| f * e))
            .collect();
        Channel::new(kraus)
    }

    pub fn choi(&self) -> ComplexMatrix {
        choi_reshuffle(&self.natural).expect("natural representation is d²×d²")
    }
}

fn tp_residual(kraus: &[ComplexMatrix]) -> f64 {
    let d = kraus[0].ncols();
    let mut sum = ComplexMatrix::zeros(d, d);
    for e in kraus {
        sum += e.adjoint() * e;
    }
    frobenius_distance(&sum, &identity(d))
}

pub fn natural_from_kraus(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus[0].nrows();
    let mut out = ComplexMatrix::zeros(d * d, d * d);
    for e in kraus {
        out += tensor(e, &e.map(|z| z.conj()));
    }
    out
}

/// Natural representation of the unitary channel `ρ ↦ UρU†`.
pub fn natural_of_unitary(u: &ComplexMatrix) -> ComplexMatrix {
    tensor(u, &u.map(|z| z.conj()))
}

pub fn natural_rep(ch: &Channel) -> &ComplexMatrix {
    ch.natural()
}

/// Kraus operators `E_k = ⟨e_k|U|0⟩` of the channel obtained by preparing the
/// ancilla (first tensor factor) in `|0⟩`, applying `u` and tracing out the ancilla.
pub fn kraus_from_dilation(u: &ComplexMatrix, ancilla_dim: usize) -> Result<Channel> {
    require_unitary(u, TOL)?;
    let n = u.nrows();
    if ancilla_dim == 0 || !n.is_multiple_of(ancilla_dim) {
        return Err(QnkError::DimensionMismatch(format!(
            "dilation of size {n} is not divisible by ancilla dim {ancilla_dim}"
        )));
    }
    let d = n / ancilla_dim;
    let kraus: Vec<ComplexMatrix> = (0..ancilla_dim)
        .map(|k| u.view((k * d, 0), (d, d)).into_owned())
        .filter(|e| frobenius(e) >= PRUNE_NORM)
        .collect();
    Channel::new(kraus)
}

/// Index permutation between the natural representation and the Choi matrix
/// `J = Σ_{a,a'} Φ(|a⟩⟨a'|) ⊗ |a⟩⟨a'|` (output factor first, unnormalized).
/// The map is an involution.
pub fn choi_reshuffle(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.nrows() != m.ncols() {
        return Err(QnkError::DimensionMismatch(format!(
            "reshuffle input must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = perfect_sqrt(m.nrows()).ok_or_else(|| {
        QnkError::DimensionMismatch(format!("size {} is not a perfect square", m.nrows()))
    })?;
    let mut out = ComplexMatrix::from_element(d * d, d * d, ZERO);
    for x in 0..d {
        for y in 0..d {
            for a in 0..d {
                for b in 0..d {
                    // natural[(x,y),(a,b)] = Φ(|a⟩⟨b|)[x,y] = J[(x,a),(y,b)]
                    out[(x * d + a, y * d + b)] = m[(x * d + y, a * d + b)];
                }
            }
        }
    }
    Ok(out)
}

/// `max_{a,a'} |Σ_x N[(x,x),(a,a')] − δ_{aa'}|` for a natural representation `N`.
pub fn natural_tp_residual(m: &ComplexMatrix) -> Result<f64> {
    let d = perfect_sqrt(m.nrows())
        .filter(|_| m.nrows() == m.ncols())
        .ok_or_else(|| QnkError::DimensionMismatch(format!("{}x{} is not d²×d²", m.nrows(), m.ncols())))?;
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let mut s = ZERO;
            for x in 0..d {
                s += m[(x * d + x, a * d + b)];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    Ok(worst)
}

/// If `m` is the natural representation of a unitary channel, returns a
/// unitary `U` (defined up to global phase) with `m = U ⊗ U*`.
pub fn unitary_from_natural(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let tp = natural_tp_residual(m)?;
    if tp > tol {
        return Err(QnkError::NotTracePreserving { residual: tp });
    }
    let j = choi_reshuffle(m)?;
    let d = perfect_sqrt(m.nrows()).unwrap();
    let herm = crate::linalg::hermiticity_residual(&j);
    if herm > tol {
        return Err(QnkError::InvalidArgument(format!(
            "Choi matrix is not Hermitian (residual {herm:.3e})"
        )));
    }
    let eig = j.clone().symmetric_eigen();
    let (top, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
    let top_value = eig.eigenvalues[top];
    let v = eig.eigenvectors.column(top).into_owned() * num_complex::Complex64::from(top_value.max(0.0).sqrt());
    let candidate = unvec_choi_vector(&v, d);
    let rebuilt = natural_of_unitary(&candidate);
    let residual = frobenius_distance(&rebuilt, m);
    if residual > tol * (d as f64) {
        return Err(QnkError::InvalidArgument(format!(
            "not the natural representation of a unitary channel (rank-1 residual {residual:.3e})"
        )));
    }
    require_unitary(&candidate, tol * (d as f64))?;
    Ok(candidate)
}

// J = |vec_c(U)⟩⟨vec_c(U)| with J indexed (x,a): the vector entry (x,a) is U[x,a]
fn unvec_choi_vector(v: &nalgebra::DVector<num_complex::Complex64>, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |x, a| v[x * d + a])
}

/// Applies a natural representation to `ρ` through `unvec(N · vec(ρ))`.
pub fn apply_natural(m: &ComplexMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let v = vec_matrix(rho.matrix());
    if m.ncols() != v.len() {
        return Err(QnkError::DimensionMismatch(format!(
            "superoperator has {} columns, state vector has length {}",
            m.ncols(),
            v.len()
        )));
    }
    DensityMatrix::new(unvec_matrix(&(m * v))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelJson {
    pub dim: usize,
    pub kraus: Vec<MatrixJson>,
}

impl From<&Channel> for ChannelJson {
    fn from(ch: &Channel) -> Self {
        ChannelJson {
            dim: ch.dim,
            kraus: ch.kraus.iter().map(MatrixJson::from).collect(),
        }
    }
}

impl TryFrom<ChannelJson> for Channel {
    type Error = QnkError;

    fn try_from(value: ChannelJson) -> Result<Self> {
        let kraus: Vec<ComplexMatrix> = value
            .kraus
            .into_iter()
            .map(ComplexMatrix::try_from)
            .collect::<Result<_>>()?;
        let ch = Channel::new(kraus)?;
        if ch.dim != value.dim {
            return Err(QnkError::DimensionMismatch(format!(
                "channel declares dim {}, Kraus operators are {}x{}",
                value.dim, ch.dim, ch.dim
            )));
        }
        Ok(ch)
    }
}
