//! Additive, multiplicative and group commutators, and executable checks of the
//! commutator identities the no-key schemes rely on.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QnkError, Result};
use crate::linalg::{
    condition_number, frobenius_distance, identity, inverse, is_unitary, require_unitary,
    spectral_decomposition, ComplexMatrix, TOL,
};

/// Phases closer than this to `0 mod 2π` count as zero.
pub const PHASE_TOL: f64 = 1e-8;

fn same_square(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.shape() != b.shape() {
        return Err(QnkError::DimensionMismatch(format!(
            "commutator operands must be square and equal-sized, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn require_invertible(m: &ComplexMatrix) -> Result<()> {
    if is_unitary(m, TOL) {
        return Ok(());
    }
    let condition = condition_number(m);
    if !condition.is_finite() || condition > 1e12 {
        return Err(QnkError::Singular { condition });
    }
    Ok(())
}

/// `K = AB − BA`.
pub fn additive_commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    same_square(a, b)?;
    Ok(a * b - b * a)
}

/// `(A, B) = B⁻¹A⁻¹BA`.
pub fn group_commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    same_square(a, b)?;
    let a_inv = inverse(a)?;
    let b_inv = inverse(b)?;
    Ok(commutator_with_inverses(a, &a_inv, b, &b_inv))
}

fn commutator_with_inverses(
    a: &ComplexMatrix,
    a_inv: &ComplexMatrix,
    b: &ComplexMatrix,
    b_inv: &ComplexMatrix,
) -> ComplexMatrix {
    b_inv * (a_inv * (b * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "relation")]
pub enum PhaseRelation {
    /// `BA = e^{iλ}AB` with `λ ∈ [0, 2π)`.
    Scalar { lambda: f64, residual: f64 },
    NoScalarRelation { residual: f64 },
}

impl PhaseRelation {
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            PhaseRelation::Scalar { lambda, .. } => Some(lambda),
            PhaseRelation::NoScalarRelation { .. } => None,
        }
    }

    /// True for a scalar relation with `λ ≠ 0 (mod 2π)`.
    pub fn is_nontrivial(&self) -> bool {
        self.lambda().is_some_and(|l| !is_zero_phase(l))
    }
}

pub fn is_zero_phase(lambda: f64) -> bool {
    let l = lambda.rem_euclid(2.0 * PI);
    l.min(2.0 * PI - l) < PHASE_TOL
}

/// Fits `BA = e^{iλ}AB`, estimating `λ` from the ratio at the largest entry of `AB`.
pub fn multiplicative_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<PhaseRelation> {
    multiplicative_phase_with_tol(a, b, TOL)
}

pub fn multiplicative_phase_with_tol(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> Result<PhaseRelation> {
    same_square(a, b)?;
    require_invertible(a)?;
    require_invertible(b)?;
    let ab = a * b;
    let ba = b * a;
    let (mut lead, mut lead_norm) = ((0, 0), -1.0);
    for r in 0..ab.nrows() {
        for col in 0..ab.ncols() {
            let n = ab[(r, col)].norm();
            if n > lead_norm + 1e-14 {
                lead = (r, col);
                lead_norm = n;
            }
        }
    }
    let ratio = ba[lead] / ab[lead];
    let phase = if ratio.norm() > 0.0 { ratio / ratio.norm() } else { Complex64::new(1.0, 0.0) };
    let residual = frobenius_distance(&ba, &(&ab * phase));
    if residual < tol {
        let mut lambda = phase.arg().rem_euclid(2.0 * PI);
        if is_zero_phase(lambda) {
            lambda = 0.0;
        }
        Ok(PhaseRelation::Scalar { lambda, residual })
    } else {
        Ok(PhaseRelation::NoScalarRelation { residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem1Outcome {
    Pass,
    Fail,
    PreconditionNotMet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub relation: PhaseRelation,
    /// `|Σ_j λ_j(A)|`.
    pub eigenvalue_sum_a: f64,
    pub eigenvalue_sum_b: f64,
    pub outcome: Theorem1Outcome,
}

/// For unitaries with `BA = e^{iλ}AB`, `λ ≠ 0`, the eigenvalues of each operator sum to zero.
pub fn verify_theorem1(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Theorem1Report> {
    require_unitary(a, TOL)?;
    require_unitary(b, TOL)?;
    let relation = multiplicative_phase(a, b)?;
    let eigenvalue_sum_a = spectral_decomposition(a)?.eigenvalue_sum().norm();
    let eigenvalue_sum_b = spectral_decomposition(b)?.eigenvalue_sum().norm();
    let outcome = if !relation.is_nontrivial() {
        Theorem1Outcome::PreconditionNotMet
    } else if eigenvalue_sum_a < PHASE_TOL && eigenvalue_sum_b < PHASE_TOL {
        Theorem1Outcome::Pass
    } else {
        Theorem1Outcome::Fail
    };
    Ok(Theorem1Report {
        relation,
        eigenvalue_sum_a,
        eigenvalue_sum_b,
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct ConstantCommutator {
    pub n: ComplexMatrix,
    pub max_deviation: f64,
}

fn inverses(set: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    set.iter()
        .map(|m| {
            require_invertible(m)?;
            inverse(m)
        })
        .collect()
}

fn require_nonempty(s_a: &[ComplexMatrix], s_b: &[ComplexMatrix]) -> Result<()> {
    if s_a.is_empty() || s_b.is_empty() {
        return Err(QnkError::InvalidArgument("operator sets must be nonempty".into()));
    }
    let shape = s_a[0].shape();
    if shape.0 != shape.1 || s_a.iter().chain(s_b).any(|m| m.shape() != shape) {
        return Err(QnkError::DimensionMismatch("operator sets mix matrix shapes".into()));
    }
    Ok(())
}

/// Checks `(A_i, B_j) = N` for every cross pair and returns `N = (A_0, B_0)`.
pub fn verify_constant_commutator(
    s_a: &[ComplexMatrix],
    s_b: &[ComplexMatrix],
    tol: f64,
) -> Result<ConstantCommutator> {
    require_nonempty(s_a, s_b)?;
    let a_inv = inverses(s_a)?;
    let b_inv = inverses(s_b)?;
    let n = commutator_with_inverses(&s_a[0], &a_inv[0], &s_b[0], &b_inv[0]);
    let max_deviation = (0..s_a.len() * s_b.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / s_b.len(), idx % s_b.len());
            let c = commutator_with_inverses(&s_a[i], &a_inv[i], &s_b[j], &b_inv[j]);
            frobenius_distance(&c, &n)
        })
        .reduce(|| 0.0, f64::max);
    if max_deviation >= tol {
        return Err(QnkError::NotConstantCommutator { deviation: max_deviation });
    }
    Ok(ConstantCommutator { n, max_deviation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposition {
    /// `(A_a⁻¹, B_jB_i⁻¹) = I` and `(B_b, A_jA_i⁻¹) = I`.
    One,
    /// `(A_iA_j, B_kB_l) = (A_j², B_l²)`.
    Two,
    /// `(A_{j1}A_{j2}A_{j3}, B_{i1}B_{i2}B_{i3}) = (A_{j3}A_{j2}A_{j3}, B_{i3}B_{i2}B_{i3})`.
    Three,
}

impl Proposition {
    pub fn label(&self) -> &'static str {
        match self {
            Proposition::One => "proposition_1",
            Proposition::Two => "proposition_2",
            Proposition::Three => "proposition_3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kind: String,
    pub indices_checked: usize,
    pub max_residual: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn new(kind: &str, indices_checked: usize, max_residual: f64, tol: f64) -> Self {
        ResidualReport {
            kind: kind.to_string(),
            indices_checked,
            max_residual,
            pass: max_residual < tol,
        }
    }
}

/// All ordered products `X_{t_1} ⋯ X_{t_m}` of length `m`, with their inverses,
/// indexed by `t` in base `n` (first factor most significant).
fn products(set: &[ComplexMatrix], inv: &[ComplexMatrix], m: u32) -> Vec<(ComplexMatrix, ComplexMatrix)> {
    let n = set.len();
    (0..n.pow(m))
        .map(|mut t| {
            let mut digits = vec![0usize; m as usize];
            for slot in (0..m as usize).rev() {
                digits[slot] = t % n;
                t /= n;
            }
            let d = set[0].nrows();
            let mut prod = identity(d);
            let mut prod_inv = identity(d);
            for &k in &digits {
                prod *= &set[k];
                prod_inv = &inv[k] * prod_inv;
            }
            (prod, prod_inv)
        })
        .collect()
}

/// Exhaustive residual check of one of the three product identities.
pub fn verify_propositions(
    s_a: &[ComplexMatrix],
    s_b: &[ComplexMatrix],
    which: Proposition,
    tol: f64,
) -> Result<ResidualReport> {
    verify_constant_commutator(s_a, s_b, tol)?;
    let a_inv = inverses(s_a)?;
    let b_inv = inverses(s_b)?;
    let (na, nb) = (s_a.len(), s_b.len());
    let d = s_a[0].nrows();
    let eye = identity(d);

    match which {
        Proposition::One => {
            // B_jB_i⁻¹ and A_jA_i⁻¹ for all ordered pairs
            let b_ratios: Vec<(ComplexMatrix, ComplexMatrix)> = (0..nb * nb)
                .map(|t| {
                    let (j, i) = (t / nb, t % nb);
                    (&s_b[j] * &b_inv[i], &s_b[i] * &b_inv[j])
                })
                .collect();
            let a_ratios: Vec<(ComplexMatrix, ComplexMatrix)> = (0..na * na)
                .map(|t| {
                    let (j, i) = (t / na, t % na);
                    (&s_a[j] * &a_inv[i], &s_a[i] * &a_inv[j])
                })
                .collect();
            let first = (0..na * nb * nb)
                .into_par_iter()
                .map(|t| {
                    let (a, pair) = (t / (nb * nb), t % (nb * nb));
                    let (ratio, ratio_inv) = &b_ratios[pair];
                    // (A_a⁻¹, B_jB_i⁻¹)
                    let c = commutator_with_inverses(&a_inv[a], &s_a[a], ratio, ratio_inv);
                    frobenius_distance(&c, &eye)
                })
                .reduce(|| 0.0, f64::max);
            let second = (0..nb * na * na)
                .into_par_iter()
                .map(|t| {
                    let (b, pair) = (t / (na * na), t % (na * na));
                    let (ratio, ratio_inv) = &a_ratios[pair];
                    // (B_b, A_jA_i⁻¹)
                    let c = commutator_with_inverses(&s_b[b], &b_inv[b], ratio, ratio_inv);
                    frobenius_distance(&c, &eye)
                })
                .reduce(|| 0.0, f64::max);
            Ok(ResidualReport::new(
                which.label(),
                na * nb * nb + nb * na * na,
                first.max(second),
                tol,
            ))
        }
        Proposition::Two => {
            let pa = products(s_a, &a_inv, 2);
            let pb = products(s_b, &b_inv, 2);
            let comm = |ta: usize, tb: usize| {
                commutator_with_inverses(&pa[ta].0, &pa[ta].1, &pb[tb].0, &pb[tb].1)
            };
            let worst = (0..pa.len() * pb.len())
                .into_par_iter()
                .map(|t| {
                    let (ta, tb) = (t / pb.len(), t % pb.len());
                    let (j, l) = (ta % na, tb % nb);
                    let rhs = comm(j * na + j, l * nb + l);
                    frobenius_distance(&comm(ta, tb), &rhs)
                })
                .reduce(|| 0.0, f64::max);
            Ok(ResidualReport::new(which.label(), pa.len() * pb.len(), worst, tol))
        }
        Proposition::Three => {
            let pa = products(s_a, &a_inv, 3);
            let pb = products(s_b, &b_inv, 3);
            let comms: Vec<ComplexMatrix> = (0..pa.len() * pb.len())
                .into_par_iter()
                .map(|t| {
                    let (ta, tb) = (t / pb.len(), t % pb.len());
                    commutator_with_inverses(&pa[ta].0, &pa[ta].1, &pb[tb].0, &pb[tb].1)
                })
                .collect();
            // (x1, x2, x3) -> (x3, x2, x3)
            let fold_a = |t: usize| {
                let (x2, x3) = ((t / na) % na, t % na);
                (x3 * na + x2) * na + x3
            };
            let fold_b = |t: usize| {
                let (x2, x3) = ((t / nb) % nb, t % nb);
                (x3 * nb + x2) * nb + x3
            };
            let worst = (0..comms.len())
                .into_par_iter()
                .map(|t| {
                    let (ta, tb) = (t / pb.len(), t % pb.len());
                    let rhs = &comms[fold_a(ta) * pb.len() + fold_b(tb)];
                    frobenius_distance(&comms[t], rhs)
                })
                .reduce(|| 0.0, f64::max);
            Ok(ResidualReport::new(which.label(), comms.len(), worst, tol))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedSets {
    /// `{A_iA_j⁻¹}` deduplicated; the identity appears once, first.
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<ComplexMatrix>,
    /// Max `‖(Ã, B̃) − I‖` over all cross pairs of the extended sets.
    pub max_residual: f64,
}

impl ExtendedSets {
    pub fn non_identity_counts(&self) -> (usize, usize) {
        let count = |set: &[ComplexMatrix]| {
            set.iter()
                .filter(|m| frobenius_distance(m, &identity(m.nrows())) >= TOL)
                .count()
        };
        (count(&self.a), count(&self.b))
    }
}

fn ratio_set(set: &[ComplexMatrix], inv: &[ComplexMatrix], tol: f64) -> Vec<ComplexMatrix> {
    let d = set[0].nrows();
    let mut out = vec![identity(d)];
    for (i, x) in set.iter().enumerate() {
        for (j, y_inv) in inv.iter().enumerate() {
            if i == j {
                continue;
            }
            let candidate = x * y_inv;
            if out.iter().all(|m| frobenius_distance(m, &candidate) >= tol) {
                out.push(candidate);
            }
        }
    }
    out
}

/// Builds `S̃(A) = {A_iA_j⁻¹}`, `S̃(B) = {B_iB_j⁻¹}` and checks that every
/// cross pair has trivial group commutator.
pub fn extend_sets(s_a: &[ComplexMatrix], s_b: &[ComplexMatrix], tol: f64) -> Result<ExtendedSets> {
    verify_constant_commutator(s_a, s_b, tol)?;
    let a = ratio_set(s_a, &inverses(s_a)?, tol);
    let b = ratio_set(s_b, &inverses(s_b)?, tol);
    let a_inv = inverses(&a)?;
    let b_inv = inverses(&b)?;
    let eye = identity(a[0].nrows());
    let max_residual = (0..a.len() * b.len())
        .into_par_iter()
        .map(|t| {
            let (i, j) = (t / b.len(), t % b.len());
            frobenius_distance(&commutator_with_inverses(&a[i], &a_inv[i], &b[j], &b_inv[j]), &eye)
        })
        .reduce(|| 0.0, f64::max);
    if max_residual >= tol {
        return Err(QnkError::Verification(format!(
            "extended sets do not commute (residual {max_residual:.3e})"
        )));
    }
    Ok(ExtendedSets { a, b, max_residual })
}
