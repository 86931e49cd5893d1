//! Indistinguishability and operator-level security checks: averaged wire
//! operators, the diamond norm, and verdicts against an explicit threshold.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{choi_reshuffle, natural_tp_residual};
use crate::error::{QnkError, Result};
use crate::family::OperatorFamily;
use crate::linalg::{
    c, hermiticity_residual, identity, inverse, perfect_sqrt, trace_distance, trace_norm, ComplexMatrix,
    DensityMatrix,
};
use crate::random::{derived_rng, random_state_vector};

/// Tolerance for probability distributions summing to one.
pub const DISTRIBUTION_TOL: f64 = 1e-12;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Def1,
    Def2,
    Def3,
    Def4,
    Sufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityVerdict {
    pub criterion: Criterion,
    pub epsilon: f64,
    pub measured: BTreeMap<String, f64>,
    pub pass: bool,
}

impl SecurityVerdict {
    /// `pass` is set iff every measured value is below `epsilon`.
    pub fn new(criterion: Criterion, epsilon: f64, measured: BTreeMap<String, f64>) -> Self {
        let pass = measured.values().all(|&v| v < epsilon);
        SecurityVerdict {
            criterion,
            epsilon,
            measured,
            pass,
        }
    }

    pub fn max_measured(&self) -> f64 {
        self.measured.values().cloned().fold(0.0, f64::max)
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(QnkError::InvalidArgument(format!("{what}: weights must be finite and non-negative")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(QnkError::InvalidDistribution { sum });
    }
    Ok(())
}

/// Distribution of the local choices `l₁, l₂` over a family's operator lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistribution {
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
}

impl LocalDistribution {
    pub fn uniform(family: &OperatorFamily) -> Self {
        let (na, nb) = (family.n_a(), family.n_b());
        LocalDistribution {
            alice: vec![1.0 / na as f64; na],
            bob: vec![1.0 / nb as f64; nb],
        }
    }

    fn validate(&self, family: &OperatorFamily) -> Result<()> {
        if self.alice.len() != family.n_a() || self.bob.len() != family.n_b() {
            return Err(QnkError::DimensionMismatch(format!(
                "local distribution has {}/{} weights for a {}/{} family",
                self.alice.len(),
                self.bob.len(),
                family.n_a(),
                family.n_b()
            )));
        }
        check_distribution(&self.alice, "alice local distribution")?;
        check_distribution(&self.bob, "bob local distribution")
    }
}

/// One keyed family in the key distribution, with its probability and local distribution.
#[derive(Debug, Clone)]
pub struct EnsembleMember<'a> {
    pub family: &'a OperatorFamily,
    pub weight: f64,
    pub local: LocalDistribution,
}

impl<'a> EnsembleMember<'a> {
    pub fn uniform(family: &'a OperatorFamily, weight: f64) -> Self {
        EnsembleMember {
            family,
            weight,
            local: LocalDistribution::uniform(family),
        }
    }
}

/// Averaged superoperators for the three wire positions.
#[derive(Debug, Clone)]
pub struct CipherAverages {
    /// `Σ p A`.
    pub first: ComplexMatrix,
    /// `Σ p B A`.
    pub second: ComplexMatrix,
    /// `Σ p A⁻¹ B A`.
    pub third: ComplexMatrix,
}

impl CipherAverages {
    pub fn as_array(&self) -> [&ComplexMatrix; 3] {
        [&self.first, &self.second, &self.third]
    }
}

/// Minimum Choi eigenvalue and TP residual of a natural representation.
pub fn channel_mixture_residuals(m: &ComplexMatrix) -> Result<(f64, f64)> {
    let j = choi_reshuffle(m)?;
    let herm = (&j + j.adjoint()) * c(0.5, 0.0);
    let min_eig = herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let asym = hermiticity_residual(&j);
    Ok((if asym > 1e-10 { f64::NEG_INFINITY } else { min_eig }, natural_tp_residual(m)?))
}

fn require_channel_mixture(m: &ComplexMatrix, what: &str) -> Result<()> {
    let (min_eig, tp) = channel_mixture_residuals(m)?;
    if min_eig < -1e-10 || tp >= 1e-10 {
        return Err(QnkError::Verification(format!(
            "{what} is not a channel mixture (Choi floor {min_eig:.3e}, TP residual {tp:.3e})"
        )));
    }
    Ok(())
}

struct Averager<'m, 'a> {
    members: &'m [EnsembleMember<'a>],
}

impl Averager<'_, '_> {
    /// `Σ_member w Σ_{l₁,l₂} p p f(A, A⁻¹, B)`.
    fn sum<F>(&self, f: F) -> Result<ComplexMatrix>
    where
        F: Fn(&ComplexMatrix, &ComplexMatrix, &ComplexMatrix) -> ComplexMatrix,
    {
        let d2 = self.members[0].family.n.nrows();
        let mut acc = ComplexMatrix::zeros(d2, d2);
        for m in self.members {
            for (a, &pa) in m.family.s_a.iter().zip(&m.local.alice) {
                let a_inv = inverse(a)?;
                for (b, &pb) in m.family.s_b.iter().zip(&m.local.bob) {
                    acc += f(a, &a_inv, b) * c(m.weight * pa * pb, 0.0);
                }
            }
        }
        Ok(acc)
    }
}

fn validate_members(members: &[EnsembleMember]) -> Result<()> {
    let first = members
        .first()
        .ok_or_else(|| QnkError::InvalidArgument("empty key distribution".into()))?;
    check_distribution(&members.iter().map(|m| m.weight).collect::<Vec<_>>(), "key distribution")?;
    for m in members {
        if m.family.dim != first.family.dim {
            return Err(QnkError::DimensionMismatch("ensemble members act on different dims".into()));
        }
        m.local.validate(m.family)?;
    }
    Ok(())
}

/// Exact weighted sums over keys and local choices for the three wire operators.
pub fn cipher_average_operators(members: &[EnsembleMember]) -> Result<CipherAverages> {
    validate_members(members)?;
    let avg = Averager { members };
    let out = CipherAverages {
        first: avg.sum(|a, _, _| a.clone())?,
        second: avg.sum(|a, _, b| b * a)?,
        third: avg.sum(|a, a_inv, b| a_inv * b * a)?,
    };
    for (m, name) in out.as_array().into_iter().zip(["first average", "second average", "third average"]) {
        require_channel_mixture(m, name)?;
    }
    Ok(out)
}

/// Number of random restarts in [`diamond_norm`], in addition to the maximally entangled start.
pub const DIAMOND_RESTARTS: usize = 20;
const ASCENT_TOL: f64 = 1e-10;
const ASCENT_MAX_ITERS: usize = 2000;
const SCREEN_ITERS: usize = 25;
const FINALISTS: usize = 4;
const SANDWICH_SLACK: f64 = 1e-9;
const CEILING_TOL: f64 = 1e-7;

/// Choi matrix with the contraction layout used by the ascent step precomputed.
struct AscentProblem {
    d: usize,
    /// Blocks `J_{xy}[a, a'] = J[(x,a),(y,a')]`, row-major in `(x, y)`.
    blocks: Vec<ComplexMatrix>,
    /// `J[(x,a),(y,a')]` rearranged to rows `(y,x)`, columns `(a',a)`.
    choi_contracted: ComplexMatrix,
    hermitian: bool,
}

impl AscentProblem {
    fn new(choi: ComplexMatrix, d: usize) -> Self {
        let choi_contracted = ComplexMatrix::from_fn(d * d, d * d, |r, col| {
            let (y, x) = (r / d, r % d);
            let (a2, a) = (col / d, col % d);
            choi[(x * d + a, y * d + a2)]
        });
        let hermitian = hermiticity_residual(&choi) < 1e-12;
        let blocks = (0..d * d)
            .map(|xy| choi.view(((xy / d) * d, (xy % d) * d), (d, d)).into_owned())
            .collect();
        AscentProblem {
            d,
            blocks,
            choi_contracted,
            hermitian,
        }
    }

    /// Trace norm of `(Δ ⊗ id)(|ψ⟩⟨ψ|)` for `ψ` given as a `d×d` coefficient
    /// matrix, with the contraction `P` attaining it.
    fn evaluate(&self, psi: &ComplexMatrix) -> (f64, ComplexMatrix) {
        let d = self.d;
        let (left, right) = (psi.transpose(), psi.conjugate());
        let mut x = ComplexMatrix::zeros(d * d, d * d);
        for (xy, block) in self.blocks.iter().enumerate() {
            x.view_mut(((xy / d) * d, (xy % d) * d), (d, d))
                .copy_from(&(&left * block * &right));
        }
        if self.hermitian {
            let eig = ((&x + x.adjoint()) * c(0.5, 0.0)).symmetric_eigen();
            let mut signed = eig.eigenvectors.clone();
            for (mut col, &l) in signed.column_iter_mut().zip(eig.eigenvalues.iter()) {
                if l < 0.0 {
                    col.neg_mut();
                }
            }
            let p = signed * eig.eigenvectors.adjoint();
            (eig.eigenvalues.iter().map(|l| l.abs()).sum(), p)
        } else {
            let svd = x.svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            (svd.singular_values.iter().sum(), v_t.adjoint() * u.adjoint())
        }
    }

    /// Hermitian `Q` with `Re tr(P X(ψ)) = ψ† Q ψ`:
    /// `Q[(a',b'),(a,b)] = Σ_{x,y} P[(y,b'),(x,b)] J[(x,a),(y,a')]`.
    fn form(&self, p: &ComplexMatrix) -> ComplexMatrix {
        let d = self.d;
        let p_contracted = ComplexMatrix::from_fn(d * d, d * d, |r, col| {
            let (b2, b) = (r / d, r % d);
            let (y, x) = (col / d, col % d);
            p[(y * d + b2, x * d + b)]
        });
        let r = p_contracted * &self.choi_contracted;
        let q = ComplexMatrix::from_fn(d * d, d * d, |row, col| {
            let (a2, b2) = (row / d, row % d);
            let (a, b) = (col / d, col % d);
            r[(b2 * d + b, a2 * d + a)]
        });
        (&q + q.adjoint()) * c(0.5, 0.0)
    }

    fn begin(&self, start: &ComplexMatrix) -> AscentRun {
        let (value, contraction) = self.evaluate(start);
        AscentRun {
            value,
            contraction,
            converged: false,
        }
    }

    /// Up to `budget` alternating steps; a run is converged once the gain drops
    /// below tolerance or its value is within tolerance of `ceiling`.
    fn advance(&self, run: &mut AscentRun, budget: usize, ceiling: f64) {
        for _ in 0..budget {
            if run.converged {
                return;
            }
            let eig = self.form(&run.contraction).symmetric_eigen();
            let top = eig.eigenvalues.imax();
            let psi = coefficients(&eig.eigenvectors.column(top).into_owned(), self.d);
            let (value, contraction) = self.evaluate(&psi);
            let gain = value - run.value;
            run.contraction = contraction;
            run.value = run.value.max(value);
            run.converged = gain < ASCENT_TOL || run.value > ceiling - CEILING_TOL;
        }
    }
}

struct AscentRun {
    value: f64,
    contraction: ComplexMatrix,
    converged: bool,
}

fn coefficients(v: &DVector<num_complex::Complex64>, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |a, b| v[a * d + b])
}

fn require_perfect_square(m: &ComplexMatrix) -> Result<usize> {
    perfect_sqrt(m.nrows())
        .filter(|_| m.nrows() == m.ncols())
        .ok_or_else(|| QnkError::DimensionMismatch(format!("{}x{} is not d²×d²", m.nrows(), m.ncols())))
}

/// Choi bounds `[‖J‖₁/d, ‖J‖₁]` on the diamond norm.
pub fn choi_bounds(delta: &ComplexMatrix) -> Result<(f64, f64)> {
    let d = require_perfect_square(delta)?;
    let j = trace_norm(&choi_reshuffle(delta)?);
    Ok((j / d as f64, j))
}

/// Diamond norm of a superoperator given in natural representation, by
/// alternating ascent over pure inputs on the doubled space with multiple starts.
/// Errors if the result leaves the Choi bounds.
pub fn diamond_norm(delta: &ComplexMatrix) -> Result<f64> {
    diamond_norm_with_ceiling(delta, f64::INFINITY)
}

/// As [`diamond_norm`] for a difference of two channel mixtures, whose norm is at most 2.
pub fn channel_difference_norm(delta: &ComplexMatrix) -> Result<f64> {
    diamond_norm_with_ceiling(delta, 2.0)
}

/// Starts are tried in order and the search stops early once a value lies
/// within tolerance of `min(ceiling, ‖J‖₁)`, which is then optimal.
fn diamond_norm_with_ceiling(delta: &ComplexMatrix, ceiling: f64) -> Result<f64> {
    let d = require_perfect_square(delta)?;
    crate::linalg::check_finite(delta)?;
    let (lower, upper) = choi_bounds(delta)?;
    if upper < 1e-14 {
        return Ok(0.0);
    }
    let problem = AscentProblem::new(choi_reshuffle(delta)?, d);
    let ceiling = ceiling.min(upper);
    let mut runs: Vec<AscentRun> = (0..=DIAMOND_RESTARTS)
        .map(|s| {
            let start = if s == 0 {
                identity(d) * c(1.0 / (d as f64).sqrt(), 0.0)
            } else {
                let mut rng = derived_rng("qnk/diamond", &[s as u64]);
                coefficients(&random_state_vector(d * d, &mut rng), d)
            };
            problem.begin(&start)
        })
        .collect();
    // every start gets a short budget, then the leaders run to convergence
    for run in runs.iter_mut() {
        problem.advance(run, SCREEN_ITERS, ceiling);
        if run.value > ceiling - CEILING_TOL {
            break;
        }
    }
    runs.sort_by(|x, y| y.value.total_cmp(&x.value));
    for run in runs.iter_mut().take(FINALISTS) {
        if run.value > ceiling - CEILING_TOL {
            break;
        }
        problem.advance(run, ASCENT_MAX_ITERS, ceiling);
    }
    let best = runs.iter().map(|r| r.value).fold(0.0, f64::max);
    if best < lower - SANDWICH_SLACK || best > upper + SANDWICH_SLACK {
        return Err(QnkError::Verification(format!(
            "diamond norm {best} outside Choi bounds [{lower}, {upper}]"
        )));
    }
    Ok(best)
}

/// Closed form `‖Φ_U − Φ_V‖⋄ = 2√(1 − ν²)`, `ν` the distance from the origin
/// to the convex hull of the spectrum of `U†V`.
pub fn unitary_diamond_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(QnkError::DimensionMismatch("unitaries of different dims".into()));
    }
    crate::linalg::require_unitary(u, 1e-10)?;
    crate::linalg::require_unitary(v, 1e-10)?;
    let spectrum = crate::linalg::spectral_decomposition(&(u.adjoint() * v))?;
    let mut angles: Vec<f64> = spectrum.eigenvalues.iter().map(|z| z.arg()).collect();
    angles.sort_by(f64::total_cmp);
    let wrap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
    let max_gap = angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max);
    let arc = 2.0 * std::f64::consts::PI - max_gap;
    let nu = if arc < std::f64::consts::PI { (arc / 2.0).cos() } else { 0.0 };
    Ok(2.0 * (1.0 - nu * nu).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceChoice {
    Barycenter,
    FirstCipher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndistinguishabilityReport {
    pub def1: SecurityVerdict,
    pub def2: SecurityVerdict,
    pub reference: ReferenceChoice,
    /// `max_i D(ρ_i, ρ₁)`.
    pub first_cipher_radius: f64,
    /// `max_i D(ρ_i, τ̄)` for the barycenter `τ̄`.
    pub barycenter_radius: f64,
    /// Pairwise distances never exceed the sum of distances to the chosen reference.
    pub triangle_bound_holds: bool,
}

fn radius(ciphers: &[DensityMatrix], tau: &DensityMatrix) -> Result<Vec<f64>> {
    ciphers.iter().map(|r| trace_distance(r, tau)).collect()
}

/// Pairwise (`def1`) and common-reference (`def2`) indistinguishability of the wire states.
pub fn check_indistinguishability(ciphers: &[DensityMatrix], epsilon: f64) -> Result<IndistinguishabilityReport> {
    if ciphers.len() < 3 {
        return Err(QnkError::InvalidArgument(format!(
            "need at least three ciphers, got {}",
            ciphers.len()
        )));
    }
    let dim = ciphers[0].dim();
    if ciphers.iter().any(|r| r.dim() != dim) {
        return Err(QnkError::DimensionMismatch("ciphers of different dims".into()));
    }

    let mut pairwise = BTreeMap::new();
    let mut pair_values = vec![vec![0.0; ciphers.len()]; ciphers.len()];
    for i in 0..ciphers.len() {
        for j in i + 1..ciphers.len() {
            let dij = trace_distance(&ciphers[i], &ciphers[j])?;
            pair_values[i][j] = dij;
            pair_values[j][i] = dij;
            pairwise.insert(format!("D(c{}, c{})", i + 1, j + 1), dij);
        }
    }
    let def1 = SecurityVerdict::new(Criterion::Def1, epsilon, pairwise);

    let n = ciphers.len() as f64;
    let mean = ciphers
        .iter()
        .fold(ComplexMatrix::zeros(dim, dim), |acc, r| acc + r.matrix())
        * c(1.0 / n, 0.0);
    let barycenter = DensityMatrix::new(mean)?;
    let bary = radius(ciphers, &barycenter)?;
    let first = radius(ciphers, &ciphers[0])?;
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let (reference, dists) = if max(&bary) < epsilon || max(&bary) <= max(&first) {
        (ReferenceChoice::Barycenter, &bary)
    } else {
        (ReferenceChoice::FirstCipher, &first)
    };
    let measured = dists
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("D(c{}, tau)", i + 1), v))
        .collect();
    let def2 = SecurityVerdict::new(Criterion::Def2, epsilon, measured);

    let mut triangle_bound_holds = true;
    for (i, row) in pair_values.iter().enumerate() {
        for (j, &dij) in row.iter().enumerate() {
            if dij > dists[i] + dists[j] + 1e-12 {
                triangle_bound_holds = false;
            }
        }
    }

    Ok(IndistinguishabilityReport {
        def1,
        def2,
        reference,
        first_cipher_radius: max(&first),
        barycenter_radius: max(&bary),
        triangle_bound_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSecurityReport {
    pub def3: SecurityVerdict,
    pub sufficient: SecurityVerdict,
}

/// Diamond-norm distances between the averaged wire operators, plus the
/// per-operator sufficient conditions. Errors if the sufficient conditions pass
/// while the averaged norms exceed twice the threshold.
pub fn check_operator_security(members: &[EnsembleMember], epsilon: f64) -> Result<OperatorSecurityReport> {
    let avg = cipher_average_operators(members)?;
    // second distance is averaged jointly over (B A − A⁻¹ B A)
    let joint = Averager { members }.sum(|a, a_inv, b| b * a - a_inv * b * a)?;
    let norms = [
        ("first-second", &avg.first - &avg.second),
        ("second-third", joint),
        ("first-third", &avg.first - &avg.third),
    ]
    .into_par_iter()
    .map(|(name, delta)| channel_difference_norm(&delta).map(|v| (name.to_string(), v)))
    .collect::<Result<BTreeMap<_, _>>>()?;
    let def3 = SecurityVerdict::new(Criterion::Def3, epsilon, norms);

    let d2 = members[0].family.n.nrows();
    let id = identity(d2);
    let mut bob_gap = 0.0f64;
    let mut alice_gap = 0.0f64;
    let mut mixed_gap = 0.0f64;
    for m in members {
        let b_avg = m
            .family
            .s_b
            .iter()
            .zip(&m.local.bob)
            .fold(ComplexMatrix::zeros(d2, d2), |acc, (b, &p)| acc + b * c(p, 0.0));
        bob_gap = bob_gap.max(channel_difference_norm(&(&id - &b_avg))?);
        for a in &m.family.s_a {
            let a_inv = inverse(a)?;
            alice_gap = alice_gap.max(channel_difference_norm(&(&id - &a_inv))?);
            mixed_gap = mixed_gap.max(channel_difference_norm(&(&id - &a_inv * &b_avg))?);
        }
    }
    let sufficient = SecurityVerdict::new(
        Criterion::Sufficient,
        epsilon,
        BTreeMap::from([
            ("identity-vs-bob-average".to_string(), bob_gap),
            ("identity-vs-alice-inverse".to_string(), alice_gap),
            ("identity-vs-alice-inverse-bob-average".to_string(), mixed_gap),
        ]),
    );
    if sufficient.pass && def3.max_measured() >= 2.0 * epsilon {
        return Err(QnkError::Verification(format!(
            "sufficient conditions pass at {epsilon} but averaged norms reach {}",
            def3.max_measured()
        )));
    }
    Ok(OperatorSecurityReport { def3, sufficient })
}

/// A keyed family and its local distribution, labelled for reporting.
#[derive(Debug, Clone)]
pub struct KeyedOperators<'a> {
    pub label: String,
    pub family: &'a OperatorFamily,
    pub local: LocalDistribution,
}

/// Pairwise diamond-norm distances between per-key averaged wire operators.
pub fn check_key_security(keys: &[KeyedOperators], epsilon: f64) -> Result<SecurityVerdict> {
    if keys.is_empty() {
        return Err(QnkError::InvalidArgument("empty key list".into()));
    }
    let averages = keys
        .iter()
        .map(|k| {
            cipher_average_operators(&[EnsembleMember {
                family: k.family,
                weight: 1.0,
                local: k.local.clone(),
            }])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for x in 0..keys.len() {
        for y in x + 1..keys.len() {
            for (pos, name) in ["first", "second", "third"].iter().enumerate() {
                jobs.push((x, y, pos, *name));
            }
        }
    }
    let measured = jobs
        .into_par_iter()
        .map(|(x, y, pos, name)| {
            let delta = averages[x].as_array()[pos] - averages[y].as_array()[pos];
            channel_difference_norm(&delta).map(|v| (format!("{}|{}:{name}", keys[x].label, keys[y].label), v))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(SecurityVerdict::new(Criterion::Def4, epsilon, measured))
}

/// Random triple of cipher states for equivalence sweeps.
pub fn random_cipher_triple<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> [DensityMatrix; 3] {
    std::array::from_fn(|_| crate::random::random_density(dim, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::natural_of_unitary;
    use crate::family::{build_scheme1_family_from_angles, default_scheme2_family, index_set, keyed_family, SchemeParams, Variant};
    use crate::gates::{pauli_x, ry};
    use crate::linalg::{frobenius_distance, ZERO};
    use crate::random::{haar_unitary, rng_from_seed};
    use std::f64::consts::{PI, SQRT_2};

    fn nat(u: &ComplexMatrix) -> ComplexMatrix {
        natural_of_unitary(u)
    }

    #[test]
    fn zero_map_has_zero_norm() {
        assert_eq!(diamond_norm(&ComplexMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn identity_vs_bit_flip() {
        let v = diamond_norm(&(nat(&identity(2)) - nat(&pauli_x()))).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn identity_vs_quarter_rotation() {
        let v = diamond_norm(&(nat(&identity(2)) - nat(&ry(PI / 2.0)))).unwrap();
        assert!((v - SQRT_2).abs() < 1e-6, "{v}");
        assert!((unitary_diamond_distance(&identity(2), &ry(PI / 2.0)).unwrap() - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn random_unitary_pairs_match_closed_form() {
        let mut rng = rng_from_seed(11);
        for d in [2, 3] {
            for _ in 0..10 {
                let (u, v) = (haar_unitary(d, &mut rng), haar_unitary(d, &mut rng));
                let exact = unitary_diamond_distance(&u, &v).unwrap();
                let got = diamond_norm(&(nat(&u) - nat(&v))).unwrap();
                assert!((got - exact).abs() < 1e-6, "d={d} got {got} exact {exact}");
            }
        }
    }

    #[test]
    fn bounds_reject_non_square() {
        assert!(diamond_norm(&ComplexMatrix::zeros(3, 3)).is_err());
        assert!(diamond_norm(&ComplexMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn closed_form_edge_cases() {
        assert!(unitary_diamond_distance(&identity(3), &identity(3)).unwrap() < 1e-7);
        // global phase is invisible
        let phased = identity(2) * c(0.0, 1.0);
        assert!(unitary_diamond_distance(&identity(2), &phased).unwrap() < 1e-7);
    }

    #[test]
    fn singleton_averages_are_the_operators() {
        let fam = build_scheme1_family_from_angles(&[0.3], &[1.1], 2, 0).unwrap();
        let avg = cipher_average_operators(&[EnsembleMember::uniform(&fam, 1.0)]).unwrap();
        let (a, b) = (&fam.s_a[0], &fam.s_b[0]);
        assert!(frobenius_distance(&avg.first, a) < 1e-14);
        assert!(frobenius_distance(&avg.second, &(b * a)) < 1e-14);
        assert!(frobenius_distance(&avg.third, &(inverse(a).unwrap() * b * a)) < 1e-14);
    }

    #[test]
    fn eight_angle_average_matches_closed_form() {
        let angles: Vec<f64> = (0..8).map(|j| 2.0 * PI * j as f64 / 8.0).collect();
        let fam = build_scheme1_family_from_angles(&angles, &[0.0], 2, 0).unwrap();
        let avg = cipher_average_operators(&[EnsembleMember::uniform(&fam, 1.0)]).unwrap();
        // half-angle averages: cos² = sin² = 1/2, cos·sin = 0
        let h = c(0.5, 0.0);
        let expected = ComplexMatrix::from_row_slice(
            4,
            4,
            &[h, ZERO, ZERO, h, ZERO, h, -h, ZERO, ZERO, -h, h, ZERO, h, ZERO, ZERO, h],
        );
        assert!(frobenius_distance(&avg.first, &expected) < 1e-12);
    }

    #[test]
    fn bad_distribution_is_rejected() {
        let fam = build_scheme1_family_from_angles(&[0.3], &[1.1], 2, 0).unwrap();
        let err = cipher_average_operators(&[EnsembleMember::uniform(&fam, 0.9)]).unwrap_err();
        assert!(matches!(err, QnkError::InvalidDistribution { .. }));
    }

    #[test]
    fn averages_are_channel_mixtures() {
        let base = default_scheme2_family(3, 3, 4).unwrap();
        let params = SchemeParams::new(4, Variant::Pair);
        let i = index_set(1, &params).unwrap()[0];
        let (_, fam) = keyed_family(1, i, &params, &base).unwrap();
        let avg = cipher_average_operators(&[EnsembleMember::uniform(&fam, 1.0)]).unwrap();
        for m in avg.as_array() {
            let (floor, tp) = channel_mixture_residuals(m).unwrap();
            assert!(floor >= -1e-10 && tp < 1e-10);
        }
    }

    #[test]
    fn identical_ciphers_pass_everything() {
        let rho = crate::random::random_density(3, &mut rng_from_seed(1));
        let r = check_indistinguishability(&[rho.clone(), rho.clone(), rho], 1e-9).unwrap();
        assert!(r.def1.pass && r.def2.pass && r.triangle_bound_holds);
    }

    #[test]
    fn orthogonal_ciphers_fail() {
        let cs = [DensityMatrix::basis(3, 0), DensityMatrix::basis(3, 1), DensityMatrix::basis(3, 2)];
        let r = check_indistinguishability(&cs, 0.99).unwrap();
        assert!(!r.def1.pass);
        assert!(check_indistinguishability(&cs[..2], 0.5).is_err());
    }

    #[test]
    fn definitions_one_and_two_agree_on_random_triples() {
        let mut rng = rng_from_seed(21);
        for _ in 0..50 {
            let t = random_cipher_triple(2, &mut rng);
            let eps = rng.random_range(0.05..0.9);
            let r = check_indistinguishability(&t, eps).unwrap();
            if r.def1.pass {
                assert!(r.first_cipher_radius < eps);
            }
            if r.def2.pass {
                let wide = check_indistinguishability(&t, 2.0 * eps).unwrap();
                assert!(wide.def1.pass);
            }
            assert!(r.triangle_bound_holds);
        }
    }

    #[test]
    fn trivial_family_is_operator_secure() {
        let fam = build_scheme1_family_from_angles(&[0.0, 0.0], &[0.0], 2, 0).unwrap();
        let r = check_operator_security(&[EnsembleMember::uniform(&fam, 1.0)], 0.1).unwrap();
        assert!(r.def3.pass && r.sufficient.pass);
        assert!(r.def3.max_measured() < 1e-12);
    }

    #[test]
    fn tight_rotation_family_is_operator_secure() {
        let fam = build_scheme1_family_from_angles(&[-0.01, 0.0, 0.01], &[-0.005, 0.01], 2, 0).unwrap();
        let r = check_operator_security(&[EnsembleMember::uniform(&fam, 1.0)], 0.05).unwrap();
        assert!(r.def3.pass, "{:?}", r.def3.measured);
        assert!(r.def3.max_measured() < 0.05);
    }

    #[test]
    fn wide_rotation_family_is_flagged() {
        let angles: Vec<f64> = (0..5).map(|j| PI * j as f64 / 4.0).collect();
        let fam = build_scheme1_family_from_angles(&angles, &angles, 2, 0).unwrap();
        let r = check_operator_security(&[EnsembleMember::uniform(&fam, 1.0)], 0.1).unwrap();
        assert!(!r.def3.pass, "{:?}", r.def3.measured);
    }

    #[test]
    fn key_security_edge_cases() {
        let fam = build_scheme1_family_from_angles(&[0.2], &[0.4], 2, 0).unwrap();
        let k = |label: &str| KeyedOperators {
            label: label.into(),
            family: &fam,
            local: LocalDistribution::uniform(&fam),
        };
        let single = check_key_security(&[k("a")], 0.1).unwrap();
        assert!(single.pass && single.measured.is_empty());
        let same = check_key_security(&[k("a"), k("b")], 0.1).unwrap();
        assert!(same.max_measured() < 1e-12);
        assert!(check_key_security(&[], 0.1).is_err());
    }

    #[test]
    fn keys_differing_in_transform_baseline() {
        let base = default_scheme2_family(3, 3, 7).unwrap();
        let params = SchemeParams::new(7, Variant::Plain);
        let set = index_set(3, &params).unwrap();
        let fams: Vec<OperatorFamily> = set[..2]
            .iter()
            .map(|&i| keyed_family(3, i, &params, &base).unwrap().1)
            .collect();
        let keys: Vec<KeyedOperators> = fams
            .iter()
            .enumerate()
            .map(|(n, f)| KeyedOperators {
                label: format!("key{n}"),
                family: f,
                local: LocalDistribution::uniform(f),
            })
            .collect();
        let v = check_key_security(&keys, 0.1).unwrap();
        let got: Vec<f64> = v.measured.values().cloned().collect();
        eprintln!("transform-only key distances {got:?}");
        for (g, want) in got.iter().zip(TRANSFORM_KEY_BASELINE) {
            assert!((g - want).abs() < 1e-6, "{got:?}");
        }
        assert_eq!(v.pass, got.iter().all(|&x| x < 0.1));
    }

    // different transforms make the averaged wire operators perfectly distinguishable
    const TRANSFORM_KEY_BASELINE: [f64; 3] = [2.0, 2.0, 2.0];

    #[test]
    fn scheme2_operator_security_baseline() {
        let base = default_scheme2_family(3, 3, 7).unwrap();
        let params = SchemeParams::new(7, Variant::Pair);
        let i = index_set(3, &params).unwrap()[0];
        let (_, fam) = keyed_family(3, i, &params, &base).unwrap();
        let r = check_operator_security(&[EnsembleMember::uniform(&fam, 1.0)], 0.1).unwrap();
        let expect = [("first-second", 1.998657840), ("first-third", 2.0), ("second-third", 1.661566773)];
        for (name, want) in expect {
            let got = r.def3.measured[name];
            assert!((got - want).abs() < 1e-6, "{name}: {got}");
        }
        assert!(!r.def3.pass && !r.sufficient.pass);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn diamond_norm_respects_choi_bounds(seed: u64, mix in 0.0f64..1.0, three in any::<bool>()) {
                let d = if three { 3 } else { 2 };
                let mut rng = rng_from_seed(seed);
                let (u, v, w) = (haar_unitary(d, &mut rng), haar_unitary(d, &mut rng), haar_unitary(d, &mut rng));
                let mixture = nat(&v) * c(mix, 0.0) + nat(&w) * c(1.0 - mix, 0.0);
                let delta = nat(&u) - mixture;
                let (lo, hi) = choi_bounds(&delta).unwrap();
                let value = diamond_norm(&delta).unwrap();
                prop_assert!(value >= lo - 1e-9 && value <= hi + 1e-9);
                prop_assert!(value <= 2.0 + 1e-9);
            }

            #[test]
            fn indistinguishability_bounds(seed: u64, eps in 0.05f64..1.0) {
                let t = random_cipher_triple(2, &mut rng_from_seed(seed));
                let r = check_indistinguishability(&t, eps).unwrap();
                prop_assert!(r.triangle_bound_holds);
                let def1 = r.def1.max_measured();
                // pairwise spread at most twice any reference radius, radius about the first cipher at most the spread
                prop_assert!(def1 <= 2.0 * r.def2.max_measured() + 1e-12);
                prop_assert!(r.first_cipher_radius <= def1 + 1e-12);
            }
        }
    }
}
