//! Operator families for the two schemes, identification-key derivation and
//! keyed (similarity-conjugated, product-shifted) operator sets.
//!
//! Every family element is a natural representation `U ⊗ U*` of a unitary on
//! the message space. Scheme 1 uses same-axis rotations applied bitwise, so all
//! cross pairs commute. Scheme 2 uses a tensor-coset construction on
//! `H₁ ⊗ H₂ ⊗ H₃`: Alice's operators are `A₀ ⊗ I ⊗ W_l`, Bob's are
//! `B₀ ⊗ V_m ⊗ I`, which forces `(A_l, B_m) = (A₀, B₀) ⊗ I ⊗ I` for every pair.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{natural_of_unitary, natural_tp_residual, unitary_from_natural};
use crate::commutator::{group_commutator, verify_constant_commutator};
use crate::error::{QnkError, Result};
use crate::gates::{hadamard, ry, t_gate};
use crate::json::{matrix, matrix_list};
use crate::linalg::{frobenius_distance, identity, require_unitary, tensor, tensor_all, ComplexMatrix, TOL};
use crate::random::{derive_bytes, derived_rng, haar_unitary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scheme {
    /// Commuting unitary families, `N = I`.
    One,
    /// Constant group commutator `N`.
    Two,
}

impl TryFrom<u8> for Scheme {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Scheme::One),
            2 => Ok(Scheme::Two),
            other => Err(format!("unknown scheme {other}")),
        }
    }
}

impl From<Scheme> for u8 {
    fn from(s: Scheme) -> u8 {
        match s {
            Scheme::One => 1,
            Scheme::Two => 2,
        }
    }
}

/// How the keyed set is formed from the base family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `{T A_l T⁻¹} ∪ {T B_l T⁻¹}`.
    Plain,
    /// `{T A_l A_{k1} T⁻¹} ∪ {T B_l B_{k2} T⁻¹}`.
    Pair,
    /// `{T A_l A_{k1} A_{k2} T⁻¹} ∪ {T B_l B_{k3} B_{k4} T⁻¹}`.
    Triple,
    /// `n` key-indexed right factors per party.
    NProduct(usize),
}

impl Variant {
    /// Number of key-indexed right factors per party.
    pub fn arity(&self) -> usize {
        match *self {
            Variant::Plain => 0,
            Variant::Pair => 1,
            Variant::Triple => 2,
            Variant::NProduct(n) => n,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Plain => write!(f, "plain"),
            Variant::Pair => write!(f, "pair"),
            Variant::Triple => write!(f, "triple"),
            Variant::NProduct(n) => write!(f, "n-product:{n}"),
        }
    }
}

impl FromStr for Variant {
    type Err = QnkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "pair" => Ok(Variant::Pair),
            "triple" => Ok(Variant::Triple),
            other => other
                .strip_prefix("n-product:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(Variant::NProduct)
                .ok_or_else(|| QnkError::InvalidArgument(format!("unknown variant '{other}'"))),
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `L(k, i)`: the local indices each party may draw from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalIndices {
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

impl LocalIndices {
    pub fn full(n_a: usize, n_b: usize) -> Self {
        LocalIndices {
            alice: (0..n_a).collect(),
            bob: (0..n_b).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasePair {
    #[serde(rename = "A0", with = "matrix")]
    pub a0: ComplexMatrix,
    #[serde(rename = "B0", with = "matrix")]
    pub b0: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyBinding {
    pub key_id: String,
    pub variant: Variant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorFamily {
    pub scheme: Scheme,
    pub dim: usize,
    pub seed: u64,
    pub base: Option<BasePair>,
    #[serde(rename = "S_A", with = "matrix_list")]
    pub s_a: Vec<ComplexMatrix>,
    #[serde(rename = "S_B", with = "matrix_list")]
    pub s_b: Vec<ComplexMatrix>,
    #[serde(rename = "N", with = "matrix")]
    pub n: ComplexMatrix,
    #[serde(rename = "T", with = "matrix")]
    pub transform: ComplexMatrix,
    /// Labels of the elements of `s_a` / `s_b` in the base family.
    pub local: LocalIndices,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<KeyBinding>,
}

fn invalid(invariant: &str, detail: impl Into<String>) -> QnkError {
    QnkError::InvalidFamily {
        invariant: invariant.to_string(),
        detail: detail.into(),
    }
}

impl OperatorFamily {
    pub fn n_a(&self) -> usize {
        self.s_a.len()
    }

    pub fn n_b(&self) -> usize {
        self.s_b.len()
    }

    /// Checks every structural invariant and names the first one violated.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let d2 = self.dim * self.dim;
        if self.s_a.is_empty() || self.s_b.is_empty() {
            return Err(invalid("nonempty operator sets", "S_A and S_B must be nonempty"));
        }
        for (name, set) in [("S_A", &self.s_a), ("S_B", &self.s_b)] {
            for (idx, m) in set.iter().enumerate() {
                if m.shape() != (d2, d2) {
                    return Err(invalid(
                        "dimension",
                        format!("{name}[{idx}] is {}x{}, expected {d2}x{d2}", m.nrows(), m.ncols()),
                    ));
                }
                let tp = natural_tp_residual(m)?;
                if tp > tol {
                    return Err(invalid(
                        "trace-preserving",
                        format!("{name}[{idx}] has trace residual {tp:.3e}"),
                    ));
                }
                unitary_from_natural(m, tol)
                    .map_err(|e| invalid("unitary-channel structure", format!("{name}[{idx}]: {e}")))?;
            }
        }
        if self.local.alice.len() != self.s_a.len() || self.local.bob.len() != self.s_b.len() {
            return Err(invalid("local index set", "L(k,i) does not match the operator sets"));
        }
        if self.transform.shape() != (d2, d2) || self.n.shape() != (d2, d2) {
            return Err(invalid("dimension", format!("N and T must be {d2}x{d2}")));
        }
        unitary_from_natural(&self.transform, tol)
            .map_err(|e| invalid("similarity transform structure T = W⊗W*", e.to_string()))?;
        let constant = verify_constant_commutator(&self.s_a, &self.s_b, tol)
            .map_err(|e| invalid("constant group commutator", e.to_string()))?;
        let dev = frobenius_distance(&constant.n, &self.n);
        if dev > tol {
            return Err(invalid(
                "constant group commutator",
                format!("stored N differs from (A, B) by {dev:.3e}"),
            ));
        }
        Ok(())
    }
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(QnkError::InvalidArgument(format!(
            "dimension {dim} is not a power of 2"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// `R_y(θ)^{⊗q}` as a natural representation.
fn bitwise_rotation(theta: f64, qubits: usize) -> ComplexMatrix {
    let r = ry(theta);
    let factors = vec![r; qubits];
    natural_of_unitary(&tensor_all(&factors))
}

/// Scheme-1 family with explicit rotation angles.
pub fn build_scheme1_family_from_angles(
    alice_angles: &[f64],
    bob_angles: &[f64],
    dim: usize,
    seed: u64,
) -> Result<OperatorFamily> {
    let qubits = qubit_count(dim)?;
    if alice_angles.is_empty() || bob_angles.is_empty() {
        return Err(QnkError::InvalidArgument("n_A and n_B must be at least 1".into()));
    }
    let s_a: Vec<_> = alice_angles.iter().map(|&t| bitwise_rotation(t, qubits)).collect();
    let s_b: Vec<_> = bob_angles.iter().map(|&t| bitwise_rotation(t, qubits)).collect();
    Ok(OperatorFamily {
        scheme: Scheme::One,
        dim,
        seed,
        base: None,
        local: LocalIndices::full(s_a.len(), s_b.len()),
        s_a,
        s_b,
        n: identity(dim * dim),
        transform: identity(dim * dim),
        key: None,
    })
}

/// Scheme-1 family: bitwise y-rotations with seeded uniform angles in `[0, 2π)`.
pub fn build_scheme1_family(n_a: usize, n_b: usize, dim: usize, seed: u64) -> Result<OperatorFamily> {
    if n_a == 0 || n_b == 0 {
        return Err(QnkError::InvalidArgument("n_A and n_B must be at least 1".into()));
    }
    let mut rng = derived_rng("qnk/scheme1", &[seed]);
    let tau = std::f64::consts::TAU;
    let alice: Vec<f64> = (0..n_a).map(|_| rng.random::<f64>() * tau).collect();
    let bob: Vec<f64> = (0..n_b).map(|_| rng.random::<f64>() * tau).collect();
    build_scheme1_family_from_angles(&alice, &bob, dim, seed)
}

/// Scheme-2 tensor-coset family on `H₁ (qubit) ⊗ H₂ (qubit) ⊗ H₃ (dim/4)`.
pub fn build_scheme2_family(
    n_a: usize,
    n_b: usize,
    a0: &ComplexMatrix,
    b0: &ComplexMatrix,
    dim: usize,
    seed: u64,
) -> Result<OperatorFamily> {
    if n_a == 0 || n_b == 0 {
        return Err(QnkError::InvalidArgument("n_A and n_B must be at least 1".into()));
    }
    if a0.shape() != (2, 2) || b0.shape() != (2, 2) {
        return Err(QnkError::DimensionMismatch("base pair must act on a qubit".into()));
    }
    require_unitary(a0, TOL)?;
    require_unitary(b0, TOL)?;
    if dim < 4 || !dim.is_multiple_of(4) {
        return Err(QnkError::InvalidArgument(format!(
            "scheme 2 needs dim = 4·m (qubit ⊗ qubit ⊗ m), got {dim}"
        )));
    }
    let third = dim / 4;
    let mut rng = derived_rng("qnk/scheme2", &[seed]);
    let ws: Vec<ComplexMatrix> = (0..n_a).map(|_| haar_unitary(third, &mut rng)).collect();
    let vs: Vec<ComplexMatrix> = (0..n_b).map(|_| haar_unitary(2, &mut rng)).collect();
    let s_a: Vec<_> = ws
        .iter()
        .map(|w| natural_of_unitary(&tensor_all([a0, &identity(2), w])))
        .collect();
    let s_b: Vec<_> = vs
        .iter()
        .map(|v| natural_of_unitary(&tensor_all([b0, v, &identity(third)])))
        .collect();
    let core = group_commutator(a0, b0)?;
    let n = natural_of_unitary(&tensor(&core, &identity(dim / 2)));
    Ok(OperatorFamily {
        scheme: Scheme::Two,
        dim,
        seed,
        base: Some(BasePair {
            a0: a0.clone(),
            b0: b0.clone(),
        }),
        local: LocalIndices::full(n_a, n_b),
        s_a,
        s_b,
        n,
        transform: identity(dim * dim),
        key: None,
    })
}

/// Default scheme-2 family: `(A₀, B₀) = (H, T)` on three qubits.
pub fn default_scheme2_family(n_a: usize, n_b: usize, seed: u64) -> Result<OperatorFamily> {
    build_scheme2_family(n_a, n_b, &hadamard(), &t_gate(), 8, seed)
}

/// Parameters of the placeholder key derivation. Not a cryptographic construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub seed: u64,
    /// Size of the key space `𝒦 = {0, …, key_space − 1}`.
    pub key_space: u64,
    /// Number of similarity transforms `T_i` in the pool.
    pub transform_pool: u64,
    /// `|I(k)|`.
    pub index_set_size: usize,
    pub variant: Variant,
}

impl SchemeParams {
    pub fn new(seed: u64, variant: Variant) -> Self {
        SchemeParams {
            seed,
            key_space: 16,
            transform_pool: 8,
            index_set_size: 4,
            variant,
        }
    }
}

/// Pre-shared identification key `(k, i)`.
#[derive(Clone, PartialEq, Eq)]
pub struct IdentificationKey {
    pub k: u64,
    pub i: u64,
    pub material: [u8; 32],
}

impl fmt::Debug for IdentificationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdentificationKey")
            .field("k", &self.k)
            .field("i", &self.i)
            .finish_non_exhaustive()
    }
}

impl IdentificationKey {
    pub fn new(k: u64, i: u64, params: &SchemeParams) -> Self {
        IdentificationKey {
            k,
            i,
            material: derive_bytes("qnk/key-material", &[params.seed, k, i]),
        }
    }

    /// Short public identifier; never reveals `k` or `i`.
    pub fn key_id(&self) -> String {
        let digest = derive_bytes("qnk/key-id", &[u64::from_le_bytes(self.material[..8].try_into().unwrap())]);
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone)]
pub struct ProductIndices {
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

/// Everything derived from `(k, i, params)` for one base family.
#[derive(Debug, Clone)]
pub struct KeySchedule {
    pub key: IdentificationKey,
    /// `I(k)`.
    pub index_set: Vec<u64>,
    /// `L(k, i)`.
    pub local: LocalIndices,
    pub products: ProductIndices,
    /// Unitary `W_i` with `T_i = W_i ⊗ W_i*`.
    pub transform_unitary: ComplexMatrix,
    /// `N_k` before conjugation by `T_i`.
    pub n_k: ComplexMatrix,
    /// `N_k(i) = T_i N_k T_i⁻¹`.
    pub n_k_i: ComplexMatrix,
}

impl KeySchedule {
    pub fn transform(&self) -> ComplexMatrix {
        natural_of_unitary(&self.transform_unitary)
    }
}

/// `I(k)`: a seeded subset of the transform pool.
pub fn index_set(k: u64, params: &SchemeParams) -> Result<Vec<u64>> {
    if k >= params.key_space {
        return Err(QnkError::KeyOutOfSpace {
            k,
            key_space: params.key_space,
        });
    }
    let pool = params.transform_pool as usize;
    if params.index_set_size == 0 || params.index_set_size > pool {
        return Err(QnkError::InvalidArgument(format!(
            "|I(k)| = {} must lie in 1..={pool}",
            params.index_set_size
        )));
    }
    let mut rng = derived_rng("qnk/index-set", &[params.seed, k]);
    let mut set: Vec<u64> = sample(&mut rng, pool, params.index_set_size)
        .into_iter()
        .map(|x| x as u64)
        .collect();
    set.sort_unstable();
    Ok(set)
}

fn local_count(n: usize) -> usize {
    (n - n / 3).max(1)
}

fn product_for(set: &[ComplexMatrix], idx: &[usize]) -> ComplexMatrix {
    idx.iter()
        .fold(identity(set[0].nrows()), |acc, &k| acc * &set[k])
}

/// Predicted keyed commutator before conjugation: the family's `N` for the
/// plain variant, otherwise `(A_last P_A, B_last P_B)` where `P_X` is the
/// key-indexed right product and `last` its final index.
pub fn predicted_commutator(family: &OperatorFamily, products: &ProductIndices) -> Result<ComplexMatrix> {
    match (products.alice.last(), products.bob.last()) {
        (None, None) => Ok(family.n.clone()),
        (Some(&la), Some(&lb)) => {
            let a = &family.s_a[la] * product_for(&family.s_a, &products.alice);
            let b = &family.s_b[lb] * product_for(&family.s_b, &products.bob);
            group_commutator(&a, &b)
        }
        _ => Err(QnkError::InvalidArgument("product indices must be given for both parties".into())),
    }
}

/// Deterministically derives `I(k)`, `L(k, i)`, the product indices, `T_i`
/// and `N_k(i)` from `(k, i, params)` for the given base family.
pub fn derive_key_structures(
    k: u64,
    i: u64,
    params: &SchemeParams,
    family: &OperatorFamily,
) -> Result<KeySchedule> {
    let index_set = index_set(k, params)?;
    if !index_set.contains(&i) {
        return Err(QnkError::KeyIndexOutOfSet { k, i });
    }
    let (n_a, n_b) = (family.n_a(), family.n_b());

    let mut rng = derived_rng("qnk/local", &[params.seed, k, i]);
    let mut alice: Vec<usize> = sample(&mut rng, n_a, local_count(n_a)).into_vec();
    let mut bob: Vec<usize> = sample(&mut rng, n_b, local_count(n_b)).into_vec();
    alice.sort_unstable();
    bob.sort_unstable();
    let local = LocalIndices { alice, bob };

    let arity = params.variant.arity();
    let mut rng = derived_rng("qnk/products", &[params.seed, k]);
    let products = ProductIndices {
        alice: (0..arity).map(|_| rng.random_range(0..n_a)).collect(),
        bob: (0..arity).map(|_| rng.random_range(0..n_b)).collect(),
    };

    let transform_unitary = haar_unitary(family.dim, &mut derived_rng("qnk/transform", &[params.seed, i]));
    let n_k = predicted_commutator(family, &products)?;
    let t = natural_of_unitary(&transform_unitary);
    let n_k_i = &t * &n_k * t.adjoint();
    Ok(KeySchedule {
        key: IdentificationKey::new(k, i, params),
        index_set,
        local,
        products,
        transform_unitary,
        n_k,
        n_k_i,
    })
}

/// Keyed operator set `S̃_k(i)` for `variant`, with `N_k(i)` verified against every cross pair.
pub fn build_keyed_set(schedule: &KeySchedule, family: &OperatorFamily, variant: Variant) -> Result<OperatorFamily> {
    let arity = variant.arity();
    for found in [schedule.products.alice.len(), schedule.products.bob.len()] {
        if found != arity {
            return Err(QnkError::KeyArity {
                variant: variant.to_string(),
                expected: arity,
                found,
            });
        }
    }
    if let Some(&bad) = schedule
        .local
        .alice
        .iter()
        .chain(&schedule.products.alice)
        .find(|&&l| l >= family.n_a())
        .or_else(|| schedule.local.bob.iter().chain(&schedule.products.bob).find(|&&l| l >= family.n_b()))
    {
        return Err(QnkError::InvalidArgument(format!("index {bad} outside the family")));
    }
    if schedule.transform_unitary.nrows() != family.dim {
        return Err(QnkError::DimensionMismatch("transform does not act on the message space".into()));
    }

    let t = schedule.transform();
    let t_inv = t.adjoint();
    let p_a = product_for(&family.s_a, &schedule.products.alice);
    let p_b = product_for(&family.s_b, &schedule.products.bob);
    let conj = |m: ComplexMatrix| &t * m * &t_inv;
    let s_a: Vec<_> = schedule.local.alice.iter().map(|&l| conj(&family.s_a[l] * &p_a)).collect();
    let s_b: Vec<_> = schedule.local.bob.iter().map(|&l| conj(&family.s_b[l] * &p_b)).collect();
    let n = conj(predicted_commutator(family, &schedule.products)?);

    let constant = verify_constant_commutator(&s_a, &s_b, TOL)?;
    let dev = frobenius_distance(&constant.n, &n);
    if dev >= TOL {
        return Err(invalid(
            "keyed commutator relation",
            format!("(A, B) differs from N_k(i) by {dev:.3e}"),
        ));
    }
    Ok(OperatorFamily {
        scheme: family.scheme,
        dim: family.dim,
        seed: family.seed,
        base: family.base.clone(),
        s_a,
        s_b,
        n,
        transform: t,
        local: schedule.local.clone(),
        key: Some(KeyBinding {
            key_id: schedule.key.key_id(),
            variant,
        }),
    })
}

/// Convenience: derive the schedule for `(k, i)` and build the keyed set.
pub fn keyed_family(
    k: u64,
    i: u64,
    params: &SchemeParams,
    family: &OperatorFamily,
) -> Result<(KeySchedule, OperatorFamily)> {
    let schedule = derive_key_structures(k, i, params, family)?;
    let keyed = build_keyed_set(&schedule, family, params.variant)?;
    Ok((schedule, keyed))
}
