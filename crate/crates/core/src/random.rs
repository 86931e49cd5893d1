//! Seeded random matrices and states.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::linalg::{ComplexMatrix, DensityMatrix};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator seeded by hashing a domain tag together with integer parts.
pub fn derived_rng(tag: &str, parts: &[u64]) -> SimRng {
    ChaCha8Rng::from_seed(derive_bytes(tag, parts))
}

pub fn derive_bytes(tag: &str, parts: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    hasher.finalize().into()
}

fn normal_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| normal_complex(rng))
}

/// Haar-distributed unitary (QR of a Ginibre matrix with the phase of R's diagonal removed).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let qr = ginibre(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

pub fn random_state_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(d, |_, _| normal_complex(rng));
    let n = v.norm();
    v / Complex64::from(n)
}

pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    DensityMatrix::pure(&random_state_vector(d, rng)).expect("normalized vector")
}

/// Full-rank mixed state `G G† / tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, d, rng);
    let m = &g * g.adjoint();
    let tr: Complex64 = m.diagonal().iter().sum();
    let m = m / tr;
    let m = (&m + m.adjoint()) * Complex64::from(0.5);
    DensityMatrix::new(m).expect("Ginibre state is a valid density matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_distance, unitarity_residual};

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = rng_from_seed(0);
        for d in 1..9 {
            assert!(unitarity_residual(&haar_unitary(d, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn derived_rng_is_deterministic() {
        let a = haar_unitary(3, &mut derived_rng("t", &[1, 2]));
        let b = haar_unitary(3, &mut derived_rng("t", &[1, 2]));
        let other = haar_unitary(3, &mut derived_rng("t", &[2, 1]));
        assert_eq!(a, b);
        assert!(frobenius_distance(&a, &other) > 1e-3);
    }
}
