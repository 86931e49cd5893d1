//! Fixed single-qubit gates and the Weyl (shift/clock) pair.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::linalg::{c, ComplexMatrix, ONE, ZERO};

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> ComplexMatrix {
    let s = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ComplexMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

/// `diag(1, e^{iπ/4})`.
pub fn t_gate() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, Complex64::from_polar(1.0, PI / 4.0)])
}

/// Rotation about the y axis, `exp(-iθY/2)`.
pub fn ry(theta: f64) -> ComplexMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    ComplexMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// Cyclic shift `|j⟩ → |j+1 mod d⟩`.
pub fn weyl_shift(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |r, col| if r == (col + 1) % d { ONE } else { ZERO })
}

/// Clock `diag(1, ω, …, ω^{d-1})`, `ω = e^{2πi/d}`.
pub fn weyl_clock(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |r, col| {
        if r == col {
            Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)
        } else {
            ZERO
        }
    })
}

/// Block-diagonal controlled unitary on `control ⊗ target`: `Σ_m |m⟩⟨m| ⊗ U_m`.
pub fn controlled(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let t = blocks[0].nrows();
    let n = blocks.len() * t;
    let mut out = ComplexMatrix::zeros(n, n);
    for (m, u) in blocks.iter().enumerate() {
        out.view_mut((m * t, m * t), (t, t)).copy_from(u);
    }
    out
}

/// Conjugates `m` by a permutation of subsystems; `perm[s]` is the new position of subsystem `s`.
pub fn permute_subsystems(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> ComplexMatrix {
    let n: usize = dims.iter().product();
    let mut new_dims = vec![0usize; dims.len()];
    for (s, &p) in perm.iter().enumerate() {
        new_dims[p] = dims[s];
    }
    let map = |idx: usize| -> usize {
        let mut digits = vec![0usize; dims.len()];
        let mut rem = idx;
        for s in (0..dims.len()).rev() {
            digits[s] = rem % dims[s];
            rem /= dims[s];
        }
        let mut new_digits = vec![0usize; dims.len()];
        for (s, &p) in perm.iter().enumerate() {
            new_digits[p] = digits[s];
        }
        new_digits.iter().zip(&new_dims).fold(0, |acc, (&dg, &d)| acc * d + dg)
    };
    let idx: Vec<usize> = (0..n).map(map).collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            out[(idx[r], idx[col])] = m[(r, col)];
        }
    }
    out
}
