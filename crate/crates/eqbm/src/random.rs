//! Random instances for tests, diagnostics and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::{matrix_function_hermitian, ComplexMatrix, C64, I};
use crate::model::{validate_povm, Distribution, HamiltonianFamily, PauliString, Povm};

/// Entries uniform on the unit square.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_inner(DMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    random_matrix(rng, d).hermitian_part()
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let h = random_hermitian(rng, d);
    matrix_function_hermitian(&h, |l| (-I * l * 3.0).exp()).expect("Hermitian input")
}

/// `Λ_i = S^{-1/2} A_i S^{-1/2}` with `A_i = B_i B_i†`, `S = Σ A_i`.
pub fn random_povm<R: Rng + ?Sized>(rng: &mut R, d: usize, outcomes: usize) -> Povm {
    let parts: Vec<ComplexMatrix> = (0..outcomes)
        .map(|_| {
            let b = random_matrix(rng, d);
            (&b * &b.adjoint()).hermitian_part()
        })
        .collect();
    let total = parts.iter().fold(ComplexMatrix::zeros(d), |acc, p| &acc + p);
    let inv_sqrt = matrix_function_hermitian(&total, |l| C64::new(l.powf(-0.5), 0.0)).expect("Hermitian input");
    let effects = parts
        .iter()
        .map(|p| (&(&inv_sqrt * p) * &inv_sqrt).hermitian_part())
        .collect();
    validate_povm(effects, None).expect("normalized effects form a POVM")
}

/// A non-identity Pauli string on `n` qubits.
pub fn random_pauli<R: Rng + ?Sized>(rng: &mut R, n: usize) -> PauliString {
    loop {
        let s: String = (0..n).map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).collect();
        if s.chars().any(|c| c != 'I') {
            return s.parse().expect("valid Pauli letters");
        }
    }
}

pub fn random_family<R: Rng + ?Sized>(rng: &mut R, qubits: usize, j: usize, k: usize) -> HamiltonianFamily {
    let g = (0..j).map(|_| random_pauli(rng, qubits)).collect();
    let h = (0..k).map(|_| random_pauli(rng, qubits)).collect();
    HamiltonianFamily::new(qubits, g, h).expect("random family is well formed")
}

/// Full-support distribution with weights uniform on `[0.05, 1]` before normalization.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Distribution {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / s).collect()).expect("normalized weights")
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}
