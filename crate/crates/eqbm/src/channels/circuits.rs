//! Density-matrix simulation of the Hadamard test with a control qubit on
//! top of the data register (control is the most significant qubit).

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ONE, ZERO};
use crate::model::{DensityMatrix, Povm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HadamardKind {
    /// Control outcome parity estimates `½⟨{O, W}⟩`.
    RealPart,
    /// Adds `S†` on the control; parity estimates `−(i/2)⟨[O, W]⟩`.
    ImagPart,
}

/// Joint law of the control bit `r` and the data outcome `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOutcomes {
    outcomes: usize,
    // index r * outcomes + z
    probs: Vec<f64>,
}

impl JointOutcomes {
    pub fn num_outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn prob(&self, r: usize, z: usize) -> f64 {
        self.probs[r * self.outcomes + z]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn marginal_z(&self) -> Vec<f64> {
        (0..self.outcomes).map(|z| self.prob(0, z) + self.prob(1, z)).collect()
    }

    pub fn marginal_r(&self) -> [f64; 2] {
        let (a, b) = self.probs.split_at(self.outcomes);
        [a.iter().sum(), b.iter().sum()]
    }

    /// `E[(−1)^r g(z)]`.
    pub fn parity_mean(&self, g: &[f64]) -> f64 {
        (0..self.outcomes)
            .map(|z| (self.prob(0, z) - self.prob(1, z)) * g[z])
            .sum()
    }

    /// Draws `(r, z)` by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
            }
            acc += p;
            if u < acc {
                return (i / self.outcomes, i % self.outcomes);
            }
        }
        (last / self.outcomes, last % self.outcomes)
    }
}

fn control_gate(gate: [[C64; 2]; 2], d: usize) -> ComplexMatrix {
    let mut m = DMatrix::from_element(2 * d, 2 * d, ZERO);
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..d {
                m[(a * d + i, b * d + i)] = gate[a][b];
            }
        }
    }
    ComplexMatrix::from_inner(m)
}

fn block_diag(top: &ComplexMatrix, bottom: &ComplexMatrix) -> ComplexMatrix {
    let d = top.dim();
    let mut m = DMatrix::from_element(2 * d, 2 * d, ZERO);
    m.view_mut((0, 0), (d, d)).copy_from(top.as_matrix());
    m.view_mut((d, d), (d, d)).copy_from(bottom.as_matrix());
    ComplexMatrix::from_inner(m)
}

fn data_block(m: &ComplexMatrix, r: usize, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_inner(m.as_matrix().view((r * d, r * d), (d, d)).into_owned())
}

/// Control `|+⟩`, controlled-`W`, optional `S†` on control, Hadamard on
/// control, then `post_unitary` on the data register; returns
/// `p(r, z) = Tr[(Π_r ⊗ Λ_z) · final]`.
pub fn hadamard_test_joint(
    kind: HadamardKind,
    w: &ComplexMatrix,
    input: &DensityMatrix,
    post_unitary: &ComplexMatrix,
    povm: &Povm,
) -> Result<JointOutcomes> {
    let d = input.dim();
    for found in [w.dim(), post_unitary.dim(), povm.dim()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let had = control_gate([[C64::new(s, 0.0), C64::new(s, 0.0)], [C64::new(s, 0.0), C64::new(-s, 0.0)]], d);
    let id = ComplexMatrix::identity(d);

    let mut initial = DMatrix::from_element(2 * d, 2 * d, ZERO);
    initial.view_mut((0, 0), (d, d)).copy_from(input.matrix().as_matrix());
    let mut state = ComplexMatrix::from_inner(initial);

    let mut circuit = vec![had.clone(), block_diag(&id, w)];
    if kind == HadamardKind::ImagPart {
        circuit.push(control_gate([[ONE, ZERO], [ZERO, C64::new(0.0, -1.0)]], d));
    }
    circuit.push(had);
    circuit.push(block_diag(post_unitary, post_unitary));
    for gate in &circuit {
        state = &(gate * &state) * &gate.adjoint();
    }

    let mut probs = Vec::with_capacity(2 * povm.len());
    for r in 0..2 {
        let block = data_block(&state, r, d);
        probs.extend(povm.traces_against(&block).into_iter().map(|t| t.re.max(0.0)));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Numerical(format!("Hadamard-test probabilities sum to {total}")));
    }
    Ok(JointOutcomes {
        outcomes: povm.len(),
        probs,
    })
}
