use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis. The first letter acts on the most
/// significant bit of the computational-basis index, so `"XZ"` is `X ⊗ Z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() || (1usize << letters.len().min(63)) > MAX_DIM {
            return Err(Error::Pauli(
                letters.iter().map(|p| p.letter()).collect::<String>(),
            ));
        }
        Ok(Self { letters })
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    /// Dense `2^n x 2^n` matrix. Built column by column: a Pauli string maps
    /// each basis vector to a single phased basis vector.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let n = self.num_qubits();
        let d = 1usize << n;
        let mut m = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
        let mut flip = 0usize;
        for (q, p) in self.letters.iter().enumerate() {
            if matches!(p, Pauli::X | Pauli::Y) {
                flip |= 1 << (n - 1 - q);
            }
        }
        for col in 0..d {
            let mut phase = C64::new(1.0, 0.0);
            for (q, p) in self.letters.iter().enumerate() {
                let bit = (col >> (n - 1 - q)) & 1;
                phase *= match (p, bit) {
                    (Pauli::I, _) | (Pauli::X, _) => C64::new(1.0, 0.0),
                    (Pauli::Y, 0) => C64::new(0.0, 1.0),
                    (Pauli::Y, _) => C64::new(0.0, -1.0),
                    (Pauli::Z, 0) => C64::new(1.0, 0.0),
                    (Pauli::Z, _) => C64::new(-1.0, 0.0),
                };
            }
            m[(col ^ flip, col)] = phase;
        }
        ComplexMatrix::from_inner(m)
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                _ => Err(Error::Pauli(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Pauli(s.to_string()));
        }
        Self::new(letters)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}
