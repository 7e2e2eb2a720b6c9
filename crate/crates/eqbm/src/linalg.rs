//! Dense complex linear algebra on Hilbert spaces of at most ten qubits.
//!
//! [`ComplexMatrix`] is the carrier for every operator in the crate: POVM
//! effects, generators, states, and channel outputs. Hermitian matrices are
//! handled through their spectral decomposition ([`HermitianEig`]), which is
//! also how matrix exponentials and the time-averaged channels are evaluated.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported Hilbert-space dimension (10 qubits).
pub const MAX_DIM: usize = 1024;

/// Absolute max-entry tolerance for Hermiticity and unitarity checks.
pub const STRUCTURE_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix with `1 <= dim <= 1024`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        check_dim(m.nrows())?;
        Ok(Self(m))
    }

    /// Builds a `dim x dim` matrix from entries listed row by row.
    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::Length {
                what: "matrix entries",
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<C64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::from_row_major(dim, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub(crate) fn from_inner(m: DMatrix<C64>) -> Self {
        debug_assert!(m.is_square());
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    /// Largest `|A - A^dagger|` entry.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let diff = (self.0[(i, j)] - self.0[(j, i)].conj()).norm();
                worst = worst.max(diff);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    /// Largest `|U U^dagger - I|` entry.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = &self.0 * self.0.adjoint();
        max_abs_diff_inner(&prod, &DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff_inner(&self.0, &other.0)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value, i.e. `sqrt(lambda_max(A^dagger A))`.
    pub fn spectral_norm(&self) -> f64 {
        let gram = Self(self.0.adjoint() * &self.0);
        match hermitian_eigendecompose(&gram) {
            Ok(eig) => eig.max_abs_eigenvalue().sqrt(),
            // A^dagger A is Hermitian up to roundoff; fall back to the Frobenius bound.
            Err(_) => self.frobenius_norm(),
        }
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 + &other.0 * &self.0)
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        Err(Error::Dimension(dim))
    } else {
        Ok(())
    }
}

fn max_abs_diff_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Spectral data of a Hermitian matrix, eigenvalues in nondecreasing order.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Column `k` is the eigenvector of `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, &l| m.max(l.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V diag(map(lambda_k)) V^dagger`.
    pub fn apply<F: Fn(f64) -> C64>(&self, map: F) -> ComplexMatrix {
        let v = self.eigenvectors.as_matrix();
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = map(lambda);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= s);
        }
        ComplexMatrix(scaled * v.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply(|l| C64::new(l, 0.0))
    }

    /// Expresses `x` in the eigenbasis: `V^dagger X V`.
    pub fn to_eigenbasis(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let v = self.eigenvectors.as_matrix();
        ComplexMatrix(v.adjoint() * x.as_matrix() * v)
    }

    /// Inverse of [`Self::to_eigenbasis`]: `V Y V^dagger`.
    pub fn from_eigenbasis(&self, y: &ComplexMatrix) -> ComplexMatrix {
        let v = self.eigenvectors.as_matrix();
        ComplexMatrix(v * y.as_matrix() * v.adjoint())
    }
}

/// Eigendecomposition of a matrix that is Hermitian to within
/// [`STRUCTURE_TOL`]. The Hermitian part is decomposed so roundoff-level
/// asymmetry does not leak into the spectrum.
pub fn hermitian_eigendecompose(a: &ComplexMatrix) -> Result<HermitianEig> {
    let asym = a.max_asymmetry();
    if asym > STRUCTURE_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let sym = a.hermitian_part().into_inner();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;

    let d = a.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors: ComplexMatrix(eigenvectors),
    })
}

/// `f(A)` for Hermitian `A` via the spectral theorem.
pub fn matrix_function_hermitian<F: Fn(f64) -> C64>(
    a: &ComplexMatrix,
    scalar_map: F,
) -> Result<ComplexMatrix> {
    Ok(hermitian_eigendecompose(a)?.apply(scalar_map))
}

/// `U X U^dagger`, rejecting `U` that is not unitary to [`STRUCTURE_TOL`].
pub fn conjugate(u: &ComplexMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if u.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: x.dim(),
        });
    }
    let defect = u.unitarity_defect();
    if defect > STRUCTURE_TOL {
        return Err(Error::NotUnitary(defect));
    }
    Ok(conjugate_unchecked(u, x))
}

pub(crate) fn conjugate_unchecked(u: &ComplexMatrix, x: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(u.as_matrix() * x.as_matrix() * u.as_matrix().adjoint())
}

pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    a.spectral_norm()
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.trace()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}
