//! The evolved quantum Boltzmann machine family.
//!
//! A [`HamiltonianFamily`] fixes Pauli-string generators `G_j` (thermal part)
//! and `H_k` (time-evolution part). For parameters `γ = (θ, φ)` the model
//! state is `ω = e^{-iH(φ)} ρ_θ e^{iH(φ)}` with `ρ_θ = e^{-G(θ)} / Tr e^{-G(θ)}`,
//! and measuring `ω` with a POVM gives the Born distribution `q_γ`.

mod distribution;
mod pauli;
mod povm;

pub use distribution::{relative_entropy, renyi_quasi_entropy, sample_outcomes, Distribution};
pub use pauli::{Pauli, PauliString};
pub use povm::{validate_povm, Povm};


use crate::error::{Error, Result};
use crate::linalg::{
    conjugate_unchecked, hermitian_eigendecompose, ComplexMatrix, HermitianEig, C64, I,
    STRUCTURE_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Thermal generators `G_j`, weighted by `θ`.
    G,
    /// Evolution generators `H_k`, weighted by `φ`.
    H,
}

#[derive(Clone, Debug)]
pub struct HamiltonianFamily {
    num_qubits: usize,
    g_terms: Vec<PauliString>,
    h_terms: Vec<PauliString>,
    g_dense: Vec<ComplexMatrix>,
    h_dense: Vec<ComplexMatrix>,
}

impl HamiltonianFamily {
    /// Requires at least one thermal term; `h_terms` may be empty, which is a
    /// plain (non-evolved) Boltzmann machine.
    pub fn new(num_qubits: usize, g_terms: Vec<PauliString>, h_terms: Vec<PauliString>) -> Result<Self> {
        if g_terms.is_empty() {
            return Err(Error::Length {
                what: "thermal generator terms",
                expected: 1,
                found: 0,
            });
        }
        for t in g_terms.iter().chain(&h_terms) {
            if t.num_qubits() != num_qubits {
                return Err(Error::DimensionMismatch {
                    expected: num_qubits,
                    found: t.num_qubits(),
                });
            }
        }
        let g_dense = g_terms.iter().map(PauliString::to_matrix).collect();
        let h_dense = h_terms.iter().map(PauliString::to_matrix).collect();
        Ok(Self {
            num_qubits,
            g_terms,
            h_terms,
            g_dense,
            h_dense,
        })
    }

    /// Convenience constructor from letter strings such as `"XZI"`.
    pub fn from_letters(g_terms: &[&str], h_terms: &[&str]) -> Result<Self> {
        let parse = |v: &[&str]| v.iter().map(|s| s.parse()).collect::<Result<Vec<PauliString>>>();
        let g = parse(g_terms)?;
        let h = parse(h_terms)?;
        let n = g.first().map(PauliString::num_qubits).unwrap_or(0);
        Self::new(n, g, h)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn num_g(&self) -> usize {
        self.g_terms.len()
    }

    pub fn num_h(&self) -> usize {
        self.h_terms.len()
    }

    /// `M = J + K`.
    pub fn num_params(&self) -> usize {
        self.num_g() + self.num_h()
    }

    pub fn g_terms(&self) -> &[PauliString] {
        &self.g_terms
    }

    pub fn h_terms(&self) -> &[PauliString] {
        &self.h_terms
    }

    pub fn g_matrix(&self, j: usize) -> &ComplexMatrix {
        &self.g_dense[j]
    }

    pub fn h_matrix(&self, k: usize) -> &ComplexMatrix {
        &self.h_dense[k]
    }

    /// `Σ c_j · term_j` for the chosen generator set.
    pub fn build_generator(&self, coeffs: &[f64], which: GeneratorKind) -> Result<ComplexMatrix> {
        let (terms, what) = match which {
            GeneratorKind::G => (&self.g_dense, "theta"),
            GeneratorKind::H => (&self.h_dense, "phi"),
        };
        if coeffs.len() != terms.len() {
            return Err(Error::Length {
                what,
                expected: terms.len(),
                found: coeffs.len(),
            });
        }
        let mut acc = ComplexMatrix::zeros(self.dim());
        for (t, &c) in terms.iter().zip(coeffs) {
            if c != 0.0 {
                acc = &acc + &t.scale(c);
            }
        }
        Ok(acc)
    }
}

/// Trainable parameters `γ = (θ, φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ParamVector {
    pub fn new(family: &HamiltonianFamily, theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.len() != family.num_g() {
            return Err(Error::Length {
                what: "theta",
                expected: family.num_g(),
                found: theta.len(),
            });
        }
        if phi.len() != family.num_h() {
            return Err(Error::Length {
                what: "phi",
                expected: family.num_h(),
                found: phi.len(),
            });
        }
        Ok(Self { theta, phi })
    }

    pub fn zeros(family: &HamiltonianFamily) -> Self {
        Self {
            theta: vec![0.0; family.num_g()],
            phi: vec![0.0; family.num_h()],
        }
    }

    /// Splits a concatenated `γ` of length `J + K`.
    pub fn from_gamma(family: &HamiltonianFamily, gamma: &[f64]) -> Result<Self> {
        if gamma.len() != family.num_params() {
            return Err(Error::Length {
                what: "gamma",
                expected: family.num_params(),
                found: gamma.len(),
            });
        }
        let (t, p) = gamma.split_at(family.num_g());
        Ok(Self {
            theta: t.to_vec(),
            phi: p.to_vec(),
        })
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.phi).copied().collect()
    }
}

/// Trace-one PSD Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let eig = hermitian_eigendecompose(&matrix)?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STRUCTURE_TOL || tr.im.abs() > STRUCTURE_TOL {
            return Err(Error::Numerical(format!("density matrix trace {tr}")));
        }
        if eig.min_eigenvalue() < -STRUCTURE_TOL {
            return Err(Error::Numerical(format!(
                "density matrix has eigenvalue {}",
                eig.min_eigenvalue()
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Re Tr[O ρ]`.
    pub fn expectation(&self, observable: &ComplexMatrix) -> f64 {
        observable.trace_product(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }
}

/// Gibbs state from a precomputed spectrum; shifted by the smallest
/// eigenvalue so the exponentials cannot overflow.
pub(crate) fn thermal_from_eig(eig: &HermitianEig) -> DensityMatrix {
    let shift = eig.min_eigenvalue();
    let weights: Vec<f64> = eig.eigenvalues().iter().map(|l| (-(l - shift)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let m = eig.apply(|l| C64::new((-(l - shift)).exp() / z, 0.0));
    DensityMatrix::from_unchecked(m.hermitian_part())
}

/// `ρ = e^{-G} / Tr[e^{-G}]`.
pub fn thermal_state(g: &ComplexMatrix) -> Result<DensityMatrix> {
    Ok(thermal_from_eig(&hermitian_eigendecompose(g)?))
}

/// `e^{-iH}` from the spectrum of `H`.
pub(crate) fn evolution_unitary(h_eig: &HermitianEig, time: f64) -> ComplexMatrix {
    h_eig.apply(|l| (-I * (l * time)).exp())
}

/// `ω = e^{-iH} ρ e^{iH}`.
pub fn evolved_state(rho: &DensityMatrix, h: &ComplexMatrix) -> Result<DensityMatrix> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: h.dim(),
        });
    }
    let u = evolution_unitary(&hermitian_eigendecompose(h)?, 1.0);
    Ok(DensityMatrix::from_unchecked(
        conjugate_unchecked(&u, rho.matrix()).hermitian_part(),
    ))
}

/// `q(z) = Tr[Λ_z ω]`.
pub fn born_distribution(omega: &DensityMatrix, povm: &Povm) -> Result<Distribution> {
    if omega.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            found: omega.dim(),
        });
    }
    let probs = povm
        .traces_against(omega.matrix())
        .into_iter()
        .map(|t| {
            // roundoff can push a zero probability marginally negative
            if t.re < 0.0 && t.re > -STRUCTURE_TOL {
                0.0
            } else {
                t.re
            }
        })
        .collect::<Vec<_>>();
    if let Some(bad) = probs.iter().find(|p| **p < 0.0) {
        return Err(Error::Numerical(format!("negative Born probability {bad}")));
    }
    Ok(Distribution::from_unchecked(probs))
}

/// Everything about the model at one parameter point that the channel and
/// objective computations reuse.
#[derive(Clone, Debug)]
pub struct ModelSnapshot {
    pub params: ParamVector,
    pub g_eig: HermitianEig,
    pub h_eig: Option<HermitianEig>,
    pub rho: DensityMatrix,
    /// `e^{-iH(φ)}`; identity when there are no evolution terms.
    pub evolution: ComplexMatrix,
    pub omega: DensityMatrix,
}

impl ModelSnapshot {
    pub fn new(family: &HamiltonianFamily, params: &ParamVector) -> Result<Self> {
        let g = family.build_generator(&params.theta, GeneratorKind::G)?;
        let g_eig = hermitian_eigendecompose(&g)?;
        let rho = thermal_from_eig(&g_eig);
        let (h_eig, evolution, omega) = if family.num_h() == 0 {
            (None, ComplexMatrix::identity(family.dim()), rho.clone())
        } else {
            let h = family.build_generator(&params.phi, GeneratorKind::H)?;
            let h_eig = hermitian_eigendecompose(&h)?;
            let u = evolution_unitary(&h_eig, 1.0);
            let omega =
                DensityMatrix::from_unchecked(conjugate_unchecked(&u, rho.matrix()).hermitian_part());
            (Some(h_eig), u, omega)
        };
        Ok(Self {
            params: params.clone(),
            g_eig,
            h_eig,
            rho,
            evolution,
            omega,
        })
    }

    pub fn from_gamma(family: &HamiltonianFamily, gamma: &[f64]) -> Result<Self> {
        Self::new(family, &ParamVector::from_gamma(family, gamma)?)
    }

    pub fn born(&self, povm: &Povm) -> Result<Distribution> {
        born_distribution(&self.omega, povm)
    }
}

/// Single-qubit thermal state of `θ_X σ_X + θ_Z σ_Z` in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleQubitClosedForm {
    pub r_x: f64,
    pub r_z: f64,
    /// `⟨0|ρ|0⟩`.
    pub q0: f64,
    /// `D(p‖q)` for `p` the point mass on outcome 0, i.e. `-ln q0`.
    pub rel_ent_vs_point_mass: f64,
}

/// `tanh(r)/r`, with the removable singularity at 0 handled by `1 - r²/3`.
pub fn tanh_over_r(r: f64) -> f64 {
    if r < 1e-6 {
        1.0 - r * r / 3.0
    } else {
        r.tanh() / r
    }
}

pub fn single_qubit_closed_form(theta_x: f64, theta_z: f64) -> SingleQubitClosedForm {
    let r = theta_x.hypot(theta_z);
    let s = tanh_over_r(r);
    let q0 = 0.5 * (1.0 - s * theta_z);
    SingleQubitClosedForm {
        r_x: -s * theta_x,
        r_z: -s * theta_z,
        q0,
        rel_ent_vs_point_mass: -q0.ln(),
    }
}
