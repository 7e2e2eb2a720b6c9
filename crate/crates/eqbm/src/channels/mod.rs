//! Channels Φ_θ / Ψ_φ, the tent density, exact derivatives of Born-rule
//! expectations, and shot-level estimators of those derivatives.

mod calibration;
mod circuits;
mod estimators;
mod exact;
mod tent;

pub use calibration::{calibrate_estimators, CalibrationInstance, CalibrationReport, TermReport};
pub use circuits::{hadamard_test_joint, HadamardKind, JointOutcomes};
pub(crate) use estimators::{anticommutator_with, commutator_with, product_with};
pub use estimators::{
    estimate_anticommutator_term, estimate_commutator_term, estimate_product_term, shots_required,
    EstimatorKind, EstimatorOutcome, ShotPlan, ANTICOMMUTATOR_SIGN, COMMUTATOR_SIGN,
};
pub use exact::{
    born_jacobian, exact_partial_phi, exact_partial_theta, phi_channel_exact, psi_channel_exact,
    psi_kernel, tent_weight_table, ChannelTerms,
};
pub use tent::{
    build_tent_sampler, default_tent_sampler, sample_tent, tent_density, tent_spectral_weight,
    TentSampler, DEFAULT_RESOLUTION, DEFAULT_T_MAX,
};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::model::Povm;

/// `O = Σ_z g(z) Λ_z` for a payoff `g` on the outcomes of `povm`.
#[derive(Clone, Debug)]
pub struct Observable<'a> {
    g: Vec<f64>,
    povm: &'a Povm,
}

impl<'a> Observable<'a> {
    pub fn new(g: Vec<f64>, povm: &'a Povm) -> Result<Self> {
        if g.len() != povm.len() {
            return Err(Error::Length {
                what: "payoff",
                expected: povm.len(),
                found: g.len(),
            });
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("payoff value {bad} is not finite")));
        }
        Ok(Self { g, povm })
    }

    pub fn payoff(&self) -> &[f64] {
        &self.g
    }

    pub fn povm(&self) -> &'a Povm {
        self.povm
    }

    /// `‖g‖ = max_z |g(z)|`, an upper bound on the spectral norm of `O`.
    pub fn norm(&self) -> f64 {
        self.g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn operator(&self) -> ComplexMatrix {
        self.povm.weighted_sum(&self.g)
    }
}
