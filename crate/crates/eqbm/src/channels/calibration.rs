//! Repeated runs of the μ / ν estimators against their exact values.

use super::{
    estimate_anticommutator_term, estimate_commutator_term, exact_partial_phi, exact_partial_theta, EstimatorKind,
    Observable, ShotPlan,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{HamiltonianFamily, ModelSnapshot, Povm};
use crate::rng::StreamKey;

/// One model, payoff and accuracy target to calibrate against.
#[derive(Clone, Debug)]
pub struct CalibrationInstance {
    pub family: HamiltonianFamily,
    pub povm: Povm,
    pub gamma: Vec<f64>,
    pub payoff: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
}

impl CalibrationInstance {
    /// One qubit, `G = θσ_Z`, `H = φσ_Y`, parity payoff, ε = 0.1, δ = 0.05.
    ///
    /// The anticommutator plan is not a worst-case bound for a ±‖g‖ estimator;
    /// it holds when `|μ|` is bounded away from zero, as it is here (≈ 0.71).
    pub fn standard() -> Self {
        Self {
            family: HamiltonianFamily::from_letters(&["Z"], &["Y"]).expect("static family"),
            povm: Povm::computational(1),
            gamma: vec![-3.0, -2.75],
            payoff: vec![1.0, -1.0],
            epsilon: 0.1,
            delta: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TermReport {
    /// `mu[j]` or `nu[k]`.
    pub term: String,
    pub shots: u64,
    pub exact: f64,
    pub mean: f64,
    pub bias: f64,
    pub standard_error: f64,
    pub failure_rate: f64,
    pub rate_ok: bool,
    pub bias_ok: bool,
}

impl TermReport {
    pub fn passes(&self) -> bool {
        self.rate_ok && self.bias_ok
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub epsilon: f64,
    pub delta: f64,
    pub repetitions: usize,
    pub shots_anticommutator: u64,
    pub shots_commutator: u64,
    pub terms: Vec<TermReport>,
}

impl CalibrationReport {
    pub fn passes(&self) -> bool {
        self.terms.iter().all(TermReport::passes)
    }

    /// One line per failing check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.terms {
            if !t.rate_ok {
                out.push(format!("{}: failure rate {:.4} > {}", t.term, t.failure_rate, 2.0 * self.delta));
            }
            if !t.bias_ok {
                out.push(format!(
                    "{}: bias {:.3e} exceeds 3 standard errors ({:.3e})",
                    t.term, t.bias, t.standard_error
                ));
            }
        }
        out
    }
}

/// Runs every μ_j and ν_k estimator `repetitions` times.
///
/// A term passes when its empirical rate of `|estimate − exact| > ε` is at
/// most `2δ` and its mean bias lies within three standard errors.
pub fn calibrate_estimators(inst: &CalibrationInstance, repetitions: usize, key: StreamKey) -> Result<CalibrationReport> {
    if repetitions < 2 {
        return Err(Error::Argument(format!("need at least 2 repetitions, got {repetitions}")));
    }
    if inst.gamma.len() != inst.family.num_params() {
        return Err(Error::Length {
            what: "gamma",
            expected: inst.family.num_params(),
            found: inst.gamma.len(),
        });
    }
    let obs = Observable::new(inst.payoff.clone(), &inst.povm)?;
    let snap = ModelSnapshot::from_gamma(&inst.family, &inst.gamma)?;
    let mean_o = snap.born(&inst.povm)?.expect(|z| inst.payoff[z]);
    let anti = ShotPlan::planned(inst.epsilon, inst.delta, obs.norm(), EstimatorKind::Anticommutator)?;
    let comm = ShotPlan::planned(inst.epsilon, inst.delta, obs.norm(), EstimatorKind::Commutator)?;

    let nj = inst.family.num_g();
    let mut terms = Vec::with_capacity(inst.family.num_params());
    for idx in 0..inst.family.num_params() {
        let (term, exact, plan) = if idx < nj {
            // the estimator targets the covariance part of ∂_θj⟨O⟩
            let full = exact_partial_theta(&obs, &inst.family, &inst.gamma, idx)?;
            let g_mean = snap.rho.expectation(inst.family.g_matrix(idx));
            (format!("mu[{idx}]"), full - mean_o * g_mean, &anti)
        } else {
            let k = idx - nj;
            (format!("nu[{k}]"), 0.5 * exact_partial_phi(&obs, &inst.family, &inst.gamma, k)?, &comm)
        };
        let term_key = key.child(idx as u64);
        let estimates = exec::try_map_indexed(repetitions, |r| {
            let k = term_key.child(r as u64);
            let out = if idx < nj {
                estimate_anticommutator_term(&obs, &inst.family, &inst.gamma, idx, plan, k)
            } else {
                estimate_commutator_term(&obs, &inst.family, &inst.gamma, idx - nj, plan, k)
            }?;
            Ok::<_, Error>(out.mean)
        })?;
        let reps = repetitions as f64;
        let mean = estimates.iter().sum::<f64>() / reps;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        let standard_error = (var / reps).sqrt();
        let bias = mean - exact;
        let failure_rate = estimates.iter().filter(|e| (*e - exact).abs() > inst.epsilon).count() as f64 / reps;
        terms.push(TermReport {
            term,
            shots: plan.shots,
            exact,
            mean,
            bias,
            standard_error,
            failure_rate,
            rate_ok: failure_rate <= 2.0 * inst.delta,
            // no spread at all means the estimator is exact
            bias_ok: if standard_error > 0.0 { bias.abs() <= 3.0 * standard_error } else { bias.abs() <= 1e-12 },
        });
    }
    Ok(CalibrationReport {
        epsilon: inst.epsilon,
        delta: inst.delta,
        repetitions,
        shots_anticommutator: anti.shots,
        shots_commutator: comm.shots,
        terms,
    })
}
