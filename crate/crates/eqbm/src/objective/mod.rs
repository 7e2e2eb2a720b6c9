//! The minimax objective `f(γ, w)` built from a Born-rule model and a
//! critic, in its Donsker–Varadhan and Rényi forms, with all gradient and
//! Hessian blocks.

mod bounds;
mod check;

pub use bounds::{bound_gradient, bound_hessian, GradientBounds, HessianBounds};
pub use check::{block_relative_error, finite_difference_check, maximize_inner, FdReport, InnerOptions, InnerResult};

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::channels::{
    anticommutator_with, born_jacobian, commutator_with, default_tent_sampler, product_with, shots_required,
    ChannelTerms, EstimatorKind, Observable, ShotPlan,
};
use crate::critic::{observable_p_wl, Critic};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::model::{relative_entropy, Distribution, HamiltonianFamily, ModelSnapshot, Povm};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Divergence {
    /// `E_p[T] + 1 − E_q[e^T]`.
    Dv,
    /// `α E_p[e^{(α−1)T/α}] + (1−α) E_q[e^T]`.
    Renyi { alpha: f64 },
}

impl Divergence {
    /// Whether the natural problem is `min_γ max_w` (true) or
    /// `max_γ min_w` (Rényi with α < 1).
    pub fn is_minimax(&self) -> bool {
        match *self {
            Divergence::Dv => true,
            Divergence::Renyi { alpha } => alpha > 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Exact,
    /// Every expectation over ω is replaced by a shot estimate planned for
    /// accuracy `epsilon` at failure probability `delta`.
    Shots { epsilon: f64, delta: f64 },
}

/// How `E_p` is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Table(Distribution),
    /// Outcome indices; `E_p` becomes a sample mean.
    Samples(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub divergence: Divergence,
    pub mode: Mode,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub grad_gamma: DVector<f64>,
    pub grad_w: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub h_ww: DMatrix<f64>,
    /// `L × (J+K)`.
    pub h_wgamma: DMatrix<f64>,
}

/// A smooth two-player objective, minimized over `γ` and maximized over `w`.
/// The stream key seeds any sampling an evaluation performs.
pub trait MinimaxObjective: Sync {
    fn dim_gamma(&self) -> usize;
    fn dim_w(&self) -> usize;
    fn value(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<f64>;
    fn gradients(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<GradientBundle>;
    fn hessians(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<HessianBlocks>;

    /// Shots consumed so far (zero for deterministic objectives).
    fn shots_used(&self) -> u64 {
        0
    }

    /// `D(p‖q_γ)` when the objective has a model behind it.
    fn relative_entropy(&self, _gamma: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// `f(γ, w)` for a Born-rule model and a critic template whose parameters
/// are replaced by `w` at every evaluation.
#[derive(Debug)]
pub struct BornObjective {
    family: HamiltonianFamily,
    povm: Povm,
    critic: Critic,
    config: ObjectiveConfig,
    p: Distribution,
    shots: AtomicU64,
    clamps: AtomicU64,
}

// substream tags
const TAG_Q_SAMPLES: u64 = 1;
const TAG_THETA: u64 = 2;
const TAG_PRODUCT: u64 = 3;
const TAG_PHI: u64 = 4;

fn tag(kind: u64, a: usize, b: usize) -> u64 {
    (kind << 48) | ((a as u64) << 24) | b as u64
}

/// Critic quantities over the alphabet at one `w`.
struct CriticTable {
    values: Vec<f64>,
    exp: Vec<f64>,
    grads: Vec<DVector<f64>>,
}

impl BornObjective {
    pub fn new(family: HamiltonianFamily, povm: Povm, critic: Critic, config: ObjectiveConfig) -> Result<Self> {
        if family.dim() != povm.dim() {
            return Err(Error::DimensionMismatch {
                expected: family.dim(),
                found: povm.dim(),
            });
        }
        if critic.outcomes() != povm.len() {
            return Err(Error::Length {
                what: "critic alphabet",
                expected: povm.len(),
                found: critic.outcomes(),
            });
        }
        if let Divergence::Renyi { alpha } = config.divergence {
            if !(alpha > 0.0 && alpha.is_finite()) || alpha == 1.0 {
                return Err(Error::Argument(format!("Renyi order {alpha} must be positive and differ from 1")));
            }
            if critic.lambda() > 0.0 {
                return Err(Error::Argument("quadratic regularization applies to the DV objective only".into()));
            }
        }
        if let Mode::Shots { epsilon, delta } = config.mode {
            ShotPlan::new(epsilon, delta, 1)?;
        }
        let p = match &config.target {
            Target::Table(p) => {
                if p.len() != povm.len() {
                    return Err(Error::Length {
                        what: "target distribution",
                        expected: povm.len(),
                        found: p.len(),
                    });
                }
                p.clone()
            }
            Target::Samples(s) => Distribution::empirical(s, povm.len())?,
        };
        Ok(Self {
            family,
            povm,
            critic,
            config,
            p,
            shots: AtomicU64::new(0),
            clamps: AtomicU64::new(0),
        })
    }

    pub fn family(&self) -> &HamiltonianFamily {
        &self.family
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    /// The distribution used for `E_p` (the table, or the empirical law of the samples).
    pub fn target_distribution(&self) -> &Distribution {
        &self.p
    }

    pub fn critic_template(&self) -> &Critic {
        &self.critic
    }

    pub fn critic_at(&self, w: &DVector<f64>) -> Result<Critic> {
        self.critic.with_params(w.clone())
    }

    /// Number of critic outputs clamped so far.
    pub fn clamp_events(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn born(&self, gamma: &DVector<f64>) -> Result<Distribution> {
        self.snapshot(gamma)?.born(&self.povm)
    }

    fn snapshot(&self, gamma: &DVector<f64>) -> Result<ModelSnapshot> {
        ModelSnapshot::from_gamma(&self.family, gamma.as_slice())
    }

    fn table(&self, w: &DVector<f64>) -> Result<(Critic, CriticTable)> {
        let critic = self.critic_at(w)?;
        let t = critic.exp_table();
        if t.clamped > 0 {
            self.clamps.fetch_add(t.clamped as u64, Ordering::Relaxed);
        }
        let grads = critic.grads();
        Ok((
            critic,
            CriticTable {
                values: t.values,
                exp: t.exp,
                grads,
            },
        ))
    }

    /// The distribution standing in for `q_γ` in the `E_q` terms: exact, or
    /// the empirical law of a planned number of Born samples.
    fn q_for_expectations(&self, snap: &ModelSnapshot, table: &CriticTable, key: StreamKey) -> Result<Distribution> {
        let q = snap.born(&self.povm)?;
        match self.config.mode {
            Mode::Exact => Ok(q),
            Mode::Shots { epsilon, delta } => {
                let grad_sup = table.grads.iter().map(|g| g.amax()).fold(1.0, f64::max);
                let norm = table.exp.iter().fold(0.0, |m: f64, e| m.max(*e)) * grad_sup;
                let n = shots_required(epsilon, delta, norm, EstimatorKind::Product)?;
                let key = key.child(TAG_Q_SAMPLES);
                let samples = map_indexed(n as usize, |i| q.sample(&mut key.shot_rng(i as u64)));
                self.shots.fetch_add(n, Ordering::Relaxed);
                Distribution::empirical(&samples, self.povm.len())
            }
        }
    }

    /// `∂_γ ⟨O⟩_ω` for a payoff, exactly through the Born Jacobian or by the
    /// shot estimators.
    fn expectation_gradient(
        &self,
        snap: &ModelSnapshot,
        jac: Option<&DMatrix<f64>>,
        payoff: &[f64],
        key: StreamKey,
    ) -> Result<DVector<f64>> {
        let m = self.family.num_params();
        if let Some(jac) = jac {
            return Ok(jac.transpose() * DVector::from_column_slice(payoff));
        }
        let Mode::Shots { epsilon, delta } = self.config.mode else {
            unreachable!("exact mode always supplies the Jacobian")
        };
        let obs = Observable::new(payoff.to_vec(), &self.povm)?;
        if obs.norm() == 0.0 {
            return Ok(DVector::zeros(m));
        }
        let nj = self.family.num_g();
        let mut out = DVector::zeros(m);
        for j in 0..nj {
            let plan = ShotPlan::planned(epsilon, delta, obs.norm(), EstimatorKind::Anticommutator)?;
            let mu = anticommutator_with(&obs, &self.family, snap, j, &plan, default_tent_sampler(), key.child(tag(TAG_THETA, j, 0)))?;
            let n = shots_required(epsilon, delta, obs.norm(), EstimatorKind::Product)?;
            let prod = product_with(&obs, &self.family, snap, j, n, key.child(tag(TAG_PRODUCT, j, 0)))?;
            self.shots.fetch_add(mu.shots + prod.shots, Ordering::Relaxed);
            out[j] = mu.mean + prod.mean;
        }
        for k in 0..self.family.num_h() {
            let plan = ShotPlan::planned(epsilon, delta, obs.norm(), EstimatorKind::Commutator)?;
            let nu = commutator_with(&obs, &self.family, snap, k, &plan, key.child(tag(TAG_PHI, k, 0)))?;
            self.shots.fetch_add(nu.shots, Ordering::Relaxed);
            out[nj + k] = 2.0 * nu.mean;
        }
        Ok(out)
    }

    fn jacobian(&self, snap: &ModelSnapshot) -> Result<Option<DMatrix<f64>>> {
        match self.config.mode {
            Mode::Exact => {
                let terms = ChannelTerms::new(&self.family, snap);
                let q = snap.born(&self.povm)?;
                Ok(Some(born_jacobian(snap, &terms, &self.povm, &q)?))
            }
            Mode::Shots { .. } => Ok(None),
        }
    }

    /// Coefficient of `∂_γ⟨O_w⟩` in `∇_γ f`.
    fn gamma_prefactor(&self) -> f64 {
        match self.config.divergence {
            Divergence::Dv => -1.0,
            Divergence::Renyi { alpha } => 1.0 - alpha,
        }
    }

    fn value_from(&self, w: &DVector<f64>, table: &CriticTable, q: &Distribution) -> f64 {
        let eq = q.expect(|z| table.exp[z]);
        match self.config.divergence {
            Divergence::Dv => {
                let lambda = self.critic.lambda();
                self.p.expect(|z| table.values[z]) + 1.0 - eq - 0.5 * lambda * w.norm_squared()
            }
            Divergence::Renyi { alpha } => {
                let c = (alpha - 1.0) / alpha;
                alpha * self.p.expect(|z| (c * table.values[z]).exp()) + (1.0 - alpha) * eq
            }
        }
    }

    fn grad_w_from(&self, w: &DVector<f64>, table: &CriticTable, q: &Distribution) -> DVector<f64> {
        let l = w.len();
        let weighted = |d: &Distribution, f: &dyn Fn(usize) -> f64| {
            let mut acc = DVector::zeros(l);
            for (z, &pz) in d.probs().iter().enumerate() {
                if pz > 0.0 {
                    acc.axpy(pz * f(z), &table.grads[z], 1.0);
                }
            }
            acc
        };
        let eq = weighted(q, &|z| table.exp[z]);
        match self.config.divergence {
            Divergence::Dv => weighted(&self.p, &|_| 1.0) - eq - w * self.critic.lambda(),
            Divergence::Renyi { alpha } => {
                let c = (alpha - 1.0) / alpha;
                (weighted(&self.p, &|z| (c * table.values[z]).exp()) - eq) * (alpha - 1.0)
            }
        }
    }

    fn h_ww_from(&self, critic: &Critic, table: &CriticTable, q: &Distribution) -> Result<DMatrix<f64>> {
        let l = critic.num_params();
        let mut h = DMatrix::zeros(l, l);
        // Rényi: the p-term carries e^{cT} and an extra c·∇T∇Tᵀ
        let c = match self.config.divergence {
            Divergence::Dv => None,
            Divergence::Renyi { alpha } => Some((alpha - 1.0) / alpha),
        };
        for z in 0..critic.outcomes() {
            let (pz, qz) = (self.p.prob(z), q.prob(z));
            if pz == 0.0 && qz == 0.0 {
                continue;
            }
            let g = &table.grads[z];
            let outer = g * g.transpose();
            let second = if critic.is_linear() { None } else { Some(critic.hessian(z)?) };
            if pz > 0.0 {
                let wz = pz * c.map_or(1.0, |c| (c * table.values[z]).exp());
                if let Some(c) = c {
                    h += &outer * (wz * c);
                }
                if let Some(s) = &second {
                    h += s * wz;
                }
            }
            if qz > 0.0 {
                let wz = qz * table.exp[z];
                h -= &outer * wz;
                if let Some(s) = &second {
                    h -= s * wz;
                }
            }
        }
        Ok(match self.config.divergence {
            Divergence::Dv => h - DMatrix::identity(l, l) * self.critic.lambda(),
            Divergence::Renyi { alpha } => h * (alpha - 1.0),
        })
    }
}

impl MinimaxObjective for BornObjective {
    fn dim_gamma(&self) -> usize {
        self.family.num_params()
    }

    fn dim_w(&self) -> usize {
        self.critic.num_params()
    }

    fn value(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<f64> {
        let snap = self.snapshot(gamma)?;
        let (_, table) = self.table(w)?;
        let q = self.q_for_expectations(&snap, &table, key)?;
        Ok(self.value_from(w, &table, &q))
    }

    fn gradients(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<GradientBundle> {
        let snap = self.snapshot(gamma)?;
        let (_, table) = self.table(w)?;
        let q = self.q_for_expectations(&snap, &table, key)?;
        let jac = self.jacobian(&snap)?;
        let d_obs = self.expectation_gradient(&snap, jac.as_ref(), &table.exp, key.child(10))?;
        Ok(GradientBundle {
            grad_gamma: d_obs * self.gamma_prefactor(),
            grad_w: self.grad_w_from(w, &table, &q),
        })
    }

    fn hessians(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<HessianBlocks> {
        let snap = self.snapshot(gamma)?;
        let (critic, table) = self.table(w)?;
        let q = self.q_for_expectations(&snap, &table, key)?;
        let h_ww = self.h_ww_from(&critic, &table, &q)?;
        let jac = self.jacobian(&snap)?;
        let mut h_wgamma = DMatrix::zeros(critic.num_params(), self.family.num_params());
        for l in 0..critic.num_params() {
            let payoff = observable_p_wl(&critic, &self.povm, l)?;
            let row = self.expectation_gradient(&snap, jac.as_ref(), payoff.payoff(), key.child(tag(20, l, 0)))?;
            h_wgamma.set_row(l, &(row * self.gamma_prefactor()).transpose());
        }
        Ok(HessianBlocks { h_ww, h_wgamma })
    }

    fn shots_used(&self) -> u64 {
        self.shots.load(Ordering::Relaxed)
    }

    fn relative_entropy(&self, gamma: &DVector<f64>) -> Option<f64> {
        self.born(gamma).ok().map(|q| relative_entropy(&self.p, &q))
    }
}

#[cfg(test)]
mod tests;
