//! Experiment configuration (JSON) and construction of the library objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eqbm::critic::{Critic, FeatureMap, LinearCritic, MlpCritic};
use eqbm::linalg::{ComplexMatrix, C64};
use eqbm::model::{validate_povm, Distribution, HamiltonianFamily, PauliString, Povm};
use eqbm::objective::{BornObjective, Divergence, Mode, ObjectiveConfig, Target};
use eqbm::optimizers::{Algorithm, Schedule};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

const MAX_QUBITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub povm: PovmSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub critic: CriticSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub num_qubits: usize,
    pub g_terms: Vec<String>,
    #[serde(default)]
    pub h_terms: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PovmSpec {
    #[default]
    Computational,
    Explicit { effects: Vec<EffectSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub real: Vec<Vec<f64>>,
    #[serde(default)]
    pub imag: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Probabilities in outcome order, or keyed by outcome label.
    Table(TableSpec),
    /// Newline-delimited outcome labels; relative paths resolve against the
    /// config file's directory.
    Samples(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    List(Vec<f64>),
    Labeled(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticSpec {
    Linear {
        /// Feature rows per outcome; one-hot when absent.
        #[serde(default)]
        features: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        lambda: f64,
        #[serde(default)]
        init: Option<Vec<f64>>,
    },
    Mlp {
        #[serde(default)]
        features: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![eqbm::critic::DEFAULT_HIDDEN]
}

impl Default for CriticSpec {
    fn default() -> Self {
        CriticSpec::Linear {
            features: None,
            lambda: 0.0,
            init: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    #[default]
    Dv,
    Renyi { alpha: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    #[default]
    Exact,
    Shots { epsilon: f64, delta: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Extragradient,
    #[default]
    TwoTimescaleGda,
    FollowTheRidge,
    HessianFr,
}

impl From<AlgorithmName> for Algorithm {
    fn from(a: AlgorithmName) -> Self {
        match a {
            AlgorithmName::Extragradient => Algorithm::Extragradient,
            AlgorithmName::TwoTimescaleGda => Algorithm::TwoTimescaleGda,
            AlgorithmName::FollowTheRidge => Algorithm::FollowTheRidge,
            AlgorithmName::HessianFr => Algorithm::HessianFr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub algorithm: AlgorithmName,
    pub eta_gamma: f64,
    pub eta_w: f64,
    pub eta_w1: f64,
    pub eta_w2: f64,
    pub iterations: usize,
    pub ridge_shift: f64,
    pub alternating: bool,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            algorithm: AlgorithmName::default(),
            eta_gamma: s.eta_gamma,
            eta_w: s.eta_w,
            eta_w1: s.eta_w1,
            eta_w2: s.eta_w2,
            iterations: s.iterations,
            ridge_shift: s.ridge_shift,
            alternating: s.alternating,
        }
    }
}

impl OptimizerSpec {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            eta_gamma: self.eta_gamma,
            eta_w: self.eta_w,
            eta_w1: self.eta_w1,
            eta_w2: self.eta_w2,
            iterations: self.iterations,
            ridge_shift: self.ridge_shift,
            alternating: self.alternating,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    /// Initial `γ = (θ, φ)`; zeros when absent.
    pub gamma: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Payoff `g` of the calibrated observable; `(−1)^{popcount z}` on the
    /// computational basis when absent.
    pub payoff: Option<Vec<f64>>,
}

/// Everything built from a validated config.
pub struct Built {
    pub critic: Critic,
    pub objective: BornObjective,
    pub gamma0: DVector<f64>,
    /// `"table"` or `"samples"`: where `E_p` comes from.
    pub target_source: &'static str,
}

fn pauli_ok(term: &str, n: usize) -> Result<(), String> {
    let p: PauliString = term.parse().map_err(|e| format!("{e}"))?;
    if p.num_qubits() != n {
        return Err(format!("term {term:?} acts on {} qubits, model has {n}", p.num_qubits()));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    fn outcomes(&self) -> usize {
        match &self.povm {
            PovmSpec::Computational => 1usize << self.model.num_qubits.min(MAX_QUBITS),
            PovmSpec::Explicit { effects } => effects.len(),
        }
    }

    fn num_params(&self) -> usize {
        self.model.g_terms.len() + self.model.h_terms.len()
    }

    /// Every problem found, in a fixed order; empty when the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let n = self.model.num_qubits;
        if !(1..=MAX_QUBITS).contains(&n) {
            errs.push(format!("model.num_qubits must be in 1..={MAX_QUBITS}, got {n}"));
        }
        if self.model.g_terms.is_empty() {
            errs.push("model.g_terms must contain at least one term".into());
        }
        for (what, terms) in [("g_terms", &self.model.g_terms), ("h_terms", &self.model.h_terms)] {
            for (i, t) in terms.iter().enumerate() {
                if let Err(e) = pauli_ok(t, n) {
                    errs.push(format!("model.{what}[{i}]: {e}"));
                }
            }
        }
        let d = 1usize << n.min(MAX_QUBITS);
        if let PovmSpec::Explicit { effects } = &self.povm {
            if effects.is_empty() {
                errs.push("povm.effects must not be empty".into());
            }
            for (i, e) in effects.iter().enumerate() {
                let square = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
                if !square(&e.real) || e.imag.as_ref().is_some_and(|m| !square(m)) {
                    errs.push(format!("povm.effects[{i}] must be {d}×{d}"));
                }
            }
        }
        let outcomes = self.outcomes();
        if let TargetSpec::Table(TableSpec::List(p)) = &self.target {
            if p.len() != outcomes {
                errs.push(format!("target.table has {} entries, POVM has {outcomes} outcomes", p.len()));
            }
        }
        let features_ok = |f: &Option<Vec<Vec<f64>>>, errs: &mut Vec<String>| {
            if let Some(rows) = f {
                if rows.len() != outcomes {
                    errs.push(format!("critic.features has {} rows, POVM has {outcomes} outcomes", rows.len()));
                }
            }
        };
        match &self.critic {
            CriticSpec::Linear { features, lambda, init } => {
                features_ok(features, &mut errs);
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    errs.push(format!("critic.lambda must be finite and non-negative, got {lambda}"));
                }
                if *lambda > 0.0 && matches!(self.objective, ObjectiveSpec::Renyi { .. }) {
                    errs.push("critic.lambda > 0 is only supported with the dv objective".into());
                }
                let width = features.as_ref().and_then(|r| r.first().map(Vec::len)).unwrap_or(outcomes);
                if let Some(w) = init {
                    if w.len() != width {
                        errs.push(format!("critic.init has {} entries, expected {width}", w.len()));
                    }
                }
            }
            CriticSpec::Mlp { features, hidden, .. } => {
                features_ok(features, &mut errs);
                if hidden.contains(&0) {
                    errs.push("critic.hidden layer sizes must be positive".into());
                }
            }
        }
        if let ObjectiveSpec::Renyi { alpha } = self.objective {
            if !(alpha > 0.0 && alpha.is_finite()) || alpha == 1.0 {
                errs.push(format!("objective.alpha must be positive and differ from 1, got {alpha}"));
            }
        }
        if let ModeSpec::Shots { epsilon, delta } = self.mode {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                errs.push(format!("mode.epsilon must be positive, got {epsilon}"));
            }
            if !(delta > 0.0 && delta < 1.0) {
                errs.push(format!("mode.delta must lie in (0, 1), got {delta}"));
            }
        }
        if let Err(e) = self.optimizer.schedule().validate(self.optimizer.algorithm.into()) {
            errs.push(format!("optimizer: {e}"));
        }
        if let Some(g) = &self.init.gamma {
            if g.len() != self.num_params() {
                errs.push(format!("init.gamma has {} entries, model has {} parameters", g.len(), self.num_params()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                errs.push("init.gamma must be finite".into());
            }
        }
        if let Some(g) = &self.calibration.payoff {
            if g.len() != outcomes {
                errs.push(format!("calibration.payoff has {} entries, POVM has {outcomes} outcomes", g.len()));
            }
        }
        errs
    }

    pub fn family(&self) -> eqbm::Result<HamiltonianFamily> {
        let parse = |v: &[String]| v.iter().map(|s| s.parse()).collect::<eqbm::Result<Vec<PauliString>>>();
        HamiltonianFamily::new(self.model.num_qubits, parse(&self.model.g_terms)?, parse(&self.model.h_terms)?)
    }

    pub fn povm(&self) -> eqbm::Result<Povm> {
        match &self.povm {
            PovmSpec::Computational => Ok(Povm::computational(self.model.num_qubits)),
            PovmSpec::Explicit { effects } => {
                let d = 1usize << self.model.num_qubits;
                let mats = effects
                    .iter()
                    .map(|e| {
                        let entries: Vec<C64> = (0..d * d)
                            .map(|k| {
                                let (i, j) = (k / d, k % d);
                                C64::new(e.real[i][j], e.imag.as_ref().map_or(0.0, |m| m[i][j]))
                            })
                            .collect();
                        ComplexMatrix::from_row_major(d, &entries)
                    })
                    .collect::<eqbm::Result<Vec<_>>>()?;
                let labels = if effects.iter().all(|e| e.label.is_some()) {
                    Some(effects.iter().map(|e| e.label.clone().unwrap()).collect())
                } else {
                    None
                };
                validate_povm(mats, labels)
            }
        }
    }

    pub fn critic(&self, outcomes: usize) -> eqbm::Result<Critic> {
        let features = |f: &Option<Vec<Vec<f64>>>| match f {
            Some(rows) => FeatureMap::new(rows.clone()),
            None => Ok(FeatureMap::one_hot(outcomes)),
        };
        match &self.critic {
            CriticSpec::Linear { features: f, lambda, init } => {
                let fm = features(f)?;
                let w = init.clone().map_or_else(|| DVector::zeros(fm.width()), DVector::from_vec);
                Ok(Critic::Linear(LinearCritic::new(fm, w, *lambda)?))
            }
            CriticSpec::Mlp { features: f, hidden, seed } => Ok(Critic::Mlp(MlpCritic::new(features(f)?, hidden, *seed)?)),
        }
    }

    pub fn divergence(&self) -> Divergence {
        match self.objective {
            ObjectiveSpec::Dv => Divergence::Dv,
            ObjectiveSpec::Renyi { alpha } => Divergence::Renyi { alpha },
        }
    }

    pub fn mode(&self) -> Mode {
        match self.mode {
            ModeSpec::Exact => Mode::Exact,
            ModeSpec::Shots { epsilon, delta } => Mode::Shots { epsilon, delta },
        }
    }

    /// Reads the target; `base` is the directory sample paths are relative to.
    pub fn target(&self, povm: &Povm, base: &Path) -> eqbm::Result<Target> {
        let lookup = |label: &str| -> eqbm::Result<usize> {
            povm.label_index(label)
                .or_else(|| label.parse::<usize>().ok().filter(|&i| i < povm.len()))
                .ok_or_else(|| eqbm::Error::UnknownOutcome(label.to_string()))
        };
        match &self.target {
            TargetSpec::Table(TableSpec::List(p)) => Ok(Target::Table(Distribution::new(p.clone())?)),
            TargetSpec::Table(TableSpec::Labeled(map)) => {
                let mut p = vec![0.0; povm.len()];
                for (label, &v) in map {
                    p[lookup(label)?] += v;
                }
                Ok(Target::Table(Distribution::new(p)?))
            }
            TargetSpec::Samples(path) => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| eqbm::Error::Config(format!("cannot read samples {}: {e}", full.display())))?;
                let samples = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(lookup)
                    .collect::<eqbm::Result<Vec<_>>>()?;
                if samples.is_empty() {
                    return Err(eqbm::Error::Config(format!("sample file {} is empty", full.display())));
                }
                Ok(Target::Samples(samples))
            }
        }
    }

    pub fn build(&self, base: &Path) -> eqbm::Result<Built> {
        let family = self.family()?;
        let povm = self.povm()?;
        let critic = self.critic(povm.len())?;
        let target = self.target(&povm, base)?;
        let target_source = match target {
            Target::Table(_) => "table",
            Target::Samples(_) => "samples",
        };
        let config = ObjectiveConfig {
            divergence: self.divergence(),
            mode: self.mode(),
            target,
        };
        let dim = family.num_params();
        let objective = BornObjective::new(family, povm, critic.clone(), config)?;
        let gamma0 = self.init.gamma.clone().map_or_else(|| DVector::zeros(dim), DVector::from_vec);
        Ok(Built {
            critic,
            objective,
            gamma0,
            target_source,
        })
    }

    pub fn calibration_payoff(&self, outcomes: usize) -> Vec<f64> {
        self.calibration.payoff.clone().unwrap_or_else(|| {
            (0..outcomes)
                .map(|z| if (z as u32).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
                .collect()
        })
    }
}
