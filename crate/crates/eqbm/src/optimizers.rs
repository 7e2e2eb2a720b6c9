//! Minimax optimizers (extragradient, two-timescale GDA, follow-the-ridge,
//! HessianFR), regularized Hessian solves and local-minimax diagnostics.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::{BornObjective, GradientBundle, HessianBlocks, MinimaxObjective};
use crate::rng::StreamKey;

pub const DIVERGENCE_LIMIT: f64 = 1e6;
pub const CONDITION_LIMIT: f64 = 1e12;
pub const MAX_RIDGE_SHIFT: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Extragradient,
    TwoTimescaleGda,
    FollowTheRidge,
    HessianFr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub eta_gamma: f64,
    pub eta_w: f64,
    pub eta_w1: f64,
    pub eta_w2: f64,
    pub iterations: usize,
    pub ridge_shift: f64,
    /// GDA only: update `w` at the already-updated `γ`.
    pub alternating: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eta_gamma: 0.02,
            eta_w: 0.2,
            eta_w1: 0.2,
            eta_w2: 0.05,
            iterations: 1000,
            ridge_shift: 1e-8,
            alternating: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self, algorithm: Algorithm) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !positive(self.eta_gamma) || !positive(self.eta_w) {
            return Err(Error::Config(format!(
                "step sizes must be positive, got η_γ = {}, η_w = {}",
                self.eta_gamma, self.eta_w
            )));
        }
        if !nonneg(self.eta_w1) || !nonneg(self.eta_w2) || !nonneg(self.ridge_shift) {
            return Err(Error::Config("η_w1, η_w2 and the ridge shift must be non-negative".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iteration count must be positive".into()));
        }
        if algorithm == Algorithm::TwoTimescaleGda {
            if self.eta_gamma >= self.eta_w {
                return Err(Error::Config(format!(
                    "two-timescale GDA needs η_γ < η_w, got {} ≥ {}",
                    self.eta_gamma, self.eta_w
                )));
            }
            if self.eta_gamma / self.eta_w > 0.1 {
                log::warn!(
                    "timescale ratio η_γ/η_w = {:.3} exceeds 0.1",
                    self.eta_gamma / self.eta_w
                );
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub gamma: DVector<f64>,
    pub w: DVector<f64>,
    pub iteration: usize,
}

impl OptState {
    pub fn new(gamma: DVector<f64>, w: DVector<f64>) -> Self {
        Self { gamma, w, iteration: 0 }
    }
}

/// Quantities at the iterate entering an iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub f_value: f64,
    pub grad_gamma_norm: f64,
    pub grad_w_norm: f64,
    /// `D(p‖q_γ)` when the objective has a model behind it.
    pub rel_entropy: Option<f64>,
    /// Shots consumed up to and including this iteration.
    pub shots_cumulative: u64,
    pub elapsed: Duration,
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

impl TraceRecord {
    /// Wall-clock time is left out so reruns produce identical files.
    pub const CSV_HEADER: &'static str =
        "iteration,f_value,grad_gamma_norm,grad_w_norm,rel_entropy_exact,shots_cumulative";

    /// One CSV line (no newline); floats use the shortest round-trip form.
    pub fn csv_row(&self) -> String {
        let rel = self.rel_entropy.map(fmt_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            fmt_float(self.f_value),
            fmt_float(self.grad_gamma_norm),
            fmt_float(self.grad_w_norm),
            rel,
            self.shots_cumulative
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub state: OptState,
    pub trace: Vec<TraceRecord>,
}

fn check_finite(iteration: usize, what: &str, v: &DVector<f64>, limit: f64) -> Result<()> {
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || x.abs() > limit) {
        return Err(Error::Diverged {
            iteration,
            detail: format!("{what}[{i}] = {x}"),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSolution {
    pub x: DVector<f64>,
    /// Shift actually applied.
    pub shift: f64,
    pub condition: f64,
}

/// Solves `(H − shift·I) x = b` for symmetric `H`. When the shifted matrix
/// has condition number above 1e12, the shift grows tenfold (from at least
/// 1e-12) up to 1e-2 before giving up.
pub fn solve_ridge(h: &DMatrix<f64>, b: &DVector<f64>, shift: f64) -> Result<RidgeSolution> {
    Ok(solve_ridge_many(h, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), shift)?.into_vector())
}

struct RidgeMany {
    x: DMatrix<f64>,
    shift: f64,
    condition: f64,
}

impl RidgeMany {
    fn into_vector(self) -> RidgeSolution {
        RidgeSolution {
            x: self.x.column(0).into_owned(),
            shift: self.shift,
            condition: self.condition,
        }
    }
}

fn solve_ridge_many(h: &DMatrix<f64>, b: &DMatrix<f64>, shift: f64) -> Result<RidgeMany> {
    if !h.is_square() || h.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: b.nrows(),
        });
    }
    if shift.is_nan() || shift < 0.0 {
        return Err(Error::Argument(format!("ridge shift {shift} must be non-negative")));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut s = shift;
    loop {
        let shifted: Vec<f64> = eig.eigenvalues.iter().map(|l| l - s).collect();
        let (lo, hi) = shifted
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l.abs()), hi.max(l.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition <= CONDITION_LIMIT {
            if s != shift {
                log::warn!("Hessian solve escalated ridge shift to {s:e} (condition {condition:e})");
            }
            let vt_b = eig.eigenvectors.transpose() * b;
            let scaled = DMatrix::from_fn(vt_b.nrows(), vt_b.ncols(), |i, j| vt_b[(i, j)] / shifted[i]);
            return Ok(RidgeMany {
                x: &eig.eigenvectors * scaled,
                shift: s,
                condition,
            });
        }
        if s >= MAX_RIDGE_SHIFT {
            return Err(Error::IllConditioned { condition, shift: s });
        }
        s = (s.max(1e-12) * 10.0).min(MAX_RIDGE_SHIFT);
    }
}

/// Runs `schedule.iterations` steps of `algorithm`, handing each trace
/// record to `sink` as it is produced.
pub fn run_with_sink<O, S>(
    algorithm: Algorithm,
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
    mut sink: S,
) -> Result<OptState>
where
    O: MinimaxObjective + ?Sized,
    S: FnMut(&TraceRecord) -> Result<()>,
{
    schedule.validate(algorithm)?;
    if state0.gamma.len() != obj.dim_gamma() || state0.w.len() != obj.dim_w() {
        return Err(Error::Length {
            what: "initial state",
            expected: obj.dim_gamma() + obj.dim_w(),
            found: state0.gamma.len() + state0.w.len(),
        });
    }
    check_finite(state0.iteration, "gamma", &state0.gamma, DIVERGENCE_LIMIT)?;
    check_finite(state0.iteration, "w", &state0.w, DIVERGENCE_LIMIT)?;
    let start = Instant::now();
    let mut state = state0;
    for _ in 0..schedule.iterations {
        let it = state.iteration;
        let k = key.child(it as u64);
        let g = obj.gradients(&state.gamma, &state.w, k.child(0))?;
        let f_value = obj.value(&state.gamma, &state.w, k.child(3))?;
        check_finite(it, "grad_gamma", &g.grad_gamma, f64::INFINITY)?;
        check_finite(it, "grad_w", &g.grad_w, f64::INFINITY)?;
        let rel_entropy = obj.relative_entropy(&state.gamma);
        let (gamma, w) = step(algorithm, obj, schedule, &state, &g, k)?;
        check_finite(it, "gamma", &gamma, DIVERGENCE_LIMIT)?;
        check_finite(it, "w", &w, DIVERGENCE_LIMIT)?;
        sink(&TraceRecord {
            iteration: it,
            f_value,
            grad_gamma_norm: g.grad_gamma.norm(),
            grad_w_norm: g.grad_w.norm(),
            rel_entropy,
            shots_cumulative: obj.shots_used(),
            elapsed: start.elapsed(),
        })?;
        state = OptState {
            gamma,
            w,
            iteration: it + 1,
        };
    }
    Ok(state)
}

pub fn run<O: MinimaxObjective + ?Sized>(
    algorithm: Algorithm,
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
) -> Result<RunOutcome> {
    let mut trace = Vec::with_capacity(schedule.iterations);
    let state = run_with_sink(algorithm, obj, schedule, state0, key, |r| {
        trace.push(r.clone());
        Ok(())
    })?;
    Ok(RunOutcome { state, trace })
}

fn step<O: MinimaxObjective + ?Sized>(
    algorithm: Algorithm,
    obj: &O,
    s: &Schedule,
    state: &OptState,
    g: &GradientBundle,
    key: StreamKey,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (gamma, w) = (&state.gamma, &state.w);
    match algorithm {
        Algorithm::Extragradient => {
            let gamma_mid = gamma - &g.grad_gamma * s.eta_gamma;
            let w_mid = w + &g.grad_w * s.eta_w;
            let g_mid = obj.gradients(&gamma_mid, &w_mid, key.child(1))?;
            Ok((gamma - g_mid.grad_gamma * s.eta_gamma, w + g_mid.grad_w * s.eta_w))
        }
        Algorithm::TwoTimescaleGda => {
            let gamma_next = gamma - &g.grad_gamma * s.eta_gamma;
            let grad_w = if s.alternating {
                obj.gradients(&gamma_next, w, key.child(1))?.grad_w
            } else {
                g.grad_w.clone()
            };
            Ok((gamma_next, w + grad_w * s.eta_w))
        }
        Algorithm::FollowTheRidge | Algorithm::HessianFr => {
            let HessianBlocks { h_ww, h_wgamma } = obj.hessians(gamma, w, key.child(2))?;
            let gamma_next = gamma - &g.grad_gamma * s.eta_gamma;
            let rhs = DMatrix::from_columns(&[h_wgamma * &g.grad_gamma, g.grad_w.clone()]);
            let sol = solve_ridge_many(&h_ww, &rhs, s.ridge_shift)?.x;
            let ridge = sol.column(0) * s.eta_gamma;
            let u = if algorithm == Algorithm::FollowTheRidge {
                &g.grad_w * s.eta_w + ridge
            } else {
                &g.grad_w * s.eta_w1 - sol.column(1) * s.eta_w2 + ridge
            };
            Ok((gamma_next, w + u))
        }
    }
}

pub fn extragradient_run<O: MinimaxObjective + ?Sized>(
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
) -> Result<RunOutcome> {
    run(Algorithm::Extragradient, obj, schedule, state0, key)
}

pub fn two_timescale_gda_run<O: MinimaxObjective + ?Sized>(
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
) -> Result<RunOutcome> {
    run(Algorithm::TwoTimescaleGda, obj, schedule, state0, key)
}

pub fn follow_the_ridge_run<O: MinimaxObjective + ?Sized>(
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
) -> Result<RunOutcome> {
    run(Algorithm::FollowTheRidge, obj, schedule, state0, key)
}

pub fn hessian_fr_run<O: MinimaxObjective + ?Sized>(
    obj: &O,
    schedule: &Schedule,
    state0: OptState,
    key: StreamKey,
) -> Result<RunOutcome> {
    run(Algorithm::HessianFr, obj, schedule, state0, key)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimaxTolerances {
    pub stationary: f64,
    pub strict_max: f64,
    pub schur_psd: f64,
    pub fd_step: f64,
}

impl Default for MinimaxTolerances {
    fn default() -> Self {
        Self {
            stationary: 1e-4,
            strict_max: -1e-6,
            schur_psd: -1e-5,
            fd_step: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalMinimaxReport {
    pub grad_gamma_norm: f64,
    pub grad_w_norm: f64,
    pub h_ww_max_eig: f64,
    pub schur_min_eig: f64,
    pub stationary: bool,
    pub strict_max_in_w: bool,
    pub schur_psd: bool,
}

impl LocalMinimaxReport {
    pub fn is_local_minimax(&self) -> bool {
        self.stationary && self.strict_max_in_w && self.schur_psd
    }
}

/// Checks stationarity, strict concavity in `w` and positive
/// semi-definiteness of `H_γγ − H_γw H_ww⁻¹ H_wγ`, with `H_γγ` from central
/// differences of the `γ`-gradient.
pub fn local_minimax_check<O: MinimaxObjective + ?Sized>(
    obj: &O,
    gamma: &DVector<f64>,
    w: &DVector<f64>,
    tol: MinimaxTolerances,
    key: StreamKey,
) -> Result<LocalMinimaxReport> {
    let g = obj.gradients(gamma, w, key)?;
    let h = obj.hessians(gamma, w, key)?;
    let m = obj.dim_gamma();
    let mut h_gg = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut up = gamma.clone();
        up[i] += tol.fd_step;
        let mut down = gamma.clone();
        down[i] -= tol.fd_step;
        let d = (obj.gradients(&up, w, key)?.grad_gamma - obj.gradients(&down, w, key)?.grad_gamma) / (2.0 * tol.fd_step);
        h_gg.set_column(i, &d);
    }
    let h_gg = (&h_gg + h_gg.transpose()) * 0.5;
    let h_ww_max_eig = if h.h_ww.is_empty() {
        f64::NEG_INFINITY
    } else {
        ((&h.h_ww + h.h_ww.transpose()) * 0.5).symmetric_eigenvalues().max()
    };
    let schur = if h.h_ww.is_empty() {
        h_gg
    } else {
        let x = solve_ridge_many(&h.h_ww, &h.h_wgamma, 0.0)?.x;
        &h_gg - h.h_wgamma.transpose() * x
    };
    let schur_min_eig = ((&schur + schur.transpose()) * 0.5).symmetric_eigenvalues().min();
    let (gn, wn) = (g.grad_gamma.norm(), g.grad_w.norm());
    Ok(LocalMinimaxReport {
        grad_gamma_norm: gn,
        grad_w_norm: wn,
        h_ww_max_eig,
        schur_min_eig,
        stationary: gn < tol.stationary && wn < tol.stationary,
        strict_max_in_w: h_ww_max_eig < tol.strict_max,
        schur_psd: schur_min_eig >= tol.schur_psd,
    })
}

/// `−f`: turns `sup_γ inf_w f` into `inf_γ sup_w (−f)` so the optimizers
/// run unchanged.
#[derive(Debug)]
pub struct Flipped<O>(O);

impl<O: MinimaxObjective> Flipped<O> {
    pub fn new(inner: O) -> Self {
        Self(inner)
    }

    pub fn inner(&self) -> &O {
        &self.0
    }

    pub fn into_inner(self) -> O {
        self.0
    }
}

impl<O: MinimaxObjective> MinimaxObjective for Flipped<O> {
    fn dim_gamma(&self) -> usize {
        self.0.dim_gamma()
    }

    fn dim_w(&self) -> usize {
        self.0.dim_w()
    }

    fn value(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<f64> {
        Ok(-self.0.value(gamma, w, key)?)
    }

    fn gradients(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<GradientBundle> {
        let g = self.0.gradients(gamma, w, key)?;
        Ok(GradientBundle {
            grad_gamma: -g.grad_gamma,
            grad_w: -g.grad_w,
        })
    }

    fn hessians(&self, gamma: &DVector<f64>, w: &DVector<f64>, key: StreamKey) -> Result<HessianBlocks> {
        let h = self.0.hessians(gamma, w, key)?;
        Ok(HessianBlocks {
            h_ww: -h.h_ww,
            h_wgamma: -h.h_wgamma,
        })
    }

    fn shots_used(&self) -> u64 {
        self.0.shots_used()
    }

    fn relative_entropy(&self, gamma: &DVector<f64>) -> Option<f64> {
        self.0.relative_entropy(gamma)
    }
}

/// Flips a Rényi objective of order `α ∈ (0, 1)`, whose natural problem is
/// maximin. Objectives that are already minimax are rejected.
pub fn orientation_flip(obj: BornObjective) -> Result<Flipped<BornObjective>> {
    if obj.config().divergence.is_minimax() {
        return Err(Error::Argument(
            "orientation flip applies only to Renyi objectives with order below 1".into(),
        ));
    }
    Ok(Flipped(obj))
}

/// `f(γ, w) = ½γᵀAγ + γᵀBw + ½wᵀCw`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticToy {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl QuadraticToy {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (m, l) = (a.nrows(), c.nrows());
        if !a.is_square() || !c.is_square() || b.shape() != (m, l) {
            return Err(Error::Argument("quadratic toy blocks have inconsistent shapes".into()));
        }
        Ok(Self {
            a: (&a + a.transpose()) * 0.5,
            b,
            c: (&c + c.transpose()) * 0.5,
        })
    }

    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        let m = |x| DMatrix::from_element(1, 1, x);
        Self { a: m(a), b: m(b), c: m(c) }
    }
}

impl MinimaxObjective for QuadraticToy {
    fn dim_gamma(&self) -> usize {
        self.a.nrows()
    }

    fn dim_w(&self) -> usize {
        self.c.nrows()
    }

    fn value(&self, gamma: &DVector<f64>, w: &DVector<f64>, _key: StreamKey) -> Result<f64> {
        Ok(0.5 * gamma.dot(&(&self.a * gamma)) + gamma.dot(&(&self.b * w)) + 0.5 * w.dot(&(&self.c * w)))
    }

    fn gradients(&self, gamma: &DVector<f64>, w: &DVector<f64>, _key: StreamKey) -> Result<GradientBundle> {
        Ok(GradientBundle {
            grad_gamma: &self.a * gamma + &self.b * w,
            grad_w: self.b.transpose() * gamma + &self.c * w,
        })
    }

    fn hessians(&self, _gamma: &DVector<f64>, _w: &DVector<f64>, _key: StreamKey) -> Result<HessianBlocks> {
        Ok(HessianBlocks {
            h_ww: self.c.clone(),
            h_wgamma: self.b.transpose(),
        })
    }
}
