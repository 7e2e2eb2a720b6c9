//! Subcommand bodies. Each writes its artifacts under the output directory
//! and returns an error classified by exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use eqbm::channels::{calibrate_estimators, CalibrationInstance};
use eqbm::critic::{Critic, LinearCritic};
use eqbm::model::{relative_entropy, single_qubit_closed_form, Distribution, HamiltonianFamily, ModelSnapshot, Povm};
use eqbm::objective::{
    finite_difference_check, maximize_inner, BornObjective, Divergence, InnerOptions, MinimaxObjective, Mode,
    ObjectiveConfig,
};
use eqbm::optimizers::{local_minimax_check, run_with_sink, MinimaxTolerances, OptState, TraceRecord};
use eqbm::random::random_vector;
use eqbm::rng::StreamKey;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub const GRAD_TOL: f64 = 1e-5;
pub const HESS_TOL: f64 = 1e-3;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Validation(Vec<String>),
    /// Exit 3.
    Divergence(String),
    /// Exit 4.
    CheckFailed(String),
    /// Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(errs) => {
                writeln!(f, "invalid configuration ({} problem(s)):", errs.len())?;
                for e in errs {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
            CliError::Divergence(m) => write!(f, "run diverged: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

fn invalid(e: eqbm::Error) -> CliError {
    CliError::Validation(vec![e.to_string()])
}

fn during_run(e: eqbm::Error) -> CliError {
    match e {
        eqbm::Error::Diverged { .. } | eqbm::Error::IllConditioned { .. } | eqbm::Error::Numerical(_) => {
            CliError::Divergence(e.to_string())
        }
        other => invalid(other),
    }
}

/// The resolved config together with where relative paths point.
pub struct Context {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Context {
    pub fn load(path: Option<&Path>, seed: Option<u64>, out: PathBuf, required: bool) -> Result<Option<Self>, CliError> {
        let Some(path) = path else {
            return if required {
                Err(CliError::Validation(vec!["--config <path> is required for this subcommand".into()]))
            } else {
                Ok(None)
            };
        };
        let mut config = ExperimentConfig::load(path).map_err(|e| CliError::Validation(vec![e]))?;
        if let Some(s) = seed {
            config.master_seed = s;
        }
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(CliError::Validation(errs));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Some(Self { config, base, out }))
    }
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(io)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let built = cfg.build(&ctx.base).map_err(invalid)?;
    prepare_out(&ctx.out)?;
    write_json(&ctx.out.join("config.resolved.json"), cfg)?;

    let obj = &built.objective;
    let key = StreamKey::new(cfg.master_seed);
    let state0 = OptState::new(built.gamma0.clone(), built.critic.params().clone());
    let trace_path = ctx.out.join("trace.csv");
    let mut sink = BufWriter::new(File::create(&trace_path).map_err(io)?);
    writeln!(sink, "{}", TraceRecord::CSV_HEADER).map_err(io)?;
    let schedule = cfg.optimizer.schedule();
    let result = run_with_sink(cfg.optimizer.algorithm.into(), obj, &schedule, state0, key.child(1), |r| {
        writeln!(sink, "{}", r.csv_row()).map_err(|e| eqbm::Error::Config(format!("cannot write trace: {e}")))
    });
    sink.flush().map_err(io)?;
    let state = result.map_err(during_run)?;

    let exact = matches!(cfg.mode(), Mode::Exact);
    let final_key = key.child(2);
    let final_value = obj.value(&state.gamma, &state.w, final_key).map_err(during_run)?;
    let final_d = obj.relative_entropy(&state.gamma);
    let check = if exact {
        let r = local_minimax_check(obj, &state.gamma, &state.w, MinimaxTolerances::default(), final_key)
            .map_err(during_run)?;
        Some(json!({
            "grad_gamma_norm": r.grad_gamma_norm,
            "grad_w_norm": r.grad_w_norm,
            "h_ww_max_eig": r.h_ww_max_eig,
            "schur_min_eig": r.schur_min_eig,
            "stationary": r.stationary,
            "strict_max_in_w": r.strict_max_in_w,
            "schur_psd": r.schur_psd,
        }))
    } else {
        None
    };
    let summary = json!({
        "iterations": state.iteration,
        "final_objective": final_value,
        "final_rel_entropy": if exact { final_d } else { None },
        "final_rel_entropy_simulated": final_d,
        "local_minimax": check,
        "total_shots": obj.shots_used(),
        "clamp_events": obj.clamp_events(),
        "target_source": built.target_source,
        "final_gamma": vec_of(&state.gamma),
        "final_w": vec_of(&state.w),
        "master_seed": cfg.master_seed,
    });
    write_json(&ctx.out.join("summary.json"), &summary)?;
    println!(
        "trained {} iterations: f = {final_value:.6e}, D(p||q) = {}",
        state.iteration,
        final_d.map_or("n/a".into(), |d| format!("{d:.6e}"))
    );
    Ok(())
}

pub fn grad_check(ctx: &Context, trials: usize) -> Result<(), CliError> {
    let mut cfg = ctx.config.clone();
    if !matches!(cfg.mode(), Mode::Exact) {
        log::info!("grad-check runs in exact mode; ignoring the configured shot mode");
        cfg.mode = crate::config::ModeSpec::Exact;
    }
    let built = cfg.build(&ctx.base).map_err(invalid)?;
    prepare_out(&ctx.out)?;
    let obj = &built.objective;
    let mut rng = StreamKey::new(cfg.master_seed).child(3).rng();
    let mut rows = Vec::with_capacity(trials);
    let mut failures = Vec::new();
    for t in 0..trials {
        let gamma = random_vector(&mut rng, obj.dim_gamma(), 1.0);
        let w = built.critic.params() + random_vector(&mut rng, obj.dim_w(), 0.8);
        let rep = finite_difference_check(obj, &gamma, &w, StreamKey::new(0)).map_err(during_run)?;
        for (name, err) in rep.blocks() {
            let tol = if name.starts_with("grad") { GRAD_TOL } else { HESS_TOL };
            if err > tol {
                failures.push(format!("trial {t}: {name} relative error {err:.3e} > {tol:e}"));
            }
        }
        rows.push(json!({
            "trial": t,
            "grad_gamma": rep.grad_gamma,
            "grad_w": rep.grad_w,
            "hessian_ww": rep.h_ww,
            "hessian_wgamma": rep.h_wgamma,
        }));
    }
    let worst = |key: &str| rows.iter().map(|r| r[key].as_f64().unwrap()).fold(0.0, f64::max);
    let report = json!({
        "trials": trials,
        "tolerances": { "gradient": GRAD_TOL, "hessian": HESS_TOL },
        "max_error": {
            "grad_gamma": worst("grad_gamma"),
            "grad_w": worst("grad_w"),
            "hessian_ww": worst("hessian_ww"),
            "hessian_wgamma": worst("hessian_wgamma"),
        },
        "failures": failures,
        "per_trial": rows,
    });
    write_json(&ctx.out.join("grad_check.json"), &report)?;
    for name in ["grad_gamma", "grad_w", "hessian_ww", "hessian_wgamma"] {
        println!("{name:>15}: max relative error {:.3e}", worst(name));
    }
    if failures.is_empty() {
        println!("grad-check passed ({trials} trials)");
        Ok(())
    } else {
        Err(CliError::CheckFailed(failures.join("; ")))
    }
}

fn calibration_instance(ctx: Option<&Context>) -> Result<CalibrationInstance, CliError> {
    let Some(ctx) = ctx else {
        return Ok(CalibrationInstance::standard());
    };
    let cfg = &ctx.config;
    let (epsilon, delta) = match cfg.mode() {
        Mode::Shots { epsilon, delta } => (epsilon, delta),
        Mode::Exact => return Err(CliError::Validation(vec!["calibrate needs mode.kind = \"shots\"".into()])),
    };
    let family = cfg.family().map_err(invalid)?;
    let povm = cfg.povm().map_err(invalid)?;
    let gamma = cfg.init.gamma.clone().unwrap_or_else(|| vec![0.0; family.num_params()]);
    let payoff = cfg.calibration_payoff(povm.len());
    Ok(CalibrationInstance {
        family,
        povm,
        gamma,
        payoff,
        epsilon,
        delta,
    })
}

pub fn calibrate(ctx: Option<&Context>, seed: Option<u64>, out: &Path, repetitions: usize) -> Result<(), CliError> {
    let inst = calibration_instance(ctx)?;
    let seed = seed.or(ctx.map(|c| c.config.master_seed)).unwrap_or(0);
    prepare_out(out)?;
    let report = calibrate_estimators(&inst, repetitions, StreamKey::new(seed).child(4)).map_err(during_run)?;
    println!(
        "shots per estimate: anticommutator {}, commutator {}",
        report.shots_anticommutator, report.shots_commutator
    );
    let mut terms = Vec::new();
    for t in &report.terms {
        println!(
            "{:>6}: exact {:+.6} mean {:+.6} bias {:+.2e} (se {:.2e}) failure rate {:.4} [{}]",
            t.term,
            t.exact,
            t.mean,
            t.bias,
            t.standard_error,
            t.failure_rate,
            if t.passes() { "ok" } else { "FAIL" }
        );
        terms.push(json!({
            "term": t.term,
            "shots": t.shots,
            "exact": t.exact,
            "mean": t.mean,
            "bias": t.bias,
            "standard_error": t.standard_error,
            "failure_rate": t.failure_rate,
            "pass": t.passes(),
        }));
    }
    let failures = report.failures();
    write_json(
        &out.join("calibration.json"),
        &json!({
            "epsilon": report.epsilon,
            "delta": report.delta,
            "repetitions": report.repetitions,
            "shots_anticommutator": report.shots_anticommutator,
            "shots_commutator": report.shots_commutator,
            "gamma": inst.gamma,
            "payoff": inst.payoff,
            "seed": seed,
            "terms": terms,
            "failures": failures,
        }),
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failures.join("; ")))
    }
}

/// `D(δ_0 ‖ q)` for the one-qubit model `θ_X σ_X + θ_Z σ_Z`, through the full simulator.
pub fn pipeline_point_mass_entropy(theta_x: f64, theta_z: f64) -> eqbm::Result<f64> {
    let family = HamiltonianFamily::from_letters(&["X", "Z"], &[])?;
    let q = ModelSnapshot::from_gamma(&family, &[theta_x, theta_z])?.born(&Povm::computational(1))?;
    Ok(relative_entropy(&Distribution::point_mass(2, 0), &q))
}

pub fn nonconvexity(out: &Path, points: usize, mu_min: f64, mu_max: f64) -> Result<(), CliError> {
    if points < 2 || mu_max.is_nan() || mu_min.is_nan() || mu_max <= mu_min {
        return Err(CliError::Validation(vec![format!(
            "need at least 2 points on a non-empty interval, got {points} on [{mu_min}, {mu_max}]"
        )]));
    }
    prepare_out(out)?;
    let closed = |mu: f64| single_qubit_closed_form(mu, 1.0).rel_ent_vs_point_mass;
    let mut csv = String::from("mu,closed_form,pipeline,abs_diff\n");
    let mut max_diff: f64 = 0.0;
    let mut max_asym: f64 = 0.0;
    for i in 0..points {
        let mu = mu_min + (mu_max - mu_min) * i as f64 / (points - 1) as f64;
        let c = closed(mu);
        let p = pipeline_point_mass_entropy(mu, 1.0).map_err(during_run)?;
        max_diff = max_diff.max((c - p).abs());
        max_asym = max_asym.max((c - closed(-mu)).abs());
        csv.push_str(&format!("{mu},{c},{p},{:e}\n", (c - p).abs()));
    }
    fs::write(out.join("nonconvexity.csv"), csv).map_err(io)?;
    let (d0, dh, d1) = (closed(0.0), closed(0.5), closed(1.0));
    let chord = 0.5 * (d0 + d1);
    let violated = dh > chord;
    let report = json!({
        "points": points,
        "mu_range": [mu_min, mu_max],
        "max_abs_diff": max_diff,
        "max_even_asymmetry": max_asym,
        "d_at_0": d0,
        "d_at_half": dh,
        "d_at_1": d1,
        "chord_midpoint": chord,
        "convexity_violated": violated,
    });
    write_json(&out.join("nonconvexity.json"), &report)?;
    println!("D(0) = {d0:.6}, D(0.5) = {dh:.6}, D(1) = {d1:.6}; chord midpoint {chord:.6}");
    println!("closed form vs pipeline: max |diff| = {max_diff:.3e}");
    if max_diff > 1e-10 {
        return Err(CliError::CheckFailed(format!("closed form and pipeline differ by {max_diff:e}")));
    }
    if !violated {
        return Err(CliError::CheckFailed("midpoint convexity was not violated".into()));
    }
    println!("nonconvexity certified: D(0.5) > (D(0) + D(1))/2");
    Ok(())
}

pub fn dv_exactness(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let family = cfg.family().map_err(invalid)?;
    let povm = cfg.povm().map_err(invalid)?;
    let target = cfg.target(&povm, &ctx.base).map_err(invalid)?;
    let m = povm.len();
    let critic = Critic::Linear(LinearCritic::tabular(m, 0.0).map_err(invalid)?);
    let config = ObjectiveConfig {
        divergence: Divergence::Dv,
        mode: Mode::Exact,
        target,
    };
    let obj = BornObjective::new(family.clone(), povm, critic, config).map_err(invalid)?;
    let gamma = DVector::from_vec(cfg.init.gamma.clone().unwrap_or_else(|| vec![0.0; family.num_params()]));
    prepare_out(&ctx.out)?;
    let p = obj.target_distribution().clone();
    let q = obj.born(&gamma).map_err(during_run)?;
    let d = relative_entropy(&p, &q);
    let key = StreamKey::new(cfg.master_seed);
    if d.is_infinite() {
        write_json(
            &ctx.out.join("dv_exactness.json"),
            &json!({ "rel_entropy": "inf", "note": "target puts mass where the model has none" }),
        )?;
        println!("D(p||q) = +inf (q vanishes on the support of p); finite check skipped");
        return Ok(());
    }
    let r = maximize_inner(&obj, &gamma, &DVector::zeros(m), InnerOptions::default(), key).map_err(during_run)?;
    let gap = (r.value - d).abs();
    let maximizer_err = (0..m)
        .filter(|&z| p.prob(z) > 0.0)
        .map(|z| (r.w[z] - (p.prob(z) / q.prob(z)).ln()).abs())
        .fold(0.0, f64::max);
    let report = json!({
        "rel_entropy": d,
        "inner_max": r.value,
        "abs_gap": gap,
        "maximizer_max_deviation": maximizer_err,
        "inner_iterations": r.iterations,
        "inner_grad_norm": r.grad_norm,
        "maximizer": vec_of(&r.w),
        "target": p.probs(),
        "model": q.probs(),
    });
    write_json(&ctx.out.join("dv_exactness.json"), &report)?;
    println!("D(p||q) = {d:.9}, inner max = {:.9}, gap {gap:.3e}", r.value);
    if gap > 1e-6 || maximizer_err > 1e-4 {
        return Err(CliError::CheckFailed(format!(
            "inner maximum off by {gap:e} (maximizer deviation {maximizer_err:e})"
        )));
    }
    Ok(())
}
