//! Single runs and ε-ladders: initial data, integration, diagnostics and the
//! ladder-level checks. Ladder members run on a rayon pool and share nothing
//! mutable, so the worker count never changes a number.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::diagnostics::{
    cauchy_consistent, convergence_metric, default_window, diagnose, fitted_exponent, relative_spread,
    ConvergenceReport, DiagnosticsReport, Flag,
};
use crate::entropy_pairs::{dissipation_residual, DissipationReport, MechanicalPair};
use crate::error::{Error, Result};
use crate::initial_data::{ApproxInitialData, Profile, RawInitialData};
use crate::lagrangian_solver::{run, MassGridState, Trajectory};
use crate::nonlocal_forces::interaction_energy;

fn param(name: &'static str, reason: &str) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}

/// Initial-data functionals of one ladder member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSummary {
    pub epsilon: f64,
    pub halfwidth: f64,
    /// `|∫ρ₀^ε - M| / M`.
    pub mass_error: f64,
    pub e0: f64,
    pub e1: f64,
    pub e1_over_eps: f64,
    pub second_moment: f64,
    /// `|∫x²ρ₀^ε - ∫x²ρ₀|`.
    pub second_moment_error: f64,
    pub interaction_energy: f64,
    /// Against the interaction energy of `ρ₀`.
    pub interaction_error: f64,
    /// Total stress at `-b` and `b`, relative to the pressure scale there.
    pub boundary_stress: (f64, f64),
    /// Sampling step of the initial profiles.
    pub dx: f64,
}

/// Interaction energy of the raw density sampled on `points` cells.
pub fn raw_interaction_energy(raw: &RawInitialData, points: usize) -> f64 {
    let r = raw.support_radius();
    let p = Profile::sample(-r, r, points + 1, |x| raw.rho0(x));
    let h = p.h();
    let centers: Vec<f64> = (0..points).map(|i| p.x(i) + 0.5 * h).collect();
    let mass: Vec<f64> = (0..points).map(|i| 0.5 * h * (p.values[i] + p.values[i + 1])).collect();
    interaction_energy(&centers, &mass).0
}

pub fn summarize_initial(data: &ApproxInitialData, raw: &RawInitialData, law: &crate::pressure_laws::PressureLaw, raw_interaction: f64) -> InitialSummary {
    let m2 = data.second_moment();
    let ie = data.interaction_energy().0;
    InitialSummary {
        epsilon: data.epsilon,
        halfwidth: data.halfwidth,
        mass_error: (data.mass() - raw.total_mass).abs() / raw.total_mass,
        e0: data.e0_eps,
        e1: data.e1_eps,
        e1_over_eps: data.e1_eps / data.epsilon,
        second_moment: m2,
        second_moment_error: (m2 - raw.second_moment).abs(),
        interaction_energy: ie,
        interaction_error: (ie - raw_interaction).abs(),
        boundary_stress: data.boundary_stress_residual(law),
        dx: data.rho0_eps.h(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberResult {
    pub epsilon: f64,
    pub initial: InitialSummary,
    pub report: DiagnosticsReport,
    pub dissipation: DissipationReport,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

/// Builds the initial data for `epsilon` and its mass-grid state.
pub fn prepare(cfg: &RunConfig, epsilon: f64) -> Result<(ApproxInitialData, MassGridState)> {
    let law = cfg.law.build()?;
    let raw = cfg.raw_data()?;
    let data = ApproxInitialData::build(&raw, &law, &cfg.approx_params(epsilon))?;
    let state = MassGridState::from_initial(&data, &cfg.grid)?;
    Ok((data, state))
}

/// Window used by every member: configured, or the default of the first
/// ε's initial state.
pub fn ladder_window(cfg: &RunConfig, first_eps: f64) -> Result<[f64; 2]> {
    if let Some(w) = cfg.diagnostics.window {
        return Ok(w);
    }
    let (_, state) = prepare(cfg, first_eps)?;
    Ok(default_window(&state))
}

/// One simulation with diagnostics on `window`.
pub fn run_member(cfg: &RunConfig, epsilon: f64, window: [f64; 2]) -> Result<MemberResult> {
    let law = cfg.law.build()?;
    let raw = cfg.raw_data()?;
    let data = ApproxInitialData::build(&raw, &law, &cfg.approx_params(epsilon))?;
    let raw_ie = raw_interaction_energy(&raw, 4096);
    let initial = summarize_initial(&data, &raw, &law, raw_ie);
    let traj = run(&data, &law, &cfg.nonlocal, &cfg.solver, &cfg.grid)?;
    let mut dcfg = cfg.diagnostics;
    dcfg.window = Some(window);
    let report = diagnose(&traj, &law, &dcfg)?;
    let dissipation = if traj.snapshots.len() >= 2 {
        dissipation_residual(&traj, &MechanicalPair::new(&law), &law, &cfg.nonlocal, window, 512)?
    } else {
        DissipationReport {
            window,
            ..Default::default()
        }
    };
    Ok(MemberResult {
        epsilon,
        initial,
        report,
        dissipation,
        trajectory: Some(traj),
    })
}

/// Single run at the configured ε.
pub fn run_single(cfg: &RunConfig) -> Result<MemberResult> {
    cfg.validate()?;
    let eps = cfg.run_epsilon().ok_or_else(|| param("epsilon", "not set"))?;
    let window = ladder_window(cfg, eps)?;
    run_member(cfg, eps, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub epsilons: Vec<f64>,
    pub window: [f64; 2],
    /// `max_t (‖Δρ‖₁ + ‖Δm‖₁)` between consecutive members.
    pub distances: Vec<f64>,
    #[serde(skip)]
    pub convergence: Vec<ConvergenceReport>,
    pub eps43_budget: Vec<f64>,
    pub eps43_exponent: f64,
    pub integrability_density: Vec<f64>,
    pub integrability_velocity: Vec<f64>,
    /// Supremum over time of the BD estimate's left side, per member.
    pub bd_entropy: Vec<f64>,
    pub bd_entropy_spread: f64,
    pub e1_over_eps: Vec<f64>,
    pub second_moment_error: Vec<f64>,
    pub interaction_error: Vec<f64>,
    pub margin_smallest: f64,
    pub flags: BTreeMap<String, Flag>,
}

impl LadderReport {
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|f| f.pass)
    }
}

/// Largest ratio of a later entry over an earlier one, minus 1.
pub fn growth(v: &[f64]) -> f64 {
    let mut g = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > 0.0 {
                g = g.max(v[j] / v[i] - 1.0);
            }
        }
    }
    g
}

/// True when `v` never increases.
fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

pub fn ladder_report(members: &[MemberResult], window: [f64; 2], cfg: &RunConfig) -> Result<LadderReport> {
    if members.len() < 3 {
        return Err(param("ladder", "need at least 3 members"));
    }
    let mut convergence = Vec::new();
    for w in members.windows(2) {
        let a = w[0].trajectory.as_ref().ok_or_else(|| param("member", "trajectory dropped"))?;
        let b = w[1].trajectory.as_ref().ok_or_else(|| param("member", "trajectory dropped"))?;
        convergence.push(convergence_metric(
            a,
            b,
            window,
            cfg.diagnostics.resample_points,
            cfg.diagnostics.lq_exponent,
        )?);
    }
    let eps: Vec<f64> = members.iter().map(|m| m.epsilon).collect();
    let distances: Vec<f64> = convergence.iter().map(|c| c.sup_l1).collect();
    let e43: Vec<f64> = members.iter().map(|m| m.dissipation.eps43_budget).collect();
    let e43_exp = fitted_exponent(&eps, &e43);
    let idens: Vec<f64> = members
        .iter()
        .map(|m| m.report.integrability.map(|i| i.density).unwrap_or(f64::NAN))
        .collect();
    let ivel: Vec<f64> = members
        .iter()
        .map(|m| m.report.integrability.map(|i| i.velocity).unwrap_or(f64::NAN))
        .collect();
    let bd: Vec<f64> = members
        .iter()
        .map(|m| m.report.bd_estimate.iter().cloned().fold(0.0, f64::max))
        .collect();
    let e1: Vec<f64> = members.iter().map(|m| m.initial.e1_over_eps).collect();
    let m2e: Vec<f64> = members.iter().map(|m| m.initial.second_moment_error).collect();
    let iee: Vec<f64> = members.iter().map(|m| m.initial.interaction_error).collect();
    let margin = members.last().map(|m| m.report.margin).unwrap_or(f64::NAN);

    let mut flags = BTreeMap::new();
    let worst_step = distances
        .windows(2)
        .map(|w| w[1] / w[0] - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let cauchy = cauchy_consistent(&distances, 0.1);
    let mut f = Flag::at_most(worst_step, 0.1);
    f.pass = cauchy;
    flags.insert("cauchy_ladder".into(), f);
    flags.insert("eps43_rate".into(), Flag::at_least(e43_exp, 0.2));
    flags.insert("integrability_density_spread".into(), Flag::at_most(relative_spread(&idens), 0.1));
    flags.insert("integrability_velocity_spread".into(), Flag::at_most(relative_spread(&ivel), 0.1));
    flags.insert("bd_entropy_growth".into(), Flag::at_most(growth(&bd), 0.1));
    flags.insert("free_boundary_margin_smallest".into(), Flag::at_least(margin, 0.5));
    flags.insert("initial_e1_over_eps_growth".into(), Flag::at_most(growth(&e1), 0.1));
    let mass_err = members.iter().map(|m| m.initial.mass_error).fold(0.0, f64::max);
    flags.insert("initial_mass_exact".into(), Flag::at_most(mass_err, 1e-12));
    flags.insert(
        "initial_second_moment_converges".into(),
        Flag::at_least(if decreasing(&m2e) { 1.0 } else { 0.0 }, 1.0),
    );
    flags.insert(
        "initial_interaction_converges".into(),
        Flag::at_least(if decreasing(&iee) { 1.0 } else { 0.0 }, 1.0),
    );

    Ok(LadderReport {
        epsilons: eps,
        window,
        distances,
        convergence,
        eps43_budget: e43,
        eps43_exponent: e43_exp,
        integrability_density: idens,
        integrability_velocity: ivel,
        bd_entropy_spread: relative_spread(&bd),
        bd_entropy: bd,
        e1_over_eps: e1,
        second_moment_error: m2e,
        interaction_error: iee,
        margin_smallest: margin,
        flags,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub members: Vec<MemberResult>,
    /// `(ε, message)` for every member that failed.
    pub failures: Vec<(f64, String)>,
    pub ladder: Option<LadderReport>,
    pub wall_seconds: f64,
}

/// Runs every ladder member on `workers` threads, then the ladder checks.
pub fn run_sweep(cfg: &RunConfig, workers: usize) -> Result<SweepResult> {
    cfg.validate()?;
    let eps = cfg
        .ladder
        .as_ref()
        .map(|l| l.values())
        .ok_or_else(|| Error::Config("sweep needs a `ladder`".into()))?;
    if eps.len() < 3 {
        return Err(Error::Config("the ladder needs at least 3 ε values".into()));
    }
    let clock = std::time::Instant::now();
    let window = ladder_window(cfg, eps[0])?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<MemberResult>> = pool.install(|| eps.par_iter().map(|&e| run_member(cfg, e, window)).collect());
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (e, r) in eps.iter().zip(results) {
        match r {
            Ok(m) => members.push(m),
            Err(err) => failures.push((*e, err.to_string())),
        }
    }
    let ladder = if failures.is_empty() {
        Some(ladder_report(&members, window, cfg)?)
    } else {
        None
    };
    Ok(SweepResult {
        members,
        failures,
        ladder,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}
