//! Post-processing of trajectories into the energy, moment, boundary,
//! BD-entropy and integrability series, plus the ε-ladder distances. Every
//! check lands in `flags` as (value, threshold, pass).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{param, Error, Result};
use crate::lagrangian_solver::{MassGridState, RunStats, Trajectory};
use crate::pressure_laws::{log_grid, PressureLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub mass_rel: f64,
    pub energy_rel: f64,
    pub boundary_rel: f64,
    /// Relative slack on the general-law boundary bracket.
    pub bracket_slack: f64,
    pub momentum: f64,
    pub alignment_identity: f64,
    pub second_moment_slack: f64,
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_rel: 1e-12,
            energy_rel: 0.01,
            boundary_rel: 0.02,
            bracket_slack: 1e-3,
            momentum: 1e-10,
            alignment_identity: 1e-10,
            second_moment_slack: 1e-3,
            margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Window `K = [lo, hi]`; defaults to the central half of the initial
    /// support.
    pub window: Option<[f64; 2]>,
    pub resample_points: usize,
    /// Exponent of the second distance in the ladder metric.
    pub lq_exponent: f64,
    pub tolerances: Tolerances,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            window: None,
            resample_points: 4096,
            lq_exponent: 2.0,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub pass: bool,
}

impl Flag {
    pub fn at_most(value: f64, threshold: f64) -> Self {
        Self {
            value,
            threshold,
            relation: "<=".into(),
            pass: value <= threshold,
        }
    }

    pub fn at_least(value: f64, threshold: f64) -> Self {
        Self {
            value,
            threshold,
            relation: ">=".into(),
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySeries {
    pub kinetic: Vec<f64>,
    pub internal: Vec<f64>,
    pub interaction: Vec<f64>,
    pub viscous: Vec<f64>,
    pub alignment: Vec<f64>,
    pub damping: Vec<f64>,
    /// Signed `E(t) + dissipation - E(0)`.
    pub residual: Vec<f64>,
    /// `E(0)` plus the interaction shift `¼M²`; the residual tolerance is
    /// relative to this.
    pub scale: f64,
}

/// Energy series from the snapshots and the solver's accumulators.
pub fn energy_budget(traj: &Trajectory) -> EnergySeries {
    let e0 = traj.snapshots[0].energy;
    let mut s = EnergySeries {
        scale: e0.total() + e0.shift,
        ..Default::default()
    };
    for snap in &traj.snapshots {
        let e = snap.energy;
        s.kinetic.push(e.kinetic);
        s.internal.push(e.internal);
        s.interaction.push(e.interaction);
        s.viscous.push(snap.totals.viscous);
        s.alignment.push(snap.totals.alignment);
        s.damping.push(snap.totals.damping);
        s.residual.push(e.total() + snap.totals.dissipation() - e0.total());
    }
    s
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundarySeries {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Closed form (polytropic) or its lower bracket (general law).
    pub reference: Vec<f64>,
    /// `ρ₀(b)`, the upper bracket.
    pub upper: f64,
    pub b_minus: Vec<f64>,
    pub b_plus: Vec<f64>,
    /// Polytropic: max relative deviation from the closed form. General law:
    /// max relative bracket violation (0 when it holds).
    pub max_rel_error: f64,
    pub exact: bool,
}

/// `ρ₀(1 + c(g-α)ρ₀^{g-α}t/ε)^{-1/(g-α)}`, the solution of
/// `ρ' = -(c/ε)ρ^{g+1-α}`.
pub fn boundary_closed_form(rho0: f64, c: f64, g: f64, alpha: f64, epsilon: f64, t: f64) -> f64 {
    let d = g - alpha;
    if d.abs() < 1e-14 {
        return rho0 * (-c * t / epsilon).exp();
    }
    rho0 * (1.0 + c * d / epsilon * rho0.powf(d) * t).powf(-1.0 / d)
}

/// `sup P(ρ)/ρ^{γ₁}` on `(0, rho0]`.
pub fn bracket_constant(law: &PressureLaw, rho0: f64) -> f64 {
    if law.is_polytropic() || rho0 <= law.rho_star_low {
        return law.kappa;
    }
    log_grid(law.rho_star_low, rho0, 400)
        .into_iter()
        .map(|r| law.p(r) / r.powf(law.gamma))
        .fold(law.kappa, f64::max)
}

/// Boundary-cell densities against the closed form or the bracket; `ρ₀(b)`
/// is taken from the initial boundary cells.
pub fn boundary_density_check(traj: &Trajectory, law: &PressureLaw, slack: f64) -> BoundarySeries {
    let n = traj.cell_mass.len();
    let (eps, alpha) = (traj.epsilon, traj.alpha);
    let s0 = &traj.snapshots[0];
    let (l0, r0) = (s0.cell_rho[0], s0.cell_rho[n - 1]);
    let exact = law.is_polytropic();
    let mut out = BoundarySeries {
        upper: l0.max(r0),
        exact,
        ..Default::default()
    };
    for snap in &traj.snapshots {
        let (l, r) = (snap.cell_rho[0], snap.cell_rho[n - 1]);
        out.left.push(l);
        out.right.push(r);
        out.b_minus.push(snap.node_x[0]);
        out.b_plus.push(snap.node_x[n]);
        let t = snap.time;
        if exact {
            let rl = boundary_closed_form(l0, law.kappa, law.gamma, alpha, eps, t);
            let rr = boundary_closed_form(r0, law.kappa, law.gamma, alpha, eps, t);
            out.reference.push(rl);
            let e = ((l - rl).abs() / rl).max((r - rr).abs() / rr);
            out.max_rel_error = out.max_rel_error.max(e);
        } else {
            let mut worst = 0.0f64;
            let mut lo_ref = f64::INFINITY;
            for (v, v0) in [(l, l0), (r, r0)] {
                let c = bracket_constant(law, v0);
                let lo = boundary_closed_form(v0, c, law.gamma, alpha, eps, t);
                lo_ref = lo_ref.min(lo);
                if v < lo * (1.0 - slack) {
                    worst = worst.max((lo - v) / lo);
                }
                if v > v0 * (1.0 + slack) {
                    worst = worst.max((v - v0) / v0);
                }
            }
            out.reference.push(lo_ref);
            out.max_rel_error = out.max_rel_error.max(worst);
        }
    }
    out
}

/// Central half of the support between the 0.1% and 99.9% mass quantiles.
pub fn default_window(state: &MassGridState) -> [f64; 2] {
    let m = state.total_mass();
    let a = state.position_at_mass(1e-3 * m);
    let b = state.position_at_mass((1.0 - 1e-3) * m);
    let c = 0.5 * (a + b);
    let h = 0.25 * (b - a);
    [c - h, c + h]
}

fn check_window(traj: &Trajectory, k: [f64; 2]) -> Result<()> {
    if !(k[1] > k[0]) {
        return Err(param("window", "need lo < hi"));
    }
    for s in &traj.snapshots {
        let n = s.node_x.len() - 1;
        if !(s.node_x[0] < k[0] && k[1] < s.node_x[n]) {
            return Err(Error::WindowOutside {
                lo: k[0],
                hi: k[1],
                time: s.time,
            });
        }
    }
    Ok(())
}

/// `Σᵢ fᵢ |Kᵢ ∩ K| / wᵢ` with `fᵢ` the per-cell integral.
fn window_sum<F: Fn(usize) -> f64>(node_x: &[f64], k: [f64; 2], f: F) -> f64 {
    let mut total = 0.0;
    for i in 0..node_x.len() - 1 {
        let (a, b) = (node_x[i], node_x[i + 1]);
        let ov = b.min(k[1]) - a.max(k[0]);
        if ov > 0.0 {
            total += f(i) * ov / (b - a);
        }
    }
    total
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrability {
    pub window: [f64; 2],
    /// `∫∫_K ρ^{γ+1}` (polytropic) or `∫∫_K ρP(ρ)`.
    pub density: f64,
    /// `∫∫_K ρ|u|³ + ρ^{γ+θ}`.
    pub velocity: f64,
}

/// Space-time window integrals in the mass measure.
pub fn window_integrability(traj: &Trajectory, law: &PressureLaw, window: [f64; 2]) -> Result<Integrability> {
    check_window(traj, window)?;
    let g = law.gamma;
    let th = law.theta;
    let times = traj.times();
    let mut dens = Vec::with_capacity(times.len());
    let mut vel = Vec::with_capacity(times.len());
    for s in &traj.snapshots {
        let m = &traj.cell_mass;
        dens.push(window_sum(&s.node_x, window, |i| {
            let r = s.cell_rho[i];
            m[i] * if law.is_polytropic() { r.powf(g) } else { law.p(r) }
        }));
        vel.push(window_sum(&s.node_x, window, |i| {
            let r = s.cell_rho[i];
            let u3 = 0.5 * (s.node_u[i].abs().powi(3) + s.node_u[i + 1].abs().powi(3));
            m[i] * (u3 + r.powf(g + th - 1.0))
        }));
    }
    Ok(Integrability {
        window,
        density: trapezoid(&times, &dens),
        velocity: trapezoid(&times, &vel),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub l1_rho: Vec<f64>,
    pub l1_m: Vec<f64>,
    pub lq_rho: Vec<f64>,
    pub lq_m: Vec<f64>,
    pub q: f64,
    /// `max_t (‖Δρ‖₁ + ‖Δm‖₁)`.
    pub sup_l1: f64,
}

/// Uniform resampling points on `K`.
pub fn window_points(window: [f64; 2], points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| window[0] + (window[1] - window[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

fn trapezoid_uniform(h: f64, v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// `L¹(K)` and `L^q(K)` distances of `(ρ, m)` at every shared output time.
pub fn convergence_metric(
    a: &Trajectory,
    b: &Trajectory,
    window: [f64; 2],
    points: usize,
    q: f64,
) -> Result<ConvergenceReport> {
    let (ta, tb) = (a.times(), b.times());
    if ta.len() != tb.len() {
        return Err(Error::TimeAxisMismatch(format!("{} vs {} output times", ta.len(), tb.len())));
    }
    for (x, y) in ta.iter().zip(&tb) {
        if (x - y).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::TimeAxisMismatch(format!("t = {x} vs {y}")));
        }
    }
    if !(q >= 1.0) {
        return Err(param("lq_exponent", "must be at least 1"));
    }
    let xs = window_points(window, points);
    let h = xs[1] - xs[0];
    let mut r = ConvergenceReport {
        times: ta.clone(),
        q,
        ..Default::default()
    };
    for k in 0..ta.len() {
        let (ra, ua) = a.state(k).sample(&xs);
        let (rb, ub) = b.state(k).sample(&xs);
        let dr: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| (x - y).abs()).collect();
        let dm: Vec<f64> = (0..xs.len()).map(|i| (ra[i] * ua[i] - rb[i] * ub[i]).abs()).collect();
        let l1r = trapezoid_uniform(h, &dr);
        let l1m = trapezoid_uniform(h, &dm);
        let lqr = trapezoid_uniform(h, &dr.iter().map(|v| v.powf(q)).collect::<Vec<_>>()).powf(1.0 / q);
        let lqm = trapezoid_uniform(h, &dm.iter().map(|v| v.powf(q)).collect::<Vec<_>>()).powf(1.0 / q);
        r.sup_l1 = r.sup_l1.max(l1r + l1m);
        r.l1_rho.push(l1r);
        r.l1_m.push(l1m);
        r.lq_rho.push(lqr);
        r.lq_m.push(lqm);
    }
    Ok(r)
}

/// Whether each distance is at most `(1 + slack)` times the previous one.
pub fn cauchy_consistent(distances: &[f64], slack: f64) -> bool {
    distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_exponent(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `(max - min) / max` of positive values.
pub fn relative_spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub times: Vec<f64>,
    pub energy: EnergySeries,
    /// `|Σρᵢwᵢ - M|` per output time.
    pub mass_defect: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// `(M₂(0) + ∫∫ρu²)eᵗ`.
    pub second_moment_bound: Vec<f64>,
    pub boundary: BoundarySeries,
    /// `ε²∫ρ^{2α-3}ρₓ²`.
    pub bd_entropy: Vec<f64>,
    /// `ε∫∫P'(ρ)ρ^{α-2}ρₓ²`.
    pub bd_dissipation: Vec<f64>,
    /// Left side of the BD estimate: the two series above plus the boundary
    /// terms, see [`bd_estimate`].
    pub bd_estimate: Vec<f64>,
    pub integrability: Option<Integrability>,
    pub margin: f64,
    pub stats: RunStats,
    pub flags: BTreeMap<String, Flag>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|f| f.pass)
    }
}

/// `bd + bdd + (κγ/ε)∫₀ᵗ(ρ₊^{2γ-α}b₊ - ρ₋^{2γ-α}b₋) + κ(ρ₊^γb₊ - ρ₋^γb₋)`
/// per output time, with `(κ, γ)` of the low-density regime.
pub fn bd_estimate(
    times: &[f64],
    bd: &[f64],
    bdd: &[f64],
    boundary: &BoundarySeries,
    law: &PressureLaw,
    epsilon: f64,
    alpha: f64,
) -> Vec<f64> {
    let (k, g) = (law.kappa, law.gamma);
    let flux = |i: usize| {
        boundary.right[i].powf(2.0 * g - alpha) * boundary.b_plus[i]
            - boundary.left[i].powf(2.0 * g - alpha) * boundary.b_minus[i]
    };
    let mut acc = 0.0;
    (0..times.len())
        .map(|i| {
            if i > 0 {
                acc += 0.5 * (times[i] - times[i - 1]) * (flux(i) + flux(i - 1));
            }
            let edge = boundary.right[i].powf(g) * boundary.b_plus[i] - boundary.left[i].powf(g) * boundary.b_minus[i];
            bd[i] + bdd[i] + k * g / epsilon * acc + k * edge
        })
        .collect()
}

/// Builds every series and flag for one trajectory.
pub fn diagnose(traj: &Trajectory, law: &PressureLaw, cfg: &DiagnosticsConfig) -> Result<DiagnosticsReport> {
    let tol = cfg.tolerances;
    let times = traj.times();
    let energy = energy_budget(traj);
    let m = traj.total_mass;
    let mut mass_defect = Vec::new();
    let mut m2 = Vec::new();
    let mut m2b = Vec::new();
    let mut bd = Vec::new();
    let mut bdd = Vec::new();
    let m2_0 = traj.snapshots[0].second_moment;
    for s in &traj.snapshots {
        let total: f64 = s
            .cell_rho
            .iter()
            .zip(s.node_x.windows(2))
            .map(|(r, w)| r * (w[1] - w[0]))
            .sum();
        mass_defect.push((total - m).abs());
        m2.push(s.second_moment);
        m2b.push((m2_0 + s.totals.kinetic) * s.time.exp());
        bd.push(s.bd_entropy);
        bdd.push(s.totals.bd_dissipation);
    }
    let boundary = boundary_density_check(traj, law, tol.bracket_slack);
    let window = cfg.window.unwrap_or_else(|| default_window(&traj.state(0)));
    let integrability = window_integrability(traj, law, window).ok();
    let margin = crate::lagrangian_solver::free_boundary_margin(traj, traj.halfwidth);

    let mut flags = BTreeMap::new();
    let mass_rel = traj.stats.max_mass_defect.max(mass_defect.iter().cloned().fold(0.0, f64::max)) / m;
    flags.insert("mass_conservation".into(), Flag::at_most(mass_rel, tol.mass_rel));
    let e_rel = traj.stats.max_energy_residual.max(energy.residual.iter().fold(0.0, |a: f64, b| a.max(b.abs())))
        / energy.scale.abs().max(f64::MIN_POSITIVE);
    flags.insert("energy_balance".into(), Flag::at_most(e_rel, tol.energy_rel));
    if boundary.exact {
        flags.insert("boundary_density".into(), Flag::at_most(boundary.max_rel_error, tol.boundary_rel));
    } else {
        flags.insert("boundary_bracket".into(), Flag::at_most(boundary.max_rel_error, 0.0));
    }
    flags.insert("momentum_neutrality".into(), Flag::at_most(traj.stats.max_momentum_defect, tol.momentum));
    flags.insert(
        "alignment_identity".into(),
        Flag::at_most(traj.stats.max_alignment_identity_defect, tol.alignment_identity),
    );
    let ratio = traj.stats.max_second_moment_ratio.max(
        m2.iter()
            .zip(&m2b)
            .filter(|(_, b)| **b > 0.0)
            .map(|(a, b)| a / b)
            .fold(0.0, f64::max),
    );
    flags.insert("second_moment".into(), Flag::at_most(ratio, 1.0 + tol.second_moment_slack));
    flags.insert("free_boundary_margin".into(), Flag::at_least(margin, tol.margin));
    let bd_ok = bd.iter().all(|v| v.is_finite()) && bdd.windows(2).all(|w| w[1] >= w[0]);
    flags.insert("bd_entropy_finite".into(), Flag::at_least(if bd_ok { 1.0 } else { 0.0 }, 1.0));

    let bde = bd_estimate(&times, &bd, &bdd, &boundary, law, traj.epsilon, traj.alpha);
    Ok(DiagnosticsReport {
        times,
        energy,
        mass_defect,
        second_moment: m2,
        second_moment_bound: m2b,
        boundary,
        bd_estimate: bde,
        bd_entropy: bd,
        bd_dissipation: bdd,
        integrability,
        margin,
        stats: traj.stats,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_reference_value() {
        let v = boundary_closed_form(1.0, 0.125, 2.0, 1.0, 0.1, 1.0);
        assert!((v - 1.0 / 2.25).abs() < 1e-15);
        assert_eq!(boundary_closed_form(0.7, 0.125, 2.0, 1.0, 0.1, 0.0), 0.7);
    }

    #[test]
    fn ladder_helpers() {
        assert!(cauchy_consistent(&[1.0, 0.5, 0.54], 0.1));
        assert!(!cauchy_consistent(&[1.0, 0.5, 0.6], 0.1));
        let x = [0.04, 0.02, 0.01];
        let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powf(1.0 / 3.0)).collect();
        assert!((fitted_exponent(&x, &y) - 1.0 / 3.0).abs() < 1e-12);
    }
}
