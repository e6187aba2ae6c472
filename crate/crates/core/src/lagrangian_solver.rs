//! Staggered Lagrangian scheme on the mass interval `[0, M]`: cell masses,
//! densities and pressures, node positions and velocities. One step is an
//! explicit force update followed by an implicit viscous solve and a position
//! update; densities are recomputed from positions so mass is exact.
//!
//! The stress-free boundary is imposed by zeroing the total stress
//! `P - εμρu_ξ` inside each boundary cell, which slaves the boundary node
//! velocity to its neighbour.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{param, Error, Result};
use crate::initial_data::ApproxInitialData;
use crate::nonlocal_forces::{
    alignment_cells, cells_to_nodes, interaction_energy, interaction_force, Interaction, NonlocalConfig,
};
use crate::pressure_laws::PressureLaw;
use crate::quad::GaussRule;
use crate::tridiag;

/// Mass partition: `cells` equal bulk cells plus `collar_cells` geometrically
/// shrinking cells at each end, the last one reaching `±b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub cells: usize,
    #[serde(default = "default_collar")]
    pub collar_cells: usize,
    #[serde(default = "default_ratio")]
    pub collar_ratio: f64,
}

fn default_collar() -> usize {
    24
}

fn default_ratio() -> f64 {
    0.25
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells: 1024,
            collar_cells: default_collar(),
            collar_ratio: default_ratio(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells < 2 {
            return Err(param("cells", "need at least 2 bulk cells"));
        }
        if !(self.collar_ratio > 0.0 && self.collar_ratio <= 1.0) {
            return Err(param("collar_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Cell masses from left to right summing to `mass`.
    pub fn masses(&self, mass: f64) -> Vec<f64> {
        let r = self.collar_ratio;
        let collar: Vec<f64> = (1..=self.collar_cells).map(|k| r.powi(k as i32)).collect();
        let weight = self.cells as f64 + 2.0 * collar.iter().sum::<f64>();
        let dxi = mass / weight;
        let mut out = Vec::with_capacity(self.cells + 2 * self.collar_cells);
        out.extend(collar.iter().rev().map(|c| c * dxi));
        out.extend(std::iter::repeat(dxi).take(self.cells));
        out.extend(collar.iter().map(|c| c * dxi));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ViscousScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cfl: f64,
    pub dt_max: f64,
    #[serde(default = "default_floor")]
    pub vacuum_floor: f64,
    #[serde(default)]
    pub viscous_scheme: ViscousScheme,
    pub t_end: f64,
    /// Number of output intervals on `[0, t_end]`.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Half explicit step, viscous step, half explicit step.
    #[serde(default)]
    pub strang: bool,
    /// Keep positions and densities fixed (test mode).
    #[serde(default)]
    pub freeze_density: bool,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
}

fn default_floor() -> f64 {
    0.0
}

fn default_snapshots() -> usize {
    20
}

fn default_halvings() -> u32 {
    8
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_max: 1e-2,
            vacuum_floor: default_floor(),
            viscous_scheme: ViscousScheme::BackwardEuler,
            t_end: 1.0,
            snapshots: default_snapshots(),
            strang: false,
            freeze_density: false,
            max_halvings: default_halvings(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(param("cfl", format!("must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.dt_max > 0.0) {
            return Err(param("dt_max", "must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(param("t_end", "must be finite and nonnegative"));
        }
        if !(self.vacuum_floor >= 0.0) {
            return Err(param("vacuum_floor", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Discrete state on the mass grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassGridState {
    pub time: f64,
    pub n_cells: usize,
    /// Bulk cell mass.
    pub dxi: f64,
    pub cell_mass: Vec<f64>,
    pub node_x: Vec<f64>,
    pub cell_rho: Vec<f64>,
    pub node_u: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
}

impl MassGridState {
    /// Places nodes at the mass quantiles of `data` for the partition `grid`.
    pub fn from_initial(data: &ApproxInitialData, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let masses = grid.masses(data.total_mass);
        let n = masses.len();
        let b = data.halfwidth;
        let mut x = vec![0.0; n + 1];
        x[0] = -b;
        x[n] = b;
        let half = n / 2;
        let mut tail = 0.0;
        for j in 1..=half {
            tail += masses[j - 1];
            x[j] = data.invert_left(tail);
        }
        let mut tail = 0.0;
        for j in (half + 1..n).rev() {
            tail += masses[j];
            x[j] = data.invert_right(tail);
        }
        for j in 1..n {
            if !(x[j] > x[j - 1]) {
                // Degenerate quantiles (flat profile at rounding level): spread evenly.
                x[j] = x[j - 1] + 1e-12 * b.max(1.0);
            }
        }
        let u: Vec<f64> = x.iter().map(|&xj| data.u(xj)).collect();
        let mut s = Self {
            time: 0.0,
            n_cells: n,
            dxi: data.total_mass / (grid.cells as f64 + 2.0 * collar_weight(grid)),
            cell_mass: masses,
            node_x: x,
            cell_rho: vec![0.0; n],
            node_u: u,
            epsilon: data.epsilon,
            alpha: data.alpha,
        };
        s.refresh_density()?;
        Ok(s)
    }

    /// `n` equal cells of density `rho` on `[lo, hi]` with node velocity `u(x)`.
    pub fn uniform<F: Fn(f64) -> f64>(
        rho: f64,
        lo: f64,
        hi: f64,
        n: usize,
        epsilon: f64,
        alpha: f64,
        u: F,
    ) -> Result<Self> {
        if n < 2 || !(hi > lo) || !(rho > 0.0) {
            return Err(param("uniform", "need n >= 2, hi > lo, rho > 0"));
        }
        let x: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
        let m = rho * (hi - lo) / n as f64;
        let mut s = Self {
            time: 0.0,
            n_cells: n,
            dxi: m,
            cell_mass: vec![m; n],
            node_u: x.iter().map(|&v| u(v)).collect(),
            node_x: x,
            cell_rho: vec![rho; n],
            epsilon,
            alpha,
        };
        s.refresh_density()?;
        Ok(s)
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }

    pub fn node_mass(&self) -> Vec<f64> {
        let n = self.n_cells;
        (0..=n)
            .map(|j| {
                let l = if j > 0 { self.cell_mass[j - 1] } else { 0.0 };
                let r = if j < n { self.cell_mass[j] } else { 0.0 };
                0.5 * (l + r)
            })
            .collect()
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        self.node_x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn cell_velocity(&self) -> Vec<f64> {
        self.node_u.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass coordinate of each node.
    pub fn node_xi(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_cells + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for m in &self.cell_mass {
            acc += m;
            out.push(acc);
        }
        out
    }

    /// Recomputes `ρᵢ = mᵢ / (xᵢ₊₁ - xᵢ)`; fails on an inverted cell.
    pub fn refresh_density(&mut self) -> Result<()> {
        for i in 0..self.n_cells {
            let w = self.node_x[i + 1] - self.node_x[i];
            if !(w > 0.0) {
                return Err(Error::CellInversion {
                    cell: i,
                    time: self.time,
                    retries: 0,
                });
            }
            self.cell_rho[i] = self.cell_mass[i] / w;
        }
        Ok(())
    }

    /// Piecewise-linear Eulerian fields at increasing points `xs`: density
    /// between cell centers (constant in the outer half cells), velocity
    /// between nodes; both zero outside `[x₀, x_N]`.
    pub fn sample(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_cells;
        let c = self.cell_centers();
        let mut rho = Vec::with_capacity(xs.len());
        let mut u = Vec::with_capacity(xs.len());
        let (mut ic, mut jn) = (0usize, 0usize);
        for &x in xs {
            if x < self.node_x[0] || x > self.node_x[n] {
                rho.push(0.0);
                u.push(0.0);
                continue;
            }
            while jn + 1 < n && self.node_x[jn + 1] <= x {
                jn += 1;
            }
            let t = (x - self.node_x[jn]) / (self.node_x[jn + 1] - self.node_x[jn]);
            u.push(self.node_u[jn] + t * (self.node_u[jn + 1] - self.node_u[jn]));
            while ic + 1 < n && c[ic + 1] <= x {
                ic += 1;
            }
            let r = if x <= c[0] {
                self.cell_rho[0]
            } else if ic + 1 >= n {
                self.cell_rho[n - 1]
            } else {
                let t = (x - c[ic]) / (c[ic + 1] - c[ic]);
                self.cell_rho[ic] + t * (self.cell_rho[ic + 1] - self.cell_rho[ic])
            };
            rho.push(r);
        }
        (rho, u)
    }

    /// Position carrying mass `xi` to its left.
    pub fn position_at_mass(&self, xi: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_cells {
            let m = self.cell_mass[i];
            if acc + m >= xi {
                let t = ((xi - acc) / m).clamp(0.0, 1.0);
                return self.node_x[i] + t * (self.node_x[i + 1] - self.node_x[i]);
            }
            acc += m;
        }
        self.node_x[self.n_cells]
    }

    pub fn second_moment(&self) -> f64 {
        self.cell_centers()
            .iter()
            .zip(&self.cell_mass)
            .map(|(x, m)| m * x * x)
            .sum()
    }

    /// `Σ Mⱼuⱼ²`, the discrete `∫ρu²`.
    pub fn kinetic_density(&self) -> f64 {
        self.node_mass().iter().zip(&self.node_u).map(|(m, u)| m * u * u).sum()
    }

    pub fn energy(&self, law: &PressureLaw, interaction: Interaction) -> EnergyParts {
        let kinetic = 0.5 * self.kinetic_density();
        let internal = self
            .cell_mass
            .iter()
            .zip(&self.cell_rho)
            .map(|(m, r)| m * law.e(*r))
            .sum();
        let (raw, shifted) = match interaction {
            Interaction::Off => (0.0, 0.0),
            Interaction::NewtonianPlusQuadratic => interaction_energy(&self.cell_centers(), &self.cell_mass),
        };
        EnergyParts {
            kinetic,
            internal,
            interaction: raw,
            shift: shifted - raw,
        }
    }
}

fn collar_weight(grid: &GridSpec) -> f64 {
    (1..=grid.collar_cells).map(|k| grid.collar_ratio.powi(k as i32)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub internal: f64,
    pub interaction: f64,
    /// `¼M²` when the interaction is on, making `total + shift ≥ 0`.
    pub shift: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.interaction
    }
}

/// Lagrangian sound speed limit: `cfl · min mᵢ / (ρᵢ(cᵢ + |Δuᵢ|))`, capped at
/// `dt_max`. The implicit viscosity imposes no limit.
pub fn stable_dt(state: &MassGridState, law: &PressureLaw, solver: &SolverConfig) -> f64 {
    let mut dt = solver.dt_max;
    for i in 0..state.n_cells {
        let rho = state.cell_rho[i];
        let c = law.dp(rho.max(solver.vacuum_floor)).sqrt();
        let du = (state.node_u[i + 1] - state.node_u[i]).abs();
        let speed = rho * (c + du);
        if speed > 0.0 {
            dt = dt.min(solver.cfl * state.cell_mass[i] / speed);
        }
    }
    dt
}

/// Additional explicit-force limits on the step.
pub fn force_dt(cfg: &NonlocalConfig, total_mass: f64) -> f64 {
    let mut dt = f64::INFINITY;
    if cfg.lambda != 0.0 {
        dt = dt.min(0.5 / cfg.lambda.abs());
    }
    let w = cfg.alignment.sup();
    if w > 0.0 {
        dt = dt.min(0.5 / (w * total_mass));
    }
    if cfg.interaction == Interaction::NewtonianPlusQuadratic {
        dt = dt.min(0.1 / total_mass.sqrt());
    }
    dt
}

/// Accumulated integrals over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepIncrements {
    pub dt: f64,
    pub viscous: f64,
    pub damping: f64,
    pub alignment: f64,
    /// `-Σ mᵢūᵢVᵢ dt`, the same quantity by the force route.
    pub alignment_check: f64,
    /// `|Σ mᵢVᵢ|`.
    pub momentum_defect: f64,
    /// `Σ Mⱼuⱼ² dt`.
    pub kinetic: f64,
    /// `ε ∫P'(ρ)ρ^{α-2}ρₓ² dt`.
    pub bd_dissipation: f64,
    pub halvings: u32,
}

/// Running totals of the step increments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub viscous: f64,
    pub damping: f64,
    pub alignment: f64,
    pub alignment_check: f64,
    pub kinetic: f64,
    pub bd_dissipation: f64,
}

impl Totals {
    pub fn add(&mut self, inc: &StepIncrements) {
        self.viscous += inc.viscous;
        self.damping += inc.damping;
        self.alignment += inc.alignment;
        self.alignment_check += inc.alignment_check;
        self.kinetic += inc.kinetic;
        self.bd_dissipation += inc.bd_dissipation;
    }

    pub fn dissipation(&self) -> f64 {
        self.viscous + self.damping + self.alignment
    }
}

/// `∫ f(ρ) ρₓ² dx` on the cell-center differences, given `G` with `G' = √f`.
pub fn gradient_integral<G: Fn(f64, f64) -> f64>(state: &MassGridState, dg: G) -> f64 {
    let c = state.cell_centers();
    let mut total = 0.0;
    for i in 1..state.n_cells {
        let d = dg(state.cell_rho[i - 1], state.cell_rho[i]);
        total += d * d / (c[i] - c[i - 1]);
    }
    total
}

/// `G(b) - G(a)` with `G' = √(P'(ρ)ρ^{α-2})`.
pub fn bd_potential_increment(law: &PressureLaw, alpha: f64, rule: &GaussRule, a: f64, b: f64) -> f64 {
    if law.is_polytropic() {
        let q = 0.5 * (alpha + law.gamma - 1.0);
        return (law.kappa * law.gamma).sqrt() / q * (b.powf(q) - a.powf(q));
    }
    if a == b {
        return 0.0;
    }
    // ∫√f dρ = ∫√f ρ d(ln ρ)
    let (la, lb) = (a.ln(), b.ln());
    rule.integrate(la, lb, |s| {
        let r = s.exp();
        (law.dp(r) * r.powf(alpha - 2.0)).sqrt() * r
    })
}

/// `ε² ∫ρ^{2α-3}ρₓ²`.
pub fn bd_entropy(state: &MassGridState) -> f64 {
    let a = state.alpha - 0.5;
    let g = gradient_integral(state, |x, y| (y.powf(a) - x.powf(a)) / a);
    state.epsilon * state.epsilon * g
}

/// `∫P'(ρ)ρ^{α-2}ρₓ²`.
pub fn bd_dissipation_rate(state: &MassGridState, law: &PressureLaw) -> f64 {
    let rule = GaussRule::legendre(4);
    gradient_integral(state, |x, y| bd_potential_increment(law, state.alpha, &rule, x, y))
}

/// One time integrator bound to a law and force configuration. Caches the
/// alignment field of the current state between steps.
pub struct Stepper<'a> {
    pub law: &'a PressureLaw,
    pub cfg: &'a NonlocalConfig,
    pub solver: &'a SolverConfig,
    align_cache: Option<Vec<f64>>,
    bd_rule: GaussRule,
}

impl<'a> Stepper<'a> {
    pub fn new(law: &'a PressureLaw, cfg: &'a NonlocalConfig, solver: &'a SolverConfig) -> Self {
        Self {
            law,
            cfg,
            solver,
            align_cache: None,
            bd_rule: GaussRule::legendre(4),
        }
    }

    fn alignment_field(&self, state: &MassGridState) -> Vec<f64> {
        alignment_cells(
            &state.cell_centers(),
            &state.cell_velocity(),
            &state.cell_mass,
            &self.cfg.alignment,
            self.cfg.alignment_cutoff,
        )
    }

    /// Explicit node accelerations (boundary entries unused).
    fn explicit_accel(&self, state: &MassGridState, v_cells: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = state.n_cells;
        let nm = state.node_mass();
        let p: Vec<f64> = state.cell_rho.iter().map(|&r| self.law.p(r)).collect();
        let mut a = vec![0.0; n + 1];
        for j in 1..n {
            a[j] = -(p[j] - p[j - 1]) / nm[j] + self.cfg.lambda * state.node_u[j];
        }
        if let Some(v) = v_cells {
            let an = cells_to_nodes(&state.cell_mass, v);
            for j in 1..n {
                a[j] += an[j];
            }
        }
        if self.cfg.interaction == Interaction::NewtonianPlusQuadratic {
            let f = interaction_force(
                &state.node_x,
                &state.cell_mass,
                &state.cell_centers(),
                state.total_mass(),
            )?;
            for j in 1..n {
                a[j] -= f[j];
            }
        }
        Ok(a)
    }

    fn viscous_coeffs(&self, state: &MassGridState) -> Vec<f64> {
        let floor = self.solver.vacuum_floor;
        (0..state.n_cells)
            .map(|i| {
                let w = state.node_x[i + 1] - state.node_x[i];
                state.epsilon * state.cell_rho[i].max(floor).powf(state.alpha) / w
            })
            .collect()
    }

    /// Implicit viscous update of the interior nodes followed by the
    /// boundary-cell stress condition. Returns the new velocities and the
    /// viscous dissipation rate.
    fn viscous(&self, state: &MassGridState, ustar: &[f64], dt: f64) -> Result<(Vec<f64>, f64)> {
        let n = state.n_cells;
        let nm = state.node_mass();
        let d = self.viscous_coeffs(state);
        let p0 = self.law.p(state.cell_rho[0]);
        let pn = self.law.p(state.cell_rho[n - 1]);
        let cn = self.solver.viscous_scheme == ViscousScheme::CrankNicolson;
        let th = if cn { 0.5 } else { 1.0 };
        let m = n - 1;
        let mut lo = vec![0.0; m];
        let mut di = vec![0.0; m];
        let mut up = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let j = k + 1;
            let dl = if j - 1 >= 1 { d[j - 1] } else { 0.0 };
            let dr = if j + 1 <= n - 1 { d[j] } else { 0.0 };
            di[k] = nm[j] / dt + th * (dl + dr);
            lo[k] = -th * dl;
            up[k] = -th * dr;
            let mut r = nm[j] * ustar[j] / dt;
            if cn {
                if dl > 0.0 {
                    r -= 0.5 * dl * (ustar[j] - ustar[j - 1]);
                }
                if dr > 0.0 {
                    r += 0.5 * dr * (ustar[j + 1] - ustar[j]);
                }
            }
            if j == 1 {
                r -= p0;
            }
            if j == n - 1 {
                r += pn;
            }
            rhs[k] = r;
        }
        let sol = tridiag::solve(&lo, &di, &up, &rhs).ok_or(Error::NonFinite { time: state.time })?;
        let mut u = vec![0.0; n + 1];
        u[1..n].copy_from_slice(&sol);
        u[0] = u[1] - p0 / d[0];
        u[n] = u[n - 1] + pn / d[n - 1];
        let mut rate = 0.0;
        for i in 0..n {
            let du = if cn && i > 0 && i < n - 1 {
                0.5 * ((u[i + 1] - u[i]) + (ustar[i + 1] - ustar[i]))
            } else {
                u[i + 1] - u[i]
            };
            rate += d[i] * du * du;
        }
        Ok((u, rate))
    }

    fn try_advance(&mut self, state: &MassGridState, dt: f64) -> Result<std::result::Result<(MassGridState, StepIncrements), usize>> {
        let v_pre = if self.cfg.alignment.is_off() {
            None
        } else {
            Some(match &self.align_cache {
                Some(v) => v.clone(),
                None => self.alignment_field(state),
            })
        };
        let a = self.explicit_accel(state, v_pre.as_deref())?;
        let n = state.n_cells;
        let h = if self.solver.strang { 0.5 * dt } else { dt };
        let mut ustar = state.node_u.clone();
        for j in 1..n {
            ustar[j] += h * a[j];
        }
        let (mut u, visc_rate) = self.viscous(state, &ustar, dt)?;
        if self.solver.strang {
            let mut mid = state.clone();
            mid.node_u = u.clone();
            let v_mid = if self.cfg.alignment.is_off() {
                None
            } else {
                Some(self.alignment_field(&mid))
            };
            let a2 = self.explicit_accel(&mid, v_mid.as_deref())?;
            for j in 1..n {
                u[j] += h * a2[j];
            }
        }
        let mut next = state.clone();
        next.time = state.time + dt;
        next.node_u = u;
        if !self.solver.freeze_density {
            for j in 0..=n {
                next.node_x[j] += dt * next.node_u[j];
            }
            for i in 0..n {
                if !(next.node_x[i + 1] > next.node_x[i]) {
                    return Ok(Err(i));
                }
            }
            next.refresh_density()?;
        }
        if next.node_u.iter().chain(&next.node_x).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: next.time });
        }
        let nm = next.node_mass();
        let ku: f64 = nm.iter().zip(&next.node_u).map(|(m, u)| m * u * u).sum();
        let mut inc = StepIncrements {
            dt,
            viscous: dt * visc_rate,
            damping: -self.cfg.lambda * dt * ku,
            kinetic: dt * ku,
            ..Default::default()
        };
        if !self.cfg.alignment.is_off() {
            let c = next.cell_centers();
            let ub = next.cell_velocity();
            let v = alignment_cells(&c, &ub, &next.cell_mass, &self.cfg.alignment, self.cfg.alignment_cutoff);
            let mut diss = 0.0;
            let mut mom = 0.0;
            let mut work = 0.0;
            for i in 0..n {
                mom += next.cell_mass[i] * v[i];
                work += next.cell_mass[i] * ub[i] * v[i];
            }
            // ½ΣΣϖ mm|Δū|² by pairs.
            let r = self.cfg.alignment_cutoff.unwrap_or(f64::INFINITY);
            for i in 0..n {
                let mut acc = 0.0;
                for k in i + 1..n {
                    let dx = c[k] - c[i];
                    if dx > r {
                        break;
                    }
                    let du = ub[k] - ub[i];
                    acc += self.cfg.alignment.eval(dx) * du * du * next.cell_mass[k];
                }
                diss += acc * next.cell_mass[i];
            }
            inc.alignment = dt * diss;
            inc.alignment_check = -dt * work;
            inc.momentum_defect = mom.abs();
            self.align_cache = Some(v);
        }
        let bd = gradient_integral(&next, |x, y| bd_potential_increment(self.law, next.alpha, &self.bd_rule, x, y));
        inc.bd_dissipation = next.epsilon * dt * bd;
        Ok(Ok((next, inc)))
    }

    /// Advances by `dt`, halving on cell inversion up to `max_halvings` times.
    pub fn advance(&mut self, state: &MassGridState, dt: f64) -> Result<(MassGridState, StepIncrements)> {
        let mut dt = dt;
        let mut halvings = 0;
        loop {
            match self.try_advance(state, dt)? {
                Ok((next, mut inc)) => {
                    inc.halvings = halvings;
                    return Ok((next, inc));
                }
                Err(cell) => {
                    if halvings >= self.solver.max_halvings {
                        return Err(Error::CellInversion {
                            cell,
                            time: state.time,
                            retries: halvings,
                        });
                    }
                    halvings += 1;
                    dt *= 0.5;
                }
            }
        }
    }

    pub fn invalidate(&mut self) {
        self.align_cache = None;
    }
}

/// One step with the stable time step.
pub fn step(
    state: &MassGridState,
    law: &PressureLaw,
    cfg: &NonlocalConfig,
    solver: &SolverConfig,
) -> Result<MassGridState> {
    let dt = stable_dt(state, law, solver).min(force_dt(cfg, state.total_mass()));
    let mut st = Stepper::new(law, cfg, solver);
    Ok(st.advance(state, dt)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub node_x: Vec<f64>,
    pub node_u: Vec<f64>,
    pub cell_rho: Vec<f64>,
    pub totals: Totals,
    pub energy: EnergyParts,
    pub second_moment: f64,
    pub bd_entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RunStats {
    pub steps: usize,
    pub halvings: u32,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_mass_defect: f64,
    pub max_momentum_defect: f64,
    pub max_alignment_identity_defect: f64,
    pub max_energy_residual: f64,
    pub max_second_moment_ratio: f64,
    pub min_margin: f64,
    pub max_boundary_asymmetry: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub cell_mass: Vec<f64>,
    pub total_mass: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub halfwidth: f64,
    pub interaction: Interaction,
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn state(&self, k: usize) -> MassGridState {
        let s = &self.snapshots[k];
        MassGridState {
            time: s.time,
            n_cells: self.cell_mass.len(),
            dxi: self.total_mass / self.cell_mass.len() as f64,
            cell_mass: self.cell_mass.clone(),
            node_x: s.node_x.clone(),
            cell_rho: s.cell_rho.clone(),
            node_u: s.node_u.clone(),
            epsilon: self.epsilon,
            alpha: self.alpha,
        }
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().unwrap()
    }
}

fn snapshot(state: &MassGridState, law: &PressureLaw, interaction: Interaction, totals: Totals) -> Snapshot {
    Snapshot {
        time: state.time,
        node_x: state.node_x.clone(),
        node_u: state.node_u.clone(),
        cell_rho: state.cell_rho.clone(),
        totals,
        energy: state.energy(law, interaction),
        second_moment: state.second_moment(),
        bd_entropy: bd_entropy(state),
    }
}

/// Builds the mass grid from `initial` and integrates to `solver.t_end`.
pub fn run(
    initial: &ApproxInitialData,
    law: &PressureLaw,
    cfg: &NonlocalConfig,
    solver: &SolverConfig,
    grid: &GridSpec,
) -> Result<Trajectory> {
    let state = MassGridState::from_initial(initial, grid)?;
    run_state(state, law, cfg, solver, initial.halfwidth)
}

/// Integrates an explicit initial state; `b` is the reference half-width for
/// the boundary margin.
pub fn run_state(
    state: MassGridState,
    law: &PressureLaw,
    cfg: &NonlocalConfig,
    solver: &SolverConfig,
    b: f64,
) -> Result<Trajectory> {
    solver.validate()?;
    cfg.validate()?;
    let clock = Instant::now();
    let mass = state.total_mass();
    let mut stepper = Stepper::new(law, cfg, solver);
    let outs = solver.snapshots.max(1);
    let times: Vec<f64> = (0..=outs).map(|k| solver.t_end * k as f64 / outs as f64).collect();
    let mut totals = Totals::default();
    let mut snaps = vec![snapshot(&state, law, cfg.interaction, totals)];
    let e0 = snaps[0].energy.total();
    let m2_0 = snaps[0].second_moment;
    let n = state.n_cells;
    let margin = |s: &MassGridState| (s.node_x[n] / b).min(-s.node_x[0] / b);
    let mut stats = RunStats {
        dt_min: f64::INFINITY,
        min_margin: margin(&state),
        ..Default::default()
    };
    let mut state = state;
    let fdt = force_dt(cfg, mass);
    let mut k = 1;
    while solver.t_end > 0.0 && k < times.len() {
        let target = times[k];
        let mut dt = stable_dt(&state, law, solver).min(fdt);
        let remaining = target - state.time;
        let mut hit = false;
        if dt >= remaining * (1.0 - 1e-12) {
            dt = remaining;
            hit = true;
        }
        let (mut next, inc) = stepper.advance(&state, dt)?;
        if inc.halvings > 0 {
            hit = false;
        }
        if hit {
            next.time = target;
        }
        totals.add(&inc);
        stats.steps += 1;
        stats.halvings += inc.halvings;
        stats.dt_min = stats.dt_min.min(inc.dt);
        stats.dt_max = stats.dt_max.max(inc.dt);
        stats.max_mass_defect = stats.max_mass_defect.max((next.total_mass() - mass).abs());
        stats.max_momentum_defect = stats.max_momentum_defect.max(inc.momentum_defect);
        stats.max_alignment_identity_defect = stats
            .max_alignment_identity_defect
            .max((inc.alignment - inc.alignment_check).abs() / inc.dt.max(f64::MIN_POSITIVE));
        let en = next.energy(law, cfg.interaction);
        let resid = en.total() + totals.dissipation() - e0;
        stats.max_energy_residual = stats.max_energy_residual.max(resid.abs());
        let bound = (m2_0 + totals.kinetic) * next.time.exp();
        if bound > 0.0 {
            stats.max_second_moment_ratio = stats.max_second_moment_ratio.max(next.second_moment() / bound);
        }
        stats.min_margin = stats.min_margin.min(margin(&next));
        let (r0, r1) = (next.cell_rho[0], next.cell_rho[n - 1]);
        stats.max_boundary_asymmetry = stats.max_boundary_asymmetry.max((r0 - r1).abs() / r0.max(r1));
        state = next;
        if hit {
            snaps.push(snapshot(&state, law, cfg.interaction, totals));
            k += 1;
        }
    }
    if stats.steps == 0 {
        stats.dt_min = 0.0;
    }
    stats.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(Trajectory {
        total_mass: mass,
        cell_mass: state.cell_mass.clone(),
        epsilon: state.epsilon,
        alpha: state.alpha,
        halfwidth: b,
        interaction: cfg.interaction,
        snapshots: snaps,
        stats,
    })
}

/// `min_t min(b⁺(t), -b⁻(t)) / b` over the snapshots and every accepted step.
pub fn free_boundary_margin(traj: &Trajectory, b: f64) -> f64 {
    let snap = traj
        .snapshots
        .iter()
        .map(|s| {
            let n = s.node_x.len() - 1;
            (s.node_x[n] / b).min(-s.node_x[0] / b)
        })
        .fold(f64::INFINITY, f64::min);
    if traj.stats.steps > 0 && (b - traj.halfwidth).abs() <= 1e-12 * b {
        snap.min(traj.stats.min_margin)
    } else {
        snap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stable_dt_example() {
        let law = PressureLaw::polytropic(2.0, Some(0.125)).unwrap();
        let n = 1000;
        let s = MassGridState::uniform(1.0, 0.0, 1.0, n, 0.1, 1.0, |_| 0.0).unwrap();
        assert_relative_eq!(s.dxi, 1e-3, max_relative = 1e-12);
        let cfg = SolverConfig {
            cfl: 0.5,
            dt_max: 1.0,
            ..Default::default()
        };
        assert_relative_eq!(stable_dt(&s, &law, &cfg), 1e-3, max_relative = 1e-12);
        let s2 = MassGridState::uniform(1.0, 0.0, 1.0, 2 * n, 0.1, 1.0, |_| 0.0).unwrap();
        assert_relative_eq!(stable_dt(&s2, &law, &cfg), 0.5e-3, max_relative = 1e-12);
    }

    #[test]
    fn vacuum_cells_give_dt_max() {
        let law = PressureLaw::polytropic(2.0, None).unwrap();
        let s = MassGridState::uniform(1e-300, 0.0, 1.0, 10, 0.1, 1.0, |_| 0.0).unwrap();
        let cfg = SolverConfig {
            vacuum_floor: 0.0,
            dt_max: 0.25,
            ..Default::default()
        };
        assert_eq!(stable_dt(&s, &law, &cfg), 0.25);
    }

    #[test]
    fn grid_masses_sum() {
        let g = GridSpec::default();
        let m = g.masses(1.0);
        assert_eq!(m.len(), 1024 + 48);
        assert_relative_eq!(m.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(m[0] < m[1] && m[m.len() - 1] < m[m.len() - 2]);
    }

    #[test]
    fn zero_length_run_is_initial() {
        let law = PressureLaw::polytropic(2.0, None).unwrap();
        let s = MassGridState::uniform(1.0, -1.0, 1.0, 16, 0.1, 1.0, |_| 0.0).unwrap();
        let solver = SolverConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let t = run_state(s.clone(), &law, &NonlocalConfig::off(), &solver, 1.0).unwrap();
        assert_eq!(t.snapshots.len(), 1);
        assert_eq!(t.snapshots[0].node_x, s.node_x);
        assert_eq!(free_boundary_margin(&t, 1.0), 1.0);
    }
}
