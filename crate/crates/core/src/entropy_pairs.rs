//! Entropy / entropy-flux pairs: the polytropic weak-entropy kernel and the
//! pairs it generates, the mechanical pair, the special pair `η^#` with its
//! bound fits, and the general-law pair `η̂` from a characteristic Goursat
//! problem.
//!
//! Generated pairs are written in the kernel variable `t ∈ [-1, 1]`,
//! `s = u + k(ρ)t`, and normalized by `I₀ = ∫(1-t²)^𝔟 dt` so that `ψ = ½s²`
//! reproduces the mechanical energy for every `κ`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::diagnostics::window_points;
use crate::error::{param, Error, Result};
use crate::lagrangian_solver::Trajectory;
use crate::nonlocal_forces::{Interaction, NonlocalConfig};
use crate::pressure_laws::PressureLaw;
use crate::quad::KernelQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Generated,
    Mechanical,
    SpecialHash,
    GoursatHat,
}

/// Values of a pair and its conservative-variable gradient at one `(ρ, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairValues {
    pub eta: f64,
    pub q: f64,
    pub eta_m: f64,
    pub eta_rho: f64,
}

pub trait EntropyPair: Send + Sync {
    fn kind(&self) -> PairKind;
    /// Evaluates at `(ρ, m)`; every value is 0 at `ρ ≤ 0`.
    fn eval(&self, rho: f64, m: f64) -> PairValues;

    fn eta(&self, rho: f64, m: f64) -> f64 {
        self.eval(rho, m).eta
    }

    fn q(&self, rho: f64, m: f64) -> f64 {
        self.eval(rho, m).q
    }
}

/// `[ρ^{2θ} - v²]₊^𝔟`, zero on and outside `|v| = ρ^θ`.
pub fn kernel_chi(law: &PressureLaw, rho: f64, v: f64) -> Result<f64> {
    require_polytropic(law)?;
    if rho <= 0.0 {
        return Ok(0.0);
    }
    let a = rho.powf(law.theta);
    let v = v.abs();
    if v >= a {
        return Ok(0.0);
    }
    Ok(((a - v) * (a + v)).powf(law.kernel_exponent))
}

fn require_polytropic(law: &PressureLaw) -> Result<()> {
    if !law.is_polytropic() {
        return Err(param("law", "this pair requires a polytropic law"));
    }
    Ok(())
}

/// Entropy generator `ψ(s)`.
pub trait Generator: Send + Sync {
    fn value(&self, s: f64) -> f64;
    fn derivative(&self, s: f64) -> f64;
    /// Location of a derivative jump, split out by the quadrature.
    fn kink(&self) -> Option<f64> {
        None
    }
    fn name(&self) -> String;
}

/// `ψ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroGenerator;

/// `ψ(s) = s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearGenerator;

/// `ψ(s) = ½s²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticGenerator;

/// `ψ(s) = ½s|s|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignedQuadraticGenerator;

impl Generator for ZeroGenerator {
    fn value(&self, _: f64) -> f64 {
        0.0
    }
    fn derivative(&self, _: f64) -> f64 {
        0.0
    }
    fn name(&self) -> String {
        "zero".into()
    }
}

impl Generator for LinearGenerator {
    fn value(&self, s: f64) -> f64 {
        s
    }
    fn derivative(&self, _: f64) -> f64 {
        1.0
    }
    fn name(&self) -> String {
        "linear".into()
    }
}

impl Generator for QuadraticGenerator {
    fn value(&self, s: f64) -> f64 {
        0.5 * s * s
    }
    fn derivative(&self, s: f64) -> f64 {
        s
    }
    fn name(&self) -> String {
        "quadratic".into()
    }
}

impl Generator for SignedQuadraticGenerator {
    fn value(&self, s: f64) -> f64 {
        0.5 * s * s.abs()
    }
    fn derivative(&self, s: f64) -> f64 {
        s.abs()
    }
    fn kink(&self) -> Option<f64> {
        Some(0.0)
    }
    fn name(&self) -> String {
        "signed_quadratic".into()
    }
}

/// Generator given by closures.
pub struct FnGenerator<F, G> {
    pub value: F,
    pub derivative: G,
    pub kink: Option<f64>,
    pub label: String,
}

impl<F, G> Generator for FnGenerator<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, s: f64) -> f64 {
        (self.value)(s)
    }
    fn derivative(&self, s: f64) -> f64 {
        (self.derivative)(s)
    }
    fn kink(&self) -> Option<f64> {
        self.kink
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Pair generated by `ψ` through the weak-entropy kernel.
pub struct GeneratedPair<G: Generator> {
    law: PressureLaw,
    generator: G,
    quad: KernelQuadrature,
}

impl<G: Generator> fmt::Debug for GeneratedPair<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratedPair")
            .field("generator", &self.generator.name())
            .field("order", &self.quad.order())
            .finish()
    }
}

/// Builds the pair generated by `psi` for a polytropic law.
pub fn generate_pair<G: Generator>(psi: G, law: &PressureLaw, quadrature_order: usize) -> Result<GeneratedPair<G>> {
    require_polytropic(law)?;
    if quadrature_order < 2 {
        return Err(param("quadrature_order", "need at least 2 nodes"));
    }
    Ok(GeneratedPair {
        law: law.clone(),
        generator: psi,
        quad: KernelQuadrature::new(law.kernel_exponent, quadrature_order)?,
    })
}

impl<G: Generator> GeneratedPair<G> {
    pub fn quadrature_order(&self) -> usize {
        self.quad.order()
    }

    pub fn generator(&self) -> &G {
        &self.generator
    }
}

impl<G: Generator> EntropyPair for GeneratedPair<G> {
    fn kind(&self) -> PairKind {
        PairKind::Generated
    }

    fn eval(&self, rho: f64, m: f64) -> PairValues {
        if rho <= 0.0 {
            return PairValues::default();
        }
        let u = m / rho;
        let k = self.law.k(rho);
        let dk = self.law.dk(rho);
        let th = self.law.theta;
        let kink = self.generator.kink().map(|s0| (s0 - u) / k);
        let psi = &self.generator;
        let i0 = self.quad.mass();
        let eta = rho / i0 * self.quad.integrate(kink, |t| psi.value(u + k * t));
        let q = rho / i0 * self.quad.integrate(kink, |t| (u + th * k * t) * psi.value(u + k * t));
        let d0 = self.quad.integrate(kink, |t| psi.derivative(u + k * t));
        let d1 = self.quad.integrate(kink, |t| t * psi.derivative(u + k * t));
        let eta_u = rho / i0 * d0;
        let eta_rho_u = eta / rho + rho * dk / i0 * d1;
        PairValues {
            eta,
            q,
            eta_m: eta_u / rho,
            eta_rho: eta_rho_u - u / rho * eta_u,
        }
    }
}

/// `η* = ½ρu² + ρe`, `q* = ½ρu³ + u(ρe + P)`.
#[derive(Debug, Clone)]
pub struct MechanicalPair {
    law: PressureLaw,
}

impl MechanicalPair {
    pub fn new(law: &PressureLaw) -> Self {
        Self { law: law.clone() }
    }
}

/// Mechanical pair in `(ρ, u)` variables.
pub fn mechanical(law: &PressureLaw, rho: f64, u: f64) -> (f64, f64) {
    if rho <= 0.0 {
        return (0.0, 0.0);
    }
    let re = rho * law.e(rho);
    (0.5 * rho * u * u + re, 0.5 * rho * u * u * u + u * (re + law.p(rho)))
}

impl EntropyPair for MechanicalPair {
    fn kind(&self) -> PairKind {
        PairKind::Mechanical
    }

    fn eval(&self, rho: f64, m: f64) -> PairValues {
        if rho <= 0.0 {
            return PairValues::default();
        }
        let u = m / rho;
        let (eta, q) = mechanical(&self.law, rho, u);
        let e = self.law.e(rho);
        PairValues {
            eta,
            q,
            eta_m: u,
            eta_rho: -0.5 * u * u + e + self.law.p(rho) / rho,
        }
    }
}

/// The pair generated by `ψ(s) = ½s|s|` without normalization, with `ρ^θ` as
/// the kernel half-width.
#[derive(Debug, Clone)]
pub struct SpecialPair {
    law: PressureLaw,
    quad: KernelQuadrature,
}

pub fn special_pair_hash(law: &PressureLaw) -> Result<SpecialPair> {
    special_pair_hash_with_order(law, 48)
}

pub fn special_pair_hash_with_order(law: &PressureLaw, order: usize) -> Result<SpecialPair> {
    require_polytropic(law)?;
    Ok(SpecialPair {
        law: law.clone(),
        quad: KernelQuadrature::new(law.kernel_exponent, order)?,
    })
}

impl SpecialPair {
    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    /// `q^# - uη^# = ½θρ^{1+θ}∫s y|y|(1-s²)^𝔟 ds`, `y = u + ρ^θs`, evaluated
    /// without cancellation.
    pub fn flux_excess(&self, rho: f64, m: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        let u = m / rho;
        let th = self.law.theta;
        let a = rho.powf(th);
        let y = |s: f64| u + a * s;
        0.5 * rho * th * a * self.quad.integrate(Some(-u / a), |s| s * y(s) * y(s).abs())
    }
}

impl EntropyPair for SpecialPair {
    fn kind(&self) -> PairKind {
        PairKind::SpecialHash
    }

    fn eval(&self, rho: f64, m: f64) -> PairValues {
        if rho <= 0.0 {
            return PairValues::default();
        }
        let u = m / rho;
        let th = self.law.theta;
        let a = rho.powf(th);
        let kink = Some(-u / a);
        let y = |s: f64| u + a * s;
        let eta = 0.5 * rho * self.quad.integrate(kink, |s| y(s) * y(s).abs());
        let q = 0.5 * rho * self.quad.integrate(kink, |s| (u + th * a * s) * y(s) * y(s).abs());
        let eta_m = self.quad.integrate(kink, |s| y(s).abs());
        let eta_rho = self.quad.integrate(kink, |s| (-0.5 * u + (th + 0.5) * a * s) * y(s).abs());
        PairValues { eta, q, eta_m, eta_rho }
    }
}

/// Empirical constants of the `η^#` estimates on a sampled grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashBounds {
    /// `|η^#| ≤ C(ρu² + ρ^γ)`.
    pub eta_upper: f64,
    /// `q^# ≥ C⁻¹(ρ|u|³ + ρ^{γ+θ})`.
    pub q_lower: f64,
    /// `|η^#_m| ≤ C(|u| + ρ^θ)`.
    pub eta_m: f64,
    /// `|η^#_ρ| ≤ C(u² + ρ^{2θ})`.
    pub eta_rho: f64,
    /// `|q^# - uη^#| ≤ C(ρ^γ|u| + ρ^{γ+θ})`.
    pub cancellation: f64,
    pub points: usize,
}

/// Log-spaced `ρ` in `[1e-6, 1e3]` and `u ∈ {0} ∪ ±[1e-6, 1e3]`, `n` per decade
/// block. Densities below `1e-8` are excluded.
pub fn bound_grid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(2);
    let rho: Vec<f64> = crate::pressure_laws::log_grid(1e-6, 1e3, n);
    let pos = crate::pressure_laws::log_grid(1e-6, 1e3, n);
    let mut u: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    u.push(0.0);
    u.extend(pos);
    (rho, u)
}

/// Fits every `η^#` constant over [`bound_grid`]`(n)`.
pub fn hash_bounds(pair: &SpecialPair, n: usize) -> HashBounds {
    let (rhos, us) = bound_grid(n);
    let g = pair.law.gamma;
    let th = pair.law.theta;
    let mut b = HashBounds {
        eta_upper: 0.0,
        q_lower: 0.0,
        eta_m: 0.0,
        eta_rho: 0.0,
        cancellation: 0.0,
        points: 0,
    };
    for &r in &rhos {
        if r < 1e-8 {
            continue;
        }
        let rg = r.powf(g);
        let rt = r.powf(th);
        for &u in &us {
            let v = pair.eval(r, r * u);
            let au = u.abs();
            b.eta_upper = b.eta_upper.max(v.eta.abs() / (r * u * u + rg));
            b.q_lower = b.q_lower.max((r * au * au * au + rg * rt) / v.q);
            b.eta_m = b.eta_m.max(v.eta_m.abs() / (au + rt));
            b.eta_rho = b.eta_rho.max(v.eta_rho.abs() / (u * u + rt * rt));
            b.cancellation = b.cancellation.max(pair.flux_excess(r, r * u).abs() / (rg * au + rg * rt));
            b.points += 1;
        }
    }
    b
}

/// Empirical `C_γ` of the cancellation estimate on [`bound_grid`]`(n)`.
pub fn cancellation_check(pair: &SpecialPair, n: usize) -> f64 {
    hash_bounds(pair, n).cancellation
}

/// Diagnostics of a Goursat solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoursatReport {
    pub levels: usize,
    pub seeded_levels: usize,
    /// `RMS(η_ss - η_uu + gη_s) / RMS(η_uu)` in `s = k(ρ)` on interior,
    /// non-seeded grid points, `g = k''/k'²`.
    pub residual: f64,
    /// Largest deviation from the data on `u = ±k(ρ)`.
    pub boundary_error: f64,
    /// `|η̂(ρ,u) + η̂(ρ,-u)|`, maximum over the grid.
    pub symmetry_defect: f64,
    /// Mismatch between the integrated flux and `q*` on `u = k(ρ)`, relative
    /// to the largest `|q*|` on that edge.
    pub flux_closure: f64,
    /// `max |η̂| / (ρu² + ρ^{γ(ρ)})` over the grid.
    pub bound_constant: f64,
}

/// `η̂`: the mechanical pair with sign outside the cone `|u| < k(ρ)` and the
/// Goursat solution inside, tabulated on the `(s = k(ρ), u)` grid.
#[derive(Debug, Clone)]
pub struct GoursatPair {
    law: PressureLaw,
    rho_max: f64,
    h: f64,
    n: usize,
    /// Rows `N = 0..=n` of `2n+1` values at `u = (J - n)h`.
    eta: Vec<f64>,
    eta_s: Vec<f64>,
    eta_u: Vec<f64>,
    q: Vec<f64>,
    pub report: GoursatReport,
}

/// `g(s) = k''/k'²` expressed through `P`.
fn damping_coeff(law: &PressureLaw, s: f64) -> f64 {
    if law.is_polytropic() {
        return (law.theta - 1.0) / (law.theta * s);
    }
    let rho = law.k_inverse(s);
    let (_, d1, d2) = law.derivatives(rho);
    rho * d2 / (2.0 * d1.powf(1.5)) - 1.0 / d1.sqrt()
}

/// Closed-form `η̂` for a polytropic law at `(ρ, u)`.
fn polytropic_hat(law: &PressureLaw, quad: &KernelQuadrature, rho: f64, u: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let k = law.k(rho);
    rho / quad.mass() * quad.integrate(Some(-u / k), |t| 0.5 * (u + k * t) * (u + k * t).abs())
}

/// Solves the Goursat problem with `grid_resolution` levels in `s` on
/// `0 ≤ ρ ≤ rho_max`.
pub fn goursat_hat(law: &PressureLaw, rho_max: f64, grid_resolution: usize) -> Result<GoursatPair> {
    if !(rho_max > 0.0) || !rho_max.is_finite() {
        return Err(param("rho_max", "must be positive"));
    }
    if grid_resolution < 8 {
        return Err(param("grid_resolution", "need at least 8 levels"));
    }
    let n = grid_resolution;
    let s_max = law.k(rho_max);
    let h = s_max / n as f64;
    let low = PressureLaw::polytropic(law.gamma, Some(law.kappa))?;
    let quad = KernelQuadrature::new(low.kernel_exponent, 48)?;
    let s_seed = if law.is_polytropic() { 0.0 } else { law.k(law.rho_star_low) };

    // March on the half-step checkerboard: level L at s = L·hf, u = j·hf with
    // j ≡ L (mod 2).
    let fl = 2 * n;
    let hf = 0.5 * h;
    let width = 2 * fl + 1;
    let off = fl as isize;
    let w = 2 * n + 1;
    let mut eta = vec![0.0; (n + 1) * w];
    let exact = |rho: f64, u: f64| {
        let (e, _) = mechanical(law, rho, u);
        if u >= 0.0 {
            e
        } else {
            -e
        }
    };
    let mut prev = vec![f64::NAN; width];
    let mut cur = vec![f64::NAN; width];
    let mut next = vec![f64::NAN; width];
    cur[off as usize] = 0.0;
    let mut seeded = 1;
    let mut scale = 0.0f64;
    let store = |eta: &mut Vec<f64>, level: usize, row: &[f64]| {
        if level % 2 == 0 {
            let nn = level / 2;
            for jj in 0..w {
                let j = 2 * (jj as isize - n as isize);
                eta[nn * w + jj] = if j.unsigned_abs() <= level { row[(j + off) as usize] } else { f64::NAN };
            }
        }
    };
    store(&mut eta, 0, &cur);
    for level in 1..=fl {
        let s = level as f64 * hf;
        let rho = law.k_inverse(s);
        let gl = damping_coeff(law, (level - 1) as f64 * hf);
        let denom = 1.0 + 0.5 * gl * hf;
        let seed = level <= 1 || s <= s_seed || denom < 0.5;
        next.iter_mut().for_each(|v| *v = f64::NAN);
        let l = level as isize;
        if seed {
            seeded = level + 1;
            let mut j = -l;
            while j <= l {
                let u = j as f64 * hf;
                next[(j + off) as usize] = if j.abs() == l {
                    exact(rho, u)
                } else {
                    polytropic_hat(&low, &quad, rho, u)
                };
                j += 2;
            }
        } else {
            let num_c = 1.0 - 0.5 * gl * hf;
            let mut j = -l + 2;
            while j <= l - 2 {
                let c = (j + off) as usize;
                next[c] = (cur[c + 1] + cur[c - 1] - prev[c] * num_c) / denom;
                j += 2;
            }
            next[(off - l) as usize] = exact(rho, -s);
            next[(off + l) as usize] = exact(rho, s);
        }
        let edge = next[(off + l) as usize].abs();
        scale = scale.max(edge);
        let mut j = -l;
        while j <= l {
            let v = next[(j + off) as usize];
            if !v.is_finite() || v.abs() > 1e3 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::MarchUnstable {
                    level,
                    detail: format!("value {v} at u = {}; increase grid_resolution", j as f64 * hf),
                });
            }
            j += 2;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        store(&mut eta, level, &cur);
    }

    // Outside the cone the pair is exact.
    let rho_row: Vec<f64> = (0..=n).map(|nn| law.k_inverse(nn as f64 * h)).collect();
    for nn in 0..=n {
        for jj in 0..w {
            let u = (jj as f64 - n as f64) * h;
            if (jj as isize - n as isize).unsigned_abs() > nn {
                eta[nn * w + jj] = exact(rho_row[nn], u);
            }
        }
    }

    let at = |g: &Vec<f64>, nn: usize, jj: usize| g[nn * w + jj];
    let mut eta_s = vec![0.0; (n + 1) * w];
    let mut eta_u = vec![0.0; (n + 1) * w];
    for nn in 0..=n {
        for jj in 0..w {
            eta_s[nn * w + jj] = if nn == 0 {
                (-3.0 * at(&eta, 0, jj) + 4.0 * at(&eta, 1, jj) - at(&eta, 2, jj)) / (2.0 * h)
            } else if nn == n {
                (3.0 * at(&eta, n, jj) - 4.0 * at(&eta, n - 1, jj) + at(&eta, n - 2, jj)) / (2.0 * h)
            } else {
                (at(&eta, nn + 1, jj) - at(&eta, nn - 1, jj)) / (2.0 * h)
            };
            eta_u[nn * w + jj] = if jj == 0 {
                (-3.0 * at(&eta, nn, 0) + 4.0 * at(&eta, nn, 1) - at(&eta, nn, 2)) / (2.0 * h)
            } else if jj == w - 1 {
                (3.0 * at(&eta, nn, w - 1) - 4.0 * at(&eta, nn, w - 2) + at(&eta, nn, w - 3)) / (2.0 * h)
            } else {
                (at(&eta, nn, jj + 1) - at(&eta, nn, jj - 1)) / (2.0 * h)
            };
        }
    }

    // Flux from q_u = ρk'η_s + uη_u, starting at u = -k(ρ).
    let mut q = vec![0.0; (n + 1) * w];
    let mut closure = 0.0f64;
    let mut qscale = 0.0f64;
    for nn in 0..=n {
        let rho = rho_row[nn];
        let dk = if rho > 0.0 { law.dk(rho) } else { 0.0 };
        let qu = |jj: usize| {
            let u = (jj as f64 - n as f64) * h;
            rho * dk * at(&eta_s, nn, jj) + u * at(&eta_u, nn, jj)
        };
        for jj in 0..w {
            let u = (jj as f64 - n as f64) * h;
            let (_, qs) = mechanical(law, rho, u);
            q[nn * w + jj] = if u >= 0.0 { qs } else { -qs };
        }
        if nn == 0 || rho <= 0.0 {
            continue;
        }
        let (j0, j1) = (n - nn, n + nn);
        let mut acc = q[nn * w + j0];
        for jj in j0 + 1..=j1 {
            acc += 0.5 * h * (qu(jj - 1) + qu(jj));
            if jj < j1 {
                q[nn * w + jj] = acc;
            }
        }
        let target = q[nn * w + j1];
        closure = closure.max((acc - target).abs());
        qscale = qscale.max(target.abs());
    }

    // Interior residual η_ρρ - k'²η_uu = k'²(η_ss - η_uu + gη_s), weighted by
    // 1/k'², with second differences at the coarse spacing.
    let mut num = 0.0;
    let mut den = 0.0;
    let first = (seeded / 2 + 1).max(2);
    for nn in first..n {
        let g = damping_coeff(law, nn as f64 * h);
        for jj in (n - nn + 1)..(n + nn) {
            let e_ss = (at(&eta, nn + 1, jj) - 2.0 * at(&eta, nn, jj) + at(&eta, nn - 1, jj)) / (h * h);
            let e_uu = (at(&eta, nn, jj + 1) - 2.0 * at(&eta, nn, jj) + at(&eta, nn, jj - 1)) / (h * h);
            let e_s = (at(&eta, nn + 1, jj) - at(&eta, nn - 1, jj)) / (2.0 * h);
            let r = e_ss - e_uu + g * e_s;
            num += r * r;
            den += e_uu * e_uu;
        }
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    let mut boundary_error = 0.0f64;
    let mut symmetry = 0.0f64;
    let mut bound = 0.0f64;
    for nn in 0..=n {
        let rho = rho_row[nn];
        for jj in 0..w {
            let v = at(&eta, nn, jj);
            let mirror = at(&eta, nn, w - 1 - jj);
            symmetry = symmetry.max((v + mirror).abs());
            let u = (jj as f64 - n as f64) * h;
            if (jj as isize - n as isize).unsigned_abs() == nn {
                boundary_error = boundary_error.max((v - exact(rho, u)).abs());
            }
            if rho > 1e-8 {
                bound = bound.max(v.abs() / (rho * u * u + rho.powf(law.gamma_local(rho))));
            }
        }
    }

    Ok(GoursatPair {
        law: law.clone(),
        rho_max,
        h,
        n,
        eta,
        eta_s,
        eta_u,
        q,
        report: GoursatReport {
            levels: n,
            seeded_levels: seeded,
            residual,
            boundary_error,
            symmetry_defect: symmetry,
            flux_closure: if qscale > 0.0 { closure / qscale } else { closure },
            bound_constant: bound,
        },
    })
}

impl GoursatPair {
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Grid spacing in `s` and `u`.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn levels(&self) -> usize {
        self.n
    }

    /// Density of grid row `nn`.
    pub fn row_density(&self, nn: usize) -> f64 {
        self.law.k_inverse(nn as f64 * self.h)
    }

    /// Grid values as `(ρ, u, η̂, q̂)` rows.
    pub fn table(&self) -> Vec<[f64; 4]> {
        self.table_strided(1)
    }

    /// Every `stride`-th row and column of [`GoursatPair::table`].
    pub fn table_strided(&self, stride: usize) -> Vec<[f64; 4]> {
        let stride = stride.max(1);
        let w = 2 * self.n + 1;
        let mut out = Vec::new();
        for nn in (0..=self.n).step_by(stride) {
            let rho = self.row_density(nn);
            for jj in (0..w).step_by(stride) {
                let u = (jj as f64 - self.n as f64) * self.h;
                out.push([rho, u, self.eta[nn * w + jj], self.q[nn * w + jj]]);
            }
        }
        out
    }

    fn bilinear(&self, g: &[f64], s: f64, u: f64) -> f64 {
        let w = 2 * self.n + 1;
        let x = (s / self.h).clamp(0.0, self.n as f64);
        let y = (u / self.h + self.n as f64).clamp(0.0, (w - 1) as f64);
        let i = (x.floor() as usize).min(self.n - 1);
        let j = (y.floor() as usize).min(w - 2);
        let (a, b) = (x - i as f64, y - j as f64);
        let v = |ii: usize, jj: usize| g[ii * w + jj];
        (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j + 1)) + a * ((1.0 - b) * v(i + 1, j) + b * v(i + 1, j + 1))
    }

    /// `(η̂, q̂, η̂_u, η̂_ρ|_u)` at `(ρ, u)`.
    pub fn eval_rho_u(&self, rho: f64, u: f64) -> (f64, f64, f64, f64) {
        if rho <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0);
        }
        if rho > self.rho_max * (1.0 + 1e-12) {
            return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        let s = self.law.k(rho);
        let dk = self.law.dk(rho);
        if u.abs() >= s || u.abs() > self.n as f64 * self.h {
            let (e, q) = mechanical(&self.law, rho, u);
            let sg = if u >= 0.0 { 1.0 } else { -1.0 };
            let e_rho = 0.5 * u * u + self.law.e(rho) + self.law.p(rho) / rho;
            return (sg * e, sg * q, sg * rho * u, sg * e_rho);
        }
        (
            self.bilinear(&self.eta, s, u),
            self.bilinear(&self.q, s, u),
            self.bilinear(&self.eta_u, s, u),
            dk * self.bilinear(&self.eta_s, s, u),
        )
    }
}

impl EntropyPair for GoursatPair {
    fn kind(&self) -> PairKind {
        PairKind::GoursatHat
    }

    fn eval(&self, rho: f64, m: f64) -> PairValues {
        if rho <= 0.0 {
            return PairValues::default();
        }
        let u = m / rho;
        let (eta, q, eu, er) = self.eval_rho_u(rho, u);
        PairValues {
            eta,
            q,
            eta_m: eu / rho,
            eta_rho: er - u / rho * eu,
        }
    }
}

/// Largest relative defect of `∇q = ∇η·∇F` by central differences at the
/// given `(ρ, u)` points.
pub fn compatibility_defect(pair: &dyn EntropyPair, law: &PressureLaw, points: &[(f64, f64)]) -> f64 {
    let mut worst = 0.0f64;
    for &(rho, u) in points {
        let m = rho * u;
        let hr = 1e-5 * rho;
        let hm = 1e-5 * (m.abs() + rho);
        let q_r = (pair.q(rho + hr, m) - pair.q(rho - hr, m)) / (2.0 * hr);
        let q_m = (pair.q(rho, m + hm) - pair.q(rho, m - hm)) / (2.0 * hm);
        let v = pair.eval(rho, m);
        let want_r = v.eta_m * (law.dp(rho) - u * u);
        let want_m = v.eta_rho + 2.0 * u * v.eta_m;
        let scale = want_r.abs().max(want_m.abs()).max(q_r.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((q_r - want_r).abs() / scale).max((q_m - want_m).abs() / scale);
    }
    worst
}

/// Space-time entropy dissipation on a window and the viscous budgets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DissipationReport {
    pub window: [f64; 2],
    /// Midpoints of consecutive output times.
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// `D` at `(times[k], xs[g])`, row-major by time.
    #[serde(skip)]
    pub field: Vec<Vec<f64>>,
    /// `∫∫D₊`.
    pub positive_part: f64,
    /// `∫∫D₋`.
    pub negative_part: f64,
    /// `ε∫∫ρ^α uₓ²`.
    pub viscous_budget: f64,
    /// `ε∫∫ρ^{α+γ-3}ρₓ²`.
    pub bd_budget: f64,
    /// `ε^{4/3}∫∫|ρ^α uₓ|^{4/3}`.
    pub eps43_budget: f64,
}

fn overlap(a: f64, b: f64, k: [f64; 2]) -> f64 {
    (b.min(k[1]) - a.max(k[0])).max(0.0)
}

/// Entropy production `D = ∂ₜη + ∂ₓq - η_m(λm + ρV - ρ∂ₓW∗ρ)` between
/// output times on `points` uniform points of `window`, plus the budgets.
pub fn dissipation_residual(
    traj: &Trajectory,
    pair: &dyn EntropyPair,
    law: &PressureLaw,
    cfg: &NonlocalConfig,
    window: [f64; 2],
    points: usize,
) -> Result<DissipationReport> {
    if traj.snapshots.len() < 2 {
        return Err(param("trajectory", "need at least two output times"));
    }
    if !(window[1] > window[0]) {
        return Err(param("window", "need lo < hi"));
    }
    let xs = window_points(window, points.max(3));
    let h = xs[1] - xs[0];
    let g = xs.len();
    let mass = traj.total_mass;
    let mut eta_t = Vec::new();
    let mut dq_t = Vec::new();
    let mut src_t = Vec::new();
    for k in 0..traj.snapshots.len() {
        let st = traj.state(k);
        let (rho, u) = st.sample(&xs);
        let mut eta = vec![0.0; g];
        let mut q = vec![0.0; g];
        let mut src = vec![0.0; g];
        let centers = st.cell_centers();
        let ubar = st.cell_velocity();
        let first: f64 = centers.iter().zip(&st.cell_mass).map(|(x, m)| x * m).sum();
        let xi_nodes = st.node_xi();
        let mut jn = 0usize;
        for i in 0..g {
            let m = rho[i] * u[i];
            let v = pair.eval(rho[i], m);
            eta[i] = v.eta;
            q[i] = v.q;
            let mut f = cfg.lambda * m;
            if !cfg.alignment.is_off() && rho[i] > 0.0 {
                let mut acc = 0.0;
                for c in 0..st.n_cells {
                    acc += cfg.alignment.eval(xs[i] - centers[c]) * (ubar[c] - u[i]) * st.cell_mass[c];
                }
                f += rho[i] * acc;
            }
            if cfg.interaction == Interaction::NewtonianPlusQuadratic && rho[i] > 0.0 {
                let x = xs[i];
                while jn + 1 < st.n_cells && st.node_x[jn + 1] <= x {
                    jn += 1;
                }
                let t = ((x - st.node_x[jn]) / (st.node_x[jn + 1] - st.node_x[jn])).clamp(0.0, 1.0);
                let xi = xi_nodes[jn] + t * st.cell_mass[jn];
                f -= rho[i] * (mass - 2.0 * xi + x * mass - first);
            }
            src[i] = v.eta_m * f;
        }
        let mut dq = vec![0.0; g];
        for i in 0..g {
            dq[i] = if i == 0 {
                (q[1] - q[0]) / h
            } else if i == g - 1 {
                (q[g - 1] - q[g - 2]) / h
            } else {
                (q[i + 1] - q[i - 1]) / (2.0 * h)
            };
        }
        eta_t.push(eta);
        dq_t.push(dq);
        src_t.push(src);
    }
    let times = traj.times();
    let mut rep = DissipationReport {
        window,
        xs: xs.clone(),
        ..Default::default()
    };
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        if dt <= 0.0 {
            continue;
        }
        let mut row = vec![0.0; g];
        for i in 0..g {
            let d = (eta_t[k + 1][i] - eta_t[k][i]) / dt + 0.5 * (dq_t[k][i] + dq_t[k + 1][i])
                - 0.5 * (src_t[k][i] + src_t[k + 1][i]);
            row[i] = d;
            let wgt = if i == 0 || i == g - 1 { 0.5 * h } else { h };
            if d > 0.0 {
                rep.positive_part += d * wgt * dt;
            } else {
                rep.negative_part -= d * wgt * dt;
            }
        }
        rep.times.push(0.5 * (times[k] + times[k + 1]));
        rep.field.push(row);
    }

    let eps = traj.epsilon;
    let alpha = traj.alpha;
    let gam = law.gamma;
    let q_exp = 0.5 * (alpha + gam - 1.0);
    let gfun = |r: f64| r.powf(q_exp) / q_exp;
    let mut visc = Vec::new();
    let mut bd = Vec::new();
    let mut e43 = Vec::new();
    for k in 0..traj.snapshots.len() {
        let s = &traj.snapshots[k];
        let n = s.cell_rho.len();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let w = s.node_x[i + 1] - s.node_x[i];
            let ov = overlap(s.node_x[i], s.node_x[i + 1], window);
            if ov > 0.0 {
                let ux = (s.node_u[i + 1] - s.node_u[i]) / w;
                let ra = s.cell_rho[i].powf(alpha);
                a += ra * ux * ux * ov;
                c += (ra * ux).abs().powf(4.0 / 3.0) * ov;
            }
            if i > 0 {
                let c0 = 0.5 * (s.node_x[i - 1] + s.node_x[i]);
                let c1 = 0.5 * (s.node_x[i] + s.node_x[i + 1]);
                let ov = overlap(c0, c1, window);
                if ov > 0.0 {
                    let dg = gfun(s.cell_rho[i]) - gfun(s.cell_rho[i - 1]);
                    b += dg * dg / (c1 - c0) * ov / (c1 - c0);
                }
            }
        }
        visc.push(eps * a);
        bd.push(eps * b);
        e43.push(eps.powf(4.0 / 3.0) * c);
    }
    let trap = |v: &[f64]| -> f64 {
        times
            .windows(2)
            .zip(v.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    };
    rep.viscous_budget = trap(&visc);
    rep.bd_budget = trap(&bd);
    rep.eps43_budget = trap(&e43);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi_examples() {
        let g3 = PressureLaw::polytropic(3.0, None).unwrap();
        assert_eq!(kernel_chi(&g3, 2.0, 1.0).unwrap(), 1.0);
        let g2 = PressureLaw::polytropic(2.0, None).unwrap();
        assert_eq!(kernel_chi(&g2, 1.0, 0.0).unwrap(), 1.0);
        for g in [1.4, 2.0, 3.0, 5.0] {
            let law = PressureLaw::polytropic(g, None).unwrap();
            let r: f64 = 1.7;
            assert_eq!(kernel_chi(&law, r, r.powf(law.theta)).unwrap(), 0.0);
        }
        let blend = PressureLaw::general_blend(Default::default()).unwrap();
        assert!(kernel_chi(&blend, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_generator_gives_zero_pair() {
        let law = PressureLaw::polytropic(2.0, None).unwrap();
        let p = generate_pair(ZeroGenerator, &law, 16).unwrap();
        assert_eq!(p.eval(1.3, -0.4), PairValues::default());
    }

    #[test]
    fn hash_vanishes_at_rest() {
        let law = PressureLaw::polytropic(1.4, None).unwrap();
        let p = special_pair_hash(&law).unwrap();
        for r in [1e-3, 0.5, 2.0, 40.0] {
            assert!(p.eta(r, 0.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gamma3_goursat_is_cubic() {
        let law = PressureLaw::polytropic(3.0, None).unwrap();
        let g = goursat_hat(&law, 2.0, 64).unwrap();
        for &(r, u) in &[(1.0, 0.3125), (1.5, -1.1875), (0.5, 0.0625)] {
            let (e, ..) = g.eval_rho_u(r, u);
            assert_relative_eq!(e, (u * u * u + 3.0 * u * r * r) / 6.0, epsilon = 1e-10);
        }
        assert!(g.eval_rho_u(2.5, 0.0).0.is_nan());
    }
}
