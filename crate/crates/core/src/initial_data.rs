//! Boundary-compatible approximate initial data on `[-b, b]`, `b = ε^{-p}`:
//! mollified density with a Gaussian floor, mass normalization, and a velocity
//! with cut-off corrections that make the total stress vanish at `±b`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::nonlocal_forces::interaction_energy;
use crate::pressure_laws::PressureLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityPreset {
    Gaussian {
        mass: f64,
        #[serde(default)]
        center: f64,
        width: f64,
    },
    DoubleBump {
        mass: f64,
        separation: f64,
        width: f64,
    },
    Plateau {
        mass: f64,
        #[serde(default)]
        center: f64,
        halfwidth: f64,
    },
    /// Sampled density, linear in between, zero outside.
    Table { x: Vec<f64>, rho: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityPreset {
    #[default]
    Zero,
    Linear {
        slope: f64,
        #[serde(default)]
        center: f64,
    },
    Tanh {
        amplitude: f64,
        width: f64,
    },
    Sine {
        amplitude: f64,
        wavelength: f64,
    },
    /// Sampled velocity on the given abscissae.
    Table { x: Vec<f64>, u: Vec<f64> },
}

fn table_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return 0.0;
    }
    if n == 1 {
        return ys[0];
    }
    let i = (xs.partition_point(|&v| v <= x)).clamp(1, n - 1) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

fn check_table(name: &'static str, xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(param(name, "need at least two samples and equal lengths"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(param(name, "abscissae must increase"));
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(param(name, "values must be finite"));
    }
    Ok(())
}

/// Raw data `(ρ₀, m₀ = ρ₀u₀)` with its mass and second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInitialData {
    pub density: DensityPreset,
    pub velocity: VelocityPreset,
    pub total_mass: f64,
    pub second_moment: f64,
}

impl RawInitialData {
    pub fn new(density: DensityPreset, velocity: VelocityPreset) -> Result<Self> {
        let (total_mass, second_moment) = match &density {
            DensityPreset::Gaussian { mass, center, width } => {
                if !(*width > 0.0) {
                    return Err(param("density.width", "must be positive"));
                }
                (*mass, mass * (center * center + 0.5 * width * width))
            }
            DensityPreset::DoubleBump { mass, separation, width } => {
                if !(*width > 0.0) {
                    return Err(param("density.width", "must be positive"));
                }
                (*mass, mass * (0.25 * separation * separation + 0.5 * width * width))
            }
            DensityPreset::Plateau { mass, center, halfwidth } => {
                if !(*halfwidth > 0.0) {
                    return Err(param("density.halfwidth", "must be positive"));
                }
                (*mass, mass * (center * center + halfwidth * halfwidth / 3.0))
            }
            DensityPreset::Table { x, rho } => {
                check_table("density.table", x, rho)?;
                if rho.iter().any(|r| *r < 0.0) {
                    return Err(param("density.table", "density must be nonnegative"));
                }
                let mut m = 0.0;
                let mut m2 = 0.0;
                for i in 0..x.len() - 1 {
                    let h = x[i + 1] - x[i];
                    m += 0.5 * h * (rho[i] + rho[i + 1]);
                    m2 += 0.5 * h * (rho[i] * x[i] * x[i] + rho[i + 1] * x[i + 1] * x[i + 1]);
                }
                (m, m2)
            }
        };
        if !(total_mass > 0.0) || !total_mass.is_finite() {
            return Err(param("density.mass", format!("must be positive and finite, got {total_mass}")));
        }
        match &velocity {
            VelocityPreset::Table { x, u } => check_table("velocity.table", x, u)?,
            VelocityPreset::Tanh { width, .. } if !(*width > 0.0) => {
                return Err(param("velocity.width", "must be positive"))
            }
            VelocityPreset::Sine { wavelength, .. } if !(*wavelength > 0.0) => {
                return Err(param("velocity.wavelength", "must be positive"))
            }
            _ => {}
        }
        Ok(Self {
            density,
            velocity,
            total_mass,
            second_moment,
        })
    }

    pub fn rho0(&self, x: f64) -> f64 {
        match &self.density {
            DensityPreset::Gaussian { mass, center, width } => {
                let z = (x - center) / width;
                mass / (std::f64::consts::PI.sqrt() * width) * (-z * z).exp()
            }
            DensityPreset::DoubleBump { mass, separation, width } => {
                let a = (x - 0.5 * separation) / width;
                let b = (x + 0.5 * separation) / width;
                0.5 * mass / (std::f64::consts::PI.sqrt() * width) * ((-a * a).exp() + (-b * b).exp())
            }
            DensityPreset::Plateau { mass, center, halfwidth } => {
                if (x - center).abs() <= *halfwidth {
                    mass / (2.0 * halfwidth)
                } else {
                    0.0
                }
            }
            DensityPreset::Table { x: xs, rho } => table_eval(xs, rho, x),
        }
    }

    pub fn u0(&self, x: f64) -> f64 {
        match &self.velocity {
            VelocityPreset::Zero => 0.0,
            VelocityPreset::Linear { slope, center } => slope * (x - center),
            VelocityPreset::Tanh { amplitude, width } => amplitude * (x / width).tanh(),
            VelocityPreset::Sine { amplitude, wavelength } => {
                amplitude * (2.0 * std::f64::consts::PI * x / wavelength).sin()
            }
            VelocityPreset::Table { x: xs, u } => table_eval(xs, u, x),
        }
    }

    pub fn m0(&self, x: f64) -> f64 {
        self.rho0(x) * self.u0(x)
    }

    /// Radius outside which `ρ₀` is below `1e-40` of its scale.
    pub fn support_radius(&self) -> f64 {
        let tail = (40.0 * std::f64::consts::LN_10).sqrt();
        match &self.density {
            DensityPreset::Gaussian { center, width, .. } => center.abs() + width * tail,
            DensityPreset::DoubleBump { separation, width, .. } => 0.5 * separation.abs() + width * tail,
            DensityPreset::Plateau { center, halfwidth, .. } => center.abs() + halfwidth,
            DensityPreset::Table { x, .. } => x[0].abs().max(x[x.len() - 1].abs()),
        }
    }

    /// Energy `∫(½ρ₀u₀² + ρ₀e(ρ₀) + ½ρ₀W∗ρ₀)` by trapezoid sampling.
    pub fn energy(&self, law: &PressureLaw, points: usize) -> f64 {
        let r = self.support_radius();
        let p = Profile::sample(-r, r, points.max(3), |x| self.rho0(x));
        let h = p.h();
        let mut e = 0.0;
        let mut centers = Vec::with_capacity(p.len());
        let mut masses = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            let x = p.x(i);
            let rho = p.values[i];
            let w = if i == 0 || i + 1 == p.len() { 0.5 * h } else { h };
            let u = self.u0(x);
            e += w * (0.5 * rho * u * u + rho * law.e(rho));
            centers.push(x);
            masses.push(w * rho);
        }
        e + interaction_energy(&centers, &masses).0
    }
}

/// Values on a uniform grid over `[lo, hi]`; linear in between, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn sample<F: FnMut(f64) -> f64>(lo: f64, hi: f64, n: usize, mut f: F) -> Self {
        let h = (hi - lo) / (n - 1) as f64;
        let values = (0..n)
            .map(|i| f(if i + 1 == n { hi } else { lo + h * i as f64 }))
            .collect();
        Self { lo, hi, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.values.len() {
            self.hi
        } else {
            self.lo + self.h() * i as f64
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let h = self.h();
        let i = (((x - self.lo) / h).floor() as usize).min(self.values.len() - 2);
        let t = (x - self.x(i)) / h;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.h() * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingOptions {
    /// Points of the Eulerian sampling grid.
    pub points: usize,
    /// Trapezoid points across the mollifier support.
    pub mollifier_points: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            points: 16385,
            mollifier_points: 129,
        }
    }
}

/// `β = 2/(2α - 1)`.
pub fn beta(alpha: f64) -> f64 {
    2.0 / (2.0 * alpha - 1.0)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 2.0 / 3.0 && alpha <= 1.0) {
        return Err(param(
            "alpha",
            format!("viscosity exponent must lie in (2/3, 1], got {alpha}"),
        ));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Standard bump `exp(-1/(1-y²))` on `(-1, 1)`.
pub fn bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

/// Smooth monotone cut-off: 0 below 0, 1 above 2.
pub fn cutoff(z: f64) -> f64 {
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let a = f(z);
    let b = f(2.0 - z);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

fn cutoff_d1(z: f64) -> f64 {
    if z <= 0.0 || z >= 2.0 {
        return 0.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    let df = |s: f64| (-1.0 / s).exp() / (s * s);
    let (a, b) = (f(z), f(2.0 - z));
    let (da, db) = (df(z), -df(2.0 - z));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

/// Discrete mollifier weights with unit sum at scale `delta`.
fn mollifier(delta: f64, points: usize) -> Vec<(f64, f64)> {
    let n = points.max(3) | 1;
    let mut w: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let y = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            (delta * y, bump(y))
        })
        .collect();
    let s: f64 = w.iter().map(|p| p.1).sum();
    for p in &mut w {
        p.1 /= s;
    }
    w
}

/// Half-width of the sampling window: `b`, or less when the data is already
/// negligible before `b`.
pub fn sampling_radius(raw: &RawInitialData, epsilon: f64, alpha: f64, b: f64) -> f64 {
    let be = beta(alpha);
    let floor_ext = (epsilon.ln() + 40.0 * std::f64::consts::LN_10 / be).max(0.0).sqrt();
    let raw_ext = raw.support_radius() + epsilon.sqrt();
    b.min(raw_ext.max(floor_ext) + 0.5)
}

/// `ρ̃ = ((ρ₀𝟙_{|x|≤b-1})^{α-½} ∗ J_{√ε} + εe^{-x²})^β` sampled on the window.
pub fn mollify_density(
    raw: &RawInitialData,
    epsilon: f64,
    alpha: f64,
    b: f64,
    opts: &SamplingOptions,
) -> Result<Profile> {
    check_epsilon(epsilon)?;
    check_alpha(alpha)?;
    if !(b > 0.0) {
        return Err(param("b", "must be positive"));
    }
    let be = beta(alpha);
    let r = sampling_radius(raw, epsilon, alpha, b);
    let kern = mollifier(epsilon.sqrt(), opts.mollifier_points);
    let inner = |x: f64| {
        if x.abs() > b - 1.0 {
            0.0
        } else {
            raw.rho0(x).powf(alpha - 0.5)
        }
    };
    Ok(Profile::sample(-r, r, opts.points.max(3), |x| {
        let conv: f64 = kern.iter().map(|&(y, w)| w * inner(x - y)).sum();
        (conv + epsilon * (-x * x).exp()).powf(be)
    }))
}

/// Cuts `profile` to `[-b, b]` and rescales it to mass `mass`.
pub fn normalize_mass(profile: &Profile, mass: f64, b: f64) -> Result<Profile> {
    let mut out = profile.clone();
    for i in 0..out.len() {
        if out.x(i).abs() > b {
            out.values[i] = 0.0;
        }
    }
    let total = out.integral();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroIntegral(total));
    }
    let f = mass / total;
    if f != 1.0 {
        for v in &mut out.values {
            *v *= f;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfiles {
    /// Mollified velocity before the boundary correction.
    pub bar: Profile,
    /// Corrected velocity.
    pub corrected: Profile,
}

/// Velocity `ū = (√ρ₀u₀𝟙_{|x|≤b-2} ∗ J_{√ε}) / √ρ₀^ε`, then the cut-off
/// corrections in the collars `[b-½, b]` and `[-b, -b+½]` that zero the total
/// stress at `±b`.
pub fn build_velocity(
    raw: &RawInitialData,
    rho0_eps: &Profile,
    epsilon: f64,
    alpha: f64,
    b: f64,
    law: &PressureLaw,
    opts: &SamplingOptions,
) -> Result<VelocityProfiles> {
    check_epsilon(epsilon)?;
    for (i, &r) in rho0_eps.values.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::Vacuum { x: rho0_eps.x(i) });
        }
    }
    let kern = mollifier(epsilon.sqrt(), opts.mollifier_points);
    let inner = |x: f64| {
        if x.abs() > b - 2.0 {
            0.0
        } else {
            let r = raw.rho0(x);
            r.sqrt() * raw.u0(x)
        }
    };
    let n = rho0_eps.len();
    let mut bar = rho0_eps.clone();
    for i in 0..n {
        let x = rho0_eps.x(i);
        let conv: f64 = kern.iter().map(|&(y, w)| w * inner(x - y)).sum();
        bar.values[i] = conv / rho0_eps.values[i].sqrt();
    }
    let mut corrected = bar.clone();
    let h = rho0_eps.h();
    let g: Vec<f64> = rho0_eps
        .values
        .iter()
        .map(|&r| law.p(r) / r.powf(alpha))
        .collect();
    // ∫ₓ^b g and ∫_{-b}^x g by trapezoid from each end.
    let mut right = vec![0.0; n];
    for i in (0..n - 1).rev() {
        right[i] = right[i + 1] + 0.5 * h * (g[i] + g[i + 1]);
    }
    let mut left = vec![0.0; n];
    for i in 1..n {
        left[i] = left[i - 1] + 0.5 * h * (g[i] + g[i - 1]);
    }
    for i in 0..n {
        let x = rho0_eps.x(i);
        let sr = cutoff(4.0 * (x - (b - 0.5)));
        let sl = cutoff(-4.0 * (x + (b - 0.5)));
        // The collars only exist when the window reaches ±b.
        let reach_r = (rho0_eps.hi - b).abs() <= 1e-12 * b.max(1.0);
        let reach_l = (rho0_eps.lo + b).abs() <= 1e-12 * b.max(1.0);
        if sr > 0.0 && reach_r {
            corrected.values[i] -= sr * right[i] / epsilon;
        }
        if sl > 0.0 && reach_l {
            corrected.values[i] += sl * left[i] / epsilon;
        }
    }
    Ok(VelocityProfiles { bar, corrected })
}

/// Exact derivative of the right collar correction, used to check the
/// sampled boundary stress.
pub fn collar_slope(z: f64) -> f64 {
    cutoff_d1(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub p_exponent: f64,
    #[serde(default)]
    pub sampling: SamplingOptions,
}

/// Approximate data `(ρ₀^ε, u₀^ε)` on `[-b, b]` with its functionals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxInitialData {
    pub epsilon: f64,
    pub p_exponent: f64,
    pub halfwidth: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total_mass: f64,
    pub rho0_eps: Profile,
    pub u0_eps: Profile,
    pub u0_bar: Profile,
    /// `M / ∫ρ̄₀^ε`.
    pub normalization: f64,
    pub e0_eps: f64,
    pub e1_eps: f64,
    left_cum: Vec<f64>,
    right_cum: Vec<f64>,
}

impl ApproxInitialData {
    pub fn build(raw: &RawInitialData, law: &PressureLaw, params: &ApproxParams) -> Result<Self> {
        let eps = params.epsilon;
        check_epsilon(eps)?;
        check_alpha(params.alpha)?;
        if !(params.p_exponent > 0.0) {
            return Err(param("p_exponent", "must be positive"));
        }
        let b = eps.powf(-params.p_exponent);
        let tilde = mollify_density(raw, eps, params.alpha, b, &params.sampling)?;
        let total_tilde = tilde.integral();
        let rho = normalize_mass(&tilde, raw.total_mass, b)?;
        let vel = build_velocity(raw, &rho, eps, params.alpha, b, law, &params.sampling)?;
        let h = rho.h();
        let n = rho.len();
        let mut left_cum = vec![0.0; n];
        for i in 1..n {
            left_cum[i] = left_cum[i - 1] + 0.5 * h * (rho.values[i] + rho.values[i - 1]);
        }
        let mut right_cum = vec![0.0; n];
        for i in (0..n - 1).rev() {
            right_cum[i] = right_cum[i + 1] + 0.5 * h * (rho.values[i] + rho.values[i + 1]);
        }
        let mut data = Self {
            epsilon: eps,
            p_exponent: params.p_exponent,
            halfwidth: b,
            alpha: params.alpha,
            beta: beta(params.alpha),
            total_mass: raw.total_mass,
            rho0_eps: rho,
            u0_eps: vel.corrected,
            u0_bar: vel.bar,
            normalization: raw.total_mass / total_tilde,
            e0_eps: 0.0,
            e1_eps: 0.0,
            left_cum,
            right_cum,
        };
        let (e0, e1) = initial_functionals(&data, law);
        data.e0_eps = e0;
        data.e1_eps = e1;
        Ok(data)
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.rho0_eps.eval(x)
    }

    pub fn u(&self, x: f64) -> f64 {
        self.u0_eps.eval(x)
    }

    /// Mass of the sampled profile.
    pub fn mass(&self) -> f64 {
        *self.left_cum.last().unwrap()
    }

    /// Position with mass `tail` to its left.
    pub fn invert_left(&self, tail: f64) -> f64 {
        invert(&self.rho0_eps, &self.left_cum, tail, false)
    }

    /// Position with mass `tail` to its right.
    pub fn invert_right(&self, tail: f64) -> f64 {
        invert(&self.rho0_eps, &self.right_cum, tail, true)
    }

    /// `∫x²ρ₀^ε`.
    pub fn second_moment(&self) -> f64 {
        let p = &self.rho0_eps;
        let prof = Profile {
            lo: p.lo,
            hi: p.hi,
            values: (0..p.len()).map(|i| p.x(i).powi(2) * p.values[i]).collect(),
        };
        prof.integral()
    }

    /// Raw and shifted `½∫ρ₀^ε W∗ρ₀^ε`.
    pub fn interaction_energy(&self) -> (f64, f64) {
        let p = &self.rho0_eps;
        let h = p.h();
        let n = p.len();
        let xs: Vec<f64> = (0..n).map(|i| p.x(i)).collect();
        let ms: Vec<f64> = (0..n)
            .map(|i| {
                let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
                w * p.values[i]
            })
            .collect();
        interaction_energy(&xs, &ms)
    }

    /// `|P(ρ) - εμ(ρ)uₓ|` at `x = ±b` from one-sided differences; zero when
    /// the sampling window stops short of `b`.
    pub fn boundary_stress_residual(&self, law: &PressureLaw) -> (f64, f64) {
        let p = &self.rho0_eps;
        let u = &self.u0_eps;
        let n = p.len();
        let h = p.h();
        let stress = |i: usize, dudx: f64| {
            let r = p.values[i];
            law.p(r) - self.epsilon * r.powf(self.alpha) * dudx
        };
        let b = self.halfwidth;
        let l = if (p.lo + b).abs() <= 1e-12 * b.max(1.0) {
            stress(0, (u.values[1] - u.values[0]) / h).abs()
        } else {
            0.0
        };
        let r = if (p.hi - b).abs() <= 1e-12 * b.max(1.0) {
            stress(n - 1, (u.values[n - 1] - u.values[n - 2]) / h).abs()
        } else {
            0.0
        };
        (l, r)
    }
}

fn invert(p: &Profile, cum: &[f64], tail: f64, from_right: bool) -> f64 {
    let n = p.len();
    let h = p.h();
    if !from_right {
        let i = cum.partition_point(|&c| c < tail).clamp(1, n - 1) - 1;
        let need = tail - cum[i];
        p.x(i) + solve_linear_cell(p.values[i], p.values[i + 1], h, need)
    } else {
        // cum is decreasing in i.
        let j = cum.partition_point(|&c| c >= tail).clamp(1, n - 1);
        let need = tail - cum[j];
        p.x(j) - solve_linear_cell(p.values[j], p.values[j - 1], h, need)
    }
}

/// Distance `s ∈ [0, h]` with `∫₀ˢ (a + (b - a)t/h) dt = need`.
fn solve_linear_cell(a: f64, b: f64, h: f64, need: f64) -> f64 {
    let need = need.max(0.0);
    let c = (b - a) / (2.0 * h);
    let s = if c.abs() <= 1e-14 * (a.abs() + b.abs()) / h || c == 0.0 {
        if a > 0.0 {
            need / a
        } else {
            0.0
        }
    } else {
        // c s² + a s - need = 0, stable root.
        let disc = (a * a + 4.0 * c * need).max(0.0).sqrt();
        2.0 * need / (a + disc)
    };
    s.clamp(0.0, h)
}

/// `E₀^ε = ∫(½ρu² + ρe(ρ) + ½ρW∗ρ)` and `E₁^ε = ε²∫ρ^{2α-3}ρₓ²`.
pub fn initial_functionals(data: &ApproxInitialData, law: &PressureLaw) -> (f64, f64) {
    let p = &data.rho0_eps;
    let u = &data.u0_eps;
    let n = p.len();
    let h = p.h();
    let mut e0 = 0.0;
    for i in 0..n {
        let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
        let r = p.values[i];
        e0 += w * (0.5 * r * u.values[i].powi(2) + r * law.e(r));
    }
    e0 += data.interaction_energy().0;
    // ρ^{2α-3}ρₓ² = ((ρ^{α-½})ₓ)² / (α-½)².
    let a = data.alpha - 0.5;
    let mut e1 = 0.0;
    for i in 0..n - 1 {
        let d = (p.values[i + 1].powf(a) - p.values[i].powf(a)) / h;
        e1 += h * d * d;
    }
    (e0, data.epsilon * data.epsilon * e1 / (a * a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss() -> RawInitialData {
        RawInitialData::new(
            DensityPreset::Gaussian {
                mass: 1.0,
                center: 0.0,
                width: 0.6,
            },
            VelocityPreset::Tanh {
                amplitude: 0.3,
                width: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn mollifier_weights_sum_to_one() {
        let w = mollifier(0.1, 129);
        let s: f64 = w.iter().map(|p| p.1).sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(-0.1), 0.0);
        assert_eq!(cutoff(0.0), 0.0);
        assert_eq!(cutoff(2.0), 1.0);
        assert_eq!(cutoff(3.0), 1.0);
        assert_relative_eq!(cutoff(1.0), 0.5, max_relative = 1e-15);
        let mut prev = 0.0;
        for i in 1..200 {
            let v = cutoff(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_density_leaves_floor() {
        let raw = RawInitialData::new(
            DensityPreset::Table {
                x: vec![-1.0, 1.0],
                rho: vec![0.0, 0.0],
            },
            VelocityPreset::Zero,
        );
        // zero mass is rejected at construction
        assert!(raw.is_err());
        let raw = RawInitialData::new(
            DensityPreset::Plateau {
                mass: 1.0,
                center: 100.0,
                halfwidth: 0.5,
            },
            VelocityPreset::Zero,
        )
        .unwrap();
        let eps: f64 = 0.25;
        let opts = SamplingOptions {
            points: 1001,
            mollifier_points: 65,
        };
        let prof = mollify_density(&raw, eps, 1.0, 4.0, &opts).unwrap();
        for i in 0..prof.len() {
            let x = prof.x(i);
            let floor = (eps * (-x * x).exp()).powi(2);
            assert_relative_eq!(prof.values[i], floor, max_relative = 1e-12);
        }
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let raw = gauss();
        let opts = SamplingOptions::default();
        assert!(mollify_density(&raw, 0.1, 0.6, 10.0, &opts).is_err());
        assert!(mollify_density(&raw, 0.1, 2.0 / 3.0, 10.0, &opts).is_err());
        assert!(mollify_density(&raw, 0.1, 1.1, 10.0, &opts).is_err());
    }

    #[test]
    fn normalize_scales() {
        let p = Profile::sample(-1.0, 1.0, 101, |_| 2.0);
        let q = normalize_mass(&p, 2.0, 5.0).unwrap();
        assert!(q.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let z = Profile::sample(-1.0, 1.0, 11, |_| 0.0);
        assert!(matches!(normalize_mass(&z, 1.0, 5.0), Err(Error::ZeroIntegral(_))));
    }

    #[test]
    fn inversion_roundtrip() {
        let law = PressureLaw::polytropic(2.0, None).unwrap();
        let params = ApproxParams {
            epsilon: 0.05,
            alpha: 1.0,
            p_exponent: 2.1,
            sampling: SamplingOptions {
                points: 4001,
                mollifier_points: 65,
            },
        };
        let d = ApproxInitialData::build(&gauss(), &law, &params).unwrap();
        assert_relative_eq!(d.mass(), 1.0, max_relative = 1e-13);
        for tail in [1e-12, 1e-6, 0.1, 0.45] {
            let x = d.invert_left(tail);
            let y = d.invert_right(tail);
            assert!(x < y);
            assert_relative_eq!(x, -y, max_relative = 1e-6, epsilon = 1e-9);
        }
    }
}
