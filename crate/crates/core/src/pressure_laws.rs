//! Equations of state: the polytropic law `P = κρ^γ` and a smooth blend of two
//! power laws for the general case, with internal energy
//! `e(ρ) = ∫₀^ρ P(σ)/σ² dσ` and sound integral `k(ρ) = ∫₀^ρ √P'(y)/y dy`.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::quad::GaussRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Polytropic,
    GeneralBlend,
}

/// `κ = (γ-1)²/(4γ)`, which makes `k(ρ) = ρ^θ`.
pub fn default_kappa(gamma: f64) -> f64 {
    (gamma - 1.0).powi(2) / (4.0 * gamma)
}

/// Ninth-order smoothstep, `C⁴` at both ends.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let t5 = t.powi(5);
    t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + t * 70.0))))
}

fn smoothstep_d1(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    630.0 * (t * (1.0 - t)).powi(4)
}

fn smoothstep_d2(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    2520.0 * (t * (1.0 - t)).powi(3) * (1.0 - 2.0 * t)
}

const CACHE_POINTS: usize = 2048;

#[derive(Debug)]
struct BlendCache {
    log_lo: f64,
    dlog: f64,
    rho: Vec<f64>,
    e: Vec<f64>,
    de: Vec<f64>,
    k: Vec<f64>,
    dk: Vec<f64>,
}

impl BlendCache {
    fn locate(&self, rho: f64) -> usize {
        let i = ((rho.ln() - self.log_lo) / self.dlog).floor();
        (i.max(0.0) as usize).min(self.rho.len() - 2)
    }

    fn hermite(&self, vals: &[f64], slopes: &[f64], rho: f64) -> f64 {
        let i = self.locate(rho);
        let (x0, x1) = (self.rho[i], self.rho[i + 1]);
        let h = x1 - x0;
        let t = (rho - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * vals[i] + h10 * h * slopes[i] + h01 * vals[i + 1] + h11 * h * slopes[i + 1]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PressureLaw {
    pub kind: LawKind,
    pub gamma: f64,
    pub gamma2: f64,
    pub kappa: f64,
    pub kappa2: f64,
    pub rho_star_low: f64,
    pub rho_star_high: f64,
    pub theta: f64,
    pub theta2: f64,
    pub kernel_exponent: f64,
    #[serde(skip)]
    cache: Option<Arc<BlendCache>>,
}

impl PartialEq for PressureLaw {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.gamma == o.gamma
            && self.gamma2 == o.gamma2
            && self.kappa == o.kappa
            && self.kappa2 == o.kappa2
            && self.rho_star_low == o.rho_star_low
            && self.rho_star_high == o.rho_star_high
    }
}

/// Parameters of the blended law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub rho_star_low: f64,
    pub rho_star_high: f64,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            gamma1: 2.0,
            gamma2: 1.5,
            kappa1: 0.125,
            kappa2: 0.125,
            rho_star_low: 0.5,
            rho_star_high: 2.0,
        }
    }
}

fn check_gamma(name: &'static str, g: f64) -> Result<()> {
    if !g.is_finite() || g <= 1.0 {
        return Err(param(name, format!("must exceed 1, got {g}")));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(param(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

impl PressureLaw {
    pub fn polytropic(gamma: f64, kappa: Option<f64>) -> Result<Self> {
        check_gamma("gamma", gamma)?;
        let kappa = kappa.unwrap_or_else(|| default_kappa(gamma));
        check_positive("kappa", kappa)?;
        let theta = 0.5 * (gamma - 1.0);
        Ok(Self {
            kind: LawKind::Polytropic,
            gamma,
            gamma2: gamma,
            kappa,
            kappa2: kappa,
            rho_star_low: f64::INFINITY,
            rho_star_high: f64::INFINITY,
            theta,
            theta2: theta,
            kernel_exponent: (3.0 - gamma) / (2.0 * (gamma - 1.0)),
            cache: None,
        })
    }

    pub fn general_blend(p: BlendParams) -> Result<Self> {
        check_gamma("gamma", p.gamma1)?;
        check_gamma("gamma2", p.gamma2)?;
        if p.gamma2 > p.gamma1 {
            return Err(param("gamma2", format!("must not exceed gamma = {}", p.gamma1)));
        }
        check_positive("kappa", p.kappa1)?;
        check_positive("kappa2", p.kappa2)?;
        check_positive("rho_star_low", p.rho_star_low)?;
        if !(p.rho_star_high > p.rho_star_low) || !p.rho_star_high.is_finite() {
            return Err(param("rho_star_high", "must be finite and exceed rho_star_low"));
        }
        let theta = 0.5 * (p.gamma1 - 1.0);
        let mut law = Self {
            kind: LawKind::GeneralBlend,
            gamma: p.gamma1,
            gamma2: p.gamma2,
            kappa: p.kappa1,
            kappa2: p.kappa2,
            rho_star_low: p.rho_star_low,
            rho_star_high: p.rho_star_high,
            theta,
            theta2: 0.5 * (p.gamma2 - 1.0),
            kernel_exponent: (3.0 - p.gamma1) / (2.0 * (p.gamma1 - 1.0)),
            cache: None,
        };
        law.cache = Some(Arc::new(law.build_cache()));
        Ok(law)
    }

    pub fn blend_params(&self) -> BlendParams {
        BlendParams {
            gamma1: self.gamma,
            gamma2: self.gamma2,
            kappa1: self.kappa,
            kappa2: self.kappa2,
            rho_star_low: self.rho_star_low,
            rho_star_high: self.rho_star_high,
        }
    }

    pub fn is_polytropic(&self) -> bool {
        self.kind == LawKind::Polytropic
    }

    fn blend_t(&self, rho: f64) -> f64 {
        (rho - self.rho_star_low) / (self.rho_star_high - self.rho_star_low)
    }

    fn low(&self, rho: f64) -> (f64, f64, f64) {
        let (k, g) = (self.kappa, self.gamma);
        (k * rho.powf(g), k * g * rho.powf(g - 1.0), k * g * (g - 1.0) * rho.powf(g - 2.0))
    }

    fn high(&self, rho: f64) -> (f64, f64, f64) {
        let (k, g) = (self.kappa2, self.gamma2);
        (k * rho.powf(g), k * g * rho.powf(g - 1.0), k * g * (g - 1.0) * rho.powf(g - 2.0))
    }

    /// `(P, P', P'')` at `rho > 0`.
    pub fn derivatives(&self, rho: f64) -> (f64, f64, f64) {
        if self.kind == LawKind::Polytropic || rho <= self.rho_star_low {
            return self.low(rho);
        }
        if rho >= self.rho_star_high {
            return self.high(rho);
        }
        let w = self.rho_star_high - self.rho_star_low;
        let t = self.blend_t(rho);
        let phi = 1.0 - smoothstep(t);
        let dphi = -smoothstep_d1(t) / w;
        let d2phi = -smoothstep_d2(t) / (w * w);
        let (p1, d1, s1) = self.low(rho);
        let (p2, d2, s2) = self.high(rho);
        let p = p1 * phi + p2 * (1.0 - phi);
        let dp = d1 * phi + d2 * (1.0 - phi) + (p1 - p2) * dphi;
        let ddp = s1 * phi + s2 * (1.0 - phi) + 2.0 * (d1 - d2) * dphi + (p1 - p2) * d2phi;
        (p, dp, ddp)
    }

    /// Unchecked pressure.
    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if self.kind == LawKind::Polytropic {
            return self.kappa * rho.powf(self.gamma);
        }
        self.derivatives(rho).0
    }

    /// Unchecked `P'(ρ)`.
    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if self.kind == LawKind::Polytropic {
            return self.kappa * self.gamma * rho.powf(self.gamma - 1.0);
        }
        self.derivatives(rho).1
    }

    /// Unchecked internal energy.
    pub fn e(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if self.kind == LawKind::Polytropic || rho <= self.rho_star_low {
            return self.kappa / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0);
        }
        let c = self.cache.as_ref().expect("blend cache");
        if rho >= self.rho_star_high {
            let eh = *c.e.last().unwrap();
            let g = self.gamma2;
            return eh + self.kappa2 / (g - 1.0) * (rho.powf(g - 1.0) - self.rho_star_high.powf(g - 1.0));
        }
        c.hermite(&c.e, &c.de, rho)
    }

    /// Unchecked sound integral.
    pub fn k(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if self.kind == LawKind::Polytropic || rho <= self.rho_star_low {
            return (self.kappa * self.gamma).sqrt() / self.theta * rho.powf(self.theta);
        }
        let c = self.cache.as_ref().expect("blend cache");
        if rho >= self.rho_star_high {
            let kh = *c.k.last().unwrap();
            let t2 = self.theta2;
            return kh + (self.kappa2 * self.gamma2).sqrt() / t2 * (rho.powf(t2) - self.rho_star_high.powf(t2));
        }
        c.hermite(&c.k, &c.dk, rho)
    }

    /// `k'(ρ) = √P'(ρ)/ρ`.
    pub fn dk(&self, rho: f64) -> f64 {
        self.dp(rho).sqrt() / rho
    }

    /// Inverse of `k`; `s ≥ 0`.
    pub fn k_inverse(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let low = |s: f64| (s * self.theta / (self.kappa * self.gamma).sqrt()).powf(1.0 / self.theta);
        if self.kind == LawKind::Polytropic {
            return low(s);
        }
        let c = self.cache.as_ref().expect("blend cache");
        let (k_lo, k_hi) = (c.k[0], *c.k.last().unwrap());
        if s <= k_lo {
            return low(s);
        }
        if s >= k_hi {
            let t2 = self.theta2;
            let a = (self.kappa2 * self.gamma2).sqrt() / t2;
            return ((s - k_hi) / a + self.rho_star_high.powf(t2)).powf(1.0 / t2);
        }
        let i = c.k.partition_point(|&v| v <= s).clamp(1, c.k.len() - 1) - 1;
        let (mut a, mut b) = (c.rho[i], c.rho[i + 1]);
        let mut x = a + (b - a) * (s - c.k[i]) / (c.k[i + 1] - c.k[i]);
        for _ in 0..60 {
            let f = self.k(x) - s;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let step = f / self.dk(x);
            let xn = x - step;
            x = if xn > a && xn < b { xn } else { 0.5 * (a + b) };
            if step.abs() <= 1e-15 * x || b - a <= 1e-15 * x {
                break;
            }
        }
        x
    }

    /// Exponent `γ(ρ)`: `γ` below `ρ⋆`, `γ₂` above.
    pub fn gamma_local(&self, rho: f64) -> f64 {
        if self.kind == LawKind::Polytropic || rho <= self.rho_star_low {
            self.gamma
        } else {
            self.gamma2
        }
    }

    pub fn theta_local(&self, rho: f64) -> f64 {
        0.5 * (self.gamma_local(rho) - 1.0)
    }

    /// Checked pressure.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.p(rho))
    }

    /// Checked internal energy.
    pub fn internal_energy(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.e(rho))
    }

    /// Checked sound integral.
    pub fn sound_integral_k(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.k(rho))
    }

    fn build_cache(&self) -> BlendCache {
        let (lo, hi) = (self.rho_star_low, self.rho_star_high);
        let log_lo = lo.ln();
        let dlog = (hi.ln() - log_lo) / (CACHE_POINTS - 1) as f64;
        let rho: Vec<f64> = (0..CACHE_POINTS)
            .map(|i| match i {
                0 => lo,
                _ if i == CACHE_POINTS - 1 => hi,
                _ => (log_lo + dlog * i as f64).exp(),
            })
            .collect();
        let gl = GaussRule::legendre(10);
        let mut e = Vec::with_capacity(CACHE_POINTS);
        let mut k = Vec::with_capacity(CACHE_POINTS);
        e.push(self.kappa / (self.gamma - 1.0) * lo.powf(self.gamma - 1.0));
        k.push((self.kappa * self.gamma).sqrt() / self.theta * lo.powf(self.theta));
        for w in rho.windows(2) {
            let de = gl.integrate(w[0], w[1], |s| self.derivatives(s).0 / (s * s));
            let dk = gl.integrate(w[0], w[1], |s| self.derivatives(s).1.sqrt() / s);
            e.push(e.last().unwrap() + de);
            k.push(k.last().unwrap() + dk);
        }
        let de = rho.iter().map(|&r| self.derivatives(r).0 / (r * r)).collect();
        let dk = rho.iter().map(|&r| self.derivatives(r).1.sqrt() / r).collect();
        BlendCache {
            log_lo,
            dlog,
            rho,
            e,
            de,
            k,
            dk,
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho < 0.0 {
        return Err(Error::NegativeDensity(rho));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegimeReport {
    pub name: String,
    pub rho_min: f64,
    pub rho_max: f64,
    pub samples: usize,
    /// Extremes of `P'/ρ^{γᵢ-1}`.
    pub dp_ratio: (f64, f64),
    /// Extremes of `P/(κᵢρ^{γᵢ})`; must lie in `[1/2, 2]` on the power-law regimes.
    pub bracket: (f64, f64),
    /// Minimum of `2P' + ρP''`.
    pub nonlinearity_min: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HypothesisReport {
    pub regimes: Vec<RegimeReport>,
    pub monotone: bool,
    pub pass: bool,
    pub footnote: String,
}

/// Samples the hyperbolicity, genuine nonlinearity and power-law brackets of
/// `law` on the points of `grid`.
pub fn validate_hypotheses(law: &PressureLaw, grid: &[f64]) -> HypothesisReport {
    let mut pts: Vec<f64> = grid.iter().copied().filter(|r| r.is_finite() && *r > 0.0).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut monotone = true;
    for w in pts.windows(2) {
        if w[1] > w[0] && (law.p(w[1]) <= law.p(w[0]) || law.k(w[1]) <= law.k(w[0])) {
            monotone = false;
        }
    }
    let regimes: Vec<(&str, f64, f64, f64, f64, bool)> = match law.kind {
        LawKind::Polytropic => vec![("all", 0.0, f64::INFINITY, law.gamma, law.kappa, true)],
        LawKind::GeneralBlend => vec![
            ("low", 0.0, law.rho_star_low, law.gamma, law.kappa, true),
            ("blend", law.rho_star_low, law.rho_star_high, law.gamma, law.kappa, false),
            ("high", law.rho_star_high, f64::INFINITY, law.gamma2, law.kappa2, true),
        ],
    };
    let mut reports = Vec::new();
    for (name, lo, hi, g, kap, bracketed) in regimes {
        let sel: Vec<f64> = pts
            .iter()
            .copied()
            .filter(|&r| match name {
                "low" => r <= hi,
                "high" => r >= lo,
                _ => r > lo && r < hi,
            })
            .collect();
        if sel.is_empty() {
            continue;
        }
        let mut dr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut br = (f64::INFINITY, f64::NEG_INFINITY);
        let mut gnl = f64::INFINITY;
        let mut ok = true;
        for &r in &sel {
            let (p, d, dd) = law.derivatives(r);
            let q = d / r.powf(g - 1.0);
            let b = p / (kap * r.powf(g));
            dr = (dr.0.min(q), dr.1.max(q));
            br = (br.0.min(b), br.1.max(b));
            let n = 2.0 * d + r * dd;
            gnl = gnl.min(n);
            if !(d > 0.0) || !(n > 0.0) {
                ok = false;
            }
        }
        if bracketed && !(br.0 >= 0.5 && br.1 <= 2.0) {
            ok = false;
        }
        reports.push(RegimeReport {
            name: name.to_string(),
            rho_min: sel[0],
            rho_max: *sel.last().unwrap(),
            samples: sel.len(),
            dp_ratio: dr,
            bracket: br,
            nonlinearity_min: gnl,
            pass: ok,
        });
    }
    let pass = monotone && reports.iter().all(|r| r.pass);
    HypothesisReport {
        regimes: reports,
        monotone,
        pass,
        footnote: "decay constants of the fourth-order derivative conditions are not computed".into(),
    }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polytropic_examples() {
        let law = PressureLaw::polytropic(2.0, Some(0.125)).unwrap();
        assert_relative_eq!(law.pressure(2.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(law.pressure(0.0).unwrap(), 0.0);
        assert_relative_eq!(law.internal_energy(1.0).unwrap(), 0.125, max_relative = 1e-15);
        assert_eq!(law.internal_energy(0.0).unwrap(), 0.0);
        assert_relative_eq!(law.sound_integral_k(4.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_eq!(law.sound_integral_k(0.0).unwrap(), 0.0);
        let g3 = PressureLaw::polytropic(3.0, Some(1.0 / 3.0)).unwrap();
        assert_relative_eq!(g3.k(1.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn default_kappa_gives_unit_k_prefactor() {
        for g in [1.2, 1.4, 2.0, 3.0] {
            let law = PressureLaw::polytropic(g, None).unwrap();
            assert_relative_eq!(law.k(2.5), 2.5f64.powf(law.theta), max_relative = 1e-13);
        }
    }

    #[test]
    fn domain_errors() {
        let law = PressureLaw::polytropic(2.0, None).unwrap();
        assert!(matches!(law.pressure(-1.0), Err(Error::NegativeDensity(_))));
        assert!(law.internal_energy(f64::NAN).is_err());
        assert!(PressureLaw::polytropic(1.0, None).is_err());
        assert!(PressureLaw::polytropic(0.5, None).is_err());
        let bad = BlendParams {
            gamma2: 2.5,
            ..BlendParams::default()
        };
        assert!(PressureLaw::general_blend(bad).is_err());
    }

    #[test]
    fn blend_is_continuous_at_regime_edges() {
        let law = PressureLaw::general_blend(BlendParams::default()).unwrap();
        for edge in [law.rho_star_low, law.rho_star_high] {
            for f in [
                |l: &PressureLaw, r: f64| l.p(r),
                |l: &PressureLaw, r: f64| l.dp(r),
                |l: &PressureLaw, r: f64| l.e(r),
                |l: &PressureLaw, r: f64| l.k(r),
            ] {
                let a = f(&law, edge * (1.0 - 1e-12));
                let b = f(&law, edge * (1.0 + 1e-12));
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
            }
        }
    }

    #[test]
    fn blend_low_density_bracket() {
        let law = PressureLaw::general_blend(BlendParams::default()).unwrap();
        let r = 1e-4;
        let p = law.pressure(r).unwrap();
        let base = 0.125 * r * r;
        assert!(p >= 0.5 * base && p <= 2.0 * base);
    }

    #[test]
    fn k_inverse_roundtrip() {
        let laws = [
            PressureLaw::polytropic(1.4, None).unwrap(),
            PressureLaw::polytropic(2.0, Some(0.3)).unwrap(),
            PressureLaw::general_blend(BlendParams::default()).unwrap(),
        ];
        for law in &laws {
            for &r in &log_grid(1e-5, 1e3, 97) {
                let back = law.k_inverse(law.k(r));
                assert_relative_eq!(back, r, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn validation_reports() {
        let poly = PressureLaw::polytropic(2.0, None).unwrap();
        let grid = log_grid(1e-6, 1e3, 400);
        let rep = validate_hypotheses(&poly, &grid);
        assert!(rep.pass);
        let min_r: f64 = 1e-6;
        let expect = (poly.gamma + 1.0) * poly.kappa * poly.gamma * min_r.powf(poly.gamma - 1.0);
        assert_relative_eq!(rep.regimes[0].nonlinearity_min, expect, max_relative = 1e-9);
        let blend = PressureLaw::general_blend(BlendParams::default()).unwrap();
        let rep = validate_hypotheses(&blend, &grid);
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.regimes.len(), 3);
    }
}
