//! Run configuration: one TOML (or JSON) document describing the law, forces,
//! initial profile, ε or ε-ladder, grid, solver and diagnostics.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::initial_data::{check_alpha, ApproxParams, DensityPreset, RawInitialData, SamplingOptions, VelocityPreset};
use crate::lagrangian_solver::{GridSpec, SolverConfig};
use crate::nonlocal_forces::NonlocalConfig;
use crate::pressure_laws::{log_grid, validate_hypotheses, BlendParams, PressureLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Polytropic {
        gamma: f64,
        #[serde(default)]
        kappa: Option<f64>,
    },
    GeneralBlend {
        gamma1: f64,
        gamma2: f64,
        kappa1: f64,
        kappa2: f64,
        rho_star_low: f64,
        rho_star_high: f64,
    },
}

impl LawConfig {
    pub fn build(&self) -> Result<PressureLaw> {
        match *self {
            LawConfig::Polytropic { gamma, kappa } => PressureLaw::polytropic(gamma, kappa),
            LawConfig::GeneralBlend {
                gamma1,
                gamma2,
                kappa1,
                kappa2,
                rho_star_low,
                rho_star_high,
            } => PressureLaw::general_blend(BlendParams {
                gamma1,
                gamma2,
                kappa1,
                kappa2,
                rho_star_low,
                rho_star_high,
            }),
        }
    }

    /// `γ` or `γ₁`.
    pub fn gamma(&self) -> f64 {
        match *self {
            LawConfig::Polytropic { gamma, .. } => gamma,
            LawConfig::GeneralBlend { gamma1, .. } => gamma1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub density: DensityPreset,
    #[serde(default)]
    pub velocity: VelocityPreset,
    /// Expected `∫x²ρ₀`; checked against the preset when given.
    #[serde(default)]
    pub second_moment: Option<f64>,
}

/// Explicit ε values, or `eps0 / 2^k` for `k = 0..=halvings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ladder {
    List { epsilons: Vec<f64> },
    Halvings { eps0: f64, halvings: usize },
}

impl Ladder {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Ladder::List { epsilons } => epsilons.clone(),
            Ladder::Halvings { eps0, halvings } => (0..=*halvings).map(|k| eps0 / 2f64.powi(k as i32)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default = "default_resolution")]
    pub goursat_resolution: usize,
    #[serde(default = "default_bound_grid")]
    pub bound_grid: usize,
    /// Row and column stride of the exported `η̂` table.
    #[serde(default = "default_stride")]
    pub table_stride: usize,
}

fn default_generator() -> String {
    "quadratic".into()
}
fn default_order() -> usize {
    64
}
fn default_samples() -> usize {
    200
}
fn default_rho_max() -> f64 {
    4.0
}
fn default_resolution() -> usize {
    512
}
fn default_bound_grid() -> usize {
    40
}
fn default_stride() -> usize {
    8
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            generator: default_generator(),
            quadrature_order: default_order(),
            samples: default_samples(),
            rho_max: default_rho_max(),
            goursat_resolution: default_resolution(),
            bound_grid: default_bound_grid(),
            table_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub law: LawConfig,
    #[serde(default)]
    pub nonlocal: NonlocalConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub ladder: Option<Ladder>,
    pub alpha: f64,
    pub p_exponent: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: SamplingOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "run".into()
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks the parameter regime and every section.
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha).map_err(|_| {
            Error::Config(format!(
                "alpha = {} is outside the admissible range 2/3 < α ≤ 1 (with γ₁ ≥ γ₂ > 1)",
                self.alpha
            ))
        })?;
        let law = self.law.build()?;
        let g = self.law.gamma();
        let bound = g / (g - self.alpha);
        if !(self.p_exponent > bound) {
            return Err(Error::Config(format!(
                "p_exponent = {} is too small: the domain half-width b = ε^(-p) must satisfy p>γ/(γ−α), \
                 here γ/(γ−α) = {:.6}; without it the free boundary is not guaranteed to stay beyond b/2",
                self.p_exponent, bound
            )));
        }
        self.nonlocal.validate()?;
        self.grid.validate()?;
        self.solver.validate()?;
        let raw = self.raw_data()?;
        if let Some(m2) = self.initial.second_moment {
            if (m2 - raw.second_moment).abs() > 1e-8 * m2.abs().max(1e-300) {
                return Err(Error::Config(format!(
                    "initial.second_moment = {m2} does not match the profile's {}",
                    raw.second_moment
                )));
            }
        }
        for e in self.epsilons() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("epsilon {e} must lie in (0, 1]")));
            }
        }
        if self.epsilon.is_none() && self.ladder.is_none() {
            return Err(Error::Config("set `epsilon` or a `ladder`".into()));
        }
        if !law.is_polytropic() {
            let rep = validate_hypotheses(&law, &log_grid(1e-4, 20.0 * law.rho_star_high.max(1.0), 400));
            if !rep.pass {
                let bad: Vec<&str> = rep.regimes.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
                return Err(Error::Config(format!(
                    "pressure law fails its hypotheses (failing regimes {bad:?}, monotone {})",
                    rep.monotone
                )));
            }
        }
        Ok(())
    }

    pub fn raw_data(&self) -> Result<RawInitialData> {
        RawInitialData::new(self.initial.density.clone(), self.initial.velocity.clone())
    }

    /// `epsilon` if set, otherwise the first ladder entry.
    pub fn run_epsilon(&self) -> Option<f64> {
        self.epsilon.or_else(|| self.ladder.as_ref().and_then(|l| l.values().first().copied()))
    }

    pub fn epsilons(&self) -> Vec<f64> {
        let mut v = self.ladder.as_ref().map(|l| l.values()).unwrap_or_default();
        if let Some(e) = self.epsilon {
            v.push(e);
        }
        v
    }

    pub fn approx_params(&self, epsilon: f64) -> ApproxParams {
        ApproxParams {
            epsilon,
            alpha: self.alpha,
            p_exponent: self.p_exponent,
            sampling: self.sampling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
alpha = 1.0
p_exponent = 2.1
epsilon = 0.01
[law]
kind = "polytropic"
gamma = 2.0
[initial.density]
kind = "gaussian"
mass = 1.0
width = 1.0
"#;

    #[test]
    fn minimal_parses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.run_epsilon(), Some(0.01));
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::parse(&json).unwrap(), c);
    }

    #[test]
    fn small_p_is_refused() {
        let c = RunConfig::parse(&MINIMAL.replace("p_exponent = 2.1", "p_exponent = 1.5")).unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("p>γ/(γ−α)"), "{msg}");
    }

    #[test]
    fn alpha_range_is_enforced() {
        let c = RunConfig::parse(&MINIMAL.replace("alpha = 1.0", "alpha = 0.5")).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn ladder_values() {
        let l = Ladder::Halvings { eps0: 0.04, halvings: 3 };
        assert_eq!(l.values(), vec![0.04, 0.02, 0.01, 0.005]);
    }

    #[test]
    fn blends_must_satisfy_hypotheses() {
        let blend = |k2: f64, hi: f64| {
            MINIMAL.replace(
                "kind = \"polytropic\"\ngamma = 2.0",
                &format!(
                    "kind = \"general_blend\"\ngamma1 = 2.0\ngamma2 = 1.4\nkappa1 = 0.125\nkappa2 = {k2}\n\
                     rho_star_low = 0.5\nrho_star_high = {hi}"
                ),
            )
        };
        RunConfig::parse(&blend(0.125, 2.0)).unwrap().validate().unwrap();
        let msg = RunConfig::parse(&blend(0.2, 1.0)).unwrap().validate().unwrap_err().to_string();
        assert!(msg.contains("hypotheses"), "{msg}");
    }
}
