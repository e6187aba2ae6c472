//! Entropy-pair self-tests driven by a run configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::diagnostics::Flag;
use crate::entropy_pairs::{
    compatibility_defect, generate_pair, goursat_hat, hash_bounds, mechanical, special_pair_hash, EntropyPair,
    GoursatReport, HashBounds, LinearGenerator, QuadraticGenerator, SignedQuadraticGenerator, ZeroGenerator,
};
use crate::error::{Error, Result};
use crate::pressure_laws::PressureLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySuite {
    pub law: String,
    pub generator: String,
    pub samples: usize,
    /// Largest `|η - η*| + |q - q*|` over `1 + |η*| + |q*|` (quadratic generator).
    pub mechanical_error: Option<f64>,
    /// Largest `|η| + |q|` (zero generator).
    pub zero_pair_max: Option<f64>,
    pub compatibility_defect: Option<f64>,
    /// `max |η^#(ρ, 0)|` over the bound grid.
    pub hash_at_rest: Option<f64>,
    pub hash_bounds: Option<HashBounds>,
    pub hash_bounds_refined: Option<HashBounds>,
    pub hash_drift: Option<f64>,
    pub goursat: GoursatReport,
    pub goursat_coarse: GoursatReport,
    pub goursat_bound_drift: f64,
    /// `[ρ, u, η̂, q̂]` rows, thinned by `table_stride`.
    #[serde(skip)]
    pub goursat_table: Vec<[f64; 4]>,
    pub flags: BTreeMap<String, Flag>,
}

impl EntropySuite {
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|f| f.pass)
    }
}

fn boxed_generated(name: &str, law: &PressureLaw, order: usize) -> Result<Box<dyn EntropyPair>> {
    Ok(match name {
        "zero" => Box::new(generate_pair(ZeroGenerator, law, order)?),
        "linear" => Box::new(generate_pair(LinearGenerator, law, order)?),
        "quadratic" => Box::new(generate_pair(QuadraticGenerator, law, order)?),
        "signed_quadratic" => Box::new(generate_pair(SignedQuadraticGenerator, law, order)?),
        other => {
            return Err(Error::Config(format!(
                "unknown generator `{other}` (zero, linear, quadratic, signed_quadratic)"
            )))
        }
    })
}

fn rel_drift(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random `(ρ, u)` with `log ρ` uniform on `[1e-3, rho_max]` and `u` uniform on
/// `[-2, 2]`.
pub fn sample_points(seed: u64, n: usize, rho_max: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (1e-3f64.ln(), rho_max.ln());
    (0..n)
        .map(|_| (rng.gen_range(lo..hi).exp(), rng.gen_range(-2.0..2.0)))
        .collect()
}

/// Generated pair against the mechanical pair, `η^#` bounds, and `η̂` on the
/// configured grid.
pub fn entropy_suite(cfg: &RunConfig) -> Result<EntropySuite> {
    let law = cfg.law.build()?;
    let ec = &cfg.entropy;
    let pts = sample_points(cfg.seed, ec.samples, ec.rho_max);
    let mut flags = BTreeMap::new();
    let mut mechanical_error = None;
    let mut zero_pair_max = None;
    let mut compat = None;
    let mut hash_at_rest = None;
    let mut hb = None;
    let mut hb2 = None;
    let mut hash_drift = None;

    if law.is_polytropic() {
        let pair = boxed_generated(&ec.generator, &law, ec.quadrature_order)?;
        match ec.generator.as_str() {
            "quadratic" => {
                let mut worst = 0.0f64;
                for &(r, u) in &pts {
                    let v = pair.eval(r, r * u);
                    let (e, q) = mechanical(&law, r, u);
                    worst = worst.max(((v.eta - e).abs() + (v.q - q).abs()) / (1.0 + e.abs() + q.abs()));
                }
                flags.insert("generated_matches_mechanical".into(), Flag::at_most(worst, 1e-8));
                mechanical_error = Some(worst);
            }
            "zero" => {
                let worst = pts
                    .iter()
                    .map(|&(r, u)| {
                        let v = pair.eval(r, r * u);
                        v.eta.abs() + v.q.abs()
                    })
                    .fold(0.0, f64::max);
                flags.insert("zero_generator_gives_zero_pair".into(), Flag::at_most(worst, 0.0));
                zero_pair_max = Some(worst);
            }
            _ => {}
        }
        let cd = compatibility_defect(pair.as_ref(), &law, &pts);
        flags.insert("generated_compatibility".into(), Flag::at_most(cd, 1e-6));
        compat = Some(cd);

        let hash = special_pair_hash(&law)?;
        let (rhos, _) = crate::entropy_pairs::bound_grid(ec.bound_grid);
        let rest = rhos.iter().map(|&r| hash.eta(r, 0.0).abs()).fold(0.0, f64::max);
        flags.insert("hash_vanishes_at_rest".into(), Flag::at_most(rest, 1e-12));
        hash_at_rest = Some(rest);
        let a = hash_bounds(&hash, ec.bound_grid);
        let b = hash_bounds(&hash, 2 * ec.bound_grid);
        let drift = [
            rel_drift(a.eta_upper, b.eta_upper),
            rel_drift(a.q_lower, b.q_lower),
            rel_drift(a.eta_m, b.eta_m),
            rel_drift(a.eta_rho, b.eta_rho),
            rel_drift(a.cancellation, b.cancellation),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        flags.insert("hash_bounds_refinement_drift".into(), Flag::at_most(drift, 0.05));
        let finite = [b.eta_upper, b.q_lower, b.eta_m, b.eta_rho, b.cancellation]
            .iter()
            .all(|c| c.is_finite() && *c > 0.0);
        flags.insert(
            "hash_bound_constants_finite".into(),
            Flag::at_least(if finite { 1.0 } else { 0.0 }, 1.0),
        );
        hb = Some(a);
        hb2 = Some(b);
        hash_drift = Some(drift);
    }

    let fine = goursat_hat(&law, ec.rho_max, ec.goursat_resolution)?;
    let coarse = goursat_hat(&law, ec.rho_max, (ec.goursat_resolution / 2).max(8))?;
    let g = fine.report;
    flags.insert("goursat_residual".into(), Flag::at_most(g.residual, 1e-3));
    flags.insert("goursat_boundary_exact".into(), Flag::at_most(g.boundary_error, 1e-12));
    flags.insert("goursat_odd_symmetry".into(), Flag::at_most(g.symmetry_defect, 1e-12));
    let bound_drift = rel_drift(g.bound_constant, coarse.report.bound_constant);
    flags.insert("goursat_bound_stable".into(), Flag::at_most(bound_drift, 0.05));

    Ok(EntropySuite {
        law: format!("{:?}", cfg.law),
        generator: ec.generator.clone(),
        samples: pts.len(),
        mechanical_error,
        zero_pair_max,
        compatibility_defect: compat,
        hash_at_rest,
        hash_bounds: hb,
        hash_bounds_refined: hb2,
        hash_drift,
        goursat: g,
        goursat_coarse: coarse.report,
        goursat_bound_drift: bound_drift,
        goursat_table: fine.table_strided(ec.table_stride),
        flags,
    })
}
