//! Gauss rules mapped to arbitrary intervals, plus the split rule used for
//! integrands of the form `(1 - t^2)^b f(t)` on `[-1, 1]` where `f` may have
//! a kink.

use gauss_quad::{FiniteAboveNegOneF64, GaussJacobi, GaussLegendre};
use std::num::NonZeroUsize;

use crate::error::{param, Result};

/// Nodes and weights on `[-1, 1]` for the weight `(1-x)^a (1+x)^b`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pairs: Vec<(f64, f64)>,
    a: f64,
    b: f64,
}

impl GaussRule {
    pub fn legendre(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).unwrap();
        Self {
            pairs: GaussLegendre::new(n).as_node_weight_pairs().to_vec(),
            a: 0.0,
            b: 0.0,
        }
    }

    pub fn jacobi(n: usize, a: f64, b: f64) -> Result<Self> {
        let fa = FiniteAboveNegOneF64::new(a).ok_or_else(|| param("jacobi_a", format!("{a} <= -1")))?;
        let fb = FiniteAboveNegOneF64::new(b).ok_or_else(|| param("jacobi_b", format!("{b} <= -1")))?;
        let n = NonZeroUsize::new(n.max(1)).unwrap();
        Ok(Self {
            pairs: GaussJacobi::new(n, fa, fb).as_node_weight_pairs().to_vec(),
            a,
            b,
        })
    }

    /// The rule for the reflected weight, nodes negated in place.
    pub fn mirrored(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(x, w)| (-x, w)).collect(),
            a: self.b,
            b: self.a,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// Integral of the weight itself over `[-1, 1]`.
    pub fn weight_mass(&self) -> f64 {
        self.pairs.iter().map(|p| p.1).sum()
    }

    /// `∫_lo^hi (hi - y)^a (y - lo)^b f(y) dy`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let s: f64 = self.pairs.iter().map(|&(x, w)| w * f(mid + half * x)).sum();
        s * half.powf(self.a + self.b + 1.0)
    }
}

/// Composite Gauss-Legendre over `panels` equal panels.
pub fn composite_legendre<F: FnMut(f64) -> f64>(rule: &GaussRule, lo: f64, hi: f64, panels: usize, mut f: F) -> f64 {
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|p| {
            let a = lo + p as f64 * h;
            rule.integrate(a, a + h, &mut f)
        })
        .sum()
}

/// Quadrature for `∫_{-1}^{1} (1 - t^2)^b f(t) dt` with an optional interior
/// kink of `f`.
#[derive(Debug, Clone)]
pub struct KernelQuadrature {
    exponent: f64,
    sym: GaussRule,
    left: GaussRule,
    right: GaussRule,
    inner: GaussRule,
    inner_mirror: GaussRule,
    mass: f64,
}

impl KernelQuadrature {
    pub fn new(exponent: f64, order: usize) -> Result<Self> {
        let sym = GaussRule::jacobi(order, exponent, exponent)?;
        let mass = sym.weight_mass();
        let left = GaussRule::jacobi(order, 0.0, exponent)?;
        let inner = GaussRule::legendre(order);
        Ok(Self {
            exponent,
            right: left.mirrored(),
            inner_mirror: inner.mirrored(),
            left,
            inner,
            sym,
            mass,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn order(&self) -> usize {
        self.sym.len()
    }

    /// `∫ (1 - t^2)^b dt`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, kink: Option<f64>, mut f: F) -> f64 {
        let b = self.exponent;
        match kink {
            Some(k) if k > -1.0 && k < 1.0 => {
                let c = 0.5 * (k - 1.0);
                let d = 0.5 * (k + 1.0);
                let w = |t: f64| (1.0 - t * t).max(0.0).powf(b);
                let outer_l = self.left.integrate(-1.0, c, |t| (1.0 - t).powf(b) * f(t));
                let inner_l = self.inner.integrate(c, k, |t| w(t) * f(t));
                let inner_r = self.inner_mirror.integrate(k, d, |t| w(t) * f(t));
                let outer_r = self.right.integrate(d, 1.0, |t| (1.0 + t).powf(b) * f(t));
                (outer_l + outer_r) + (inner_l + inner_r)
            }
            _ => self.sym.integrate(-1.0, 1.0, f),
        }
    }
}
