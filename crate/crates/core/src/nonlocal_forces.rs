//! Nonlocal terms on the Lagrangian grid: the interaction force `∂ₓW∗ρ` for
//! `W(x) = -|x| + x²/2`, the alignment coupling `V`, and the interaction
//! energy. Cells are treated as point masses at their centers.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignmentKernel {
    #[default]
    Off,
    Constant {
        c: f64,
    },
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// Samples of `ϖ(|x|)` at increasing `x ≥ 0`; linear in between, constant
    /// beyond the last sample.
    Table {
        x: Vec<f64>,
        values: Vec<f64>,
    },
}

impl AlignmentKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            AlignmentKernel::Off => Ok(()),
            AlignmentKernel::Constant { c } => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(param("alignment.c", "must be finite and nonnegative"));
                }
                Ok(())
            }
            AlignmentKernel::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return Err(param("alignment.amplitude", "must be finite and nonnegative"));
                }
                if !width.is_finite() || *width <= 0.0 {
                    return Err(param("alignment.width", "must be positive"));
                }
                Ok(())
            }
            AlignmentKernel::Table { x, values } => {
                if x.is_empty() || x.len() != values.len() {
                    return Err(param("alignment.table", "x and values must be nonempty and equally long"));
                }
                if x[0] != 0.0 || x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(param("alignment.table", "x must start at 0 and increase"));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(param("alignment.table", "values must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }

    /// `ϖ(x)`; even by construction.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            AlignmentKernel::Off => 0.0,
            AlignmentKernel::Constant { c } => *c,
            AlignmentKernel::Gaussian { amplitude, width } => {
                let z = x / width;
                amplitude * (-z * z).exp()
            }
            AlignmentKernel::Table { x: xs, values } => {
                let n = xs.len();
                if x >= xs[n - 1] {
                    return values[n - 1];
                }
                let i = xs.partition_point(|&v| v <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            AlignmentKernel::Off => 0.0,
            AlignmentKernel::Constant { c } => *c,
            AlignmentKernel::Gaussian { amplitude, .. } => *amplitude,
            AlignmentKernel::Table { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn is_off(&self) -> bool {
        self.sup() == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Off,
    #[default]
    NewtonianPlusQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlocalConfig {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub alignment: AlignmentKernel,
    #[serde(default)]
    pub interaction: Interaction,
    /// Skip alignment pairs farther apart than this.
    #[serde(default)]
    pub alignment_cutoff: Option<f64>,
}

impl Default for NonlocalConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            alignment: AlignmentKernel::Off,
            interaction: Interaction::NewtonianPlusQuadratic,
            alignment_cutoff: None,
        }
    }
}

impl NonlocalConfig {
    pub fn off() -> Self {
        Self {
            lambda: 0.0,
            alignment: AlignmentKernel::Off,
            interaction: Interaction::Off,
            alignment_cutoff: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(param("lambda", "must be finite"));
        }
        if let Some(r) = self.alignment_cutoff {
            if !(r > 0.0) {
                return Err(param("alignment_cutoff", "must be positive"));
            }
        }
        self.alignment.validate()
    }
}

/// `W(x) = -|x| + x²/2`.
#[inline]
pub fn potential(x: f64) -> f64 {
    -x.abs() + 0.5 * x * x
}

/// `W'(x)` with `W'(0) = 0`.
#[inline]
pub fn potential_slope(x: f64) -> f64 {
    let s = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    -s + x
}

pub fn check_ordered(x: &[f64]) -> Result<()> {
    for (i, w) in x.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::Unordered { index: i + 1 });
        }
    }
    Ok(())
}

/// `∂ₓW∗ρ` at every node: `M - 2ξⱼ + xⱼM - Σ x̄ᵢ mᵢ`, where `ξⱼ` is the mass to
/// the left of node `j`. Exact for the piecewise-constant density of the grid.
pub fn interaction_force(node_x: &[f64], cell_mass: &[f64], cell_center: &[f64], total_mass: f64) -> Result<Vec<f64>> {
    check_ordered(node_x)?;
    if node_x.len() != cell_mass.len() + 1 || cell_center.len() != cell_mass.len() {
        return Err(param("grid", "expected N+1 nodes for N cells"));
    }
    let first: f64 = cell_center.iter().zip(cell_mass).map(|(x, m)| x * m).sum();
    let mut out = Vec::with_capacity(node_x.len());
    let mut xi = 0.0;
    for (j, &x) in node_x.iter().enumerate() {
        if j > 0 {
            xi += cell_mass[j - 1];
        }
        out.push(total_mass - 2.0 * xi + x * total_mass - first);
    }
    Ok(out)
}

/// `Vⱼ = Σᵢ ϖ(xⱼ - x̄ᵢ)(ūᵢ - uⱼ) mᵢ` at every node.
pub fn alignment_at_nodes(
    node_x: &[f64],
    node_u: &[f64],
    cell_center: &[f64],
    cell_u: &[f64],
    cell_mass: &[f64],
    kernel: &AlignmentKernel,
) -> Vec<f64> {
    node_x
        .iter()
        .zip(node_u)
        .map(|(&x, &u)| {
            cell_center
                .iter()
                .zip(cell_u)
                .zip(cell_mass)
                .map(|((&c, &v), &m)| kernel.eval(x - c) * (v - u) * m)
                .sum()
        })
        .collect()
}

/// Cell-centered alignment `Vᵢ = Σₖ ϖ(x̄ᵢ - x̄ₖ)(ūₖ - ūᵢ) mₖ`, accumulated
/// pairwise so that `Σ mᵢVᵢ` cancels exactly. Centers must be sorted when a
/// cutoff is given.
pub fn alignment_cells(
    cell_center: &[f64],
    cell_u: &[f64],
    cell_mass: &[f64],
    kernel: &AlignmentKernel,
    cutoff: Option<f64>,
) -> Vec<f64> {
    let n = cell_center.len();
    let mut v = vec![0.0; n];
    if kernel.is_off() {
        return v;
    }
    let r = cutoff.unwrap_or(f64::INFINITY);
    for i in 0..n {
        let (xi, ui, mi) = (cell_center[i], cell_u[i], cell_mass[i]);
        let mut acc = 0.0;
        for k in i + 1..n {
            let dx = cell_center[k] - xi;
            if dx > r {
                break;
            }
            let w = kernel.eval(dx) * (cell_u[k] - ui);
            acc += w * cell_mass[k];
            v[k] -= w * mi;
        }
        v[i] += acc;
    }
    v
}

/// `½ ΣᵢΣₖ ϖ(x̄ᵢ - x̄ₖ)|ūᵢ - ūₖ|² mᵢmₖ`.
pub fn alignment_dissipation(
    cell_center: &[f64],
    cell_u: &[f64],
    cell_mass: &[f64],
    kernel: &AlignmentKernel,
    cutoff: Option<f64>,
) -> f64 {
    if kernel.is_off() {
        return 0.0;
    }
    let n = cell_center.len();
    let r = cutoff.unwrap_or(f64::INFINITY);
    let mut total = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for k in i + 1..n {
            let dx = cell_center[k] - cell_center[i];
            if dx > r {
                break;
            }
            let d = cell_u[k] - cell_u[i];
            acc += kernel.eval(dx) * d * d * cell_mass[k];
        }
        total += acc * cell_mass[i];
    }
    total
}

/// Spreads cell accelerations to nodes: `½(mⱼ₋₁aⱼ₋₁ + mⱼaⱼ) / Mⱼ` with node
/// mass `Mⱼ = ½(mⱼ₋₁ + mⱼ)`.
pub fn cells_to_nodes(cell_mass: &[f64], cell_acc: &[f64]) -> Vec<f64> {
    let n = cell_mass.len();
    let mut out = vec![0.0; n + 1];
    for j in 0..=n {
        let (mut num, mut den) = (0.0, 0.0);
        if j > 0 {
            num += cell_mass[j - 1] * cell_acc[j - 1];
            den += cell_mass[j - 1];
        }
        if j < n {
            num += cell_mass[j] * cell_acc[j];
            den += cell_mass[j];
        }
        out[j] = if den > 0.0 { num / den } else { 0.0 };
    }
    out
}

/// Raw interaction energy `½ΣΣ W(x̄ᵢ - x̄ⱼ) mᵢmⱼ` and the shifted value built
/// from `W + ½ ≥ 0`. O(N) for sorted centers.
pub fn interaction_energy(cell_center: &[f64], cell_mass: &[f64]) -> (f64, f64) {
    let m: f64 = cell_mass.iter().sum();
    let (mut s1, mut s2) = (0.0, 0.0);
    for (&x, &w) in cell_center.iter().zip(cell_mass) {
        s1 += w * x;
        s2 += w * x * x;
    }
    let quad = m * s2 - s1 * s1;
    let sorted = cell_center.windows(2).all(|w| w[1] >= w[0]);
    let abs_sum = if sorted {
        let (mut pm, mut pmx) = (0.0, 0.0);
        let mut acc = 0.0;
        for (&x, &w) in cell_center.iter().zip(cell_mass) {
            acc += w * (x * pm - pmx);
            pm += w;
            pmx += w * x;
        }
        acc
    } else {
        let mut acc = 0.0;
        for i in 0..cell_center.len() {
            for k in i + 1..cell_center.len() {
                acc += (cell_center[i] - cell_center[k]).abs() * cell_mass[i] * cell_mass[k];
            }
        }
        acc
    };
    let raw = -abs_sum + 0.5 * quad;
    (raw, raw + 0.25 * m * m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn plateau_force_vanishes() {
        let n = 200;
        let m = 2.0 / n as f64;
        let x: Vec<f64> = (0..=n).map(|j| -1.0 + 2.0 * j as f64 / n as f64).collect();
        let c: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let f = interaction_force(&x, &vec![m; n], &c, 2.0).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_cell_example() {
        let f = interaction_force(&[-1.0, 0.0, 2.0], &[1.0, 1.0], &[-0.5, 0.5], 2.0).unwrap();
        assert_abs_diff_eq!(f[2], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unordered_rejected() {
        let r = interaction_force(&[0.0, 1.0, 0.5], &[1.0, 1.0], &[0.5, 0.75], 2.0);
        assert!(matches!(r, Err(Error::Unordered { index: 2 })));
    }

    #[test]
    fn alignment_node_example() {
        let k = AlignmentKernel::Constant { c: 1.0 };
        let mass = 3.0;
        let v = alignment_at_nodes(&[1.0], &[1.0], &[-1.0, 1.0], &[-1.0, 1.0], &[mass / 2.0, mass / 2.0], &k);
        assert_abs_diff_eq!(v[0], -mass, epsilon = 1e-15);
    }

    #[test]
    fn uniform_velocity_has_no_alignment() {
        let k = AlignmentKernel::Gaussian { amplitude: 2.0, width: 0.7 };
        let c = [-1.0, -0.2, 0.3, 1.5];
        let v = alignment_cells(&c, &[0.4; 4], &[0.1, 0.2, 0.3, 0.4], &k, None);
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(interaction_energy(&[0.3], &[2.0]).0, 0.0);
        let (raw, shifted) = interaction_energy(&[0.0, 1.0], &[1.0, 1.0]);
        assert_abs_diff_eq!(raw, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kernel_table_is_even() {
        let k = AlignmentKernel::Table {
            x: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 0.5, 0.0],
        };
        k.validate().unwrap();
        assert_eq!(k.eval(-0.5), k.eval(0.5));
        assert_abs_diff_eq!(k.eval(1.5), 0.25, epsilon = 1e-15);
        assert_eq!(k.eval(7.0), 0.0);
    }
}
