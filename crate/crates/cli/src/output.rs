use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use nlcns::diagnostics::DiagnosticsReport;
use nlcns::lagrangian_solver::Trajectory;
use nlcns::sweep::{LadderReport, MemberResult};

use crate::plots::{lines, Series};

/// Collects written paths relative to the output root.
pub struct Artifacts {
    root: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", p.display()))
    }

    pub fn csv(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let p = self.path(rel)?;
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn plot(&mut self, rel: &str, title: &str, x: &str, y: &str, series: &[Series], log: bool) -> Result<()> {
        let p = self.path(rel)?;
        lines(&p, title, x, y, series, log).with_context(|| format!("plotting {}", p.display()))
    }
}

fn zip_series(t: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    t.iter().copied().zip(y.iter().copied()).collect()
}

/// Series CSVs and snapshot CSVs of one trajectory.
pub fn write_series(out: &mut Artifacts, traj: &Trajectory, report: &DiagnosticsReport) -> Result<()> {
    let t = &report.times;
    let e = &report.energy;
    out.csv(
        "series/energy.csv",
        &["t", "kinetic", "internal", "interaction", "viscous", "alignment", "damping", "residual"],
        (0..t.len()).map(|k| {
            vec![
                t[k],
                e.kinetic[k],
                e.internal[k],
                e.interaction[k],
                e.viscous[k],
                e.alignment[k],
                e.damping[k],
                e.residual[k],
            ]
        }),
    )?;
    let b = &report.boundary;
    out.csv(
        "series/boundary.csv",
        &["t", "rho_left", "rho_right", "reference", "x_left", "x_right"],
        (0..t.len()).map(|k| vec![t[k], b.left[k], b.right[k], b.reference[k], b.b_minus[k], b.b_plus[k]]),
    )?;
    out.csv(
        "series/diagnostics.csv",
        &["t", "mass_defect", "second_moment", "second_moment_bound", "bd_entropy", "bd_dissipation", "bd_estimate"],
        (0..t.len()).map(|k| {
            vec![
                t[k],
                report.mass_defect[k],
                report.second_moment[k],
                report.second_moment_bound[k],
                report.bd_entropy[k],
                report.bd_dissipation[k],
                report.bd_estimate[k],
            ]
        }),
    )?;
    for k in 0..traj.snapshots.len() {
        let s = traj.state(k);
        let xi = s.node_xi();
        let xc = s.cell_centers();
        let uc = s.cell_velocity();
        out.csv(
            &format!("snapshots/snapshot_{k:04}.csv"),
            &["xi", "x", "rho", "u"],
            (0..s.n_cells).map(|i| vec![0.5 * (xi[i] + xi[i + 1]), xc[i], s.cell_rho[i], uc[i]]),
        )?;
    }
    Ok(())
}

pub fn write_member_plots(out: &mut Artifacts, report: &DiagnosticsReport) -> Result<()> {
    let t = &report.times;
    let e = &report.energy;
    let total: Vec<f64> = (0..t.len())
        .map(|k| e.kinetic[k] + e.internal[k] + e.interaction[k])
        .collect();
    let diss: Vec<f64> = (0..t.len()).map(|k| e.viscous[k] + e.alignment[k] + e.damping[k]).collect();
    out.plot(
        "plots/energy.svg",
        "Energy budget",
        "t",
        "energy",
        &[
            Series::new("E(t)", zip_series(t, &total)),
            Series::new("dissipated", zip_series(t, &diss)),
            Series::new("residual", zip_series(t, &e.residual)),
        ],
        false,
    )?;
    let b = &report.boundary;
    out.plot(
        "plots/boundary.svg",
        "Boundary density",
        "t",
        "rho",
        &[
            Series::new("left", zip_series(t, &b.left)),
            Series::new("right", zip_series(t, &b.right)),
            Series::new("reference", zip_series(t, &b.reference)),
        ],
        false,
    )
}

#[derive(Serialize)]
pub struct MemberSummary<'a> {
    pub epsilon: f64,
    pub pass: bool,
    pub initial: &'a nlcns::sweep::InitialSummary,
    pub flags: &'a std::collections::BTreeMap<String, nlcns::diagnostics::Flag>,
    pub stats: &'a nlcns::lagrangian_solver::RunStats,
    pub integrability: Option<nlcns::diagnostics::Integrability>,
    pub margin: f64,
    pub eps43_budget: f64,
}

pub fn member_summary(m: &MemberResult) -> MemberSummary<'_> {
    MemberSummary {
        epsilon: m.epsilon,
        pass: m.report.all_pass(),
        initial: &m.initial,
        flags: &m.report.flags,
        stats: &m.report.stats,
        integrability: m.report.integrability,
        margin: m.report.margin,
        eps43_budget: m.dissipation.eps43_budget,
    }
}

pub fn write_ladder(out: &mut Artifacts, ladder: &LadderReport, margins: &[f64], plots: bool) -> Result<()> {
    let n = ladder.epsilons.len();
    out.csv(
        "series/ladder.csv",
        &[
            "epsilon",
            "distance_to_next",
            "eps43_budget",
            "integrability_density",
            "integrability_velocity",
            "bd_entropy",
            "e1_over_eps",
            "second_moment_error",
            "interaction_error",
            "margin",
        ],
        (0..n).map(|i| {
            vec![
                ladder.epsilons[i],
                ladder.distances.get(i).copied().unwrap_or(f64::NAN),
                ladder.eps43_budget[i],
                ladder.integrability_density[i],
                ladder.integrability_velocity[i],
                ladder.bd_entropy[i],
                ladder.e1_over_eps[i],
                ladder.second_moment_error[i],
                ladder.interaction_error[i],
                margins[i],
            ]
        }),
    )?;
    for (i, c) in ladder.convergence.iter().enumerate() {
        out.csv(
            &format!("series/convergence_{i:02}.csv"),
            &["t", "l1_rho", "l1_m", "lq_rho", "lq_m"],
            (0..c.times.len()).map(|k| vec![c.times[k], c.l1_rho[k], c.l1_m[k], c.lq_rho[k], c.lq_m[k]]),
        )?;
    }
    if plots {
        let eps_pairs: Vec<f64> = ladder.epsilons.iter().skip(1).copied().collect();
        out.plot(
            "plots/convergence.svg",
            "Vanishing-viscosity ladder",
            "epsilon",
            "distance",
            &[
                Series::new("sup_t L1(rho) + L1(m)", zip_series(&eps_pairs, &ladder.distances)),
                Series::new("eps^(4/3) budget", zip_series(&ladder.epsilons, &ladder.eps43_budget)),
            ],
            true,
        )?;
    }
    Ok(())
}
