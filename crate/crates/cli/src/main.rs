mod output;
mod plots;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nlcns::config::RunConfig;
use nlcns::suite::entropy_suite;
use nlcns::sweep::{run_single, run_sweep};

use output::{member_summary, write_ladder, write_member_plots, write_series, Artifacts};

#[derive(Parser)]
#[command(name = "nlcns", version, about = "Viscous free-boundary gas dynamics with nonlocal forces")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// One simulation at the configured ε.
    Run(Common),
    /// Every ε of the ladder, in parallel, with the ladder checks.
    Sweep(Common),
    /// Entropy-pair self-tests and the η̂ table.
    Entropy(Common),
    /// Parse and validate a config, then print a summary.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output_dir` from the config, then `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "NLCNS_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    no_plots: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config).with_context(|| format!("invalid config {}", self.config.display()))
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| Path::new("out").join(&cfg.name))
    }

    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    verb: &'static str,
    name: &'a str,
    seed: u64,
    pass: bool,
    config: &'a RunConfig,
    files: &'a [String],
}

fn finish(mut out: Artifacts, verb: &'static str, cfg: &RunConfig, pass: bool) -> Result<bool> {
    let mut files = out.files.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        verb,
        name: &cfg.name,
        seed: cfg.seed,
        pass,
        config: cfg,
        files: &files,
    };
    out.json("manifest.json", &manifest)?;
    println!("{} -> {} ({})", verb, out.root().display(), if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn print_flags<'a>(flags: impl IntoIterator<Item = (&'a String, &'a nlcns::diagnostics::Flag)>) {
    for (name, f) in flags {
        println!(
            "  {:<34} {:<4} {:.3e} {} {:.3e}",
            name,
            if f.pass { "ok" } else { "FAIL" },
            f.value,
            f.relation,
            f.threshold
        );
    }
}

fn cmd_run(args: &Common) -> Result<bool> {
    let cfg = args.load()?;
    let member = run_single(&cfg)?;
    let traj = member.trajectory.as_ref().context("trajectory missing")?;
    let mut out = Artifacts::new(&args.out_dir(&cfg))?;
    let pass = member.report.all_pass();

    #[derive(Serialize)]
    struct Report<'a> {
        name: &'a str,
        epsilon: f64,
        pass: bool,
        initial: &'a nlcns::sweep::InitialSummary,
        diagnostics: &'a nlcns::diagnostics::DiagnosticsReport,
        dissipation: &'a nlcns::entropy_pairs::DissipationReport,
    }
    out.json(
        "report.json",
        &Report {
            name: &cfg.name,
            epsilon: member.epsilon,
            pass,
            initial: &member.initial,
            diagnostics: &member.report,
            dissipation: &member.dissipation,
        },
    )?;
    write_series(&mut out, traj, &member.report)?;
    if !args.no_plots {
        write_member_plots(&mut out, &member.report)?;
    }
    println!(
        "epsilon {} steps {} t_end {}",
        member.epsilon,
        member.report.stats.steps,
        traj.last().time
    );
    print_flags(&member.report.flags);
    finish(out, "run", &cfg, pass)
}

fn cmd_sweep(args: &Common) -> Result<bool> {
    let cfg = args.load()?;
    let workers = args.workers();
    let result = run_sweep(&cfg, workers)?;
    let mut out = Artifacts::new(&args.out_dir(&cfg))?;
    for m in &result.members {
        let mut sub = Artifacts::new(&out.root().join(format!("members/eps_{:e}", m.epsilon)))?;
        let traj = m.trajectory.as_ref().context("trajectory missing")?;
        sub.json("report.json", &member_summary(m))?;
        write_series(&mut sub, traj, &m.report)?;
        if !args.no_plots {
            write_member_plots(&mut sub, &m.report)?;
        }
        let prefix = format!("members/eps_{:e}/", m.epsilon);
        out.files.extend(sub.files.iter().map(|f| format!("{prefix}{f}")));
    }
    let pass = result.failures.is_empty() && result.ladder.as_ref().map(|l| l.all_pass()).unwrap_or(false);

    #[derive(Serialize)]
    struct Report<'a> {
        name: &'a str,
        workers: usize,
        pass: bool,
        failures: &'a [(f64, String)],
        ladder: Option<&'a nlcns::sweep::LadderReport>,
        members: Vec<output::MemberSummary<'a>>,
    }
    out.json(
        "report.json",
        &Report {
            name: &cfg.name,
            workers,
            pass,
            failures: &result.failures,
            ladder: result.ladder.as_ref(),
            members: result.members.iter().map(member_summary).collect(),
        },
    )?;
    for (e, msg) in &result.failures {
        eprintln!("member eps={e} failed: {msg}");
    }
    if let Some(l) = &result.ladder {
        let margins: Vec<f64> = result.members.iter().map(|m| m.report.margin).collect();
        write_ladder(&mut out, l, &margins, !args.no_plots)?;
        println!("distances {:?}", l.distances);
        print_flags(&l.flags);
    }
    finish(out, "sweep", &cfg, pass)
}

fn cmd_entropy(args: &Common) -> Result<bool> {
    let cfg = args.load()?;
    let suite = entropy_suite(&cfg)?;
    let mut out = Artifacts::new(&args.out_dir(&cfg))?;
    out.json("report.json", &suite)?;
    out.csv(
        "tables/goursat.csv",
        &["rho", "u", "eta", "q"],
        suite.goursat_table.iter().map(|r| r.to_vec()),
    )?;
    print_flags(&suite.flags);
    let pass = suite.all_pass();
    finish(out, "entropy", &cfg, pass)
}

fn cmd_validate(args: &Common) -> Result<bool> {
    let cfg = args.load()?;
    let g = cfg.law.gamma();
    println!("config {} is valid", args.config.display());
    println!("  name        {}", cfg.name);
    println!("  law         {:?}", cfg.law);
    println!("  alpha       {}", cfg.alpha);
    println!(
        "  p_exponent  {} (needs > {:.6})",
        cfg.p_exponent,
        g / (g - cfg.alpha)
    );
    println!("  cells       {}", cfg.grid.cells);
    println!("  t_end       {}", cfg.solver.t_end);
    for e in cfg.epsilons() {
        println!("  epsilon {e:<10} b = {:.6e}", e.powf(-cfg.p_exponent));
    }
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match &cli.verb {
        Verb::Run(a) => cmd_run(a),
        Verb::Sweep(a) => {
            if a.workers == Some(0) {
                bail!("--workers must be at least 1");
            }
            cmd_sweep(a)
        }
        Verb::Entropy(a) => cmd_entropy(a),
        Verb::ValidateConfig(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
