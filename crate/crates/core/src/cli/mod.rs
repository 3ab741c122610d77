//! Command-line front end: declarative runs, CSV tables and SVG charts.

mod chart;
mod config;
mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::harness::{prepare_instance, run_experiment, BestSource, ExperimentReport, Policy};

pub use chart::{render_svg, ChartOptions};
pub use config::{ConfigError, RunConfig};
pub use report::{from_csv, read_rows, summary_table, to_csv, write_atomic, ResultRow, COLUMNS};

#[derive(Debug, Parser)]
#[command(name = "sbos", version, about = "Select the best of several optimizing systems under a fixed budget")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the plan in a config file and write CSV (and SVG) results.
    Run(RunArgs),
    /// Run several policies on the config's instance and merge the results.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated policies, e.g. seo-sgd,uniform-sgd,ocba.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<Policy>,
    },
    /// Chart an existing results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plot PFS on a log scale instead of PCS.
        #[arg(long)]
        log_pfs: bool,
    },
    /// Print true values, gaps, H2 and the best system of the config's instance.
    Diag(RunArgs),
    /// Describe the available problem families.
    ListProblems,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, env = "SBOS_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Overrides `plan.base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `plan.replications`.
    #[arg(long)]
    pub replications: Option<usize>,
}

/// Files written by `run` and `sweep`.
#[derive(Debug)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    pub metadata: PathBuf,
}

#[derive(Debug, Serialize)]
struct Metadata {
    experiment: String,
    family: String,
    systems: usize,
    policies: Vec<String>,
    /// Absent when instances are rebuilt per replication.
    best_system: Option<usize>,
    best_source: Option<BestSource>,
    h2: Option<f64>,
}

fn load(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.plan.base_seed = seed;
    }
    if let Some(r) = args.replications {
        if r == 0 {
            bail!("--replications: must be at least 1");
        }
        cfg.plan.replications = r;
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig, args: &RunArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

pub fn cmd_run(args: &RunArgs) -> anyhow::Result<RunOutput> {
    let cfg = load(args)?;
    let policy = cfg.plan.policy;
    execute(&cfg, args, &[policy])
}

pub fn cmd_sweep(args: &RunArgs, policies: &[Policy]) -> anyhow::Result<RunOutput> {
    if policies.is_empty() {
        bail!("--policies: the policy list is empty");
    }
    let cfg = load(args)?;
    execute(&cfg, args, policies)
}

fn execute(cfg: &RunConfig, args: &RunArgs, policies: &[Policy]) -> anyhow::Result<RunOutput> {
    let plans: Vec<_> = policies
        .iter()
        .map(|&p| {
            let mut plan = cfg.plan.clone();
            plan.policy = p;
            plan.validate().with_context(|| format!("policy {p}"))?;
            Ok(plan)
        })
        .collect::<anyhow::Result<_>>()?;
    let mut rows = Vec::new();
    let mut first: Option<ExperimentReport> = None;
    for plan in &plans {
        let report = run_experiment(plan, args.threads).with_context(|| format!("running {}", plan.policy))?;
        rows.extend(report.estimates.iter().map(|e| ResultRow::from_estimate(&cfg.name, plan, e)));
        first.get_or_insert(report);
    }
    let report = first.expect("at least one policy");
    let dir = output_dir(cfg, args);
    let csv = dir.join(format!("{}.csv", cfg.name));
    let metadata = dir.join(format!("{}.meta.toml", cfg.name));
    let meta = Metadata {
        experiment: cfg.name.clone(),
        family: cfg.plan.instance.family().to_string(),
        systems: cfg.plan.instance.system_count(),
        policies: policies.iter().map(|p| p.name().to_string()).collect(),
        best_system: report.best.map(|b| b.index()),
        best_source: report.best_source,
        h2: report.diagnostics.as_ref().map(|d| d.h2),
    };
    let svg_text = cfg.chart.then(|| render_svg(&rows, ChartOptions { log_pfs: cfg.log_pfs }));
    write_atomic(&csv, &to_csv(&rows)?)?;
    write_atomic(&metadata, toml::to_string(&meta)?.as_bytes())?;
    let svg = match svg_text {
        Some(text) => {
            let path = dir.join(format!("{}.svg", cfg.name));
            write_atomic(&path, text.as_bytes())?;
            Some(path)
        }
        None => None,
    };
    Ok(RunOutput { rows, csv, svg, metadata })
}

pub fn cmd_plot(csv: &Path, out: &Path, opts: ChartOptions) -> anyhow::Result<()> {
    let rows = read_rows(csv)?;
    write_atomic(out, render_svg(&rows, opts).as_bytes())
}

/// Diagnostics as text; with `--out`, also writes `<name>.diag.csv`.
pub fn cmd_diag(args: &RunArgs) -> anyhow::Result<String> {
    let cfg = load(args)?;
    let plan = &cfg.plan;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    let prepared = pool.install(|| prepare_instance(plan, &mut plan.instance_stream(0)))?;
    let mut text = format!(
        "experiment {}\nfamily {} with {} systems\n",
        cfg.name,
        plan.instance.family(),
        plan.instance.system_count()
    );
    let mut table = String::from("system,value,gap\n");
    match &prepared.diagnostics {
        Some(d) => {
            let _ = writeln!(text, "{:>6} {:>14} {:>14}", "system", "value", "gap");
            for (i, (v, g)) in d.values.iter().zip(&d.gaps).enumerate() {
                let _ = writeln!(text, "{:>6} {v:>14.6} {g:>14.6}", i + 1);
                let _ = writeln!(table, "{},{v},{g}", i + 1);
            }
            let _ = writeln!(text, "H2 {:.6}", d.h2);
        }
        None => {
            let _ = writeln!(text, "no closed-form values for this family");
        }
    }
    let _ = writeln!(text, "best system {} ({:?})", prepared.best, prepared.source);
    if let Some(dir) = &args.out {
        write_atomic(&dir.join(format!("{}.diag.csv", cfg.name)), table.as_bytes())?;
    }
    Ok(text)
}

pub fn list_problems() -> String {
    [
        "dosage       simulation  perturbed dose-response quadratics, dose in [0, 50]; oracle: vertex",
        "             keys: systems, perturbations (optional)",
        "queueing     simulation  two-station staffing and pricing, price in [0, 1]; no oracle",
        "             keys: systems, wait_penalty, arrival_scale, horizon, count_abandoned_wait,",
        "                   reference_best, pilot.{budget_multiplier, runs}",
        "newsvendor   data-driven Poisson-demand newsvendor solved by SAA (systems <= 41); oracle: Poisson",
        "             keys: systems",
        "synthetic    simulation  noisy concave quadratics with given gaps below system 1; oracle: exact",
        "             keys: gaps, noise_sd",
        "grid-trap    simulation  top two systems coincide on the OCBA grid; oracle: exact",
        "             keys: systems, grid, lower, upper, slope, noise_sd",
        "",
        "policies: seo-sgd, uniform-sgd, ocba (simulation); seo-saa, uniform-saa (data-driven)",
    ]
    .join("\n")
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => report_run(cmd_run(&args)?),
        Command::Sweep { run, policies } => report_run(cmd_sweep(&run, &policies)?),
        Command::Plot { csv, out, log_pfs } => {
            cmd_plot(&csv, &out, ChartOptions { log_pfs })?;
            println!("wrote {}", out.display());
        }
        Command::Diag(args) => print!("{}", cmd_diag(&args)?),
        Command::ListProblems => println!("{}", list_problems()),
    }
    Ok(())
}

fn report_run(out: RunOutput) {
    print!("{}", summary_table(&out.rows));
    println!("wrote {}", out.csv.display());
    if let Some(svg) = out.svg {
        println!("wrote {}", svg.display());
    }
}

/// Entry point of the `sbos` binary.
pub fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
