use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eudrl_core::analysis::{MetricsEvaluator, RmsveWeighting};
use eudrl_core::{
    build_demo, check_lemma, run_detailed, write_segment_dump, BatchConfig, CommandExtensionF64, EnvironmentSpec,
    MetricsRowF64, PolicyF64, RunConfig, StepMode,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "eudrl", version, about = "Exact and sampled eUDRL experiments on command-extended MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run eUDRL and write per-iteration metrics as CSV.
    Run(RunArgs),
    /// Run the demo environment for several alphas.
    Sweep(SweepArgs),
    /// Report horizon-one non-convergence certificates as JSON.
    CheckLemma(EnvArgs),
    /// Print the environment spec JSON (useful to start from the demo).
    Env(EnvArgs),
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// `demo` or a path to an environment spec JSON file.
    #[arg(long, default_value = "demo")]
    env: String,
    /// Stochasticity of the demo environment, in [0.5, 1].
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Weighting {
    Uniform,
    Initial,
}

#[derive(Args, Clone)]
struct RunOptions {
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Trajectories per sampled iteration.
    #[arg(long, default_value_t = 10_000)]
    batch: usize,
    #[arg(long = "segments-per-traj", default_value_t = 1)]
    segments_per_traj: usize,
    /// Required in sampled mode.
    #[arg(long)]
    seed: Option<u64>,
    /// `uniform`, `optimal`, or a policy JSON file.
    #[arg(long, default_value = "uniform")]
    init: String,
    /// Parallel sampling workers; results are reproducible per (seed, workers).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long = "rmsve-weighting", value_enum, default_value = "uniform")]
    rmsve_weighting: Weighting,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    opts: RunOptions,
    /// Directory for per-iteration policy snapshots `policy_<n>.json`.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Directory for per-iteration segment dumps `segments_<n>.csv` (sampled mode).
    #[arg(long = "dump-segments")]
    dump_segments: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated alphas.
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    #[command(flatten)]
    opts: RunOptions,
    /// Directory receiving `alpha_<x>.csv` and `combined.csv`; combined CSV
    /// goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Rounds to 12 significant digits and prints the shortest representation.
fn fmt12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

fn metrics_line(row: &MetricsRowF64) -> String {
    format!("{},{},{},{}", row.n, fmt12(row.rmsve), fmt12(row.sup_dist), fmt12(row.j))
}

fn load_env(args: &EnvArgs) -> Result<(CommandExtensionF64, EnvironmentSpec)> {
    if args.env == "demo" {
        let ce = build_demo::<f64>(args.alpha)?;
        let spec = EnvironmentSpec::from_ce(&ce, Some(format!("demo(alpha={})", args.alpha)));
        return Ok((ce, spec));
    }
    let spec = EnvironmentSpec::load(&args.env)?;
    let ce = spec.to_ce().with_context(|| format!("invalid environment {}", args.env))?;
    Ok((ce, spec))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

struct Artifacts<'a> {
    snapshots: Option<&'a Path>,
    dump_segments: Option<&'a Path>,
}

fn run_metrics(ce: &CommandExtensionF64, opts: &RunOptions, artifacts: Artifacts<'_>) -> Result<Vec<MetricsRowF64>> {
    let mode = match opts.mode {
        Mode::Exact => StepMode::Exact,
        Mode::Sampled => {
            if opts.batch == 0 {
                bail!("--batch must be at least 1 in sampled mode");
            }
            if opts.seed.is_none() {
                bail!("sampled mode requires --seed");
            }
            StepMode::Sampled(BatchConfig {
                batch_size: opts.batch,
                segments_per_trajectory: opts.segments_per_traj.max(1),
                workers: opts.workers.max(1),
            })
        }
    };
    let weighting = match opts.rmsve_weighting {
        Weighting::Uniform => RmsveWeighting::Uniform,
        Weighting::Initial => RmsveWeighting::Initial,
    };
    let eval = MetricsEvaluator::new(ce).with_weighting(weighting);
    let policy0 = match opts.init.as_str() {
        "uniform" => PolicyF64::uniform(ce),
        "optimal" => eval.reference_policy().clone(),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read policy {path}"))?;
            PolicyF64::from_json(&text, ce).with_context(|| format!("invalid policy {path}"))?
        }
    };
    for dir in [artifacts.snapshots, artifacts.dump_segments].into_iter().flatten() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let config = RunConfig { iterations: opts.iters, mode, seed: opts.seed.unwrap_or(0) };
    let rows = run_detailed(ce, policy0, config, |n, policy, segments| {
        if let Some(dir) = artifacts.snapshots {
            fs::write(dir.join(format!("policy_{n}.json")), policy.to_json())?;
        }
        if let (Some(dir), Some(segments)) = (artifacts.dump_segments, segments) {
            let mut file = io::BufWriter::new(fs::File::create(dir.join(format!("segments_{n}.csv")))?);
            write_segment_dump(&mut file, segments, ce.goal_map())?;
        }
        eval.row(n, policy)
    })?;
    Ok(rows)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (ce, _) = load_env(&args.env)?;
    let artifacts = Artifacts { snapshots: args.snapshots.as_deref(), dump_segments: args.dump_segments.as_deref() };
    let rows = run_metrics(&ce, &args.opts, artifacts)?;
    let mut csv = String::from("n,rmsve,sup_dist,j\n");
    for row in &rows {
        csv.push_str(&metrics_line(row));
        csv.push('\n');
    }
    write_output(args.env.out.as_deref(), &csv)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut combined = String::from("alpha,n,rmsve,sup_dist,j\n");
    for &alpha in &args.alphas {
        let ce = build_demo::<f64>(alpha)?;
        let rows = run_metrics(&ce, &args.opts, Artifacts { snapshots: None, dump_segments: None })?;
        let mut single = String::from("n,rmsve,sup_dist,j\n");
        for row in &rows {
            let line = metrics_line(row);
            single.push_str(&line);
            single.push('\n');
            combined.push_str(&format!("{},{line}\n", fmt12(alpha)));
        }
        if let Some(dir) = &args.out {
            fs::write(dir.join(format!("alpha_{}.csv", fmt12(alpha))), single)?;
        }
    }
    write_output(args.out.as_ref().map(|d| d.join("combined.csv")).as_deref(), &combined)
}

fn cmd_check_lemma(args: &EnvArgs) -> Result<()> {
    let (ce, spec) = load_env(args)?;
    let certs = check_lemma(&ce);
    let applicable = certs.iter().filter(|c| c.applicable).count();
    let summary = match certs.iter().filter(|c| c.applicable).min_by(|a, b| a.delta.total_cmp(&b.delta)) {
        Some(c) => format!(
            "{} certificate(s), {applicable} applicable: eUDRL cannot converge to the optimal policy set \
             (e.g. state {}, goals {} vs {}, delta = {})",
            certs.len(),
            spec.state_label(c.s),
            spec.goal_label(c.g0),
            spec.goal_label(c.g1),
            fmt12(c.delta)
        ),
        None => format!("{} certificate(s), none applicable", certs.len()),
    };
    let report = json!({
        "environment": spec.name,
        "certificates": certs,
        "summary": summary,
    });
    eprintln!("{summary}");
    write_output(args.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn cmd_env(args: &EnvArgs) -> Result<()> {
    let (_, spec) = load_env(args)?;
    write_output(args.out.as_deref(), &format!("{}\n", spec.to_json_pretty()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::CheckLemma(args) => cmd_check_lemma(args),
        Command::Env(args) => cmd_env(args),
    }
}
