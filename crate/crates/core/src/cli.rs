//! The `stochsync` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 the requested
//! analysis does not apply to the configured model.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::analysis::{certificate, monte_carlo_verdict, sync_error, MonteCarloSummary, SyncCertificate};
use crate::config::{ConfigError, ConstantsMode, ExperimentConfig, SweepParameter};
use crate::graph::spectral_info;
use crate::models::{analytic_constants, estimate_constants, ModelConstants, ModelKind, NodeModel, NoiseMode};
use crate::output::fmt_f64;
use crate::rng::derive_seed;
use crate::sde::{integrate, Trajectory};

pub const THREADS_ENV: &str = "STOCHSYNC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stochsync", version, about = "Noise-driven synchronization of coupled networks")]
pub struct Cli {
    /// Experiment config file (TOML, or a run.json from a previous run)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `output_dir` in the config
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Base RNG seed, overrides `sim.seed` in the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress and tables on stdout
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Evaluate the synchronization certificate
    Check,
    /// Run one simulation; write trajectory.csv, error.csv and run.json
    Simulate,
    /// Monte Carlo study for every sweep value; write sweep.csv and friends
    Sweep,
    /// Simulate and write the diffusion terms sigma_n * x_i (bistable only)
    NoiseSeries,
    /// Print the Laplacian spectrum of the configured topology
    Lambda2,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    NotApplicable(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotApplicable(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::NotApplicable(m) => write!(f, "not applicable: {m}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::NotApplicable(m) => CliError::NotApplicable(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "stochsync: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    cfg: ExperimentConfig,
    output_dir: PathBuf,
    threads: Option<usize>,
    quiet: bool,
}

fn load_context(cli: &Cli) -> CliResult<Context> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("missing --config <path>".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    let output_dir = cli.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    cfg.output_dir = output_dir.clone();
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => cfg.threads,
    };
    Ok(Context { cfg, output_dir, threads, quiet: cli.quiet })
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let ctx = load_context(cli)?;
    match cli.command {
        Command::Check => cmd_check(&ctx, out),
        Command::Simulate => cmd_simulate(&ctx, out),
        Command::Sweep => cmd_sweep(&ctx, out),
        Command::NoiseSeries => cmd_noise_series(&ctx, out),
        Command::Lambda2 => cmd_lambda2(&ctx, out),
    }
}

fn prepare_output(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Failed(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn model_constants(cfg: &ExperimentConfig, model: &NodeModel) -> CliResult<ModelConstants> {
    Ok(match cfg.analysis.constants {
        ConstantsMode::Analytic => analytic_constants(model)?,
        ConstantsMode::Sampled => estimate_constants(
            model,
            &cfg.sampling_box(model.dim())?,
            cfg.analysis.sample_count,
            cfg.analysis.constants_seed,
        )?,
    })
}

fn certify(cfg: &ExperimentConfig) -> CliResult<SyncCertificate> {
    let graph = cfg.build_graph()?;
    let model = cfg.build_model()?;
    if model.noise_mode() == NoiseMode::Independent {
        return Err(CliError::NotApplicable(format!(
            "model `{}` has independent noise per node; the certificate needs common noise",
            model.label()
        )));
    }
    let constants = model_constants(cfg, &model)?;
    Ok(certificate(&graph, &model, cfg.sigma, &constants)?)
}

fn cmd_check(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let cert = certify(&ctx.cfg)?;
    let value = serde_json::to_value(cert).map_err(|e| CliError::Failed(e.to_string()))?;
    writeln!(out, "{}", serde_json::to_string_pretty(&value).unwrap_or_default())?;
    prepare_output(&ctx.output_dir)?;
    write_json(&ctx.output_dir.join("certificate.json"), &value)
}

fn simulate_once(cfg: &ExperimentConfig) -> CliResult<(Trajectory, NodeModel)> {
    let graph = cfg.build_graph()?;
    let model = cfg.build_model()?;
    let x0 = cfg.x0_sampler().sample(0, graph.node_count() * model.dim())?;
    let traj = integrate(&graph, &model, cfg.sigma, &x0, &cfg.sim)?;
    Ok((traj, model))
}

fn run_metadata(ctx: &Context, command: &str, traj: &Trajectory) -> serde_json::Value {
    let err = sync_error(traj);
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "brownian_seed": ctx.cfg.sim.seed,
        "x0_seed": ctx.cfg.x0.normal.as_ref().map(|n| n.seed),
        "steps": ctx.cfg.sim.steps(),
        "recorded": traj.len(),
        "blew_up": traj.blew_up,
        "initial_error": err.norms[0],
        "final_error": err.norms.last().copied(),
        "config": ctx.cfg,
    })
}

fn cmd_simulate(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let (traj, _) = simulate_once(&ctx.cfg)?;
    prepare_output(&ctx.output_dir)?;
    write_file(&ctx.output_dir.join("trajectory.csv"), |w| traj.write_csv(w))?;
    let err = sync_error(&traj);
    write_file(&ctx.output_dir.join("error.csv"), |w| err.write_csv(w))?;
    write_json(&ctx.output_dir.join("run.json"), &run_metadata(ctx, "simulate", &traj))?;
    if !ctx.quiet {
        writeln!(
            out,
            "simulated {} steps ({} recorded), |e(0)| = {}, |e(T)| = {}{}",
            ctx.cfg.sim.steps(),
            traj.len(),
            fmt_f64(err.norms[0]),
            fmt_f64(*err.norms.last().unwrap()),
            if traj.blew_up { ", BLEW UP" } else { "" }
        )?;
        writeln!(out, "wrote {}", ctx.output_dir.display())?;
    }
    Ok(())
}

fn cmd_noise_series(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let model = ctx.cfg.build_model()?;
    if !matches!(model.kind(), ModelKind::Bistable { .. }) {
        return Err(CliError::NotApplicable(format!("noise-series needs the bistable model, got `{}`", model.label())));
    }
    let (traj, model) = simulate_once(&ctx.cfg)?;
    prepare_output(&ctx.output_dir)?;
    write_file(&ctx.output_dir.join("noise_series.csv"), |w| {
        write!(w, "t")?;
        for i in 0..traj.node_count {
            write!(w, ",g_{i}")?;
        }
        writeln!(w)?;
        let mut g = [0.0];
        for (t, row) in traj.times.iter().zip(traj.rows()) {
            write!(w, "{}", fmt_f64(*t))?;
            for x in row {
                model.diffusion_into(*t, std::slice::from_ref(x), &mut g);
                write!(w, ",{}", fmt_f64(g[0]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_json(&ctx.output_dir.join("run.json"), &run_metadata(ctx, "noise-series", &traj))?;
    if !ctx.quiet {
        writeln!(out, "wrote {}", ctx.output_dir.join("noise_series.csv").display())?;
    }
    Ok(())
}

fn cmd_sweep(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let sweep = ctx
        .cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Usage("the sweep command needs a [sweep] section in the config".into()))?;
    let graph = ctx.cfg.build_graph()?;
    prepare_output(&ctx.output_dir)?;

    let mut rows = Vec::with_capacity(sweep.values.len());
    for (idx, &value) in sweep.values.iter().enumerate() {
        let mut cfg = ctx.cfg.with_sweep_value(sweep.parameter, value);
        cfg.sim.seed = derive_seed(ctx.cfg.sim.seed, idx as u64);
        let model = cfg.build_model()?;
        let mut summary = monte_carlo_verdict(
            &graph,
            &model,
            cfg.sigma,
            &cfg.sim,
            cfg.replicates,
            &cfg.x0_sampler(),
            &cfg.mc_options(ctx.threads),
        )?;
        if cfg.analysis.constants == ConstantsMode::Sampled && model.noise_mode() == NoiseMode::Common {
            summary.certificate = Some(certificate(&graph, &model, cfg.sigma, &model_constants(&cfg, &model)?)?);
        }
        write_file(&ctx.output_dir.join(format!("exponents_{idx}.csv")), |w| summary.write_exponents_csv(w))?;
        if !ctx.quiet {
            writeln!(
                out,
                "{} = {value}: fraction_synced = {:.3}, median exponent = {}, certificate = {}",
                param_name(sweep.parameter),
                summary.fraction_synced,
                summary.median_exponent.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
                cert_cell(&summary),
            )?;
        }
        rows.push((value, cfg.sim.seed, summary));
    }

    write_file(&ctx.output_dir.join("sweep.csv"), |w| {
        writeln!(w, "value,fraction_synced,median_exponent,cert_satisfied")?;
        for (value, _, s) in &rows {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(*value),
                fmt_f64(s.fraction_synced),
                s.median_exponent.map(fmt_f64).unwrap_or_default(),
                cert_cell(s)
            )?;
        }
        Ok(())
    })?;
    let summaries: Vec<_> =
        rows.iter().map(|(value, seed, s)| json!({ "value": value, "base_seed": seed, "summary": s })).collect();
    write_json(
        &ctx.output_dir.join("sweep.json"),
        &json!({ "parameter": param_name(sweep.parameter), "results": summaries }),
    )?;
    write_json(
        &ctx.output_dir.join("run.json"),
        &json!({
            "command": "sweep",
            "version": env!("CARGO_PKG_VERSION"),
            "base_seed": ctx.cfg.sim.seed,
            "value_seeds": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            "x0_seed": ctx.cfg.x0.normal.as_ref().map(|n| n.seed),
            "config": ctx.cfg,
        }),
    )
}

fn param_name(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::SigmaN => "sigma_n",
        SweepParameter::Sigma => "sigma",
    }
}

fn cert_cell(s: &MonteCarloSummary) -> String {
    s.certificate.map(|c| c.satisfied.to_string()).unwrap_or_default()
}

fn cmd_lambda2(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let info = spectral_info(&ctx.cfg.build_graph()?)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&info).map_err(|e| CliError::Failed(e.to_string()))?)?;
    Ok(())
}
