//! `droplet-probe`: command-line driver for forward synthesis, single-point
//! inversion and the end-to-end reconstruction pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use droplet_core::droplet::{advance, DropletSpec, KernelTemplate};
use droplet_core::harness::persist::{self, FieldDump};
use droplet_core::harness::pipeline::{
    background_speed, forward_traces, probe_pairs, reference_travel_times, scenario_hash,
    synthesize_traces,
};
use droplet_core::harness::{convergence_study, run_pipeline, RunOptions, Scenario, StudyAxis};
use droplet_core::spectrum::{build_eigensystem, DEFAULT_N_MAX};
use droplet_core::volterra::{invert_direct, invert_neumann_report, residual, VolterraOp, DEFAULT_TOL};
use droplet_core::wavefield::TimeSignal;
use droplet_core::Error;

#[derive(Parser, Debug)]
#[command(name = "droplet-probe", version, about = "Droplet-probed wave imaging toolkit")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Noise seed; overrides the scenario value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues and averages of the droplet's Newtonian operator.
    Spectrum(SpectrumArgs),
    /// Background traces at every droplet center.
    Forward,
    /// Response kernels and probe signals for every droplet center.
    Synthesize,
    /// Invert one probe signal.
    Invert(InvertArgs),
    /// Run every stage and write a reconstruction report.
    Pipeline,
    /// Convergence study along one parameter axis.
    Study(StudyArgs),
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Droplet radius; defaults to the scenario's sweep radius, else 1.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: usize,
}

#[derive(Args, Debug)]
struct InvertArgs {
    /// Overrides the alpha stored in a kernel JSON file.
    #[arg(long)]
    alpha: Option<f64>,
    /// Kernel JSON written by `synthesize`, or a `t,value` CSV.
    #[arg(long)]
    kernel: PathBuf,
    /// Probe signal as a `t,value` CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Advance the recovered trace by this travel time.
    #[arg(long)]
    zeta: Option<f64>,
    /// Also run the Neumann series and report its certificate.
    #[arg(long)]
    neumann: bool,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// h, dt, a or n_max.
    #[arg(long)]
    axis: String,
    /// Comma-separated levels, at least three.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    levels: Vec<f64>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Invalid(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Parse(_) => Failure::Invalid(e.into()),
            other => Failure::Stage(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Stage(e)
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::new();
    logger.parse_filters(&cli.log_level).format_timestamp_millis();
    logger.init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.workers == 0 {
        return Err(invalid(anyhow!("--workers must be at least 1")));
    }
    match &cli.command {
        Command::Spectrum(args) => spectrum(cli, args),
        Command::Forward => {
            let s = scenario(cli)?;
            let out = out_dir(cli)?;
            in_pool(cli.workers, || forward(&s, &out))
        }
        Command::Synthesize => {
            let s = scenario(cli)?;
            let out = out_dir(cli)?;
            in_pool(cli.workers, || synthesize(&s, &out))
        }
        Command::Invert(args) => invert(cli, args),
        Command::Pipeline => {
            let s = scenario(cli)?;
            let out = out_dir(cli)?;
            let opts = RunOptions {
                workers: cli.workers,
                out_dir: Some(out.clone()),
            };
            let run = run_pipeline(&s, &opts)?;
            info!(
                "{} of {} centers usable; report in {}",
                run.report.usable,
                run.report.droplets.len(),
                out.display()
            );
            println!("{}", serde_json::to_string_pretty(&run.metrics).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::Study(args) => study(cli, args),
    }
}

fn scenario(cli: &Cli) -> Result<Scenario, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("this subcommand needs --config")))?;
    let mut s = Scenario::load(path).map_err(|e| match e {
        Error::Io(io) => invalid(anyhow!(io).context(format!("reading {}", path.display()))),
        other => Failure::from(other),
    })?;
    if let Some(seed) = cli.seed {
        s.noise.seed = seed;
    }
    Ok(s)
}

fn out_dir(cli: &Cli) -> Result<PathBuf, Failure> {
    let dir = cli
        .out
        .clone()
        .ok_or_else(|| invalid(anyhow!("this subcommand needs --out")))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(anyhow::Error::from)?;
    pool.install(f)
}

fn spectrum(cli: &Cli, args: &SpectrumArgs) -> Result<(), Failure> {
    let radius = match (args.radius, &cli.config) {
        (Some(a), _) => a,
        (None, Some(_)) => scenario(cli)?.sweep.radius,
        (None, None) => 1.0,
    };
    if !(radius > 0.0) || args.nmax == 0 {
        return Err(invalid(anyhow!("need a positive radius and nmax >= 1")));
    }
    let sys = build_eigensystem(radius, args.nmax)?;
    let lines = sys.to_json_lines()?;
    match &cli.out {
        Some(_) => {
            let dir = out_dir(cli)?;
            persist::write_atomic(&dir.join("spectrum.jsonl"), lines.as_bytes())?;
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn forward(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let hash = scenario_hash(s)?;
    persist::write_json(&out.join("scenario.json"), s)?;
    let speed = background_speed(s)?;
    let centers = s.sweep.centers()?;
    let (zeta, source, field) = reference_travel_times(s, &speed, &centers)?;
    let fields = out.join("fields");
    persist::write_field(
        &fields,
        &FieldDump {
            name: "speed",
            grid: speed.grid(),
            values: speed.values(),
            time: None,
            kind: "speed",
            units: "length/time",
            provenance: "scenario speed specification",
        },
        &hash,
    )?;
    if let Some(f) = &field {
        persist::write_field(
            &fields,
            &FieldDump {
                name: "travel_time",
                grid: &f.grid,
                values: &f.values,
                time: None,
                kind: "travel_time",
                units: "time",
                provenance: "fast marching from the probe",
            },
            &hash,
        )?;
    }
    let traces = forward_traces(s, &speed, &centers)?;
    for (i, tr) in traces.iter().enumerate() {
        persist::write_trace(&out.join(format!("traces/v_{i:05}.csv")), tr)?;
    }
    let index: Vec<_> = centers
        .iter()
        .zip(&zeta)
        .enumerate()
        .map(|(i, (z, t))| json!({ "index": i, "center": z, "zeta": t, "trace": format!("traces/v_{i:05}.csv") }))
        .collect();
    persist::write_json(
        &out.join("forward.json"),
        &json!({ "scenario_sha256": hash, "travel_times": source, "forward": s.solver.forward, "centers": index }),
    )?;
    info!("wrote {} traces to {}", traces.len(), out.display());
    Ok(())
}

fn synthesize(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let hash = scenario_hash(s)?;
    persist::write_json(&out.join("scenario.json"), s)?;
    let speed = background_speed(s)?;
    let centers = s.sweep.centers()?;
    let (_, _, field) = reference_travel_times(s, &speed, &centers)?;
    let v = forward_traces(s, &speed, &centers)?;
    let sys = build_eigensystem(s.sweep.radius, s.solver.n_max)?;
    let d = DropletSpec::new(centers[0], s.sweep.radius, s.sweep.kappa)?;
    let template = KernelTemplate::new(&sys, &d, s.horizon, s.dt)?;
    let pairs = probe_pairs(s, &speed, &centers, field.as_ref())?;
    let (kernels, w) = synthesize_traces(s, &template, &pairs, &v)?;
    for (i, (k, wi)) in kernels.iter().zip(&w).enumerate() {
        let bin_name = format!("kernel_{i:05}.bin");
        let bytes = persist::f64_le_bytes(&k.kernel.samples);
        persist::write_atomic(&out.join("kernels").join(&bin_name), &bytes)?;
        let meta = json!({
            "alpha": k.alpha,
            "alpha_tail": k.alpha_tail,
            "zeta": k.zeta,
            "zeta_source": k.zeta_source,
            "n_max": k.n_max,
            "tail_coeff": k.tail_coeff,
            "norm": k.norm,
            "approximate": k.approximate,
            "center": centers[i],
            "t0": k.kernel.t0,
            "dt": k.kernel.dt,
            "len": k.kernel.len(),
            "samples": bin_name,
            "layout": "little-endian f64",
            "data_sha256": persist::sha256_hex(&bytes),
            "scenario_sha256": hash,
        });
        persist::write_json(&out.join(format!("kernels/kernel_{i:05}.json")), &meta)?;
        persist::write_trace(&out.join(format!("traces/w_{i:05}.csv")), wi)?;
    }
    info!("wrote {} kernels and probe signals to {}", kernels.len(), out.display());
    Ok(())
}

/// Kernel samples and the alpha stored alongside them, if any.
fn read_kernel(path: &Path) -> anyhow::Result<(TimeSignal, Option<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let meta: serde_json::Value = serde_json::from_str(&text)?;
        let num = |k: &str| meta[k].as_f64().ok_or_else(|| anyhow!("kernel JSON lacks `{k}`"));
        let bin = meta["samples"]
            .as_str()
            .ok_or_else(|| anyhow!("kernel JSON lacks `samples`"))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let samples = persist::read_f64_le(&dir.join(bin))?;
        let kernel = TimeSignal::new(num("t0")?, num("dt")?, samples)?;
        Ok((kernel, meta["alpha"].as_f64()))
    } else {
        Ok((TimeSignal::from_csv(&text)?, None))
    }
}

fn invert(cli: &Cli, args: &InvertArgs) -> Result<(), Failure> {
    let (kernel, stored_alpha) = read_kernel(&args.kernel).map_err(invalid)?;
    let alpha = args
        .alpha
        .or(stored_alpha)
        .ok_or_else(|| invalid(anyhow!("no alpha: pass --alpha or a kernel JSON file")))?;
    let text = std::fs::read_to_string(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))
        .map_err(invalid)?;
    let g = TimeSignal::from_csv(&text).map_err(invalid)?;
    if !kernel.same_grid(&g) {
        return Err(invalid(anyhow!(
            "kernel ({} samples, dt {}) and trace ({} samples, dt {}) are on different grids",
            kernel.len(),
            kernel.dt,
            g.len(),
            g.dt
        )));
    }
    let op = VolterraOp::new(alpha, kernel).map_err(invalid)?;
    let f = invert_direct(&op, &g)?;
    let res = residual(&op, &f, &g)?;
    let mut report = json!({
        "alpha": alpha,
        "samples": g.len(),
        "dt": g.dt,
        "relative_residual": res,
        "neumann_ratio": op.neumann_ratio(),
    });
    if args.neumann {
        let (fn_, cert) = invert_neumann_report(&op, &g, args.tol)?;
        report["neumann"] = json!({
            "terms": cert.terms,
            "certified_bound": cert.certified_bound,
            "relative_l2_vs_direct": fn_.relative_l2_error(&f),
        });
    }
    let recovered = match args.zeta {
        Some(z) => advance(&f, z),
        None => f,
    };
    match &cli.out {
        Some(_) => {
            let dir = out_dir(cli)?;
            persist::write_trace(&dir.join("recovered.csv"), &recovered)?;
            persist::write_json(&dir.join("residual.json"), &report)?;
        }
        None => print!("{}", recovered.to_csv()),
    }
    eprintln!("{}", serde_json::to_string(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

fn study(cli: &Cli, args: &StudyArgs) -> Result<(), Failure> {
    let axis: StudyAxis = args.axis.parse().map_err(|e: Error| invalid(e))?;
    if args.levels.len() < 3 {
        return Err(invalid(anyhow!("a study needs at least 3 levels")));
    }
    let s = scenario(cli)?;
    let opts = RunOptions {
        workers: cli.workers,
        out_dir: None,
    };
    let result = convergence_study(&s, axis, &args.levels, &opts)?;
    print!("{}", result.table());
    if cli.out.is_some() {
        let dir = out_dir(cli)?;
        persist::write_json(&dir.join("study.json"), &result)?;
    }
    Ok(())
}
