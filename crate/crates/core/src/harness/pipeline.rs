//! End-to-end run: forward traces at the droplet centers, synthesized probe
//! signals, recovered traces, travel times, speed and source.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::background::{fast_march, SpeedField, TravelTimeField, TravelTimeSource};
use crate::droplet::{synthesize_w, DropletSpec, KernelTemplate, ProbePair, ResponseKernel};
use crate::error::{Error, Result};
use crate::geometry::{distance, Grid3, Point};
use crate::numerics::UniformSpline;
use crate::reconstruct::{
    assemble_field, eikonal_consistency, recover_source, recover_speed, recover_v,
    sweep_travel_times, ConsistencyCheck, JumpDetection, ThresholdRule, ZetaGrid,
};
use crate::spectrum::build_eigensystem;
use crate::wavefield::{
    fdtd_solve, retarded_potential_constant, FdtdOptions, RetardedQuadrature, SpaceTimeField,
    TimeGrid, TimeSignal, WaveOperatorOptions,
};

use super::persist::{self, FieldDump};
use super::scenario::{ForwardMode, KernelMode, Scenario, SourceSpeed, SpeedSpec, Tier};

/// Exponent slack `ε` of the arrival-sharpness bound.
pub const SHARPNESS_EPS: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DropletRecord {
    pub index: usize,
    pub center: Point,
    pub zeta_ref: f64,
    pub zeta_hat: Option<f64>,
    pub usable: bool,
    pub filled: bool,
    pub detection: JumpDetection,
    pub alpha: f64,
    pub kernel_norm: f64,
    /// Relative L² error of the recovered trace against the forward trace.
    pub v_rel_l2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedSummary {
    pub available: bool,
    pub nodes: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub max_rel_error: Option<f64>,
    pub max_rel_error_interior: Option<f64>,
    pub consistency: Option<ConsistencyCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceSummary {
    pub available: bool,
    pub speed: SourceSpeed,
    pub mollify: Option<f64>,
    pub rel_l2: Option<f64>,
    pub max_abs_error: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    pub scenario: String,
    pub scenario_sha256: String,
    pub tier: Tier,
    pub travel_times: TravelTimeSource,
    /// Amplitude or remainder were approximated (gridded medium).
    pub approximate: bool,
    pub n_max: usize,
    pub series_sum: f64,
    pub series_tail: f64,
    pub droplets: Vec<DropletRecord>,
    pub usable: usize,
    pub speed: SpeedSummary,
    pub source: SourceSummary,
}

/// Named scalar metrics, with wall-clock runtimes stored separately.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsRecord {
    pub values: BTreeMap<String, f64>,
    pub runtimes: BTreeMap<String, f64>,
    pub slopes: BTreeMap<String, f64>,
}

impl MetricsRecord {
    pub fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: ReconstructionReport,
    pub metrics: MetricsRecord,
    pub centers: Vec<Point>,
    pub v_true: Vec<TimeSignal>,
    pub w: Vec<TimeSignal>,
    pub v_hat: Vec<Option<TimeSignal>>,
    pub kernels: Vec<ResponseKernel>,
    pub speed_hat: Option<SpeedField>,
    pub source_hat: Option<SpaceTimeField>,
    /// Serialized report, the unit of the determinism contract.
    pub report_json: String,
}

fn timed<T>(
    metrics: &mut MetricsRecord,
    name: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(name));
    metrics
        .runtimes
        .insert(name.into(), start.elapsed().as_secs_f64());
    out
}

pub fn scenario_hash(s: &Scenario) -> Result<String> {
    Ok(persist::sha256_hex(serde_json::to_string(s)?.as_bytes()))
}

/// Background speed on the domain grid.
pub fn background_speed(s: &Scenario) -> Result<SpeedField> {
    s.speed.build(s.domain.grid()?, &s.base_dir)
}

/// Reference travel times `ζ(x, z)` and the field they came from.
pub fn reference_travel_times(
    s: &Scenario,
    speed: &SpeedField,
    centers: &[Point],
) -> Result<(Vec<f64>, TravelTimeSource, Option<TravelTimeField>)> {
    match (&s.tier, &s.speed) {
        (Tier::Constant, SpeedSpec::Constant { value }) => Ok((
            centers.iter().map(|z| distance(s.probe, *z) / value).collect(),
            TravelTimeSource::StraightRay,
            None,
        )),
        _ => {
            let field = fast_march(speed, s.probe)?;
            Ok((
                centers.iter().map(|z| field.value_at(*z)).collect(),
                TravelTimeSource::FastMarch,
                Some(field),
            ))
        }
    }
}

/// Background traces `v(z, ·)` at every droplet center on `[0, T]`.
pub fn forward_traces(s: &Scenario, speed: &SpeedField, centers: &[Point]) -> Result<Vec<TimeSignal>> {
    let times = TimeGrid::covering(s.horizon, s.dt)?;
    let model = s.source.model();
    match s.solver.forward {
        ForwardMode::Retarded => {
            let c0 = speed.constant_value().ok_or_else(|| {
                Error::InvalidArgument("retarded forward model needs a constant speed".into())
            })?;
            centers
                .par_iter()
                .map(|z| retarded_potential_constant(&model, c0, *z, times, RetardedQuadrature::default()))
                .collect()
        }
        ForwardMode::Fdtd => {
            let pad = crate::wavefield::fdtd::DEFAULT_PADDING;
            let padded = padded_speed(s, speed, pad)?;
            let opts = FdtdOptions {
                padding: pad,
                probes: centers.to_vec(),
                ..Default::default()
            };
            let out = fdtd_solve(&model, &padded, times.t_end(), s.solver.cfl, &opts)?;
            Ok(out
                .probes
                .iter()
                .map(|tr| {
                    let spline = UniformSpline::new(tr.t0, tr.dt, tr.samples.clone());
                    TimeSignal::from_fn(0.0, s.dt, times.len, |t| spline.value(t))
                })
                .collect())
        }
    }
}

/// Speed on the domain grid extended by `pad` nodes per face; analytic
/// profiles are evaluated, gridded values are extended by clamping.
fn padded_speed(s: &Scenario, speed: &SpeedField, pad: usize) -> Result<SpeedField> {
    let g = *speed.grid();
    let h = g.spacing;
    let p = pad as f64 * h;
    let grid = Grid3::new(
        [g.origin[0] - p, g.origin[1] - p, g.origin[2] - p],
        h,
        [g.dims[0] + 2 * pad, g.dims[1] + 2 * pad, g.dims[2] + 2 * pad],
    )?;
    match &s.speed {
        SpeedSpec::Constant { value } => SpeedField::constant(grid, *value),
        SpeedSpec::Radial {
            center,
            inner,
            outer,
            radius,
        } => SpeedField::from_fn(grid, |q| SpeedSpec::radial_value(*center, *inner, *outer, *radius, q)),
        SpeedSpec::File { .. } => {
            let values = (0..grid.len())
                .map(|i| {
                    let c = grid.coords(i);
                    let cl = |a: usize| (c[a] as isize - pad as isize).clamp(0, g.dims[a] as isize - 1) as usize;
                    speed.values()[g.index(cl(0), cl(1), cl(2))]
                })
                .collect();
            SpeedField::from_values(grid, values)
        }
    }
}

/// Shape of the injected remainder: `(1 - cos(2π u / T)) / 2` for `u ≥ 0`.
fn remainder_shape(u: f64, horizon: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * u / horizon).cos())
    }
}

fn add_remainder(w: &mut TimeSignal, coeff: f64, radius: f64, v_max: f64, zeta: f64, horizon: f64) {
    if coeff == 0.0 {
        return;
    }
    let scale = coeff * radius * radius * v_max;
    for i in 0..w.len() {
        let t = w.time(i);
        w.samples[i] += scale * remainder_shape(t - zeta, horizon);
    }
}

fn add_noise(w: &mut TimeSignal, level: f64, seed: u64, index: usize) -> Result<()> {
    if level == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let normal = Normal::new(0.0, level)
        .map_err(|e| Error::InvalidArgument(format!("noise level: {e}")))?;
    for s in &mut w.samples {
        *s += normal.sample(&mut rng);
    }
    Ok(())
}

/// Probe/center pairs; a fast-march field switches to gridded pairs.
pub fn probe_pairs(
    s: &Scenario,
    speed: &SpeedField,
    centers: &[Point],
    tt_field: Option<&TravelTimeField>,
) -> Result<Vec<ProbePair>> {
    centers
        .iter()
        .map(|z| match tt_field {
            None => ProbePair::constant(s.probe, *z, speed.value_at(*z)),
            Some(f) => ProbePair::gridded(s.probe, *z, speed, f),
        })
        .collect()
}

/// Response kernels and synthesized probe signals (with the configured
/// remainder and noise) for every pair.
pub fn synthesize_traces(
    s: &Scenario,
    template: &KernelTemplate,
    pairs: &[ProbePair],
    v_true: &[TimeSignal],
) -> Result<(Vec<ResponseKernel>, Vec<TimeSignal>)> {
    let results: Vec<Result<(ResponseKernel, TimeSignal)>> = pairs
        .par_iter()
        .zip(v_true.par_iter())
        .enumerate()
        .map(|(i, (pair, v))| {
            let k = template.kernel_for(pair)?;
            let mut w = synthesize_w(&k, v)?;
            add_remainder(
                &mut w,
                s.remainder.coefficient,
                s.sweep.radius,
                v.max_abs(),
                pair.zeta,
                s.horizon,
            );
            add_noise(&mut w, s.noise.level, s.noise.seed, i)?;
            Ok((k, w))
        })
        .collect();
    results.into_iter().collect::<Result<Vec<_>>>().map(|kw| kw.into_iter().unzip())
}

pub fn run_pipeline(s: &Scenario, opts: &RunOptions) -> Result<PipelineOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let result = pool.install(|| run_inner(s, opts));
    if let (Err(e), Some(dir)) = (&result, &opts.out_dir) {
        let stage = match e {
            Error::Stage { stage, .. } => *stage,
            _ => "setup",
        };
        let failure = serde_json::json!({ "stage": stage, "error": e.to_string() });
        if let Err(write_err) = persist::write_json(&dir.join("failure.json"), &failure) {
            warn!("could not record failure: {write_err}");
        }
    }
    result
}

fn run_inner(s: &Scenario, opts: &RunOptions) -> Result<PipelineOutput> {
    s.validate()?;
    let mut s = s.clone();
    s.resolve_defaults();
    let s = &s;
    let hash = scenario_hash(s)?;
    let out = opts.out_dir.as_deref();
    if let Some(dir) = out {
        persist::write_json(&dir.join("scenario.json"), s)?;
    }
    let mut metrics = MetricsRecord::default();

    let (speed, centers, sweep_grid, sys, template) = timed(&mut metrics, "setup", || {
        let speed = background_speed(s)?;
        let centers = s.sweep.centers()?;
        let sweep_grid = s.sweep.grid()?;
        let sys = build_eigensystem(s.sweep.radius, s.solver.n_max)?;
        let d = DropletSpec::new(centers[0], s.sweep.radius, s.sweep.kappa)?;
        let template = KernelTemplate::new(&sys, &d, s.horizon, s.dt)?;
        Ok((speed, centers, sweep_grid, sys, template))
    })?;
    info!("{} droplet centers, {} modes", centers.len(), sys.n_max());
    let support = s.source.support();
    let outside = centers.iter().filter(|z| !support.contains(**z)).count();
    if outside > 0 {
        warn!("{outside} droplet centers lie outside the source support; their arrivals are delayed");
    }

    let (zeta_ref, tt_source, tt_field) = timed(&mut metrics, "travel_times", || {
        reference_travel_times(s, &speed, &centers)
    })?;
    if let (Some(dir), Some(f)) = (out, &tt_field) {
        persist::write_field(
            &dir.join("fields"),
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

    let v_true = timed(&mut metrics, "forward", || forward_traces(s, &speed, &centers))?;

    let pairs = timed(&mut metrics, "pairs", || {
        probe_pairs(s, &speed, &centers, tt_field.as_ref())
    })?;

    let (kernels, w) = timed(&mut metrics, "synthesize", || {
        synthesize_traces(s, &template, &pairs, &v_true)
    })?;
    if let (Some(dir), true) = (out, s.solver.write_traces) {
        for (i, (wi, vi)) in w.iter().zip(&v_true).enumerate() {
            persist::write_trace(&dir.join(format!("traces/w_{i:05}.csv")), wi)?;
            persist::write_trace(&dir.join(format!("traces/v_{i:05}.csv")), vi)?;
        }
    }

    let rule = ThresholdRule {
        c_theta: s.solver.c_theta,
        radius: s.sweep.radius,
        noise_window: s.solver.noise_window.unwrap_or(0.0),
    };
    let sweep = timed(&mut metrics, "detect", || sweep_travel_times(&centers, &w, &rule))?;
    let usable = sweep.iter().filter(|e| e.usable).count();

    let v_hat: Vec<Option<TimeSignal>> = timed(&mut metrics, "recover_v", || {
        centers
            .par_iter()
            .enumerate()
            .map(|(i, _)| {
                let kern = match s.solver.kernel_mode {
                    KernelMode::Oracle => kernels[i].clone(),
                    KernelMode::Estimated => match sweep[i].zeta_hat {
                        Some(zh) if zh > 0.0 => {
                            let mut p = pairs[i].clone();
                            p.zeta = zh;
                            template.kernel_for(&p)?
                        }
                        _ => return Ok(None),
                    },
                };
                recover_v(&w[i], &kern).map(Some)
            })
            .collect()
    })?;
    if let (Some(dir), true) = (out, s.solver.write_traces) {
        for (i, vh) in v_hat.iter().enumerate() {
            if let Some(vh) = vh {
                persist::write_trace(&dir.join(format!("traces/v_hat_{i:05}.csv")), vh)?;
            }
        }
    }

    let v_errors: Vec<Option<f64>> = v_hat
        .iter()
        .zip(&v_true)
        .map(|(vh, v)| vh.as_ref().map(|vh| vh.relative_l2_error(&v.truncated(vh.len()))))
        .collect();

    // Travel-time accuracy against the reference.
    let bound = (2.0 * s.dt).max(
        s.sweep
            .radius
            .powf((1.0 - SHARPNESS_EPS) / (s.source.vanishing_order as f64 + 2.0)),
    );
    let zeta_errs: Vec<f64> = sweep
        .iter()
        .zip(&zeta_ref)
        .filter(|(e, _)| e.usable)
        .map(|(e, z)| (e.zeta_hat.unwrap() - z).abs())
        .collect();
    if !zeta_errs.is_empty() {
        metrics.set("zeta_abs_error_max", zeta_errs.iter().cloned().fold(0.0, f64::max));
        metrics.set(
            "zeta_within_bound_fraction",
            zeta_errs.iter().filter(|e| **e <= bound).count() as f64 / zeta_errs.len() as f64,
        );
    }
    metrics.set("zeta_bound", bound);
    metrics.set("usable_fraction", usable as f64 / centers.len() as f64);

    let (speed_hat, speed_summary, zeta_grid) = timed(&mut metrics, "recover_speed", || {
        let empty = SpeedSummary {
            available: false,
            nodes: 0,
            min: None,
            max: None,
            max_rel_error: None,
            max_rel_error_interior: None,
            consistency: None,
        };
        if usable == 0 || sweep_grid.dims.iter().any(|&d| d < 3) {
            return Ok((None, empty, None));
        }
        let zg = ZetaGrid::new(sweep_grid, sweep.iter().map(|e| e.zeta_hat.unwrap()).collect())?;
        let c_hat = recover_speed(&zg)?;
        let consistency = eikonal_consistency(&zg, &c_hat)?;
        let mut max_rel: f64 = 0.0;
        let mut max_rel_int: f64 = 0.0;
        for (i, z) in centers.iter().enumerate() {
            let c_ref = speed.value_at(*z);
            let e = (c_hat.values()[i] - c_ref).abs() / c_ref;
            max_rel = max_rel.max(e);
            if sweep_grid.is_interior(i, 1) {
                max_rel_int = max_rel_int.max(e);
            }
        }
        let summary = SpeedSummary {
            available: true,
            nodes: sweep_grid.len(),
            min: Some(c_hat.min()),
            max: Some(c_hat.max()),
            max_rel_error: Some(max_rel),
            max_rel_error_interior: Some(max_rel_int),
            consistency: Some(consistency),
        };
        Ok((Some(c_hat), summary, Some(zg)))
    })?;
    if let Some(v) = speed_summary.max_rel_error_interior {
        metrics.set("speed_rel_error_interior_max", v);
    }
    if let Some(c) = &speed_summary.consistency {
        metrics.set("eikonal_consistency_max_error", c.max_error);
        metrics.set("eikonal_consistency_tolerance", c.tolerance);
    }

    let (source_hat, source_summary) = timed(&mut metrics, "recover_source", || {
        let mut summary = SourceSummary {
            available: false,
            speed: s.solver.source_speed,
            mollify: s.solver.mollify,
            rel_l2: None,
            max_abs_error: None,
            note: None,
        };
        if v_hat.iter().any(Option::is_none) {
            summary.note = Some("some droplet traces could not be recovered".into());
            return Ok((None, summary));
        }
        if sweep_grid.dims.iter().any(|&d| d < 3) {
            summary.note = Some("sweep grid too small for the Laplacian".into());
            return Ok((None, summary));
        }
        let diff_speed = match s.solver.source_speed {
            SourceSpeed::Recovered => match &speed_hat {
                Some(c) => c.clone(),
                None => {
                    summary.note = Some("no recovered speed available".into());
                    return Ok((None, summary));
                }
            },
            SourceSpeed::Reference => {
                SpeedField::from_fn(sweep_grid, |p| speed.value_at(p))?
            }
        };
        let traces: Vec<TimeSignal> = v_hat.iter().map(|v| v.clone().unwrap()).collect();
        let field = assemble_field(sweep_grid, &traces)?;
        if field.times.len < 3 {
            summary.note = Some("recovered traces are too short to differentiate".into());
            return Ok((None, summary));
        }
        let j_hat = recover_source(
            &field,
            &diff_speed,
            WaveOperatorOptions {
                mollify: s.solver.mollify,
                time_stride: s.solver.time_stride,
            },
        )?;
        let model = s.source.model();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut max_err: f64 = 0.0;
        for it in 0..j_hat.times.len {
            let t = j_hat.times.time(it);
            for idx in 0..j_hat.grid.len() {
                let j = model.value(j_hat.grid.node_position(idx), t);
                let e = j_hat.at(it, idx) - j;
                num += e * e;
                den += j * j;
                max_err = max_err.max(e.abs());
            }
        }
        summary.available = true;
        summary.rel_l2 = Some(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
        summary.max_abs_error = Some(max_err);
        Ok((Some(j_hat), summary))
    })?;
    if let Some(e) = source_summary.rel_l2 {
        metrics.set("source_rel_l2", e);
    }

    let finite: Vec<f64> = v_errors.iter().flatten().cloned().collect();
    if !finite.is_empty() {
        metrics.set("v_rel_l2_max", finite.iter().cloned().fold(0.0, f64::max));
        metrics.set("v_rel_l2_mean", finite.iter().sum::<f64>() / finite.len() as f64);
    }

    let droplets: Vec<DropletRecord> = (0..centers.len())
        .map(|i| DropletRecord {
            index: i,
            center: centers[i],
            zeta_ref: zeta_ref[i],
            zeta_hat: sweep[i].zeta_hat,
            usable: sweep[i].usable,
            filled: sweep[i].filled,
            detection: sweep[i].detection,
            alpha: kernels[i].alpha,
            kernel_norm: kernels[i].norm,
            v_rel_l2: v_errors[i],
        })
        .collect();
    let report = ReconstructionReport {
        scenario: s.name.clone(),
        scenario_sha256: hash.clone(),
        tier: s.tier,
        travel_times: tt_source,
        approximate: kernels.iter().any(|k| k.approximate),
        n_max: sys.n_max(),
        series_sum: sys.series_sum,
        series_tail: sys.tail_bound,
        droplets,
        usable,
        speed: speed_summary,
        source: source_summary,
    };
    let report_json = serde_json::to_string_pretty(&report)?;

    if let Some(dir) = out {
        write_outputs(dir, &report_json, &metrics, &hash, zeta_grid.as_ref(), speed_hat.as_ref(), source_hat.as_ref())?;
    }

    Ok(PipelineOutput {
        report,
        metrics,
        centers,
        v_true,
        w,
        v_hat,
        kernels,
        speed_hat,
        source_hat,
        report_json,
    })
}

fn write_outputs(
    dir: &Path,
    report_json: &str,
    metrics: &MetricsRecord,
    hash: &str,
    zeta: Option<&ZetaGrid>,
    speed_hat: Option<&SpeedField>,
    source_hat: Option<&SpaceTimeField>,
) -> Result<()> {
    let fields = dir.join("fields");
    if let Some(z) = zeta {
        persist::write_field(
            &fields,
            &FieldDump {
                name: "zeta_hat",
                grid: &z.grid,
                values: &z.values,
                time: None,
                kind: "travel_time",
                units: "time",
                provenance: "detected arrival jumps on the droplet sweep",
            },
            hash,
        )?;
    }
    if let Some(c) = speed_hat {
        persist::write_field(
            &fields,
            &FieldDump {
                name: "speed_hat",
                grid: c.grid(),
                values: c.values(),
                time: None,
                kind: "gridded",
                units: "length/time",
                provenance: "eikonal inversion of zeta_hat",
            },
            hash,
        )?;
    }
    if let Some(j) = source_hat {
        persist::write_field(
            &fields,
            &FieldDump {
                name: "source_hat",
                grid: &j.grid,
                values: &j.values,
                time: Some((j.times.t0, j.times.dt, j.times.len)),
                kind: "space_time",
                units: "source density",
                provenance: "wave operator applied to recovered traces",
            },
            hash,
        )?;
    }
    let mut text = report_json.to_string();
    text.push('\n');
    persist::write_atomic(&dir.join("report.json"), text.as_bytes())?;
    let mut m = metrics.clone();
    m.values
        .insert("report_bytes".into(), report_json.len() as f64);
    persist::write_json(
        &dir.join("metrics.json"),
        &serde_json::json!({
            "metrics": m,
            "report_sha256": persist::sha256_hex(report_json.as_bytes()),
        }),
    )
}
