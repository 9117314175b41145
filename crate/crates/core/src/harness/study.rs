//! Convergence studies: rerun the pipeline along one parameter axis and fit
//! log-log slopes of the recorded errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::droplet::w_tail_bound;
use crate::error::{Error, Result};
use crate::numerics::fit_slope;
use crate::wavefield::{retarded_potential_constant, RetardedQuadrature, TimeGrid};

use super::pipeline::{background_speed, forward_traces, run_pipeline, MetricsRecord, RunOptions};
use super::scenario::{ForwardMode, Scenario, SpeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    /// Grid spacing: background grid and droplet sweep spacing together.
    H,
    Dt,
    /// Droplet radius at fixed kappa.
    A,
    NMax,
}

impl std::str::FromStr for StudyAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(StudyAxis::H),
            "dt" => Ok(StudyAxis::Dt),
            "a" => Ok(StudyAxis::A),
            "n_max" | "nmax" => Ok(StudyAxis::NMax),
            other => Err(Error::InvalidArgument(format!("unknown study axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyLevel {
    pub level: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub axis: StudyAxis,
    pub levels: Vec<StudyLevel>,
    /// Slope of `ln(metric)` against `ln(level)` for every metric that is
    /// positive at all levels.
    pub slopes: BTreeMap<String, f64>,
}

impl StudyResult {
    pub fn metrics(&self) -> MetricsRecord {
        MetricsRecord {
            values: BTreeMap::new(),
            runtimes: BTreeMap::new(),
            slopes: self.slopes.clone(),
        }
    }

    /// Plain-text slope table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<36} {:>10}\n", "metric", "slope");
        for (k, v) in &self.slopes {
            out.push_str(&format!("{k:<36} {v:>10.4}\n"));
        }
        out
    }
}

/// Scenario with the axis parameter set to `level`.
pub fn at_level(base: &Scenario, axis: StudyAxis, level: f64) -> Scenario {
    let mut s = base.clone();
    match axis {
        StudyAxis::H => {
            let span: Vec<f64> = (0..3)
                .map(|a| base.sweep.spacing * (base.sweep.counts[a] - 1) as f64)
                .collect();
            s.domain.h = level;
            s.sweep.spacing = level;
            for a in 0..3 {
                s.sweep.counts[a] = (span[a] / level + 1e-9).floor() as usize + 1;
            }
        }
        StudyAxis::Dt => s.dt = level,
        StudyAxis::A => s.sweep.radius = level,
        StudyAxis::NMax => s.solver.n_max = level.round() as usize,
    }
    s.solver.noise_window = None;
    s.solver.write_traces = false;
    s.resolve_defaults();
    s
}

/// Relative L² mismatch between FDTD and retarded-potential traces at up to
/// `probes` droplet centers (constant speed only).
pub fn forward_consistency(s: &Scenario, probes: usize) -> Result<f64> {
    let c0 = match s.speed {
        SpeedSpec::Constant { value } => value,
        _ => {
            return Err(Error::InvalidArgument(
                "forward consistency needs a constant speed".into(),
            ))
        }
    };
    let centers: Vec<_> = s.sweep.centers()?.into_iter().take(probes).collect();
    let mut fd = s.clone();
    fd.solver.forward = ForwardMode::Fdtd;
    let speed = background_speed(&fd)?;
    let traces = forward_traces(&fd, &speed, &centers)?;
    let times = TimeGrid::covering(s.horizon, s.dt)?;
    let model = s.source.model();
    let mut worst: f64 = 0.0;
    for (z, tr) in centers.iter().zip(&traces) {
        let exact = retarded_potential_constant(&model, c0, *z, times, RetardedQuadrature::default())?;
        worst = worst.max(tr.relative_l2_error(&exact));
    }
    Ok(worst)
}

pub fn convergence_study(
    base: &Scenario,
    axis: StudyAxis,
    levels: &[f64],
    opts: &RunOptions,
) -> Result<StudyResult> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let run_opts = RunOptions {
        workers: opts.workers,
        out_dir: None,
    };
    let mut out = Vec::with_capacity(levels.len());
    let mut prev_w: Option<(Vec<crate::wavefield::TimeSignal>, Vec<f64>)> = None;
    for &level in levels {
        let s = at_level(base, axis, level);
        let run = run_pipeline(&s, &run_opts)?;
        let mut metrics = run.metrics.values.clone();
        if axis == StudyAxis::H && matches!(s.speed, SpeedSpec::Constant { .. }) {
            metrics.insert("forward_rel_l2".into(), forward_consistency(&s, 5)?);
        }
        if axis == StudyAxis::NMax {
            let tails: Vec<f64> = run
                .kernels
                .iter()
                .zip(&run.v_true)
                .map(|(k, v)| w_tail_bound(k, v))
                .collect::<Result<_>>()?;
            if let Some((pw, ptail)) = &prev_w {
                let mut worst: f64 = 0.0;
                let mut worst_ratio: f64 = 0.0;
                for ((a, b), t) in pw.iter().zip(&run.w).zip(ptail) {
                    let d = a
                        .samples
                        .iter()
                        .zip(&b.samples)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    worst = worst.max(d);
                    if *t > 0.0 {
                        worst_ratio = worst_ratio.max(d / t);
                    }
                }
                metrics.insert("w_change_max".into(), worst);
                metrics.insert("w_change_over_tail_max".into(), worst_ratio);
            }
            metrics.insert(
                "w_tail_bound_max".into(),
                tails.iter().cloned().fold(0.0, f64::max),
            );
            prev_w = Some((run.w.clone(), tails));
        }
        out.push(StudyLevel { level, metrics });
    }
    let mut slopes = BTreeMap::new();
    let keys: Vec<String> = out[0].metrics.keys().cloned().collect();
    for key in keys {
        let ys: Option<Vec<f64>> = out
            .iter()
            .map(|l| l.metrics.get(&key).copied().filter(|v| *v > 0.0))
            .collect();
        if let Some(ys) = ys {
            let xs: Vec<f64> = out.iter().map(|l| l.level.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
            slopes.insert(key, fit_slope(&xs, &ly));
        }
    }
    Ok(StudyResult {
        axis,
        levels: out,
        slopes,
    })
}
