//! Experiment configuration. Scenarios are read from TOML; every optional
//! entry has an explicit default that is written back out with the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::SpeedField;
use crate::error::{Error, Result, ValidationIssue};
use crate::geometry::{distance, Ball, Grid3, Point};
use crate::spectrum::check_riesz_condition;
use crate::wavefield::{RadialBump, SourceModel, TemporalProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Homogeneous background; forward model exact up to quadrature.
    Constant,
    /// Gridded background; travel times by fast marching, unit amplitude and
    /// zero remainder assumed.
    Gridded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub origin: Point,
    pub extent: [f64; 3],
    /// Spacing of the background grid.
    pub h: f64,
}

impl Domain {
    pub fn upper(&self) -> Point {
        [
            self.origin[0] + self.extent[0],
            self.origin[1] + self.extent[1],
            self.origin[2] + self.extent[2],
        ]
    }

    pub fn grid(&self) -> Result<Grid3> {
        Grid3::covering(self.origin, self.upper(), self.h)
    }

    pub fn contains(&self, p: Point) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] >= self.origin[a] - 1e-12 && p[a] <= hi[a] + 1e-12)
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        let hi = self.upper();
        let tol = 1e-9 * self.extent.iter().cloned().fold(1.0, f64::max);
        self.contains(p)
            && (0..3).any(|a| (p[a] - self.origin[a]).abs() <= tol || (p[a] - hi[a]).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    Constant {
        value: f64,
    },
    /// `c(r) = inner + (outer - inner) * smoothstep(r / radius)` around `center`,
    /// constant `outer` beyond `radius`.
    Radial {
        center: Point,
        inner: f64,
        outer: f64,
        radius: f64,
    },
    /// Little-endian f64 node values on the domain grid.
    File {
        path: PathBuf,
    },
}

impl SpeedSpec {
    pub fn radial_value(center: Point, inner: f64, outer: f64, radius: f64, p: Point) -> f64 {
        let s = (distance(p, center) / radius).min(1.0);
        let smooth = s * s * (3.0 - 2.0 * s);
        inner + (outer - inner) * smooth
    }

    pub fn build(&self, grid: Grid3, base_dir: &Path) -> Result<SpeedField> {
        match self {
            SpeedSpec::Constant { value } => SpeedField::constant(grid, *value),
            SpeedSpec::Radial {
                center,
                inner,
                outer,
                radius,
            } => SpeedField::from_fn(grid, |p| {
                Self::radial_value(*center, *inner, *outer, *radius, p)
            }),
            SpeedSpec::File { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let values = super::persist::read_f64_le(&full)?;
                SpeedField::from_values(grid, values)
            }
        }
    }

    /// Upper bound on the speed, known without building the field (files
    /// report `None`).
    pub fn max_hint(&self) -> Option<f64> {
        match self {
            SpeedSpec::Constant { value } => Some(*value),
            SpeedSpec::Radial { inner, outer, .. } => Some(inner.max(*outer)),
            SpeedSpec::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub center: Point,
    /// Radius of the compactly supported bump `(1 - r²/R²)^power`.
    pub width: f64,
    #[serde(default = "default_power")]
    pub power: u32,
    #[serde(default = "default_one")]
    pub amplitude: f64,
    /// Vanishing order `p`: time derivatives of order `0..=p` vanish at 0.
    pub vanishing_order: u32,
    /// Length of the emission window.
    pub duration: f64,
}

impl SourceSpec {
    pub fn model(&self) -> SourceModel {
        SourceModel::Separable {
            spatial: RadialBump {
                center: self.center,
                radius: self.width,
                amplitude: self.amplitude,
                power: self.power,
            },
            temporal: TemporalProfile::Onset {
                order: self.vanishing_order,
                duration: self.duration,
            },
        }
    }

    pub fn support(&self) -> Ball {
        Ball {
            center: self.center,
            radius: self.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Lower corner of the regular grid of droplet centers.
    pub lo: Point,
    /// Number of centers per axis.
    pub counts: [usize; 3],
    pub spacing: f64,
    /// Droplet radius `a`.
    pub radius: f64,
    pub kappa: f64,
}

impl Sweep {
    pub fn grid(&self) -> Result<Grid3> {
        Grid3::new(self.lo, self.spacing, self.counts)
    }

    pub fn centers(&self) -> Result<Vec<Point>> {
        let g = self.grid()?;
        Ok((0..g.len()).map(|i| g.node_position(i)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Kernels built from the reference travel times.
    Oracle,
    /// Kernels built from the detected jump times.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpeed {
    /// Differentiate with the speed recovered from the sweep.
    Recovered,
    /// Differentiate with the reference background speed.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    Retarded,
    Fdtd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Constant of the `C_θ a²` part of the jump threshold.
    #[serde(default = "default_c_theta")]
    pub c_theta: f64,
    /// Gaussian width for source recovery; `None` in the file resolves to
    /// `2 × sweep spacing` when noise is present, no smoothing otherwise.
    #[serde(default)]
    pub mollify: Option<f64>,
    #[serde(default = "default_stride")]
    pub time_stride: usize,
    #[serde(default = "default_kernel_mode")]
    pub kernel_mode: KernelMode,
    #[serde(default = "default_source_speed")]
    pub source_speed: SourceSpeed,
    #[serde(default = "default_forward")]
    pub forward: ForwardMode,
    /// Courant number for FDTD forward runs.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// End of the pre-arrival noise window; `None` resolves to
    /// `0.5 · min |x - z| / c_max`.
    #[serde(default)]
    pub noise_window: Option<f64>,
    /// Write per-droplet CSV traces.
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            n_max: default_n_max(),
            tol: default_tol(),
            c_theta: default_c_theta(),
            mollify: None,
            time_stride: default_stride(),
            kernel_mode: default_kernel_mode(),
            source_speed: default_source_speed(),
            forward: default_forward(),
            cfl: default_cfl(),
            noise_window: None,
            write_traces: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Standard deviation of additive Gaussian noise on `w`.
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Remainder {
    /// `C` in the injected remainder `C a² ‖v‖∞ s(t - ζ)`.
    #[serde(default)]
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub tier: Tier,
    pub domain: Domain,
    pub speed: SpeedSpec,
    pub source: SourceSpec,
    pub probe: Point,
    pub sweep: Sweep,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub remainder: Remainder,
    /// Directory that relative paths are resolved against. Not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_power() -> u32 {
    4
}
fn default_one() -> f64 {
    1.0
}
fn default_n_max() -> usize {
    crate::spectrum::DEFAULT_N_MAX
}
fn default_tol() -> f64 {
    crate::volterra::DEFAULT_TOL
}
fn default_c_theta() -> f64 {
    0.01
}
fn default_stride() -> usize {
    1
}
fn default_kernel_mode() -> KernelMode {
    KernelMode::Oracle
}
fn default_source_speed() -> SourceSpeed {
    SourceSpeed::Recovered
}
fn default_forward() -> ForwardMode {
    ForwardMode::Retarded
}
fn default_cfl() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parse and validate. Relative paths inside resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_toml_str(&text)?;
        s.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        s.validate()?;
        s.resolve_defaults();
        Ok(s)
    }

    /// Fill the data-dependent defaults so the persisted copy is complete.
    pub fn resolve_defaults(&mut self) {
        if self.solver.mollify.is_none() && self.noise.level > 0.0 {
            self.solver.mollify = Some(2.0 * self.sweep.spacing);
        }
        if self.solver.noise_window.is_none() {
            if let (Ok(centers), Some(c_max)) = (self.sweep.centers(), self.speed.max_hint()) {
                self.solver.noise_window = Some(crate::reconstruct::default_noise_window(
                    self.probe, &centers, c_max,
                ));
            }
        }
    }

    pub fn c1(&self) -> f64 {
        self.sweep.kappa * self.sweep.radius
    }

    /// Every violated constraint, not just the first.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let mut out = Vec::new();
        let mut push = |key: &str, message: String| {
            out.push(ValidationIssue {
                key: key.into(),
                message,
            })
        };
        let d = &self.domain;
        if d.extent.iter().any(|e| !(*e > 0.0)) {
            push("domain.extent", format!("extents must be positive, got {:?}", d.extent));
        }
        if !(d.h > 0.0) {
            push("domain.h", format!("grid spacing must be positive, got {}", d.h));
        }
        if !(self.horizon > 0.0) {
            push("horizon", format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.dt > 0.0) {
            push("dt", format!("time step must be positive, got {}", self.dt));
        }
        let s = &self.sweep;
        if !(s.radius > 0.0) {
            push("sweep.radius", format!("droplet radius must be positive, got {}", s.radius));
        }
        if !(s.kappa > 0.0) {
            push("sweep.kappa", format!("kappa must be positive, got {}", s.kappa));
        }
        if s.radius > 0.0
            && s.kappa > 0.0
            && self.horizon > 0.0
            && !check_riesz_condition(s.radius, self.c1(), self.horizon)
        {
            push(
                "sweep.kappa",
                format!(
                    "Riesz condition c1*T < a fails: kappa*T = {} must be below 1",
                    s.kappa * self.horizon
                ),
            );
        }
        if !(s.spacing > 0.0) {
            push("sweep.spacing", format!("spacing must be positive, got {}", s.spacing));
        }
        if s.counts.iter().any(|&c| c == 0) {
            push("sweep.counts", "every axis needs at least one center".into());
        }
        if !d.on_boundary(self.probe) {
            push(
                "probe",
                format!("probe {:?} must lie on the boundary of the domain", self.probe),
            );
        }
        if s.spacing > 0.0 && s.counts.iter().all(|&c| c > 0) {
            let hi: Vec<f64> = (0..3)
                .map(|a| s.lo[a] + s.spacing * (s.counts[a] - 1) as f64)
                .collect();
            let inside = (0..3).all(|a| {
                s.lo[a] > d.origin[a] && hi[a] < d.origin[a] + d.extent[a]
            });
            if !inside {
                push("sweep.lo", "droplet centers must lie strictly inside the domain".into());
            }
            if let Ok(centers) = s.centers() {
                if centers.iter().any(|z| distance(*z, self.probe) <= s.radius) {
                    push("sweep", "a droplet overlaps the probe".into());
                }
            }
        }
        let src = &self.source;
        if !(src.width > 0.0) {
            push("source.width", format!("width must be positive, got {}", src.width));
        }
        if !(src.duration > 0.0) {
            push("source.duration", format!("duration must be positive, got {}", src.duration));
        } else if src.duration >= self.horizon {
            push(
                "source.duration",
                format!(
                    "emission window {} must end before the horizon {}",
                    src.duration, self.horizon
                ),
            );
        }
        let ball_inside = (0..3).all(|a| {
            src.center[a] - src.width >= d.origin[a] && src.center[a] + src.width <= d.upper()[a]
        });
        if !ball_inside {
            push("source.center", "source support must lie inside the domain".into());
        }
        match &self.speed {
            SpeedSpec::Constant { value } if !(*value > 0.0) => {
                push("speed.value", format!("speed must be positive, got {value}"))
            }
            SpeedSpec::Radial {
                inner,
                outer,
                radius,
                ..
            } if !(*inner > 0.0 && *outer > 0.0 && *radius > 0.0) => push(
                "speed",
                "radial profile needs positive inner, outer and radius".into(),
            ),
            SpeedSpec::File { path } if !self.base_dir.join(path).exists() && !path.exists() => {
                push("speed.path", format!("{} does not exist", path.display()))
            }
            _ => {}
        }
        if let (Some(c_max), true) = (self.speed.max_hint(), d.h > 0.0) {
            let limit = d.h / (3f64.sqrt() * c_max);
            if self.dt > limit {
                push(
                    "dt",
                    format!("dt = {} exceeds h/(sqrt(3) c_max) = {limit}", self.dt),
                );
            }
        }
        if self.tier == Tier::Constant && !matches!(self.speed, SpeedSpec::Constant { .. }) {
            push("tier", "the constant tier needs a constant speed".into());
        }
        if self.solver.n_max == 0 {
            push("solver.n_max", "at least one mode is needed".into());
        }
        if !(self.solver.tol > 0.0) {
            push("solver.tol", "tolerance must be positive".into());
        }
        if !(self.solver.c_theta > 0.0) {
            push("solver.c_theta", "threshold constant must be positive".into());
        }
        if self.noise.level < 0.0 {
            push("noise.level", "noise level must be nonnegative".into());
        }
        if self.solver.forward == ForwardMode::Retarded && self.tier == Tier::Gridded {
            push(
                "solver.forward",
                "the retarded potential needs a constant speed; use fdtd".into(),
            );
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// A small homogeneous scenario used by the CLI smoke path and the tests.
    pub fn example_constant() -> Self {
        let mut s = Scenario {
            name: "constant-speed".into(),
            tier: Tier::Constant,
            domain: Domain {
                origin: [0.0; 3],
                extent: [1.0; 3],
                h: 1.0 / 32.0,
            },
            speed: SpeedSpec::Constant { value: 1.0 },
            source: SourceSpec {
                center: [0.5; 3],
                width: 0.45,
                power: 4,
                amplitude: 1.0,
                vanishing_order: 1,
                duration: 0.6,
            },
            probe: [0.5, 0.5, 0.0],
            sweep: Sweep {
                lo: [0.3; 3],
                counts: [5, 5, 5],
                spacing: 0.1,
                radius: 0.04,
                kappa: 0.5,
            },
            horizon: 1.8,
            dt: 5e-4,
            solver: Solver::default(),
            noise: Noise::default(),
            remainder: Remainder::default(),
            base_dir: PathBuf::from("."),
        };
        s.resolve_defaults();
        s
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_is_valid_and_round_trips() {
        let s = Scenario::example_constant();
        s.validate().unwrap();
        let text = s.to_toml().unwrap();
        let mut back = Scenario::from_toml_str(&text).unwrap();
        back.base_dir = s.base_dir.clone();
        assert_eq!(back, s);
    }

    #[test]
    fn riesz_violation_is_reported() {
        let mut s = Scenario::example_constant();
        s.sweep.kappa = 1.2 / s.horizon;
        let issues = s.issues();
        assert!(issues.iter().any(|i| i.message.contains("Riesz")));
    }

    #[test]
    fn interior_probe_rejected_with_all_issues() {
        let mut s = Scenario::example_constant();
        s.probe = [0.5, 0.5, 0.1];
        s.dt = 1.0;
        let issues = s.issues();
        let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"probe"));
        assert!(keys.contains(&"dt"));
    }

    #[test]
    fn unknown_keys_fail_to_parse() {
        let mut text = Scenario::example_constant().to_toml().unwrap();
        text.push_str("\n[bogus]\nx = 1\n");
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Parse(_))));
    }
}
