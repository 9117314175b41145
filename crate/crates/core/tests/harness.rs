use droplet_core::background::SpeedField;
use droplet_core::droplet::{synthesize_w, DropletSpec, KernelTemplate, ProbePair};
use droplet_core::geometry::Grid3;
use droplet_core::harness::persist::read_f64_le;
use droplet_core::harness::scenario::{ForwardMode, SpeedSpec, Tier};
use droplet_core::harness::{convergence_study, run_pipeline, RunOptions, Scenario, StudyAxis};
use droplet_core::numerics::fit_slope;
use droplet_core::spectrum::build_eigensystem;
use droplet_core::wavefield::{
    apply_wave_operator, fdtd_solve, FdtdOptions, RadialBump, SourceModel, TemporalProfile,
    TimeSignal, WaveOperatorOptions,
};
use droplet_core::Error;

/// 27 droplets around the center of the unit cube, coarse in time.
fn small() -> Scenario {
    let mut s = Scenario::example_constant();
    s.domain.h = 0.0625;
    s.sweep.lo = [0.4; 3];
    s.sweep.counts = [3; 3];
    s.source.width = 0.3;
    s.source.duration = 0.4;
    s.horizon = 1.2;
    s.dt = 1e-3;
    s.solver.noise_window = None;
    s.resolve_defaults();
    s
}

fn opts() -> RunOptions {
    RunOptions {
        workers: 2,
        out_dir: None,
    }
}

#[test]
fn overwhelming_noise_leaves_every_center_unusable() {
    let mut s = small();
    s.noise.level = 10.0;
    s.noise.seed = 5;
    let run = run_pipeline(&s, &opts()).unwrap();
    assert_eq!(run.report.usable, 0);
    assert!(run.report.droplets.iter().all(|d| !d.usable));
    assert!(!run.report.speed.available);
    assert!(run.speed_hat.is_none());
    assert_eq!(run.metrics.get("usable_fraction"), Some(0.0));
}

#[test]
fn probe_signal_scales_linearly_in_radius() {
    let v = TimeSignal::from_fn(0.0, 1e-3, 1201, |t| (t * (1.0 - t / 1.2)).max(0.0).powi(3));
    let mut norms = Vec::new();
    let radii = [0.08, 0.04, 0.02, 0.01];
    for a in radii {
        let sys = build_eigensystem(a, 200).unwrap();
        let d = DropletSpec::new([0.5, 0.5, 0.5], a, 0.5).unwrap();
        let pair = ProbePair::constant([0.5, 0.5, 0.0], d.center, 1.0).unwrap();
        let kern = KernelTemplate::new(&sys, &d, 1.2, 1e-3).unwrap().kernel_for(&pair).unwrap();
        norms.push(synthesize_w(&kern, &v).unwrap().l2_norm());
    }
    let xs: Vec<f64> = radii.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    assert!((0.95..=1.05).contains(&slope), "slope {slope}");
}

#[test]
fn doubling_modes_changes_the_signal_by_less_than_the_tail_bound() {
    let result = convergence_study(&small(), StudyAxis::NMax, &[50.0, 100.0, 200.0], &opts()).unwrap();
    for level in &result.levels[1..] {
        let ratio = level.metrics["w_change_over_tail_max"];
        assert!(ratio <= 1.0, "n_max {}: change/tail = {ratio}", level.level);
    }
}

#[test]
fn study_needs_three_levels() {
    let err = convergence_study(&small(), StudyAxis::A, &[0.04, 0.02], &opts()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn run_directory_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let s = small();
    let run = run_pipeline(
        &s,
        &RunOptions {
            workers: 1,
            out_dir: Some(dir.path().to_path_buf()),
        },
    )
    .unwrap();
    let read_json = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap().trim_end(), run.report_json);
    let metrics = read_json("metrics.json");
    assert!(metrics["report_sha256"].is_string());

    let persisted: Scenario =
        serde_json::from_value(read_json("scenario.json")).unwrap();
    assert_eq!(persisted.solver.noise_window, s.solver.noise_window);
    assert!(persisted.solver.noise_window.is_some());

    let sidecar = read_json("fields/source_hat.json");
    assert_eq!(sidecar["scenario_sha256"], run.report.scenario_sha256);
    let values = read_f64_le(&dir.path().join("fields/source_hat.bin")).unwrap();
    let src = run.source_hat.as_ref().unwrap();
    assert_eq!(values, src.values);
    assert_eq!(sidecar["time_levels"].as_u64().unwrap() as usize, src.times.len);

    let entries: Vec<_> = std::fs::read_dir(dir.path().join("traces")).unwrap().collect();
    assert_eq!(entries.len(), 3 * 27);
    let leftovers = walk(dir.path()).into_iter().filter(|p| p.ends_with(".tmp")).count();
    assert_eq!(leftovers, 0);
}

fn walk(dir: &std::path::Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.to_string_lossy().into_owned());
        }
    }
    out
}

#[test]
fn gridded_medium_runs_with_fdtd_forward_model() {
    let mut s = small();
    s.tier = Tier::Gridded;
    s.speed = SpeedSpec::Radial {
        center: [0.5; 3],
        inner: 1.1,
        outer: 1.0,
        radius: 0.5,
    };
    s.solver.forward = ForwardMode::Fdtd;
    s.resolve_defaults();
    let run = run_pipeline(&s, &opts()).unwrap();
    assert!(run.report.approximate);
    assert_eq!(run.report.usable, 27);
    let v_err = run.metrics.get("v_rel_l2_max").unwrap();
    assert!(v_err < 1e-3, "{v_err}");
    assert!(run.report.speed.available);
}

#[test]
fn retarded_forward_model_rejected_for_gridded_media() {
    let mut s = small();
    s.tier = Tier::Gridded;
    let err = s.validate().unwrap_err();
    match err {
        Error::Validation(issues) => assert!(issues.iter().any(|i| i.key.contains("forward"))),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn speed_file_resolves_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = small();
    let grid = s.domain.grid().unwrap();
    let bytes: Vec<u8> = (0..grid.len()).flat_map(|_| 1.0f64.to_le_bytes()).collect();
    std::fs::write(dir.path().join("c.bin"), bytes).unwrap();
    s.tier = Tier::Gridded;
    s.speed = SpeedSpec::File { path: "c.bin".into() };
    s.solver.forward = ForwardMode::Fdtd;
    let path = dir.path().join("s.toml");
    std::fs::write(&path, s.to_toml().unwrap()).unwrap();
    let loaded = Scenario::load(&path).unwrap();
    let c = loaded.speed.build(grid, &loaded.base_dir).unwrap();
    assert!(c.values().iter().all(|v| *v == 1.0));
}

#[test]
fn wave_operator_inverts_the_fdtd_update() {
    let src = SourceModel::Separable {
        spatial: RadialBump {
            center: [0.0; 3],
            radius: 0.4,
            amplitude: 1.0,
            power: 6,
        },
        temporal: TemporalProfile::Onset {
            order: 3,
            duration: 0.6,
        },
    };
    for cells in [16usize, 32] {
        let h = 1.0 / cells as f64;
        let grid = Grid3::new([-0.5; 3], h, [cells + 1; 3]).unwrap();
        let speed = SpeedField::constant(grid, 1.0).unwrap();
        let fd = FdtdOptions {
            padding: 0,
            snapshot_stride: Some(1),
            boundary: droplet_core::wavefield::Boundary::Dirichlet(std::sync::Arc::new(|_, _| 0.0)),
            ..Default::default()
        };
        let out = fdtd_solve(&src, &speed, 0.3, 0.5, &fd).unwrap();
        let field = out.snapshots.unwrap();
        let j = apply_wave_operator(&field, &speed, WaveOperatorOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for it in 0..j.times.len {
            let t = j.times.time(it);
            for idx in 0..j.grid.len() {
                worst = worst.max((j.at(it, idx) - src.value(j.grid.node_position(idx), t)).abs());
            }
        }
        assert!(worst < 1e-12, "{cells} cells: {worst}");
    }
}

#[test]
fn shipped_scenarios_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let constant = Scenario::load(&dir.join("constant.toml")).unwrap();
    let mut reference = Scenario::example_constant();
    reference.base_dir = constant.base_dir.clone();
    assert_eq!(constant, reference);
    let radial = Scenario::load(&dir.join("radial.toml")).unwrap();
    assert_eq!(radial.tier, Tier::Gridded);
    assert_eq!(radial.solver.forward, ForwardMode::Fdtd);
}
