use std::f64::consts::PI;

use proptest::prelude::*;

use droplet_core::background::{fast_march, SpeedField};
use droplet_core::droplet::{synthesize_w, DropletSpec, KernelTemplate, ProbePair};
use droplet_core::geometry::{distance, Grid3};
use droplet_core::reconstruct::detect_jump;
use droplet_core::spectrum::solve_roots;
use droplet_core::volterra::{invert_direct, invert_neumann, VolterraOp};
use droplet_core::wavefield::{
    retarded_potential_constant, RadialBump, RetardedQuadrature, SourceModel, TemporalProfile,
    TimeGrid, TimeSignal,
};
use droplet_core::{numerics::integrate, spectrum::build_eigensystem};

const LEN: usize = 257;
const DT: f64 = 1.0 / 256.0;

fn signal(coeffs: &[(f64, f64)]) -> TimeSignal {
    TimeSignal::from_fn(0.0, DT, LEN, |t| {
        coeffs.iter().map(|(c, w)| c * (w * t).cos()).sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, 0.0..8.0f64), 1..4)
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![0.5..3.0f64, -3.0..-0.5f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inversion_is_linear(a in alpha(), k in coeffs(), g1 in coeffs(), g2 in coeffs(), s in -2.0..2.0f64) {
        let op = VolterraOp::new(a, signal(&k)).unwrap();
        let (g1, g2) = (signal(&g1), signal(&g2));
        let combo = g1.add(&g2.scaled(s)).unwrap();
        let lhs = invert_direct(&op, &combo).unwrap();
        let rhs = invert_direct(&op, &g1).unwrap().add(&invert_direct(&op, &g2).unwrap().scaled(s)).unwrap();
        let scale = lhs.max_abs().max(rhs.max_abs()).max(1e-12);
        for (x, y) in lhs.samples.iter().zip(&rhs.samples) {
            prop_assert!((x - y).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn inversion_is_homogeneous(a in alpha(), k in coeffs(), g in coeffs(), c in prop_oneof![0.1..10.0f64, -10.0..-0.1f64]) {
        let kernel = signal(&k);
        let g = signal(&g);
        let f = invert_direct(&VolterraOp::new(a, kernel.clone()).unwrap(), &g).unwrap();
        let scaled_op = VolterraOp::new(c * a, kernel.scaled(c)).unwrap();
        let fc = invert_direct(&scaled_op, &g.scaled(c)).unwrap();
        let scale = f.max_abs().max(1e-12);
        for (x, y) in f.samples.iter().zip(&fc.samples) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn solvers_agree_and_satisfy_the_equation(a in alpha(), k in coeffs(), g in coeffs()) {
        let op = VolterraOp::new(a, signal(&k)).unwrap();
        let g = signal(&g);
        let direct = invert_direct(&op, &g).unwrap();
        let neumann = invert_neumann(&op, &g, 1e-10).unwrap();
        prop_assert!(neumann.relative_l2_error(&direct) <= 1e-6);
        let back = op.apply(&direct).unwrap();
        prop_assert!(back.relative_l2_error(&g) <= 1e-6);
    }

    #[test]
    fn detection_is_monotone_in_threshold(
        onset in 0.1..0.8f64,
        power in 1u32..4,
        t1 in 1e-6..0.5f64,
        t2 in 1e-6..0.5f64,
    ) {
        let s = TimeSignal::from_fn(0.0, DT, LEN, |t| if t > onset { (t - onset).powi(power as i32) } else { 0.0 });
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        match (detect_jump(&s, lo), detect_jump(&s, hi)) {
            (Some(a), Some(b)) => prop_assert!(a <= b),
            (None, Some(_)) => prop_assert!(false, "lower threshold never crossed"),
            _ => {}
        }
    }

    #[test]
    fn slower_media_arrive_later(base in 0.5..2.0f64, bump in 0.0..1.0f64, cx in 0.2..0.8f64) {
        let grid = Grid3::new([0.0; 3], 0.1, [11, 11, 11]).unwrap();
        let fast = SpeedField::from_fn(grid, |p| base + bump * (-(distance(p, [cx, 0.5, 0.5]) / 0.2).powi(2)).exp()).unwrap();
        let slow = SpeedField::constant(grid, base).unwrap();
        let tf = fast_march(&fast, [0.0, 0.5, 0.5]).unwrap();
        let ts = fast_march(&slow, [0.0, 0.5, 0.5]).unwrap();
        for (f, s) in tf.values.iter().zip(&ts.values) {
            prop_assert!(*f <= *s + 1e-12);
        }
    }

    #[test]
    fn synthesis_is_linear_in_the_trace(v1 in coeffs(), v2 in coeffs(), s in -3.0..3.0f64) {
        let a = 0.04;
        let sys = build_eigensystem(a, 50).unwrap();
        let d = DropletSpec::new([0.5, 0.5, 0.5], a, 0.5).unwrap();
        let pair = ProbePair::constant([0.5, 0.5, 0.0], d.center, 1.0).unwrap();
        let kern = KernelTemplate::new(&sys, &d, 1.0, DT).unwrap().kernel_for(&pair).unwrap();
        let (v1, v2) = (signal(&v1), signal(&v2));
        let combo = synthesize_w(&kern, &v1.add(&v2.scaled(s)).unwrap()).unwrap();
        let parts = synthesize_w(&kern, &v1).unwrap().add(&synthesize_w(&kern, &v2).unwrap().scaled(s)).unwrap();
        let scale = combo.max_abs().max(parts.max_abs()).max(1e-300);
        for (x, y) in combo.samples.iter().zip(&parts.samples) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn eigenfunctions_are_orthonormal() {
    let roots = solve_roots(10);
    let inner = |mi: f64, mj: f64| integrate(|r| (mi * r).sin() * (mj * r).sin(), 0.0, 1.0, 64, 12);
    for (i, (mi, _)) in roots.iter().enumerate() {
        for (j, (mj, _)) in roots.iter().enumerate() {
            let g = inner(*mi, *mj) / (inner(*mi, *mi) * inner(*mj, *mj)).sqrt();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((g - expected).abs() < 1e-6, "<e_{}, e_{}> = {g}", i + 1, j + 1);
        }
    }
}

#[test]
fn averages_over_eigenvalues_approach_a_constant() {
    let sys = build_eigensystem(1.0, 400).unwrap();
    let ratio = |n: usize| sys.modes[n - 1].avg.abs() / sys.modes[n - 1].lambda;
    let (r200, r400) = (ratio(200), ratio(400));
    assert!(r400 > 0.0);
    assert!(((r200 - r400) / r400).abs() < 0.01, "{r200} vs {r400}");
}

#[test]
fn retarded_potential_is_exactly_zero_before_arrival() {
    let bump = RadialBump {
        center: [0.0; 3],
        radius: 0.2,
        amplitude: 1.0,
        power: 4,
    };
    let src = SourceModel::Separable {
        spatial: bump,
        temporal: TemporalProfile::Onset {
            order: 1,
            duration: 0.4,
        },
    };
    let times = TimeGrid::covering(1.5, 1e-3).unwrap();
    for c0 in [0.7, 1.0, 1.6] {
        for quad in [
            RetardedQuadrature::default(),
            RetardedQuadrature {
                cell: 0.02,
                radial_fast_path: false,
            },
        ] {
            let x = [0.6, 0.3, 0.0];
            let arrival = (distance(x, [0.0; 3]) - 0.2) / c0;
            let v = retarded_potential_constant(&src, c0, x, times, quad).unwrap();
            for (t, s) in v.times().zip(&v.samples) {
                if t < arrival {
                    assert_eq!(*s, 0.0, "t = {t}, c0 = {c0}");
                }
            }
            assert!(v.max_abs() > 0.0);
        }
    }
}

#[test]
fn radial_fast_march_matches_ray_integral() {
    let n = 33;
    let h = 1.0 / (n - 1) as f64;
    let grid = Grid3::new([0.0; 3], h, [n; 3]).unwrap();
    let c = |r: f64| 1.0 + 0.3 * (PI * r).cos();
    let speed = SpeedField::from_fn(grid, |p| c(distance(p, [0.5; 3]))).unwrap();
    let field = fast_march(&speed, [0.5; 3]).unwrap();
    for idx in 0..grid.len() {
        let r = distance(grid.node_position(idx), [0.5; 3]);
        let exact = integrate(|s| 1.0 / c(s), 0.0, r, 4, 8);
        assert!((field.values[idx] - exact).abs() <= 2.0 * h, "node {idx}: {} vs {exact}", field.values[idx]);
    }
}
