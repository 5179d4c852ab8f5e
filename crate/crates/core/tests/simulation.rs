//! Coupled simulation against an Euler–Maruyama reference and the
//! constrained-path invariants.

use mvldp::expr::{CoeffField, Dims, Params};
use mvldp::golden::{deterministic_across_workers, scenario, unit_box};
use mvldp::monotone::MonotoneOp;
use mvldp::simulate::{
    run_path, run_system, verify_discrete_vi, verify_interior_estimate, write_paths_csv, Channel, NoiseStream, ScaleParams, SimConfig, SystemSpec,
};

fn two_by_two(op: MonotoneOp) -> SystemSpec {
    let d = Dims::new(2, 2);
    let p = Params::new();
    SystemSpec::new(
        CoeffField::vector(&["sin(y0) - 0.3*x0", "x0*cos(y1)"], d, &p).unwrap(),
        CoeffField::matrix(&[vec!["1", "0.2*y0"], vec!["0", "0.5 + 0.1*cos(x1)"]], d, &p).unwrap(),
        CoeffField::vector(&["-y0 + 0.5*x0", "-2*y1 + tanh(y0)"], d, &p).unwrap(),
        CoeffField::matrix(&[vec!["0.7", "0"], vec!["0.1", "0.4"]], d, &p).unwrap(),
        op,
        vec![0.2, -0.1],
        vec![0.5, 0.0],
    )
    .unwrap()
}

/// Plain Euler–Maruyama written out by hand, drawing the same increments.
fn reference(eps: f64, gamma: f64, dt: f64, steps: usize, seed: u64, path: u64) -> Vec<[f64; 4]> {
    let mut w1 = NoiseStream::new(seed, path, Channel::Slow);
    let mut w2 = NoiseStream::new(seed, path, Channel::Fast);
    let (mut x, mut y) = ([0.2f64, -0.1], [0.5f64, 0.0]);
    let mut out = vec![[x[0], x[1], y[0], y[1]]];
    let sq = dt.sqrt();
    for _ in 0..steps {
        let a = [w1.standard_normal() * sq, w1.standard_normal() * sq];
        let b = [w2.standard_normal() * sq, w2.standard_normal() * sq];
        let bx = [y[0].sin() - 0.3 * x[0], x[0] * y[1].cos()];
        let sx = [[1.0, 0.2 * y[0]], [0.0, 0.5 + 0.1 * x[1].cos()]];
        let by = [-y[0] + 0.5 * x[0], -2.0 * y[1] + y[0].tanh()];
        let sy = [[0.7, 0.0], [0.1, 0.4]];
        let xn = [
            x[0] + bx[0] * dt + eps.sqrt() * (sx[0][0] * a[0] + sx[0][1] * a[1]),
            x[1] + bx[1] * dt + eps.sqrt() * (sx[1][0] * a[0] + sx[1][1] * a[1]),
        ];
        let yn = [
            y[0] + by[0] * dt / gamma + (sy[0][0] * b[0] + sy[0][1] * b[1]) / gamma.sqrt(),
            y[1] + by[1] * dt / gamma + (sy[1][0] * b[0] + sy[1][1] * b[1]) / gamma.sqrt(),
        ];
        x = xn;
        y = yn;
        out.push([x[0], x[1], y[0], y[1]]);
    }
    out
}

#[test]
fn zero_operator_is_euler_maruyama() {
    let spec = two_by_two(MonotoneOp::Zero);
    let scales = ScaleParams::new(0.3, 0.05).unwrap();
    let cfg = SimConfig::new(0.001, 0.5, 99, 3);
    for path in 0..3 {
        let got = run_path(&spec, scales, &cfg, path).unwrap();
        let want = reference(0.3, 0.05, 0.001, 500, 99, path);
        for (k, w) in want.iter().enumerate() {
            let g = [got.x[k][0], got.x[k][1], got.y[k][0], got.y[k][1]];
            for i in 0..4 {
                assert!((g[i] - w[i]).abs() <= 1e-12 * (1.0 + w[i].abs()), "path {path} step {k} coord {i}");
            }
        }
        assert!(got.dk.iter().flatten().all(|v| *v == 0.0));
    }
}

#[test]
fn constrained_paths_stay_in_the_domain() {
    let op = MonotoneOp::normal_cone_ball(vec![0.0, 0.0], 0.3).unwrap();
    let spec = two_by_two(op.clone());
    let scales = ScaleParams::new(0.5, 0.1).unwrap();
    let cfg = SimConfig::new(0.001, 1.0, 3, 20);
    let samples = op.graph_sample(2, 8, 30);
    for p in run_system(&spec, scales, &cfg).unwrap() {
        assert!(p.max_domain_distance(&op) <= 1e-12);
        assert!(verify_discrete_vi(&p, &samples).pass);
        let ie = verify_interior_estimate(&p, &op, &[0.0, 0.0]).unwrap();
        assert!(ie.pass, "{ie:?}");
    }
}

#[test]
fn reflection_is_active_and_bounded_variation_grows() {
    let spec = scenario(unit_box()).with_initial(vec![0.95], vec![0.6]).unwrap();
    let p = run_path(&spec, ScaleParams::new(0.4, 0.16).unwrap(), &SimConfig::new(0.001, 1.0, 1, 1), 0).unwrap();
    assert!(p.total_variation() > 0.0);
    assert!(p.x.iter().all(|x| x[0].abs() <= 1.0));
}

#[test]
fn same_bits_on_one_and_eight_workers() {
    assert!(deterministic_across_workers(4).unwrap());
    let spec = two_by_two(MonotoneOp::normal_cone_box(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap());
    let scales = ScaleParams::new(0.2, 0.04).unwrap();
    let cfg = SimConfig::new(0.0005, 0.25, 12, 24);
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let paths = pool.install(|| run_system(&spec, scales, &cfg)).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(1), csv(8));
}

#[test]
fn unstable_fast_step_is_rejected() {
    let spec = scenario(MonotoneOp::Zero);
    let cfg = SimConfig::new(0.01, 1.0, 0, 1);
    assert!(run_path(&spec, ScaleParams::new(0.2, 0.04).unwrap(), &cfg, 0).is_err());
}
