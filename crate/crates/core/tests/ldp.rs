//! Rate functions, Laplace functionals and tightness against closed forms.

use mvldp::averaging::AveragedCoeffs;
use mvldp::config::fitted_dt;
use mvldp::golden::{laplace_test_function, scenario, unit_box};
use mvldp::ldp::{integrate_controlled, laplace, rate, tightness_probe, variational_value, LdpError, McConfig, RateOptions, TestFunction, VariationalOptions};
use mvldp::monotone::MonotoneOp;
use mvldp::simulate::ScaleParams;
use proptest::prelude::*;

fn constant(b: f64, a: f64) -> AveragedCoeffs {
    AveragedCoeffs::constant(vec![b], vec![a]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `(x − x₀ − bt)² / (2at)` for constant coefficients.
    #[test]
    fn drifted_closed_form(x in -1.5f64..1.5, b in -0.5f64..0.5, a in 0.2f64..2.0, t in 0.3f64..2.0) {
        let r = rate(&constant(b, a), &MonotoneOp::Zero, &[0.1], &[x], t, &RateOptions::default()).unwrap();
        let want = (x - 0.1 - b * t).powi(2) / (2.0 * a * t);
        prop_assert!((r.value - want).abs() <= 1e-3 * want + 1e-6, "{} vs {}", r.value, want);
    }

    /// A constraint never makes an interior target more expensive.
    #[test]
    fn box_never_hurts(x in -0.95f64..0.95, t in 0.3f64..1.5) {
        let avg = constant(0.0, 0.61);
        let free = rate(&avg, &MonotoneOp::Zero, &[0.0], &[x], t, &RateOptions::default()).unwrap();
        let boxed = rate(&avg, &unit_box(), &[0.0], &[x], t, &RateOptions::default()).unwrap();
        prop_assert!(boxed.value <= free.value + 1e-6);
        let path = integrate_controlled(&avg, &unit_box(), &[0.0], &boxed.control).unwrap();
        prop_assert!(path.x.iter().all(|v| v[0].abs() <= 1.0 + 1e-9));
    }

    /// Scaling the diffusion by `s` divides the action by `s²`.
    #[test]
    fn diffusion_scaling(x in 0.1f64..1.0, s in 0.3f64..3.0) {
        let base = rate(&constant(0.0, 0.5), &MonotoneOp::Zero, &[0.0], &[x], 1.0, &RateOptions::default()).unwrap().value;
        let scaled = rate(&constant(0.0, 0.5 * s * s), &MonotoneOp::Zero, &[0.0], &[x], 1.0, &RateOptions::default()).unwrap().value;
        prop_assert!((scaled * s * s - base).abs() <= 1e-4 * base);
    }

    /// Steering to any endpoint and paying `h` there bounds the infimum.
    #[test]
    fn variational_below_any_endpoint(y in -1.0f64..1.5) {
        let avg = constant(0.0, 0.61);
        let h = laplace_test_function();
        let u = variational_value(&avg, &MonotoneOp::Zero, &[0.0], 0.5, &h, &VariationalOptions::default()).unwrap().value;
        let i = rate(&avg, &MonotoneOp::Zero, &[0.0], &[y], 0.5, &RateOptions::default()).unwrap().value;
        prop_assert!(u <= i + h.eval(&[y]).unwrap() + 1e-6);
    }
}

#[test]
fn endpoint_of_the_free_path_costs_nothing() {
    let r = rate(&constant(0.3, 1.0), &MonotoneOp::Zero, &[0.0], &[0.3], 1.0, &RateOptions::default()).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.converged);
}

#[test]
fn degenerate_diffusion_is_unreachable() {
    let e = rate(&constant(0.0, 0.0), &MonotoneOp::Zero, &[0.0], &[0.5], 1.0, &RateOptions::default());
    assert!(matches!(e, Err(LdpError::Unreachable { .. })));
}

#[test]
fn two_dimensional_rate_adds_up() {
    let avg = AveragedCoeffs::constant(vec![0.0, 0.0], vec![0.5, 0.0, 0.0, 2.0]).unwrap();
    let r = rate(&avg, &MonotoneOp::Zero, &[0.0, 0.0], &[0.4, -0.6], 1.0, &RateOptions::default()).unwrap();
    let want = 0.4f64.powi(2) / 1.0 + 0.6f64.powi(2) / 4.0;
    assert!((r.value - want).abs() <= 1e-3 * want, "{} vs {want}", r.value);
}

#[test]
fn laplace_of_a_constant_is_exact() {
    let h = TestFunction::parse("0.25", 1, &Default::default()).unwrap();
    let mc = McConfig::new(50, 0.0008, 1);
    let r = laplace(&scenario(MonotoneOp::Zero), ScaleParams::new(0.2, 0.04).unwrap(), 0.5, &h, &mc).unwrap();
    assert_eq!(r.estimate.get(), 0.25);
}

#[test]
fn laplace_is_seed_consistent() {
    let spec = scenario(MonotoneOp::Zero);
    let scales = ScaleParams::new(0.2, 0.04).unwrap();
    let h = laplace_test_function();
    let dt = fitted_dt(0.04, 50.0, 0.5);
    let a = laplace(&spec, scales, 0.5, &h, &McConfig::new(4000, dt, 1)).unwrap();
    let b = laplace(&spec, scales, 0.5, &h, &McConfig::new(4000, dt, 2)).unwrap();
    let se = (a.estimate.err().powi(2) + b.estimate.err().powi(2)).sqrt();
    assert!((a.estimate.get() - b.estimate.get()).abs() <= 3.0 * se, "{a:?} {b:?}");
    assert_ne!(a.estimate.get(), b.estimate.get());
}

#[test]
fn tightness_error_shrinks_like_root_paths() {
    let spec = scenario(MonotoneOp::Zero);
    let scales = ScaleParams::new(0.2, 0.04).unwrap();
    let dt = fitted_dt(0.04, 50.0, 2.0);
    let small = tightness_probe(&spec, scales, 2.0, &[0.5], &McConfig::new(1000, dt, 3)).unwrap();
    let large = tightness_probe(&spec, scales, 2.0, &[0.5], &McConfig::new(2000, dt, 3)).unwrap();
    let ratio = small.rows[0].p_stderr / large.rows[0].p_stderr;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn tightness_rejects_unsorted_thresholds() {
    let spec = scenario(MonotoneOp::Zero);
    let scales = ScaleParams::new(0.2, 0.04).unwrap();
    assert!(tightness_probe(&spec, scales, 1.0, &[2.0, 1.0], &McConfig::new(10, 0.0008, 0)).is_err());
}
