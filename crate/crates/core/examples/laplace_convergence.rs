//! Laplace functional -ε log E exp(-h(X_t)/ε) approaching the variational
//! value as ε and γ = ε² shrink.
//!
//! cargo run --release --example laplace_convergence

use mvldp::averaging::AveragedCoeffs;
use mvldp::config::fitted_dt;
use mvldp::golden::{laplace_test_function, scenario};
use mvldp::ldp::{laplace, variational_value, McConfig, VariationalOptions};
use mvldp::monotone::MonotoneOp;
use mvldp::simulate::ScaleParams;

fn main() {
    let h = laplace_test_function();
    let abar = 0.5 * (1.0 + 1.2f64.cos() * (-0.5f64).exp());
    let avg = AveragedCoeffs::constant(vec![0.0], vec![abar]).unwrap();
    let u0 = variational_value(&avg, &MonotoneOp::Zero, &[0.0], 0.5, &h, &VariationalOptions::default()).unwrap();
    println!("limit u0 = {:.4} (optimal endpoint {:.3})", u0.value, u0.terminal[0]);

    let spec = scenario(MonotoneOp::Zero);
    for eps in [0.4, 0.2, 0.1] {
        let scales = ScaleParams::new(eps, eps * eps).unwrap();
        let mc = McConfig::new(5000, fitted_dt(scales.gamma, 50.0, 0.5), 11);
        let r = laplace(&spec, scales, 0.5, &h, &mc).unwrap();
        println!("eps {eps}: {:.4} ± {:.4}, gap {:.4}, ESS {:.0}", r.estimate.get(), r.estimate.err(), (r.estimate.get() - u0.value).abs(), r.ess);
    }
}
