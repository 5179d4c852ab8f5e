//! Exceedance probabilities of sup|X| on a log scale.
//!
//! cargo run --release --example tightness

use mvldp::config::fitted_dt;
use mvldp::golden::scenario;
use mvldp::ldp::{tightness_probe, McConfig};
use mvldp::monotone::MonotoneOp;
use mvldp::simulate::ScaleParams;

fn main() {
    let spec = scenario(MonotoneOp::Zero);
    let scales = ScaleParams::new(0.2, 0.04).unwrap();
    let mc = McConfig::new(2000, fitted_dt(0.04, 50.0, 5.0), 1);
    let r = tightness_probe(&spec, scales, 5.0, &[1.0, 1.5, 2.0, 3.0], &mc).unwrap();
    for row in &r.rows {
        println!(
            "M = {}: {}/{} exceed, eps log p = {}, Wilson band [{:.3}, {:.3}]",
            row.threshold,
            row.exceed,
            row.paths,
            row.eps_log_p.map_or("-inf".into(), |v| format!("{v:.3}")),
            row.eps_log_lower,
            row.eps_log_upper
        );
    }
    println!("decreasing: {}", r.decreasing);
}
