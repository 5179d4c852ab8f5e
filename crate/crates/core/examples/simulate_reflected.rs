//! Simulate the stochastic-volatility system constrained to [-1, 1] and
//! write the paths as CSV.
//!
//! cargo run --example simulate_reflected > paths.csv

use mvldp::golden::{scenario, unit_box};
use mvldp::simulate::{run_system, verify_discrete_vi, write_paths_csv, ScaleParams, SimConfig};

fn main() {
    let spec = scenario(unit_box()).with_initial(vec![0.8], vec![0.6]).unwrap();
    let scales = ScaleParams::new(0.4, 0.16).unwrap();
    let cfg = SimConfig::new(0.002, 1.0, 7, 4);
    let paths = run_system(&spec, scales, &cfg).unwrap();

    let samples = spec.op.graph_sample(1, 0, 20);
    for (i, p) in paths.iter().enumerate() {
        let vi = verify_discrete_vi(p, &samples);
        eprintln!(
            "path {i}: |K| = {:.4}, max |x| = {:.4}, VI violation {:.1e}",
            p.total_variation(),
            p.x.iter().map(|x| x[0].abs()).fold(0.0, f64::max),
            vi.max_violation
        );
    }
    write_paths_csv(&paths, std::io::stdout().lock()).unwrap();
}
