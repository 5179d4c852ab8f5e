//! Monte Carlo corrector of the cell problem and its generator residual.
//!
//! cargo run --release --example cell_problem

use mvldp::averaging::{kappa_residual, KappaConfig};
use mvldp::golden::scenario;
use mvldp::monotone::MonotoneOp;

fn main() {
    let spec = scenario(MonotoneOp::Zero);
    let abar = 0.5 * (1.0 + 1.2f64.cos() * (-0.5f64).exp());
    let ys: Vec<Vec<f64>> = [-0.4, 0.1, 0.6, 1.1, 1.6].iter().map(|y| vec![*y]).collect();
    let ps = vec![vec![1.0]];
    let psibar = [-0.5 * abar];
    let cfg = KappaConfig { n_paths: 400, seed: 3, ..KappaConfig::default() };
    for c in kappa_residual(&spec, &[0.0], &ys, &ps, &psibar, 0.5, 0.05, &cfg).unwrap() {
        println!("y = {:5.2}  kappa = {:8.4}  residual = {:8.4}", c.y[0], c.kappa, c.residual);
    }
}
