//! Dissipativity, Lyapunov and interior-point diagnostics.
//!
//! cargo run --example assumption_checks

use mvldp::expr::{CoeffField, Dims, Params};
use mvldp::golden::{scenario, unit_box};
use mvldp::monotone::MonotoneOp;
use mvldp::simulate::{run_path, verify_dissipativity, verify_interior_estimate, verify_lyapunov, LyapunovOptions, ScaleParams, SimConfig};

fn main() {
    let spec = scenario(MonotoneOp::Zero);
    let d = verify_dissipativity(&spec, 2000, 0).unwrap();
    println!("beta {:.3}, L {:.3}, alpha {:.3}, pass {}", d.beta_hat, d.l_hat, d.alpha_hat, d.passed());

    let zeta = CoeffField::scalar("y0^2", Dims::new(1, 1), &Params::new()).unwrap();
    let grid: Vec<_> = (0..161).map(|i| (vec![0.0], vec![-4.0 + 0.05 * i as f64])).collect();
    for l1 in [0.5, 1.5] {
        let r = verify_lyapunov(&spec, &zeta, &grid, l1, 0.5, (&[0.0], 2.0), LyapunovOptions::default()).unwrap();
        println!("zeta = y^2, L1 = {l1}: worst {:.3} at {:?}, pass {}", r.max_violation, r.worst_point, r.pass);
    }

    let boxed = scenario(unit_box()).with_initial(vec![0.9], vec![0.6]).unwrap();
    let path = run_path(&boxed, ScaleParams::new(0.4, 0.16).unwrap(), &SimConfig::new(0.002, 1.0, 5, 1), 0).unwrap();
    let ie = verify_interior_estimate(&path, &boxed.op, &[0.0]).unwrap();
    println!("interior estimate: {:.4} >= {:.4} (margin {}), pass {}", ie.lhs, ie.rhs, ie.margin, ie.pass);
}
