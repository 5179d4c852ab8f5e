//! Grid solution of the limiting Hamilton-Jacobi equation, free and with a
//! reflecting box, against the control formulation.
//!
//! cargo run --release --example hjb_solver

use mvldp::averaging::AveragedCoeffs;
use mvldp::golden::{laplace_test_function, unit_box};
use mvldp::hjb::{residual_check, solve_1d, HjbConfig};
use mvldp::ldp::{variational_value, VariationalOptions};
use mvldp::monotone::MonotoneOp;

fn main() {
    let avg = AveragedCoeffs::constant(vec![0.0], vec![0.61]).unwrap();
    let h = laplace_test_function();
    let cfg = HjbConfig::new(0.01, 0.5, (-3.0, 3.8));
    for op in [MonotoneOp::Zero, unit_box()] {
        let sol = solve_1d(&avg, &op, &h, &cfg).unwrap();
        let res = residual_check(&sol, &avg);
        println!("{op:?}: dt {:.2e}, theta {:.3}, residual {:.3} ({} nodes skipped)", sol.dt, sol.theta, res.max_residual, res.excluded);
        for x in [-0.4, 0.0, 0.4, 0.8] {
            let v = variational_value(&avg, &op, &[x], 0.5, &h, &VariationalOptions::default()).unwrap();
            println!("  x = {x:5.2}: grid {:.4}, control {:.4}", sol.interpolate(x), v.value);
        }
    }
}
