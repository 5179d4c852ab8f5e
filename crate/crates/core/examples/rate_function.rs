//! Rate function of the averaged dynamics, free and inside a box.
//!
//! cargo run --example rate_function

use mvldp::averaging::AveragedCoeffs;
use mvldp::golden::unit_box;
use mvldp::ldp::{rate, RateOptions};
use mvldp::monotone::MonotoneOp;

fn main() {
    let abar = 0.5 * (1.0 + 1.2f64.cos() * (-0.5f64).exp());
    let avg = AveragedCoeffs::constant(vec![0.0], vec![abar]).unwrap();
    let opts = RateOptions { refine: true, ..RateOptions::default() };
    for (x, t) in [(0.25, 0.5), (0.5, 1.0), (0.9, 0.5)] {
        let free = rate(&avg, &MonotoneOp::Zero, &[0.0], &[x], t, &opts).unwrap();
        let boxed = rate(&avg, &unit_box(), &[0.0], &[x], t, &opts).unwrap();
        println!(
            "x = {x}, t = {t}: I = {:.6} (closed form {:.6}), boxed {:.6}, gap {:.1e}, refinement change {:.1e}",
            free.value,
            x * x / (2.0 * abar * t),
            boxed.value,
            free.terminal_gap,
            free.refinement_change.unwrap_or(0.0)
        );
    }
}
