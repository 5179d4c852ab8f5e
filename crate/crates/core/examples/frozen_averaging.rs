//! Averaged coefficients from one long frozen trajectory, compared with the
//! Gaussian invariant measure N(0.6, 0.25).
//!
//! cargo run --release --example frozen_averaging

use mvldp::averaging::{average_at, coupling_decay, estimate_invariant, AveragingConfig};
use mvldp::golden::scenario;
use mvldp::monotone::MonotoneOp;

fn main() {
    let spec = scenario(MonotoneOp::Zero);
    let cfg = AveragingConfig { horizon: 10_000.0, seed: 1, ..AveragingConfig::default() };

    let inv = estimate_invariant(&spec, &[0.0], &cfg).unwrap();
    println!("mean {:.4} ± {:.4} (exact 0.6)", inv.mean.get(), inv.mean.err());
    println!("variance {:.4} ± {:.4} (exact 0.25)", inv.covariance.get(), inv.covariance.err());

    let p = average_at(&spec, &[0.0], &cfg).unwrap();
    let exact = 0.5 * (1.0 + 1.2f64.cos() * (-0.5f64).exp());
    println!("abar {:.4} ± {:.4} (exact {exact:.4}), sigbar {:.4}", p.abar.get(), p.abar.err(), p.sigbar[0]);

    let c = coupling_decay(&spec, &[0.0], &[-1.0], &[2.0], 0.005, 6.0, 200, 1).unwrap();
    println!("coupling decay rate {:.3}", c.rate);
}
