//! Resolvents, projections and extended-real bounds of the built-in operators.
//!
//! cargo run --example monotone_operators

use mvldp::monotone::MonotoneOp;

fn main() {
    let bx = MonotoneOp::normal_cone_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let ball = MonotoneOp::normal_cone_ball(vec![0.0, 0.0], 1.0).unwrap();
    let abs = MonotoneOp::subdiff_abs(0.5).unwrap();

    let z = [2.0, 0.3];
    println!("box projection of {z:?}: {:?}", bx.resolvent(0.1, &z));
    println!("ball projection of {z:?}: {:?}", ball.resolvent(0.1, &z));
    println!("soft threshold of 0.8 at λ = 1: {:?}", abs.resolvent(1.0, &[0.8]));

    // outward normal at the right face: A_* is finite, A^* is +∞ off the cone
    let at = [1.0, 0.0];
    println!("A_*(x, e1) = {:?}", bx.a_lower(&at, &[1.0, 0.0]).unwrap());
    println!("A^*(x, e1) = {:?}", bx.a_upper(&at, &[1.0, 0.0]).unwrap());
    println!("interior margin of 0 in the box: {}", bx.interior_margin(&[0.0, 0.0]).unwrap());
}
