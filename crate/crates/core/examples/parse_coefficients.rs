//! Parse coefficient expressions with named parameters and evaluate them.
//!
//! cargo run --example parse_coefficients

use mvldp::expr::{CoeffField, Dims, Expr, Params};

fn main() {
    let mut params = Params::new();
    params.insert("s".into(), 0.3);
    params.insert("nu".into(), 0.5);
    let dims = Dims::new(1, 1);

    let b2 = Expr::parse("s - y0/2", dims, &params).unwrap();
    println!("b2 = {b2}, b2(0, 1) = {}", b2.eval(&[0.0], &[1.0]).unwrap());

    let sigma = CoeffField::matrix(&[vec!["cos(y0)", "0.1*x0"]], dims, &params).unwrap();
    println!("sigma1(0.5, 0) = {:?}", sigma.eval(&[0.5], &[0.0]).unwrap());

    match Expr::parse("cos(y0", dims, &params) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    match Expr::parse("y1 + 1", dims, &params) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
}
