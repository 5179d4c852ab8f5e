//! Slow–fast stochastic systems with multivalued maximal monotone drift:
//! simulation, averaging, large-deviation rate functions and the limiting
//! Hamilton–Jacobi equation.

pub mod estimate;
pub mod expr;
pub mod monotone;
pub mod simulate;
pub mod averaging;
pub mod ldp;
mod optim;
pub mod hjb;
pub mod config;
pub mod golden;
pub mod cli;
