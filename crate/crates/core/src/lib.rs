//! Transport of higher-order point sets (quasi-Monte Carlo, sparse grids,
//! Monte Carlo) to mixture distributions by an ODE with closed-form velocity,
//! plus the quadrature harness and layered adaptive importance sampling
//! built on top of it.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod distributions;
mod error;
pub mod exec;
pub mod lais;
pub mod linalg;
pub mod pointsets;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};
pub use exec::Execution;
