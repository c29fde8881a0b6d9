pub mod benchmark;
pub mod error;
pub mod problem;
pub mod qp;
pub mod report;
pub mod robot;
pub mod selftest;
pub mod solvers;

pub use error::{Error, EvalError, Result};
