//! Solvers and diagnostics for ε-weighted second-order boundary value problems with
//! operator coefficients on lines, half-lines, intervals and exterior domains.

pub mod coercivity;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod operator;
pub mod parabolic;
pub mod run;
pub mod sector;

pub use error::{Error, Result};
