//! Power series summability, P-statistical convergence and Korovkin-type
//! approximation experiments in double precision.

pub mod density;
pub mod domain;
pub mod error;
pub mod function;
pub mod korovkin;
pub mod operators;
pub mod rth;
pub mod sequence;
pub mod sum;
pub mod summability;

pub use error::{Error, Result};
