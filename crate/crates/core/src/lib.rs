#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod flows;
pub mod invariance;
pub mod numerics;
pub mod optimizers;
pub mod problem;

pub use error::{Error, Result};
