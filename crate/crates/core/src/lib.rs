#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod hamiltonian;
pub mod io;
pub mod ms;
pub mod quantum;
pub mod scan;
pub mod units;
pub mod verify;

pub use error::{Error, Result};
