#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod rng;
pub mod spectral;
pub mod testing;
