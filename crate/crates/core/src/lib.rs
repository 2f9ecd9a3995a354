//! Pseudospectral fractional Burgers solver on a periodic torus, with the
//! De Giorgi diagnostics stack built on top of it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fields;
pub mod fracops;
pub mod numerics;
pub mod report;
pub mod solver;
pub mod degiorgi;
pub mod barriers;
pub mod regularity;
