#![cfg_attr(not(test), no_std)]
// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod analysis;
pub mod graph;
pub mod inclusion;
pub mod integrator;
pub mod linalg;
pub mod lyapunov;
pub mod nonlinearity;
