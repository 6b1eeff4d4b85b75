#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail range checks

pub mod cli;
pub mod curvfn;
pub mod diagnostics;
pub mod dualmap;
pub mod flow;
pub mod hgeom;
pub mod sphere_grid;
