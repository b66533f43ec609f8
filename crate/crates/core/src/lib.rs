//! Adaptive finite elements for nondivergence-form equations `A:D²u = f`
//! with Cordes coefficients on the square (−1,1)².

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix formulas in the dense kernels.
#![allow(clippy::needless_range_loop)]

pub mod adaptivity;
pub mod bfs;
pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod mesh_quad;
pub mod mesh_tri;
pub mod mixed;
pub mod quadrature;
pub mod sparse;

pub type Point = [f64; 2];

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: coefficients::SymMatrix2,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        value: 0.0,
        gradient: [0.0, 0.0],
        hessian: coefficients::SymMatrix2::new(0.0, 0.0, 0.0),
    };
}

pub use error::{FemError, Result};
