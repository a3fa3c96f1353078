//! Numerics for the homogenized model of a myelinated axon.
//!
//! The crate covers the periodicity cell and its meshes, axisymmetric P1
//! operators, the cell problem for the effective conductivity, the node leak
//! constant and its eigenvalue characterization, membrane kinetics, the 1-D
//! cable solver and a microscale reference solver. It is `no_std` with `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cable;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod homogenization;
pub mod membrane;
pub mod meshing;
pub mod micro;
pub mod node_constant;
pub mod quad;
pub mod roots;

pub use geometry::{CellGeometry, CellMeasures, Corner, MyelinShape};
pub use meshing::{AxiMesh, MeshParams, Region};
