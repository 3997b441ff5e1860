//! Linear, energy-stable time stepping for the hyperbolic Cahn-Hilliard
//! equation with hyperbolic Cahn-Hilliard-type dynamic boundary conditions
//! on the unit square.

pub mod config;
pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod output;
pub mod scheme;

pub use error::{Error, Result};
pub use field::{BulkField, LoopField};
pub use grid::Grid;
pub use model::ModelParams;
pub use scheme::{DiagRecord, State};
