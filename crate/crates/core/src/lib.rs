//! Discrete exterior calculus on cubical boxes, the Villain U(1) coupling and its
//! spin-wave / Coulomb-gas decomposition, with Monte Carlo estimators.

pub mod error;
pub mod forms;
pub mod lattice;

pub use error::{Error, Result};
pub use forms::{d, d_star, inner, integer_preimage, laplacian_apply, Form, Scalar, SparseOperator};
pub use lattice::{boundary_of, Boundary, CellKey, Incidence, Lattice, LatticeSpec};
pub mod ivgauss;
pub mod rng;
pub mod stats;
pub mod harmonic;
pub mod sampler;
pub mod snapshot;
pub mod decouple;
pub mod observables;
