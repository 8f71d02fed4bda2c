//! Relaxed and ε-perturbed energies of sphere-valued maps on a lattice,
//! together with the topology needed to check them: D(u), the Coulomb gauge,
//! Hopf charge, Hopf lifts, minimal connections and cubic charge
//! decompositions.

pub mod ansatz;
pub mod connection;
pub mod decompose;
pub mod energy;
pub mod error;
pub mod grid;
pub mod minimize;
pub mod reduce;
pub mod topology;
pub mod vecmath;

pub use error::{Error, Result};
pub use grid::{BoundaryTag, DirectionField, GridSpec, JacobianField, VectorField3};
