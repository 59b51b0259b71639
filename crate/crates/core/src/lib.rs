//! Stationary barriers for interfaces driven through quenched random media.
//!
//! Two models are covered. On the lattice, [`discrete`] builds an integer
//! supersolution greedily from an i.i.d. obstacle field and [`dynamics`]
//! simulates the jump process below it. In the plane, [`continuum`] places
//! Poisson obstacles, finds a chain of good boxes through [`percolation`], and
//! glues parabolas into a piecewise-quadratic viscosity supersolution.
//! [`media`] supplies the random inputs and [`exec`] the parallel/sequential
//! switch used by every batch routine.

pub mod continuum;
pub mod discrete;
pub mod dynamics;
pub mod exec;
pub mod media;
pub mod percolation;
pub mod rng;

pub use exec::Exec;
pub use media::{DistributionSpec, ExtInt, SeededField};
