//! Spectral analysis of Ornstein-Uhlenbeck semigroups driven by Lévy
//! processes: characteristic exponents, invariant and transition
//! densities, polynomial eigenfunctions and co-eigenfunctions,
//! multiplicities of the point spectrum, and Monte Carlo validation.

pub mod density;
pub mod error;
pub mod levy;
pub mod matops;
pub mod polyspec;
pub mod quadrature;
pub mod simulate;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use levy::{Atom, LevyMeasure, OuModel};
pub use matops::{Matrix, Vector};
