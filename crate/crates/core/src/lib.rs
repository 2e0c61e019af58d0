//! Two-excitation, non-Markovian dynamics of emitters coupled to structured
//! one-dimensional photonic environments, in the emitter-centered-mode basis.

pub mod cli;
pub mod ecm;
pub mod error;
pub mod greens;
pub mod hierarchy;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod pipeline;
pub mod validation;

pub use error::{Error, Result};
