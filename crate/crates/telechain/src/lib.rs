//! Simulation, verification and certification of measurement-and-feedback
//! teleportation protocols on qubit chains.

pub mod bounds;
pub mod builtins;
pub mod dense;
pub mod error;
pub mod exec;
pub mod gate;
pub mod observable;
pub mod pauli;
pub mod product;
pub mod protocol;
pub mod stabilizer;
pub mod statevector;
pub mod stringorder;
pub mod verifier;

pub use error::{Error, Result};
