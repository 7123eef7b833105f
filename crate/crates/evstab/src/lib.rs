//! Static Einstein–Vlasov equilibria, action-angle orbit analysis and the
//! Mathur-kernel linear stability test.

pub mod eos;
pub mod equilibria;
pub mod error;
pub mod mathur;
pub mod ode;
pub mod operators;
pub mod phase_space;
pub mod potential_orbits;
pub mod quad;
pub mod roots;

pub use error::{EvError, Result};
