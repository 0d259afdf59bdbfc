pub mod error;
pub mod functionals;
pub mod gas_core;
pub mod harness;
pub mod junction;
mod ode;
pub mod profiles;
pub mod riemann;
pub mod wft_engine;

pub use error::{Error, Result};
pub use gas_core::{GasState, PressureLaw};
