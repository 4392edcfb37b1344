//! Truncated Hamiltonian normal forms for the nonlinear wave equation
//! `u_tt = u_xx - (m + M_xi) u + eps u^3` on `[0, pi]` with Dirichlet conditions.

pub mod poly;
pub mod error;
pub mod model;
pub mod rng;

pub use error::{NlwError, Result};
pub mod norms;
pub mod normal_form;
pub mod resonance;
pub mod sim;
pub mod runner;
