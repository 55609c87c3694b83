//! Exact and certified numerics for representations of free groups into
//! `SL(2, R)` and `SL(3, R)`: growth profiles, ping-pong certificates,
//! reducible suspensions, perturbations producing unipotent elements, and
//! flag-space sampling.

pub mod catalog;
pub mod cli;
pub mod error;
pub mod exactlinalg;
pub mod flagdyn;
pub mod freegroup;
pub mod perturb;
pub mod pingpong;
pub mod represent;
pub mod suspension;

pub use error::{ForgeError, Result};
