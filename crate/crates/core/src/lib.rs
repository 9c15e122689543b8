//! Numerical core for the non-autonomous FitzHugh–Nagumo reaction–diffusion
//! system posed on a truncated copy of ℝⁿ (n = 1, 2).
//!
//! ```text
//! ∂u/∂t − νΔu + λu + h(u) + v = f(x, t)
//! ∂v/∂t − ε(u − γv)          = ε g(x, t)
//! ```
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It provides
//! the model types with their admissibility checks, a finite-difference grid,
//! an IMEX integrator with the `v = v₁ + v₂` splitting, proof-explicit energy
//! and tail bounds, a pullback-attractor approximation engine, and the
//! ε-sweep study. Parallel execution of trajectory bundles is abstracted by
//! [`pullback::Executor`]; the std companion crate supplies a thread pool.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod epsilon_study;
mod error;
pub mod grid;
pub mod integrator;
mod linalg;
pub mod math;
pub mod model;
pub mod pullback;
pub mod quadrature;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use integrator::{Scheme, State, StepConfig, System, VUpdate};
pub use model::{BasinFamily, Forcing, ForcingSpec, NonlinearitySpec, Parameters};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
