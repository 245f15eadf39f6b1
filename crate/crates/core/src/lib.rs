//! Numerical core for one-dimensional linear hyperbolic control systems
//!
//! ```text
//! ∂t u = Σ(x) ∂x u + C(t, x) u,   Σ = diag(−λ1, …, −λk, λk+1, …, λk+m)
//! u−(t, 0) = B u+(t, 0),          u+(t, 1) = U(t)
//! ```
//!
//! The crate is `no_std` (with `alloc`). Everything that touches files, threads
//! or the command line lives in the `hyperctrl` companion crate.
//!
//! Components are numbered from 1 in documentation and error messages and from
//! 0 in code.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod broad_solver;
pub mod characteristics;
pub mod controllability;
pub mod counterexample;
pub mod duality;
pub mod linalg;
pub mod parallel;
pub mod quad;
pub mod spectral;
pub mod system_model;

mod error;

pub use error::{Error, Result};
