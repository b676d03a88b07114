//! Numerics for Mayer optimal control of delay functional differential
//! equations `x'(t) = f(t, x_t, u(t))`.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! processes or clocks lives in the `delaypmp` crate.
//!
//! Layout, bottom-up:
//! - [`timegrid`]: meshes with integer node indices, piecewise functions with
//!   one-sided values, history segments, norms and trapezoid quadrature.
//! - [`kernel`]: the linear delay operator `L(t)` as discrete-delay atoms plus
//!   an integrable density, and its Stieltjes kernel `eta`.
//! - [`fde`]: controlled problems, method-of-steps solver, Picard oracle.
//! - [`resolvent`]: resolvent kernel, fundamental matrix (two routes),
//!   variation of constants, adjoint identity.
//! - [`pmp`]: covector construction and maximum-principle certificates.
//! - [`needle`]: needle variations and their sensitivity checks.
//! - [`multipliers`]: finite-sample multiplier search on top of [`lp`].
//! - [`problems`]: built-in problem catalog and linear-in-state dynamics.
#![no_std]

extern crate alloc;

pub mod error;
pub mod fde;
pub mod kernel;
pub mod linalg;
pub mod lp;
pub mod multipliers;
pub mod needle;
pub mod pmp;
pub mod problems;
pub mod resolvent;
pub mod timegrid;

pub use error::{Error, Result};
pub use fde::{ControlSet, ControlledProblem, Dynamics, Linearization, TerminalFn, Trajectory};
pub use kernel::DelayKernel;
pub use resolvent::{FundamentalMatrix, ResolventKernel, Route};
pub use timegrid::{HistorySegment, Mesh, PiecewiseFn, Side, Smoothness};
