//! Simulator for downlink resource allocation in a two-tier OFDMA
//! heterogeneous cellular network (one macro-cell plus `L` small-cells).
//!
//! The library provides two complete allocation strategies:
//!
//! * [`underlay`] — all cells share the whole band; energy efficiency is
//!   maximized by a constraint-rotation outer loop around an alternating
//!   max-SINR subcarrier assignment / successive-convex-approximation
//!   power minimization.
//! * [`overlay`] — the macro-cell first picks its own band by maximizing
//!   resource efficiency (a weighted EE–SE trade-off) via water-filling,
//!   gradient search and bisection; the small-cells then maximize EE on
//!   the remaining band.
//!
//! [`model`] holds the problem instance and evaluation formulas,
//! [`numerics`] the reusable kernels (water-filling, DC linearization,
//! the convex subproblem solver, scalar search), and [`harness`] the
//! experiment runner behind the `hcnsim` CLI.

pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod overlay;
pub mod underlay;

pub use error::HcnError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, HcnError>;
