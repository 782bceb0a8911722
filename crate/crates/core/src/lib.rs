//! Simulation and verification engine for continuous exchange-driven growth.
//!
//! Clusters are characterized by a mass `u > 0`. When a donor `<u>` meets an
//! acceptor `<v>`, a chunk of mass `w <= u` detaches from the donor and joins the
//! acceptor at rate `A(u, v; w) * zeta(u) * zeta(v)`:
//!
//! ```text
//! <u> + <v>  ->  <u - w> + <v + w>
//! ```
//!
//! The crate is organised around that single event:
//!
//! * [`kernels`]: the rate function `A(x, y; z)`, its growth-class metadata and
//!   the truncation to a finite mass window.
//! * [`grid`]: the node-aligned mass lattice, projection of initial data,
//!   moments and the weighted distance used for stability checks.
//! * [`rhs`]: the event tensor and the conservative right-hand side.
//! * [`integrate`]: explicit Runge-Kutta time stepping with positivity control.
//! * [`convex`]: convex weights and the a priori envelopes used as runtime
//!   diagnostics.
//! * [`particles`]: a direct-method stochastic particle system used as an
//!   independent oracle for the deterministic solver.

pub mod convex;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod kernels;
pub mod particles;
pub mod quad;
pub mod rhs;

pub use error::{GedgError, Result};
