//! Freshness-optimal transmission policies for a base station that
//! broadcasts version-update packets to N users over a finite-state fading
//! downlink, with NOMA or TDMA scheduling.
//!
//! The crate has five layers:
//!
//! - [`model`] — domain types and the deterministic physics (rate function,
//!   SIC decoding order, power recursion).
//! - [`cosrp`] — channel-only stationary randomized policies, their exact
//!   long-run performance and the fractional program they induce.
//! - [`optimizer`] — the dual-update solver for that program: inner convex
//!   solves, modified-Newton multiplier updates and an outer bisection on
//!   the power-budget multiplier, plus independent optimality oracles.
//! - [`cmdp`] — the constrained-MDP route: tabular value iteration over
//!   capped version-age states, policy evaluation on the induced chain and
//!   threshold-structure verification.
//! - [`sim`] — a slot-level Monte Carlo simulator that executes any policy
//!   and accumulates age/power statistics with confidence intervals.

pub mod cmdp;
pub mod cosrp;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
