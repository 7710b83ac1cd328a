//! Core library for capacity-constrained EV charging dispatch.
//!
//! The physical model is a charging station with a shared, time-varying power
//! budget and per-vehicle rate limits that shrink linearly as a battery
//! fills: the acceptable peak rate of a vehicle at state of charge `x` is
//! `max(u_star - alpha * x, 0)`. Hardware clips any commanded rate above that
//! line, so a dispatcher that plans against fixed nameplate limits silently
//! loses energy at execution time.
//!
//! Crate layout:
//! - [`model`]: sessions, station configuration, battery state, the peak-rate
//!   law, schedule validation.
//! - [`solver`]: proportional-fairness dispatch programs (fixed-bound and
//!   state-aware variants) and the interior-point method that solves them.
//! - [`policies`]: the four dispatch policies (equal share, earliest deadline
//!   first, and the two receding-horizon optimizers).
//! - [`sim`]: event-driven simulation of a policy over a scenario.
//! - [`data`]: scenario generation, CSV ingestion, and result persistence.

pub mod data;
pub mod error;
pub mod model;
pub mod policies;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
