//! Numerical solver and Monte Carlo verifier for the finite-horizon
//! dividend-and-investment control problem when claim arrivals form a
//! renewal process.
//!
//! The surplus follows
//!
//! ```text
//! dX = [p + (r + (mu - r) gamma) X - a] dt + sigma gamma X dB - dQ,
//! ```
//!
//! with `gamma` the invested fraction, `a` the dividend rate, and `Q` a
//! compound renewal claim process. Because the arrivals are renewal the
//! surplus alone is not Markov; augmenting the state with the elapsed
//! quiet time `w` restores it. The crate
//!
//! * solves the associated dynamic-programming equation — a nonlocal,
//!   degenerate parabolic PIDE — on a collar-extended domain with a small
//!   artificial-viscosity term, using an explicit monotone scheme
//!   ([`solver`]);
//! * extracts the feedback controls from the solved field ([`policy`]);
//! * simulates the closed-loop reserve and estimates the expected
//!   discounted dividends by Monte Carlo ([`sim`]);
//! * cross-checks the two routes and the analytic bounds ([`verify`]).

pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod pide;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
