//! Multi-order pairwise interactions of small neural classifiers.
//!
//! A model, an input and a baseline define a cooperative game over the input
//! variables. [`exact`] computes interactions of a given order by
//! enumeration, [`profile`] aggregates them into per-order strength
//! profiles, [`theory`] gives the predicted curves, [`neural`] trains
//! classifiers with order-control losses, and [`harness`] wires the
//! experiments together.

pub mod attack;
pub mod coalition;
pub mod data;
pub mod error;
pub mod exact;
pub mod exec;
pub mod game;
pub mod harness;
pub mod neural;
pub mod profile;
pub mod rng;
pub mod theory;

pub use coalition::Coalition;
pub use error::{Error, Result};
pub use exec::Exec;
pub use game::Game;
