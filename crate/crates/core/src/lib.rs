//! A laboratory for periodic k-double auctions.
//!
//! The crate is split along the lines of the experiments it supports:
//!
//! * [`auction`] clears multi-unit k-double auctions with a uniform price.
//! * [`equilibrium`] evaluates expected utilities of scale-based bidding in the
//!   one-buyer/one-seller two-unit auction, solves the first-order systems for
//!   the four scale-factor cases and certifies them with a Monte-Carlo
//!   best-response scan.
//! * [`strategies`] holds the bidding strategies (scale-based, ZI, ZIP,
//!   truthful) behind a common trait and a registry keyed by name.
//! * [`neural`] is a small self-contained DDPG learner.
//! * [`markets`] contains the single-shot validation environment and the
//!   periodic day-ahead auction (PDA) simulation.

pub mod auction;
pub mod equilibrium;
pub mod error;
pub mod markets;
pub mod neural;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
