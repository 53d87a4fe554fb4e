//! Microscopic simulation and multi-agent policy-gradient control of
//! mixed-autonomy traffic on grids of single-lane, through-only intersections.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the clock or threads lives in the `mixflow` companion crate;
//! parallelism is injected through [`exec::Executor`].
//!
//! Module map:
//!
//! * [`network`]: grid topology, routes and conflict pairs.
//! * [`dynamics`]: IDM car following, stop-line targets, ballistic integration.
//! * [`sim`]: world state, inflows, junction right-of-way, collisions, evaluation.
//! * [`obs`]: chain / half-chain decomposition and the 22-feature AV observation.
//! * [`nn`]: the shared policy MLP, its exact log-probability gradient and RMSprop.
//! * [`rl`]: reward normalization, REINFORCE, multi-task training, transfer.
//! * [`baselines`]: fixed-time and MaxPressure signals, Oracle search, priority.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod baselines;
pub mod dynamics;
mod error;
pub mod exec;
pub mod network;
pub mod nn;
pub mod obs;
pub mod rl;
pub mod rollout;
pub mod sim;

pub use error::{Error, Result};
