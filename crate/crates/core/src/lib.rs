//! Perfect simulation for geometrically ergodic Markov chains by dominated
//! coupling from the past on a Foster-Lyapunov scale.
//!
//! The main entry point is [`engine::PerfectSampler`]: give it a chain that
//! implements [`chain::ChainModel`] and call `sample(seed)`.

// `!(a < b)` guards are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod coupling;
pub mod engine;
pub mod error;
pub mod measure;
pub mod queue;
pub mod rng;
pub mod stats;
pub mod testbed;

pub use chain::{ChainModel, FLCertificate, Kernel, MinorizationCertificate};
pub use engine::{classic_cftp, perfect_sample, CftpRun, PerfectSampler};
pub use error::{Error, Result};
pub use measure::{CouplingTicket, Law1D, Prob1D};
