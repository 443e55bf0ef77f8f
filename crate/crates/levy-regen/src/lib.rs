//! Simulation and verification engine for possibly-killed, finite-activity
//! Lévy processes on a time grid.
//!
//! The central construction is regeneration: glue i.i.d. copies of a process,
//! each observed up to its stopping time, into a single path whose law must
//! equal that of the original process. The crate provides
//!
//! * exact-in-distribution grid simulation of killed Lévy processes
//!   ([`process`]),
//! * a combinator language for random times with an executable adaptedness
//!   check ([`stopping`]),
//! * the concatenation construction, renewal counting and strong-Markov
//!   diagnostics ([`regen`]),
//! * law-level algebra for the "differ only modulo compound Poisson and
//!   killing" decomposition ([`decompose`]),
//! * the continuous-time Markov chain analogue ([`ctmc`]),
//! * a self-contained hypothesis-testing toolkit ([`stats`]), and
//! * named verification scenarios with file-backed reports ([`scenario`]).
//!
//! All randomness flows from 64-bit master seeds through a splittable
//! derivation scheme ([`seed`]); identical inputs give bit-identical outputs.

pub mod ctmc;
pub mod decompose;
mod error;
pub mod grid;
pub mod process;
pub mod regen;
pub mod scenario;
pub mod seed;
pub mod stats;
pub mod stopping;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
