//! Delivery-rider simulation with intention mining and emergence analysis.
//!
//! The crate has two halves. [`sim`] and [`decision`] run a seeded O2O
//! delivery world in which every rider decision comes with a pair of
//! thoughts, and write everything to a [`trace`]. [`mining`], [`embed`],
//! [`cluster`] and [`emergence`] turn those thoughts into a repository of
//! emergent intentions, group them, and explain when each group appeared and
//! who spread it. [`metrics`] computes the observational reports.

pub mod cluster;
pub mod decision;
pub mod embed;
pub mod emergence;
pub mod metrics;
pub mod mining;
pub mod pipeline;
pub mod sim;
pub mod trace;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    pub struct Quickstart;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/intentions.md")]
    pub struct Intentions;
    #[doc = include_str!("../../../book/src/emergence.md")]
    pub struct Emergence;
    #[doc = include_str!("../../../book/src/trace-format.md")]
    pub struct TraceFormat;
}
