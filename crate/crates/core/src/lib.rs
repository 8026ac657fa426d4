//! Trace-driven simulation of composite hardware prefetching with per-PC
//! prefetcher selection.
//!
//! The crate models a two-level cache hierarchy fed by a demand-request
//! trace, four simplified prefetch engines (stream, stride, spatial,
//! temporal), and five ways of deciding which engine gets to see and act on
//! each request:
//!
//! * [`alecto`]: the selection framework built around an Allocation Table
//!   state machine, a Sample Table for per-PC accuracy gathering, and a
//!   Sandbox Table that doubles as a duplicate-prefetch filter.
//! * [`baselines`]: broadcast training with static output priority
//!   (IPCP-style), sequential allocation (DOL-style), and a degree-tuple
//!   multi-armed bandit.
//!
//! [`sim::run_experiment`] ties a selector, an engine set, and a cache
//! hierarchy together and produces a [`metrics::RunReport`].

pub mod alecto;
pub mod baselines;
pub mod cache;
pub mod config;
pub mod metrics;
pub mod prefetchers;
pub mod sim;
pub mod trace;
