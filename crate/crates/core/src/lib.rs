//! Packet-level discrete-event simulator for the CHOKeD active queue
//! management scheme and the DropTail, RED, CHOKe and gCHOKe baselines on
//! a single-bottleneck dumbbell.
//!
//! The usual entry points are [`harness::Scenario`] (or a preset from
//! [`harness::presets`]) and [`harness::run_experiment`].

pub mod engine;
pub mod harness;
pub mod metrics;
pub mod qdisc;
pub mod sim;
pub mod topology;
pub mod transport;
