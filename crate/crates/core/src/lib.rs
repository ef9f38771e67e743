//! Elastic computing over decentralized uncoded storage.
//!
//! VMs each keep a random subset of the datasets. Given their speeds this
//! crate finds the load split that minimizes the slowest VM's finishing time,
//! optionally with coded redundancy against stragglers, and replays elastic
//! timelines where VMs come and go.

pub mod exec;
pub mod model;
pub mod optimizer;
pub mod ratio;
pub mod simulator;
pub mod storage;
pub mod straggler;
pub mod transport;

pub use model::{
    validate, ClassMask, ClassProfile, ExplicitStorage, LoadAssignment, ModelError,
    ProblemInstance, ProfileMode, TimeResult, Violation,
};
pub use ratio::Ratio;
