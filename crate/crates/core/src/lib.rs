//! Subjective-graph belief propagation over classroom cohorts.
//!
//! Students hold Gaussian beliefs about each other's academic ability,
//! exchange noisy claims with perceived friends, and fuse them weighted by
//! an assessed trust. Baselines and the evaluation pipeline live alongside.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod domain;
pub mod engine;
pub mod error;
pub mod graph;
pub mod io;
pub mod knowledge;
pub mod metrics;
pub mod rng;
pub mod trust;

pub use domain::{
    ability_map, latent_truth, AbilityScale, AnxietyRange, Belief, BeliefMatrix, ClassId, Cohort, ExamSeries,
    LatentTruth, PeerJudgment, StudentId, StudentRecord,
};
pub use engine::{run_simulation, Ablations, ProtocolConfig, Simulation, SimulationOutput};
pub use error::{Error, Result};
pub use graph::SubjectiveGraph;
pub use metrics::{evaluate, EpochReport};
pub use trust::{ProviderTag, RemoteConfig, RemoteTrust, StubTrust, TrustProvider};
