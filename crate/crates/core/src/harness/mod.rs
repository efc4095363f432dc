//! Run configuration, Monte Carlo evaluation, and results persistence.

pub mod eval;
pub mod ingest;
pub mod policy;
pub mod report;
pub mod scenario;

pub use eval::{compare, evaluate, run_episode, EpisodeResult, MetricsReport};
pub use policy::{DdqlMode, DdqlPolicy, LoadedPolicy, LookaheadPolicy, PolicySpec, RolloutPolicy};
pub use scenario::{MapSource, Scenario};
