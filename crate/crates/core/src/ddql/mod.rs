//! Distributed double-deep-Q learning: shared replay, exploration
//! schedules, and the training loop.

pub mod explore;
pub mod replay;
pub mod trainer;

pub use explore::{ExplorationSchedule, ExploreKind};
pub use replay::{ReplayMemory, ReplaySample};
pub use trainer::{compute_td_target, train, transfer, CurvePoint, TrainOutput, TrainerConfig};
