//! Agent replay memory and the state-only expert buffer.

pub mod demo_file;
mod expert;
mod knn;
mod replay;

pub use demo_file::{ActionDemos, DemoEpisode, DemoFile};
pub use expert::{expert_load, ExpertBuffer, ExpertNeighbor};
pub use knn::{KnnIndex, KnnStrategy, Neighbor};
pub use replay::{GoalLayout, ReplayBuffer, SparseGoalReward, Transition, TransitionBatch};
