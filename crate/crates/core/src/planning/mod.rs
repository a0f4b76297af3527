//! Exact tabular planning: discretization, value iteration, the lagged
//! counterpart of an MDP, optimality-consistency checks, the Driving
//! disagreement band and the model-based training loop.

mod consistency;
mod discretize;
mod mdp;
mod region;
mod solve;
mod train;

pub use consistency::{consistency_check, reachable, ConsistencyReport, Witness};
pub use discretize::{cells_within, discretize, DiscretizeConfig, DiscretizeReport, Horizon};
pub use mdp::{argmax, QTable, TabularMDP, TabularPolicy, TransitionRow};
pub use region::{driving_region, planner_policy_maps, policy_map, PlannerMaps, region_coordinate, PolicyMap, RegionBounds};
pub use solve::{evaluate_policy, laggedize, q_of, row_marginals, value_iteration, Solution, MAX_ITERATIONS};
pub use train::{evaluate_likelihood, train_loop, EpochStats, TrainConfig, TrainResult};
