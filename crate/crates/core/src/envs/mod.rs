pub mod cartpole;
pub mod driving;
pub mod linear_gaussian;
pub mod wrappers;

pub use cartpole::{CartPoleLite, CartPoleParams, FamilyTag, RewardFamily};
pub use driving::{Driving, DrivingParams, DrivingReward, SignMode};
pub use linear_gaussian::{aggregated_noise_cov, subsampled_noise_cov, LinearGaussianSpec};
pub use wrappers::{
    calibrate_norm_bounds, wrap_noise_inject, wrap_reward_augment, NoiseInjectConfig, NoiseInjected, RewardAugmentConfig,
    RewardAugmented,
};
