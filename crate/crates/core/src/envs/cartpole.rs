//! Euler-integrated cart-pole with proportional correlated noise and the
//! pairwise reward families.

use serde::{Deserialize, Serialize};

use super::wrappers::{calibrate_norm_bounds, normalize, NoiseInjectConfig, NoiseInjector};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;

/// State layout: `(x, ẋ, θ, θ̇)`.
pub const X: usize = 0;
pub const X_DOT: usize = 1;
pub const THETA: usize = 2;
pub const THETA_DOT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyTag {
    Original,
    A,
    B,
    C,
    D,
    E,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 6] =
        [FamilyTag::Original, FamilyTag::A, FamilyTag::B, FamilyTag::C, FamilyTag::D, FamilyTag::E];

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Original => "Original",
            FamilyTag::A => "A",
            FamilyTag::B => "B",
            FamilyTag::C => "C",
            FamilyTag::D => "D",
            FamilyTag::E => "E",
        }
    }
}

/// An extra reward term and the noise structure it is paired with.
///
/// `reward_pairs` are the `(i, j)` of each `-(s_i + s_j)²` term (`(i, i)` for
/// a single `-s_i²`); `noise_pairs` carry correlated noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFamily {
    pub tag: FamilyTag,
    pub reward_pairs: Vec<(usize, usize)>,
    pub noise_pairs: Vec<(usize, usize)>,
    pub corr: f64,
}

impl RewardFamily {
    /// Default dimension choices: the pole pair `(θ, θ̇)` is always
    /// dependent; B scores the cart position against the pole angle, whose
    /// noises are independent.
    pub fn standard(tag: FamilyTag) -> Self {
        let pole = (THETA, THETA_DOT);
        let cart = (X, X_DOT);
        let (reward_pairs, noise_pairs, corr) = match tag {
            FamilyTag::Original => (vec![], vec![pole], 0.5),
            FamilyTag::A => (vec![(THETA, THETA)], vec![pole], 0.5),
            FamilyTag::B => (vec![(X, THETA)], vec![pole], 0.5),
            FamilyTag::C => (vec![pole], vec![pole], 0.5),
            FamilyTag::D => (vec![pole, cart], vec![pole, cart], 0.5),
            FamilyTag::E => (vec![pole], vec![pole], 0.9),
        };
        Self { tag, reward_pairs, noise_pairs, corr }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |&(i, j): &(usize, usize)| i < 4 && j < 4;
        if !self.reward_pairs.iter().all(in_range) || !self.noise_pairs.iter().all(in_range) {
            return Err(Error::InvalidParams("family dims must be < 4".into()));
        }
        for &(i, j) in &self.reward_pairs {
            if i == j {
                continue;
            }
            let dependent = self.noise_pairs.iter().any(|&(a, b)| (a, b) == (i, j) || (b, a) == (i, j));
            let must_be = !matches!(self.tag, FamilyTag::B);
            if dependent != must_be && self.tag != FamilyTag::Original {
                return Err(Error::InvalidParams(format!(
                    "family {} pair ({i},{j}) has the wrong noise dependence",
                    self.tag.name()
                )));
            }
        }
        Ok(())
    }

    fn quantity(pair: (usize, usize), s: &[f64]) -> f64 {
        let (i, j) = pair;
        if i == j {
            s[i] * s[i]
        } else {
            (s[i] + s[j]).powi(2)
        }
    }

    /// The normalized extra term, in `[-1, 0]`.
    pub fn term(&self, s: &[f64], bounds: &[(f64, f64)]) -> f64 {
        if self.reward_pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .reward_pairs
            .iter()
            .zip(bounds)
            .map(|(&pair, &(lo, hi))| normalize(Self::quantity(pair, s), lo, hi))
            .sum();
        -total / self.reward_pairs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub r_noise: f64,
    /// Overrides the family's pair correlation.
    pub pair_corr: Option<f64>,
    pub max_steps: usize,
    pub discount: f64,
    pub calibration_steps: usize,
    pub calibration_seed: u64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            r_noise: 0.05,
            pair_corr: None,
            max_steps: 200,
            discount: 0.99,
            calibration_steps: 10_000,
            calibration_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CartPoleLite {
    params: CartPoleParams,
    family: RewardFamily,
    injector: NoiseInjector,
    norm_bounds: Vec<(f64, f64)>,
}

impl CartPoleLite {
    /// Builds the environment and freezes the `Norm` bounds from a
    /// random-policy calibration rollout.
    pub fn new(params: CartPoleParams, family: RewardFamily) -> Result<Self> {
        family.validate()?;
        if !(0.0..=1.0).contains(&params.discount) || params.max_steps == 0 {
            return Err(Error::InvalidParams("cartpole discount/max_steps out of range".into()));
        }
        let noise = NoiseInjectConfig {
            r_noise: params.r_noise,
            pair_corr: params.pair_corr.unwrap_or(family.corr),
            pairs: family.noise_pairs.clone(),
        };
        let injector = NoiseInjector::new(noise, 4)?;
        let mut env = Self { params, family, injector, norm_bounds: vec![] };
        let pairs = env.family.reward_pairs.clone();
        let mut rng = RngStream::new(env.params.calibration_seed).split("norm-calibration");
        env.norm_bounds = calibrate_norm_bounds(&env, &pairs, env.params.calibration_steps, &mut rng);
        Ok(env)
    }

    pub fn family(&self) -> &RewardFamily {
        &self.family
    }

    pub fn noise_config(&self) -> &NoiseInjectConfig {
        self.injector.config()
    }

    pub fn norm_bounds(&self) -> &[(f64, f64)] {
        &self.norm_bounds
    }

    pub fn family_term(&self, s: &[f64]) -> f64 {
        self.family.term(s, &self.norm_bounds)
    }

    /// Noise-free Euler step.
    pub fn dynamics(s: &[f64], a: ActionId) -> [f64; 4] {
        let (x, x_dot, theta, theta_dot) = (s[X], s[X_DOT], s[THETA], s[THETA_DOT]);
        let force = if a.0 == 1 { FORCE_MAG } else { -FORCE_MAG };
        let total_mass = MASS_CART + MASS_POLE;
        let pm_len = MASS_POLE * HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pm_len * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pm_len * theta_acc * cos / total_mass;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }
}

impl Environment for CartPoleLite {
    fn state_dim(&self) -> usize {
        4
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn max_steps(&self) -> usize {
        self.params.max_steps
    }
    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn reset(&self, rng: &mut RngStream) -> StateVec {
        StateVec::new((0..4).map(|_| rng.uniform_range(-0.05, 0.05)).collect()).expect("finite start")
    }

    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        let base = StateVec::new(Self::dynamics(state.as_slice(), action).to_vec())
            .expect("euler step from a bounded state is finite");
        self.injector.inject(&base, state, rng)
    }

    fn reward(&self, _state: &StateVec, _action: ActionId, next: &StateVec) -> f64 {
        1.0 + self.family_term(next.as_slice())
    }

    fn is_terminal(&self, next: &StateVec) -> bool {
        next[X].abs() > X_LIMIT || next[THETA].abs() > THETA_LIMIT
    }

    fn arrival_reward(&self, next: &StateVec) -> f64 {
        self.family_term(next.as_slice())
    }
}
