//! 1-D Driving: a car with state `(p, v)` and two acceleration processes.
//!
//! ```text
//! v' = v + c·Δv(a) + g(a)·ε_v,   ε_v ~ N(0, σ_v²),  g(a) = g_ratio·Δv(a)
//! p' = p + v'·Δt + ε_p,          ε_p ~ N(0, σ_p²)
//! ```
//! with `c = -sign(p)` (`sign(0) = +1`) in [`SignMode::MainText`] and
//! `c = +1` in [`SignMode::Appendix`]. Because `p'` is built from `v'`, the
//! two next-state components share the velocity noise.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::state::{ActionId, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Acceleration always points toward the origin.
    #[default]
    MainText,
    /// Acceleration always positive.
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DrivingReward {
    /// Constant `step_penalty` per step.
    #[default]
    Penalty,
    /// `p'v' - pv`, a potential difference with potential `pv`.
    Product,
    /// `V(s') - V(s)` with `V(p, v) = -(|p| + |v|)²`.
    QuadraticValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrivingParams {
    /// Velocity change `(Δv(A₀), Δv(A₁))`.
    pub dv: [f64; 2],
    pub dt: f64,
    pub sigma_v: f64,
    pub sigma_p: f64,
    /// `g(A_i) / Δv(A_i)`.
    pub g_ratio: f64,
    pub goal_radius: f64,
    pub step_penalty: f64,
    pub max_steps: usize,
    pub discount: f64,
    pub sign_mode: SignMode,
    pub reward_mode: DrivingReward,
    /// Start states are uniform on `[-start_range, start_range]²`.
    pub start_range: f64,
}

impl Default for DrivingParams {
    fn default() -> Self {
        Self {
            dv: [0.1, 1.0],
            dt: 1.0,
            sigma_v: 1.0,
            sigma_p: 0.0,
            g_ratio: 0.1,
            goal_radius: 0.1,
            step_penalty: -1.0,
            max_steps: 200,
            discount: 1.0,
            sign_mode: SignMode::MainText,
            reward_mode: DrivingReward::Penalty,
            start_range: 2.0,
        }
    }
}

impl DrivingParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("driving: {m}")));
        if !(self.dv[1] > self.dv[0] && self.dv[0] > 0.0) {
            return bad("require dv[1] > dv[0] > 0");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.sigma_v >= 0.0 && self.sigma_p >= 0.0 && self.g_ratio >= 0.0) {
            return bad("noise scales must be nonnegative");
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal_radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(self.start_range > 0.0) {
            return bad("start_range must be positive");
        }
        Ok(())
    }

    /// Noise multiplier `g(a)`.
    pub fn g(&self, a: ActionId) -> f64 {
        self.g_ratio * self.dv[a.0]
    }

    /// Coefficient on `Δv(a)`.
    pub fn accel_sign(&self, p: f64) -> f64 {
        match self.sign_mode {
            SignMode::Appendix => 1.0,
            SignMode::MainText => {
                if p >= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    fn potential(&self, s: &[f64]) -> f64 {
        match self.reward_mode {
            DrivingReward::Penalty => 0.0,
            DrivingReward::Product => s[0] * s[1],
            DrivingReward::QuadraticValue => -(s[0].abs() + s[1].abs()).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Driving {
    params: DrivingParams,
}

impl Driving {
    pub fn new(params: DrivingParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &DrivingParams {
        &self.params
    }

    /// Next state from explicit standard-normal draws `(z_v, z_p)`.
    pub fn transition(&self, s: &[f64], a: ActionId, z_v: f64, z_p: f64) -> [f64; 2] {
        let pr = &self.params;
        let (p, v) = (s[0], s[1]);
        let v_next = v + pr.accel_sign(p) * pr.dv[a.0] + pr.g(a) * pr.sigma_v * z_v;
        let p_next = p + v_next * pr.dt + pr.sigma_p * z_p;
        [p_next, v_next]
    }
}

impl Environment for Driving {
    fn state_dim(&self) -> usize {
        2
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
        let r = self.params.start_range;
        let p = rng.uniform_range(-r, r);
        let v = rng.uniform_range(-r, r);
        StateVec::new(vec![p, v]).expect("finite start")
    }

    fn sample_next(&self, state: &StateVec, action: ActionId, rng: &mut RngStream) -> StateVec {
        let z_v = rng.standard_normal();
        let z_p = rng.standard_normal();
        let next = self.transition(state.as_slice(), action, z_v, z_p);
        StateVec::new(next.to_vec()).expect("driving transition stays finite")
    }

    fn reward(&self, state: &StateVec, _action: ActionId, next: &StateVec) -> f64 {
        match self.params.reward_mode {
            DrivingReward::Penalty => self.params.step_penalty,
            _ => self.params.potential(next.as_slice()) - self.params.potential(state.as_slice()),
        }
    }

    fn is_terminal(&self, next: &StateVec) -> bool {
        next.norm() < self.params.goal_radius
    }

    fn arrival_reward(&self, next: &StateVec) -> f64 {
        self.params.potential(next.as_slice())
    }
}
