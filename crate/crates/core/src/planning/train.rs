//! Dyna-style training: fit a model on real data, track the residual
//! correlation, roll the model out and learn a tabular Q function from the
//! simulated transitions only.

use serde::{Deserialize, Serialize};

use super::mdp::{argmax, QTable, TabularPolicy};
use crate::corr::CorrelationMatrix;
use crate::dataset::{Dataset, Provenance};
use crate::env::{policy_return, Environment, Policy, RandomPolicy};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::models::{
    fit_model, likelihood_loss, marginal_losses, standardized_residual, update_corr, DynamicsModel, ModelMode,
    ModelSpec, ResidualWindow,
};
use crate::rng::RngStream;
use crate::rollout::{rollout, EnvScorer, RolloutConfig};
use crate::state::{ActionId, StateVec, TransitionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs `N`.
    pub epochs: usize,
    /// Environment steps per epoch `E`.
    pub env_steps: usize,
    /// Model rollouts per environment step `M`.
    pub rollouts: usize,
    pub rollout_k: usize,
    /// Q-learning updates per environment step `G`.
    pub q_updates: usize,
    /// Random-policy steps collected before the first fit.
    pub warmup_steps: usize,
    pub model_capacity: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Discount used by Q-learning.
    pub gamma: f64,
    pub window_capacity: usize,
    pub shrink: f64,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            env_steps: 200,
            rollouts: 10,
            rollout_k: 5,
            q_updates: 20,
            warmup_steps: 1000,
            model_capacity: 20_000,
            learning_rate: 0.1,
            epsilon_start: 0.5,
            epsilon_decay: 0.99,
            epsilon_floor: 0.05,
            gamma: 0.99,
            window_capacity: 2000,
            shrink: 0.05,
            eval_episodes: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.epochs,
            self.env_steps,
            self.rollouts,
            self.rollout_k,
            self.q_updates,
            self.model_capacity,
            self.window_capacity,
            self.eval_episodes,
        ];
        if sizes.contains(&0) {
            return Err(Error::InvalidParams("training loop sizes must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.shrink) {
            return Err(Error::InvalidParams("gamma and shrink must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParams("learning_rate must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, epoch: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(epoch as i32)).max(self.epsilon_floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub epsilon: f64,
    /// Mean joint likelihood loss on the evaluation dataset.
    pub likelihood: Option<f64>,
    /// Mean per-dimension marginal likelihood losses on the evaluation dataset.
    pub marginal_likelihood: Option<Vec<f64>>,
    pub corr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: TabularPolicy,
    pub q: QTable,
    pub curve: Vec<EpochStats>,
    pub model: DynamicsModel,
    pub env_data: Dataset,
}

struct EpsilonGreedy<'a> {
    q: &'a QTable,
    grid: &'a Grid,
    epsilon: f64,
}

impl Policy for EpsilonGreedy<'_> {
    fn act(&self, state: &StateVec, rng: &mut RngStream) -> ActionId {
        if rng.bernoulli(self.epsilon) {
            ActionId(rng.index(self.q.n_actions))
        } else {
            ActionId(self.q.greedy(self.grid.cell_of(state.as_slice())))
        }
    }
}

/// Mean joint and marginal likelihood losses of `model` on `data`.
pub fn evaluate_likelihood(model: &DynamicsModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let mut joint = 0.0;
    let mut marginal = vec![0.0; model.dim()];
    for r in data.iter() {
        let pred = model.predict(&r.state, r.action)?;
        joint += likelihood_loss(&pred, &r.next_state);
        for (m, l) in marginal.iter_mut().zip(marginal_losses(&pred, &r.next_state)) {
            *m += l;
        }
    }
    let n = data.len().max(1) as f64;
    Ok((joint / n, marginal.into_iter().map(|m| m / n).collect()))
}

/// Run the training loop. Environment interaction uses the child stream
/// `env`, model rollouts `model`, Q-learning sampling `learn` and per-epoch
/// evaluation `eval` (identical across epochs and modes, so returns are
/// compared on common random numbers).
pub fn train_loop<E: Environment + ?Sized>(
    env: &E,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    mode: ModelMode,
    q_grid: &Grid,
    eval_data: Option<&Dataset>,
    rng: &RngStream,
) -> Result<TrainResult> {
    cfg.validate()?;
    if q_grid.dim() != env.state_dim() {
        return Err(Error::DimensionMismatch { expected: env.state_dim(), got: q_grid.dim() });
    }
    let n_actions = env.n_actions();
    let mut env_rng = rng.split("env");
    let model_rng = rng.split("model");
    let mut learn_rng = rng.split("learn");
    let eval_rng = rng.split("eval");

    let mut d_env = Dataset::new(Provenance::Environment);
    let mut d_model = Dataset::with_capacity(Provenance::Model, cfg.model_capacity);
    let mut q = QTable::zeros(q_grid.n_cells(), n_actions);
    let mut window = ResidualWindow::new(cfg.window_capacity);
    let mut corr = CorrelationMatrix::identity(env.state_dim());

    let mut state = env.reset(&mut env_rng);
    let mut t = 0usize;
    let env_step = |policy: &dyn Policy, state: &mut StateVec, t: &mut usize, rng: &mut RngStream| {
        let a = policy.act(state, rng);
        let step = env.step(state, a, rng);
        let rec = TransitionRecord {
            state: state.clone(),
            action: a,
            next_state: step.next.clone(),
            reward: step.reward,
            terminal: step.terminal,
        };
        *t += 1;
        if step.terminal || *t >= env.max_steps() {
            *state = env.reset(rng);
            *t = 0;
        } else {
            *state = step.next;
        }
        rec
    };

    let random = RandomPolicy { n_actions };
    for _ in 0..cfg.warmup_steps.max(env.state_dim() + 2) {
        d_env.push(env_step(&random, &mut state, &mut t, &mut env_rng))?;
    }

    let scorer = EnvScorer(env);
    let rollout_cfg = RolloutConfig { k: cfg.rollout_k, n_starts: cfg.rollouts, branch: 1 };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut model = fit_model(&d_env, spec, mode, n_actions)?;
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        model = fit_model(&d_env, spec, mode, n_actions)?.with_corr(corr.clone())?;
        let epsilon = cfg.epsilon(epoch);
        for _ in 0..cfg.env_steps {
            let rec = {
                let pol = EpsilonGreedy { q: &q, grid: q_grid, epsilon };
                env_step(&pol, &mut state, &mut t, &mut env_rng)
            };
            if mode == ModelMode::Instantaneous {
                // Residuals are taken against the model with Γ₀ = I; the
                // scales do not depend on Γ.
                window.push(standardized_residual(&model, &rec.state, rec.action, &rec.next_state)?);
                corr = update_corr(&window, &corr, cfg.shrink)?;
                model = model.with_corr(corr.clone())?;
            }
            d_env.push(rec)?;

            let starts: Vec<StateVec> = (0..cfg.rollouts)
                .map(|_| d_env.get(learn_rng.index(d_env.len())).expect("nonempty").state.clone())
                .collect();
            let pol = EpsilonGreedy { q: &q, grid: q_grid, epsilon };
            let (sim, _) = rollout(
                &model,
                &pol,
                &starts,
                &rollout_cfg,
                &scorer,
                &model_rng.split_indexed("step", global_step),
            )?;
            d_model.extend(sim)?;
            global_step += 1;

            for _ in 0..cfg.q_updates {
                let r = d_model.get(learn_rng.index(d_model.len())).expect("nonempty");
                let s = q_grid.cell_of(r.state.as_slice());
                let target = r.reward
                    + if r.terminal {
                        0.0
                    } else {
                        cfg.gamma * q.max(q_grid.cell_of(r.next_state.as_slice()))
                    };
                let old = q.get(s, r.action.0);
                q.set(s, r.action.0, old + cfg.learning_rate * (target - old));
            }
        }

        let greedy = TabularPolicy::new(q.greedy_policy(), q_grid.clone())?;
        let ret = policy_return(env, &greedy, cfg.eval_episodes, env.discount(), &eval_rng);
        let (likelihood, marginal_likelihood) = match eval_data {
            Some(d) => {
                let (j, m) = evaluate_likelihood(&model, d)?;
                (Some(j), Some(m))
            }
            None => (None, None),
        };
        curve.push(EpochStats {
            epoch,
            mean_return: ret.mean,
            std_return: ret.std,
            epsilon,
            likelihood,
            marginal_likelihood,
            corr: model.corr().clone().into(),
        });
    }

    let policy = TabularPolicy::new((0..q_grid.n_cells()).map(|s| argmax(q.row(s))).collect(), q_grid.clone())?;
    Ok(TrainResult { policy, q, curve, model, env_data: d_env })
}
