//! Learnable one-step Gaussian dynamics models.
//!
//! Both modes share the mean predictor and per-dimension scales; the lagged
//! mode keeps `Γ = I` while the instantaneous mode carries a full correlation
//! matrix, so the two differ only in their joint predictive distribution.

mod mean;
mod residual;

pub use mean::{MeanKind, MeanPredictor, MissCounter, RIDGE_LAMBDA};
pub use residual::{
    likelihood_loss, likelihood_loss_flagged, marginal_losses, standardized_residual, update_corr, ResidualWindow,
    VARIANCE_FLOOR,
};

use serde::{Deserialize, Serialize};

use crate::corr::{CorrelationMatrix, GaussianPrediction};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::state::{ActionId, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Lagged,
    Instantaneous,
}

impl ModelMode {
    pub fn name(self) -> &'static str {
        match self {
            ModelMode::Lagged => "lagged",
            ModelMode::Instantaneous => "instantaneous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    #[default]
    Homoscedastic,
    /// Variance proportional to the predicted step size `|μ_i - s_i|`.
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScaleModel {
    /// `std[a][i]`.
    Homoscedastic { std: Vec<Vec<f64>> },
    /// `σ_i² = kappa[a][i] · |μ_i - s_i|`.
    Proportional { kappa: Vec<Vec<f64>> },
}

impl ScaleModel {
    pub fn scales(&self, s: &[f64], mean: &[f64], a: ActionId) -> Vec<f64> {
        match self {
            ScaleModel::Homoscedastic { std } => std[a.0].clone(),
            ScaleModel::Proportional { kappa } => kappa[a.0]
                .iter()
                .zip(s.iter().zip(mean))
                .map(|(k, (x, m))| (k * (m - x).abs()).sqrt())
                .collect(),
        }
    }

    fn fit(ds: &Dataset, mean: &MeanPredictor, kind: ScaleKind, n_actions: usize, dim: usize) -> Self {
        // Per action: Σ e², Σ |Δ̂|, count; index n_actions holds the pooled totals.
        let mut sq = vec![vec![0.0; dim]; n_actions + 1];
        let mut step = vec![vec![0.0; dim]; n_actions + 1];
        let mut count = vec![0usize; n_actions + 1];
        for r in ds.iter() {
            let mu = mean.predict(r.state.as_slice(), r.action);
            for slot in [r.action.0, n_actions] {
                count[slot] += 1;
                for i in 0..dim {
                    sq[slot][i] += (r.next_state[i] - mu[i]).powi(2);
                    step[slot][i] += (mu[i] - r.state[i]).abs();
                }
            }
        }
        let per_action = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..n_actions)
                .map(|a| {
                    let slot = if count[a] >= 2 { a } else { n_actions };
                    (0..dim).map(|i| f(slot, i)).collect()
                })
                .collect()
        };
        match kind {
            ScaleKind::Homoscedastic => ScaleModel::Homoscedastic {
                std: per_action(&|slot, i| (sq[slot][i] / count[slot] as f64).sqrt()),
            },
            ScaleKind::Proportional => ScaleModel::Proportional {
                kappa: per_action(&|slot, i| if step[slot][i] > 0.0 { sq[slot][i] / step[slot][i] } else { 0.0 }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mean: MeanKind,
    #[serde(default)]
    pub scales: ScaleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub mean: MeanPredictor,
    pub scales: ScaleModel,
    corr: CorrelationMatrix,
    mode: ModelMode,
    n_actions: usize,
}

/// Fit mean and scales on `ds`; the correlation starts at the identity.
pub fn fit_model(ds: &Dataset, spec: &ModelSpec, mode: ModelMode, n_actions: usize) -> Result<DynamicsModel> {
    let dim = ds
        .dim()
        .ok_or_else(|| Error::InsufficientData("cannot fit a model on an empty dataset".into()))?;
    if let Some(r) = ds.iter().find(|r| r.action.0 >= n_actions) {
        return Err(Error::ActionOutOfRange { action: r.action.0, n_actions });
    }
    let mean = MeanPredictor::fit(ds, &spec.mean, n_actions)?;
    let scales = ScaleModel::fit(ds, &mean, spec.scales, n_actions, dim);
    Ok(DynamicsModel { mean, scales, corr: CorrelationMatrix::identity(dim), mode, n_actions })
}

impl DynamicsModel {
    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn corr(&self) -> &CorrelationMatrix {
        &self.corr
    }

    pub fn dim(&self) -> usize {
        self.corr.dim()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Replace `Γ`. A lagged model only accepts the identity.
    pub fn with_corr(mut self, corr: CorrelationMatrix) -> Result<Self> {
        if corr.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: corr.dim() });
        }
        if self.mode == ModelMode::Lagged && !corr.is_identity() {
            return Err(Error::InvalidParams("a lagged model's correlation is fixed at the identity".into()));
        }
        self.corr = corr;
        Ok(self)
    }

    /// The same mean and scales under the other mode (correlation reset to
    /// the identity when switching to lagged).
    pub fn as_mode(&self, mode: ModelMode) -> Self {
        let mut out = self.clone();
        out.mode = mode;
        if mode == ModelMode::Lagged {
            out.corr = CorrelationMatrix::identity(self.dim());
        }
        out
    }

    pub fn predict(&self, s: &StateVec, a: ActionId) -> Result<GaussianPrediction> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.dim() });
        }
        ActionId::checked(a.0, self.n_actions)?;
        let mu = self.mean.predict(s.as_slice(), a);
        let scales = self.scales.scales(s.as_slice(), &mu, a);
        GaussianPrediction::new(StateVec::new(mu)?, scales, self.corr.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("model json: {e}")))?;
        if m.mode == ModelMode::Lagged && !m.corr.is_identity() {
            return Err(Error::InvalidParams("lagged model with non-identity correlation".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use crate::rng::RngStream;
    use crate::state::TransitionRecord;

    fn linear_data(noise: f64, n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let mut ds = Dataset::new(Provenance::Environment);
        for _ in 0..n {
            let s = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let a = rng.index(2);
            let next = [
                0.9 * s[0] + 0.2 * s[1] + a as f64 + noise * rng.standard_normal(),
                -0.3 * s[0] + 0.5 * s[1] - 1.0 + noise * rng.standard_normal(),
            ];
            ds.push(
                TransitionRecord::new(
                    StateVec::new(s.to_vec()).unwrap(),
                    ActionId(a),
                    StateVec::new(next.to_vec()).unwrap(),
                    0.0,
                    false,
                )
                .unwrap(),
            )
            .unwrap();
        }
        ds
    }

    fn linear_spec() -> ModelSpec {
        ModelSpec { mean: MeanKind::LinearLeastSquares, scales: ScaleKind::Homoscedastic }
    }

    #[test]
    fn noiseless_linear_fit_is_exact() {
        let ds = linear_data(0.0, 50, 1);
        let m = fit_model(&ds, &linear_spec(), ModelMode::Instantaneous, 2).unwrap();
        let s = StateVec::new(vec![0.3, -0.7]).unwrap();
        let p = m.predict(&s, ActionId(1)).unwrap();
        assert!((p.mean[0] - (0.27 - 0.14 + 1.0)).abs() < 1e-8);
        assert!((p.mean[1] - (-0.09 - 0.35 - 1.0)).abs() < 1e-8);
        assert!(p.scales.iter().all(|&x| x < 1e-6));
    }

    #[test]
    fn lagged_fit_has_identity_corr() {
        let ds = linear_data(0.1, 100, 2);
        let m = fit_model(&ds, &linear_spec(), ModelMode::Lagged, 2).unwrap();
        assert!(m.corr().is_identity());
        let bad = CorrelationMatrix::with_pairs(2, &[(0, 1, 0.5)]).unwrap();
        assert!(m.with_corr(bad).is_err());
    }

    #[test]
    fn too_few_records() {
        let ds = linear_data(0.1, 3, 3);
        assert!(matches!(
            fit_model(&ds, &linear_spec(), ModelMode::Lagged, 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rank_deficient_design_uses_ridge() {
        let mut ds = Dataset::new(Provenance::Environment);
        for i in 0..10 {
            let x = i as f64;
            // second coordinate is always a copy of the first
            let s = StateVec::new(vec![x, x]).unwrap();
            let n = StateVec::new(vec![2.0 * x, 1.0]).unwrap();
            ds.push(TransitionRecord::new(s, ActionId(0), n, 0.0, false).unwrap()).unwrap();
        }
        let m = fit_model(&ds, &linear_spec(), ModelMode::Lagged, 1).unwrap();
        let p = m.predict(&StateVec::new(vec![3.0, 3.0]).unwrap(), ActionId(0)).unwrap();
        assert!((p.mean[0] - 6.0).abs() < 1e-4, "{}", p.mean[0]);
    }

    #[test]
    fn json_round_trip() {
        let ds = linear_data(0.1, 100, 4);
        let m = fit_model(&ds, &linear_spec(), ModelMode::Instantaneous, 2)
            .unwrap()
            .with_corr(CorrelationMatrix::with_pairs(2, &[(0, 1, 0.4)]).unwrap())
            .unwrap();
        let back = DynamicsModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn tabular_mean_predicts_cell_delta() {
        let grid = crate::grid::Grid::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 4).unwrap();
        let ds = linear_data(0.0, 2000, 5);
        let spec = ModelSpec { mean: MeanKind::TabularConditional { grid }, scales: ScaleKind::Proportional };
        let m = fit_model(&ds, &spec, ModelMode::Lagged, 2).unwrap();
        let p = m.predict(&StateVec::new(vec![5.0, 5.0]).unwrap(), ActionId(0)).unwrap();
        assert!(p.mean.iter().all(|x| x.is_finite()));
        assert_eq!(m.mean.miss_count(), 0);
    }
}
