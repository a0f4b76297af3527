use instadep::models::{
    likelihood_loss, standardized_residual, update_corr, MeanKind, ResidualWindow, ScaleKind,
};
use instadep::rollout::{sample_correlated, step_model};
use instadep::{
    fit_model, ActionId, CorrelationMatrix, Dataset, GaussianPrediction, ModelMode, ModelSpec, Provenance, RngStream,
    StateVec, TransitionRecord,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

const LINEAR: ModelSpec = ModelSpec { mean: MeanKind::LinearLeastSquares, scales: ScaleKind::Homoscedastic };

/// `s' = 0.9 s + 0.2 + e` with `e` of scales `sd` and correlation `rho` on dims 0, 1.
fn correlated_data(n: usize, sd: [f64; 2], rho: f64, rng: &mut RngStream) -> Dataset {
    let mut ds = Dataset::new(Provenance::Environment);
    for _ in 0..n {
        let s = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        let (z0, z1) = (rng.standard_normal(), rng.standard_normal());
        let e = [sd[0] * z0, sd[1] * (rho * z0 + (1.0 - rho * rho).sqrt() * z1)];
        let next = vec![0.9 * s[0] + 0.2 + e[0], 0.9 * s[1] + 0.2 + e[1]];
        let rec =
            TransitionRecord::new(StateVec::new(s.to_vec()).unwrap(), ActionId(0), StateVec::new(next).unwrap(), 0.0, false);
        ds.push(rec.unwrap()).unwrap();
    }
    ds
}

fn sample_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn homoscedastic_scales_recover_noise() {
    let ds = correlated_data(5000, [0.5, 0.5], 0.0, &mut RngStream::new(1));
    let model = fit_model(&ds, &LINEAR, ModelMode::Lagged, 1).unwrap();
    let pred = model.predict(&StateVec::new(vec![0.3, 0.3]).unwrap(), ActionId(0)).unwrap();
    for s in &pred.scales {
        assert!((s - 0.5).abs() < 0.02, "{s}");
    }
}

fn fitted_corr(ds: &Dataset, shrink: f64) -> (instadep::DynamicsModel, CorrelationMatrix) {
    let model = fit_model(ds, &LINEAR, ModelMode::Instantaneous, 1).unwrap();
    let mut window = ResidualWindow::new(ds.len());
    for r in ds.iter() {
        window.push(standardized_residual(&model, &r.state, r.action, &r.next_state).unwrap());
    }
    let c = update_corr(&window, &CorrelationMatrix::identity(2), shrink).unwrap();
    (model, c)
}

#[test]
fn residual_correlation_recovers_injected_rho() {
    let ds = correlated_data(5000, [0.3, 1.2], 0.9, &mut RngStream::new(2));
    let (_, c) = fitted_corr(&ds, 0.0);
    assert!((c.get(0, 1) - 0.9).abs() < 0.02, "{}", c.get(0, 1));
    let (_, shrunk) = fitted_corr(&ds, 0.5);
    assert!((shrunk.get(0, 1) - 0.5 * c.get(0, 1)).abs() < 1e-9);
}

#[test]
fn instantaneous_model_scores_better_on_correlated_data() {
    let train = correlated_data(3000, [0.3, 1.2], 0.9, &mut RngStream::new(3));
    let test = correlated_data(2000, [0.3, 1.2], 0.9, &mut RngStream::new(4));
    let (model, c) = fitted_corr(&train, 0.0);
    let ins = model.with_corr(c).unwrap();
    let lag = ins.as_mode(ModelMode::Lagged);
    let mean_loss = |m: &instadep::DynamicsModel| {
        test.iter()
            .map(|r| likelihood_loss(&m.predict(&r.state, r.action).unwrap(), &r.next_state))
            .sum::<f64>()
            / test.len() as f64
    };
    let (li, ll) = (mean_loss(&ins), mean_loss(&lag));
    // Gaussian oracle: the expected loss gap is -log(1 - ρ²) ≈ 1.66.
    assert!(ll - li > 1.4 && ll - li < 1.9, "{li} vs {ll}");
}

#[test]
fn correlated_draws_match_requested_correlation() {
    for rho in [0.9, -0.9] {
        let c = CorrelationMatrix::with_pairs(2, &[(0, 1, rho)]).unwrap();
        let mut rng = RngStream::new(5);
        let (mut a, mut b) = (vec![], vec![]);
        for _ in 0..100_000 {
            let x = sample_correlated(&c, &mut rng).unwrap();
            a.push(x[0]);
            b.push(x[1]);
        }
        assert!((sample_corr(&a, &b) - rho).abs() < 0.01);
    }
}

#[test]
fn model_draws_have_dgd_covariance_and_lagged_marginals_match() {
    let ds = correlated_data(4000, [1.0, 2.0], 0.5, &mut RngStream::new(6));
    let (model, _) = fitted_corr(&ds, 0.0);
    let ins = model.with_corr(CorrelationMatrix::with_pairs(2, &[(0, 1, 0.5)]).unwrap()).unwrap();
    let lag = ins.as_mode(ModelMode::Lagged);
    let s = StateVec::new(vec![0.0, 0.0]).unwrap();
    let pred = ins.predict(&s, ActionId(0)).unwrap();
    let cov = pred.covariance();
    // Scales near (1, 2), so Σ ≈ [[1, 1], [1, 4]].
    assert!((cov[(0, 1)] - 1.0).abs() < 0.1 && (cov[(1, 1)] - 4.0).abs() < 0.3);

    let n = 40_000;
    let draw = |m: &instadep::DynamicsModel, seed| {
        let mut rng = RngStream::new(seed);
        (0..n).map(|_| step_model(m, &s, ActionId(0), &mut rng).unwrap()).collect::<Vec<_>>()
    };
    let (xi, xl) = (draw(&ins, 7), draw(&lag, 8));
    let mut emp = DMatrix::<f64>::zeros(2, 2);
    for x in &xi {
        for i in 0..2 {
            for j in 0..2 {
                emp[(i, j)] += (x[i] - pred.mean[i]) * (x[j] - pred.mean[j]) / n as f64;
            }
        }
    }
    assert!((&emp - &cov).abs().max() < 0.1, "{emp} vs {cov}");
    for d in 0..2 {
        let mut a: Vec<f64> = xi.iter().map(|x| x[d]).collect();
        let mut b: Vec<f64> = xl.iter().map(|x| x[d]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for q in 1..10 {
            let k = q * n / 10;
            assert!((a[k] - b[k]).abs() < 0.05 * pred.scales[d], "dim {d} decile {q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn likelihood_invariant_under_dimension_permutation(
        mean in prop::collection::vec(-3.0f64..3.0, 3),
        scales in prop::collection::vec(0.1f64..3.0, 3),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        r in prop::collection::vec(-0.6f64..0.6, 3),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        let raw = DMatrix::from_row_slice(3, 3, &[1.0, r[0], r[1], r[0], 1.0, r[2], r[1], r[2], 1.0]);
        let c = CorrelationMatrix::repair(&raw).unwrap();
        let pred = GaussianPrediction::new(StateVec::new(mean.clone()).unwrap(), scales.clone(), c.clone()).unwrap();
        let base = likelihood_loss(&pred, &StateVec::new(x.clone()).unwrap());

        let pc = CorrelationMatrix::repair(&DMatrix::from_fn(3, 3, |i, j| c.get(perm[i], perm[j]))).unwrap();
        let pm: Vec<f64> = perm.iter().map(|&i| mean[i]).collect();
        let ps: Vec<f64> = perm.iter().map(|&i| scales[i]).collect();
        let px: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
        let ppred = GaussianPrediction::new(StateVec::new(pm).unwrap(), ps, pc).unwrap();
        let permuted = likelihood_loss(&ppred, &StateVec::new(px).unwrap());
        prop_assert!((base - permuted).abs() < 1e-8 * (1.0 + base.abs()));
    }
}
