//! A fixed battery of numerical checks, emitted as one JSON document.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::alpha_beta::{
    alpha_beta_for, beta_symmetry_check, construct_dr_reward, coordinate_reward, default_f_basis,
    factored_coupled_mdp, two_bit_mdp, verify_beta_zero,
};
use super::integral::{closed_form_gap, mc_integral_gap, gv_gap_check, GaussianSampler};
use super::quadratic::{gaussian_quadratic_expectation, DepStructure, QuadraticFunction};
use crate::corr::{CorrelationMatrix, GaussianPrediction};
use crate::error::Result;
use crate::planning::{consistency_check, laggedize};
use crate::rng::RngStream;
use crate::state::StateVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub values: Value,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub n_mc: usize,
    pub checks: Vec<CheckResult>,
}

impl TheoryReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(name: &str, values: Value, pass: bool) -> CheckResult {
    CheckResult { name: name.into(), values, pass }
}

/// Correlated 3-D Gaussian: dims 0 and 1 at `ρ = 0.9`, dim 2 independent.
pub(crate) fn reference_gaussian() -> GaussianSampler {
    GaussianSampler::new(
        GaussianPrediction::new(
            StateVec::new(vec![0.5, -1.0, 2.0]).expect("finite"),
            vec![1.0, 2.0, 1.5],
            CorrelationMatrix::with_pairs(3, &[(0, 1, 0.9)]).expect("valid"),
        )
        .expect("valid"),
    )
    .expect("factorizable")
}

pub fn theory_report(seed: u64, n_mc: usize) -> Result<TheoryReport> {
    let root = RngStream::new(seed);
    let mut checks = vec![];

    let p = reference_gaussian();
    let lag = p.lagged();
    let gap = |name: &str, f: &dyn Fn(&[f64]) -> f64| mc_integral_gap(&p, &lag, f, n_mc, &root.split(name));
    let constant = gap("constant", &|_| 7.0);
    checks.push(check("integral_gap_constant", json!(constant), constant.within(0.0, 4.0)));
    for d in 0..3 {
        let g = gap(&format!("single/{d}"), &|x| x[d].powi(3) - 2.0 * x[d]);
        checks.push(check(&format!("integral_gap_single_dim_{d}"), json!(g), g.within(0.0, 4.0)));
    }
    let indep = gap("indep", &|x| x[0] * x[2]);
    checks.push(check("integral_gap_independent_pair", json!(indep), indep.within(0.0, 4.0)));
    let dep = gap("dep", &|x| x[0] * x[1]);
    let mut cross_a = DMatrix::zeros(3, 3);
    cross_a[(0, 1)] = 0.5;
    cross_a[(1, 0)] = 0.5;
    let cross = QuadraticFunction::new(cross_a, DVector::zeros(3), 0.0)?;
    let closed = closed_form_gap(&p, &lag, &cross);
    let target = 0.9 * 1.0 * 2.0;
    checks.push(check(
        "integral_gap_dependent_pair",
        json!({"estimate": dep, "closed_form": closed, "target": target}),
        dep.within(target, 4.0) && (closed - target).abs() < 1e-9,
    ));

    let dep_struct = DepStructure::new(3, &[(0, 1)])?;
    let f = QuadraticFunction::new(
        DMatrix::from_row_slice(3, 3, &[1.0, -0.7, 0.3, -0.7, 0.5, 0.2, 0.3, 0.2, -1.0]),
        DVector::from_vec(vec![0.5, -2.0, 1.0]),
        3.0,
    )?;
    let gv = gv_gap_check(&p, &lag, &f, &dep_struct, n_mc, &root.split("gv"));
    let expected = 2.0 * -0.7 * target;
    checks.push(check(
        "gap_depends_only_on_g_part",
        json!({"check": gv, "expected": expected}),
        gv.agree && (gv.lhs_closed - expected).abs() < 1e-9,
    ));

    let mu = DVector::from_vec(vec![1.0, 1.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let e = gaussian_quadratic_expectation(&mu, &cov, &a);
    checks.push(check("gaussian_quadratic_expectation", json!({"value": e, "expected": 3.8}), (e - 3.8).abs() < 1e-12));

    let two = two_bit_mdp();
    let two_lag = laggedize(&two)?;
    let shape = [2, 2];
    let same = coordinate_reward(&shape, |c| (c[0] == c[1]) as u8 as f64);
    let ab = alpha_beta_for(&two, &two_lag, 0, 0, 1, &same)?;
    checks.push(check(
        "two_bit_alpha_beta",
        json!(ab),
        (ab.alpha - 0.5).abs() < 1e-12 && (ab.beta + 0.48).abs() < 1e-12,
    ));
    let shifted: Vec<f64> = same.iter().zip(coordinate_reward(&shape, |c| c[0] as f64)).map(|(r, s)| r - s).collect();
    let ab2 = alpha_beta_for(&two, &two_lag, 0, 0, 1, &shifted)?;
    checks.push(check(
        "two_bit_shifted_reward_in_dr",
        json!(ab2),
        (ab2.alpha - 0.4).abs() < 1e-12 && (ab2.beta + 0.48).abs() < 1e-12 && ab2.in_dr(),
    ));

    let sym = beta_symmetry_check(&two, &two_lag, 0, 0, 1, &same, &mut root.split("symmetry"))?;
    checks.push(check("beta_symmetries", json!(sym), sym.holds && (sym.beta_negated - 0.48).abs() < 1e-12));

    let dr = construct_dr_reward(&two, &two_lag, 0, 0, 1, std::slice::from_ref(&same), &default_f_basis(&shape))?;
    let dr_ok = dr.certified.in_dr() && (dr.x + 2.6).abs() < 1e-12 && (dr.certified.alpha - 0.24).abs() < 1e-12;
    checks.push(check("dr_construction", json!(dr), dr_ok));

    let r1_true = two.with_rewards(vec![0.0; 8], dr.reward.clone())?;
    let r1_lag = two_lag.with_rewards(vec![0.0; 8], dr.reward.clone())?;
    let cons = consistency_check(&r1_true, &r1_lag, &[0], 1e-12)?;
    let cons_ok = cons.witnesses.len() == 1
        && cons.witnesses[0].state == 0
        && (cons.return_gap - dr.certified.alpha).abs() < 1e-12;
    checks.push(check("consistency_witness", json!(cons), cons_ok));

    let mut mdp_rng = root.split("factored");
    let factored = factored_coupled_mdp(5, 0.8, 0.9, &mut mdp_rng)?;
    let centred = |c: usize| c as f64 - 2.0;
    let sep = coordinate_reward(&[5, 5], |c| centred(c[0]).powi(2) + centred(c[1]));
    let beta_sep = verify_beta_zero(&factored.with_rewards(vec![0.0; 100], sep)?)?;
    let prod = coordinate_reward(&[5, 5], |c| centred(c[0]) * centred(c[1]));
    let beta_prod = verify_beta_zero(&factored.with_rewards(vec![0.0; 100], prod)?)?;
    checks.push(check(
        "factored_beta_zero",
        json!({"separable_max_beta": beta_sep, "cross_term_max_beta": beta_prod}),
        beta_sep < 1e-5 && beta_prod > 0.01,
    ));

    Ok(TheoryReport { seed, n_mc, checks })
}
