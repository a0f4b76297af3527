//! Numerical checks of when a lagged model can and cannot recover the
//! optimal policy.

mod alpha_beta;
mod integral;
mod quadratic;
mod report;

pub use alpha_beta::{
    alpha_beta, alpha_beta_for, beta_symmetry_check, comonotone_coupling, construct_dr_reward, coordinate_reward,
    default_f_basis, factored_coupled_mdp, two_bit_mdp, verify_beta_zero, AlphaBeta, DrReward, SymmetryReport,
    SOLVE_TOL,
};
pub use integral::{
    closed_form_gap, mc_integral_gap, gv_gap_check, GapEstimate, GaussianSampler, GvCheck, NextStateSampler,
};
pub use quadratic::{
    g_decompose, gaussian_expectation, gaussian_quadratic_expectation, DepStructure, GDecomposition,
    QuadraticFunction,
};
pub use report::{theory_report, CheckResult, TheoryReport};
