//! The `ξ`-dependent discrete state problems.

pub mod problem;
pub mod solver;

use std::sync::Arc;

use crate::error::Result;
use crate::fem::FunctionSpace;
use crate::nn::{ParamVector, ShallowNet};
use crate::weight::WeightSpec;

pub use problem::{Boundary, ProblemSpec, ScalarField};
pub use solver::{
    AssembledSystem, Discretization, InnerProduct, Residual, ResidualSpace, SolverKind, SolverOptions,
    StateSolution, STABILITY_TOLERANCE,
};

pub fn solve_weighted_lsq(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    weight: WeightSpec,
    xi: &ShallowNet,
) -> Result<StateSolution> {
    Discretization::with_spaces(
        problem.clone(),
        weight,
        SolverKind::WeightedLsq,
        trial.clone(),
        None,
        SolverOptions::default(),
    )?
    .solve(xi)
}

pub fn solve_mixed_lsq(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    test: &Arc<FunctionSpace>,
    weight: WeightSpec,
    xi: &ShallowNet,
) -> Result<StateSolution> {
    Discretization::with_spaces(
        problem.clone(),
        weight,
        SolverKind::MixedLsq,
        trial.clone(),
        Some(test.clone()),
        SolverOptions::default(),
    )?
    .solve(xi)
}

/// Weighted Galerkin on `space`; the residual is reconstructed on a
/// twice-refined copy of it.
pub fn solve_weighted_galerkin(
    problem: &ProblemSpec,
    space: &Arc<FunctionSpace>,
    weight: WeightSpec,
    xi: &ShallowNet,
    kernel_check: bool,
) -> Result<StateSolution> {
    let fine_mesh = Arc::new(space.mesh().refined(2)?);
    let (bc, dim) = (problem.trial_bc, problem.dim);
    let fine = Arc::new(FunctionSpace::p1(fine_mesh, |p| bc.contains(p, dim)));
    let options = SolverOptions { kernel_check, ..SolverOptions::default() };
    Discretization::with_spaces(problem.clone(), weight, SolverKind::WeightedGalerkin, space.clone(), Some(fine), options)?
        .solve(xi)
}

pub fn solve_dd_minres(
    problem: &ProblemSpec,
    trial: &Arc<FunctionSpace>,
    test: &Arc<FunctionSpace>,
    inner_product: InnerProduct,
    weight: WeightSpec,
    xi: &ShallowNet,
) -> Result<StateSolution> {
    let options = SolverOptions { inner_product, ..SolverOptions::default() };
    Discretization::with_spaces(problem.clone(), weight, SolverKind::DdMinres, trial.clone(), Some(test.clone()), options)?
        .solve(xi)
}

/// Directional derivative of `(r, u_h)` with respect to the network parameters.
pub fn state_derivative(
    disc: &Discretization,
    sol: &StateSolution,
    xi: &ShallowNet,
    eta: &ParamVector,
) -> Result<(Residual, crate::fem::FEFunction)> {
    disc.state_derivative(sol, xi, eta)
}
