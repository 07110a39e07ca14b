//! Numerical certificates for assembled state problems: inf-sup and kernel
//! coercivity estimates, norm-equivalence constants, the a-priori bound,
//! Petrov-Galerkin equivalence and sampled convexity of the reduced cost.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor, RANK_TOLERANCE};
use crate::nn::{ParamVector, ShallowNet};
use crate::optim::ReducedProblem;
use crate::parallel::{self, Execution};
use crate::state::{Discretization, SolverKind, StateSolution};

/// Tolerance on the Petrov-Galerkin defect.
pub const PG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfSupEstimate {
    /// Coercivity of `a` on `ker Bᵀ`; `None` when the kernel is trivial.
    pub alpha_h: Option<f64>,
    pub beta_h: f64,
}

/// `β_h = σ_min(G_V^{-1/2} B G_U^{-1/2})` and `α_h = λ_min` of the whitened
/// symmetric part of `A` on `ker Bᵀ`, clipped at 0. `B` is test × trial.
pub fn estimate_infsup(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gram_trial: &DMatrix<f64>,
    gram_test: &DMatrix<f64>,
) -> Result<InfSupEstimate> {
    let (m, n) = b.shape();
    if a.shape() != (m, m) || gram_test.shape() != (m, m) || gram_trial.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "inconsistent block shapes: A {:?}, B {:?}, G_U {:?}, G_V {:?}",
            a.shape(),
            b.shape(),
            gram_trial.shape(),
            gram_test.shape()
        )));
    }
    let wv = linalg::inv_sqrt_spd(gram_test)?;
    let wu = linalg::inv_sqrt_spd(gram_trial)?;
    let beta_h = linalg::min_singular_value(&(&wv * b * &wu));
    let z = linalg::left_kernel_basis(b, RANK_TOLERANCE);
    let alpha_h = if z.ncols() == 0 {
        None
    } else {
        let wk = linalg::inv_sqrt_spd(&(z.transpose() * gram_test * &z))?;
        let h = &wk * z.transpose() * linalg::sym_part(a) * &z * &wk;
        Some(SymmetricEigen::new(linalg::sym_part(&h)).eigenvalues.min().max(0.0))
    };
    Ok(InfSupEstimate { alpha_h, beta_h })
}

/// `(C₁, C₂)` with `C₁²‖v‖² ≤ a(v, v) ≤ C₂²‖v‖²` on the discrete test space.
pub fn norm_equivalence(a: &DMatrix<f64>, gram_test: &DMatrix<f64>) -> Result<(f64, f64)> {
    let ev = linalg::generalized_eigenvalues(a, gram_test)?;
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0);
    if !(lo > 0.0) {
        return Err(Error::invalid("a(ξ; ·, ·) is not an inner product on the test space"));
    }
    Ok((lo.sqrt(), hi.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriCheck {
    pub u_norm: f64,
    /// Discrete dual norm `sup_v f(v)/‖v‖` over the test space.
    pub f_norm: f64,
    pub bound: f64,
    pub margin: f64,
}

/// `(C₂/C₁)(1/β_h)‖f‖ - ‖u_h‖`.
pub fn apriori_margin(u_norm: f64, f_norm: f64, c1: f64, c2: f64, beta_h: f64) -> AprioriCheck {
    let bound = if f_norm == 0.0 { 0.0 } else { c2 / c1 / beta_h * f_norm };
    AprioriCheck { u_norm, f_norm, bound, margin: bound - u_norm }
}

/// The blocks and Gram matrices of a saddle-point instance at one control.
#[derive(Debug, Clone)]
struct SaddleInstance {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    f: DVector<f64>,
    gram_test: DMatrix<f64>,
    gram_trial: DMatrix<f64>,
}

impl SaddleInstance {
    fn new(disc: &Discretization, net: &ShallowNet) -> Result<Self> {
        let (gram_test, gram_trial) = disc.saddle_grams().ok_or_else(|| {
            Error::invalid(format!(
                "verification needs a saddle-point solver (mixed_lsq or dd_minres), got {:?}",
                disc.kind()
            ))
        })?;
        let sys = disc.assemble(net)?;
        Ok(SaddleInstance { a: sys.a_block(), b: sys.b_block(), f: sys.f_block(), gram_test, gram_trial })
    }
}

pub fn check_apriori(disc: &Discretization, sol: &StateSolution, net: &ShallowNet) -> Result<AprioriCheck> {
    let inst = SaddleInstance::new(disc, net)?;
    let est = estimate_infsup(&inst.a, &inst.b, &inst.gram_trial, &inst.gram_test)?;
    let (c1, c2) = norm_equivalence(&inst.a, &inst.gram_test)?;
    Ok(apriori_from(&inst, sol.u.coeffs(), c1, c2, est.beta_h)?)
}

fn apriori_from(inst: &SaddleInstance, u: &DVector<f64>, c1: f64, c2: f64, beta_h: f64) -> Result<AprioriCheck> {
    let u_norm = u.dot(&(&inst.gram_trial * u)).max(0.0).sqrt();
    let gf = linalg::dense_solve(&inst.gram_test, &inst.f)?;
    let f_norm = inst.f.dot(&gf).max(0.0).sqrt();
    Ok(apriori_margin(u_norm, f_norm, c1, c2, beta_h))
}

/// Optimal test functions `v_j` with `A(ξ)ᵀ v_j = B w_j`, one column per
/// trial basis function.
pub fn optimal_test_functions(disc: &Discretization, net: &ShallowNet) -> Result<DMatrix<f64>> {
    let inst = SaddleInstance::new(disc, net)?;
    optimal_from(&inst)
}

fn optimal_from(inst: &SaddleInstance) -> Result<DMatrix<f64>> {
    let lu = LuFactor::new(&inst.a)?;
    let mut v = DMatrix::zeros(inst.b.nrows(), inst.b.ncols());
    for j in 0..inst.b.ncols() {
        v.set_column(j, &lu.solve_transpose(&inst.b.column(j).into_owned()));
    }
    Ok(v)
}

/// `max_j |b(u, v_j) - f(v_j)|` over the optimal test functions, for given
/// trial coefficients `u` (not necessarily the solution).
pub fn pg_defect(disc: &Discretization, net: &ShallowNet, u: &DVector<f64>) -> Result<f64> {
    let inst = SaddleInstance::new(disc, net)?;
    let v = optimal_from(&inst)?;
    Ok(pg_defect_from(&inst, &v, u))
}

fn pg_defect_from(inst: &SaddleInstance, v: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let res = &inst.b * u - &inst.f;
    (v.transpose() * res).amax()
}

pub fn check_pg_equivalence(disc: &Discretization, sol: &StateSolution, net: &ShallowNet) -> Result<f64> {
    pg_defect(disc, net, sol.u.coeffs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub gamma_hat: f64,
    pub l_hat: f64,
    pub pairs: usize,
}

/// Sampled strong-convexity and Lipschitz constants of `∇j`.
///
/// Pairs `(θ, θ')` share the hidden layer and differ in the output weights
/// only, so `ξ` is linear along each pair. Parameters are uniform in
/// `[-2, 2]`; the same seed gives the same pairs for every cost.
pub fn probe_convexity(
    rp: &ReducedProblem,
    n_neurons: usize,
    sample_count: usize,
    seed: u64,
    exec: Execution,
) -> Result<ConvexityProbe> {
    if sample_count == 0 {
        return Err(Error::invalid("sample_count must be positive"));
    }
    let d = rp.disc().problem().dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let net = ShallowNet::new(
            d,
            (0..n_neurons * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..n_neurons).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..n_neurons).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )?;
        let mut p = net.params();
        for k in 0..n_neurons {
            p.0[net.c_offset() + k] = rng.gen_range(-2.0..2.0);
        }
        let other = net.with_params(&p)?;
        pairs.push((net, other));
    }
    let results = parallel::map(exec, &pairs, |(a, b)| -> Result<(f64, f64)> {
        let ga = rp.value_and_gradient(a)?.1;
        let gb = rp.value_and_gradient(b)?.1;
        let dt = diff(&a.params(), &b.params());
        let dg = diff(&ga, &gb);
        let n2 = dt.iter().map(|x| x * x).sum::<f64>();
        let inner = dg.iter().zip(&dt).map(|(x, y)| x * y).sum::<f64>();
        let gn = dg.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok((inner / n2, gn / n2.sqrt()))
    });
    let mut gamma_hat = f64::INFINITY;
    let mut l_hat: f64 = 0.0;
    for r in results {
        let (g, l) = r?;
        gamma_hat = gamma_hat.min(g);
        l_hat = l_hat.max(l);
    }
    Ok(ConvexityProbe { gamma_hat, l_hat, pairs: sample_count })
}

fn diff(a: &ParamVector, b: &ParamVector) -> Vec<f64> {
    a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub solver: SolverKind,
    pub alpha_h: Option<f64>,
    pub beta_h: f64,
    pub c1: f64,
    pub c2: f64,
    pub apriori_margin: f64,
    pub pg_residual: f64,
    pub gamma_hat: Option<f64>,
    pub l_hat: Option<f64>,
    pub infsup_pass: bool,
    pub apriori_pass: bool,
    pub pg_pass: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.infsup_pass && self.apriori_pass && self.pg_pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every instance check at one control.
pub fn verify_instance(disc: &Discretization, net: &ShallowNet) -> Result<VerificationReport> {
    let inst = SaddleInstance::new(disc, net)?;
    let sol = disc.solve(net)?;
    let est = estimate_infsup(&inst.a, &inst.b, &inst.gram_trial, &inst.gram_test)?;
    let (c1, c2) = norm_equivalence(&inst.a, &inst.gram_test)?;
    let ap = apriori_from(&inst, sol.u.coeffs(), c1, c2, est.beta_h)?;
    let v = optimal_from(&inst)?;
    let pg = pg_defect_from(&inst, &v, sol.u.coeffs());
    let tiny = crate::state::STABILITY_TOLERANCE;
    Ok(VerificationReport {
        solver: disc.kind(),
        alpha_h: est.alpha_h,
        beta_h: est.beta_h,
        c1,
        c2,
        apriori_margin: ap.margin,
        pg_residual: pg,
        gamma_hat: None,
        l_hat: None,
        infsup_pass: est.beta_h > tiny && est.alpha_h.is_none_or(|a| a > tiny),
        // relative slack for rounding in the norms
        apriori_pass: ap.margin >= -1e-12 * ap.bound.max(1.0),
        pg_pass: pg <= PG_TOLERANCE,
    })
}
