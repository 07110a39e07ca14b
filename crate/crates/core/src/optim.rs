//! Reduced cost, adjoint gradient and the quasi-minimisation loop over
//! shallow networks with a fixed number of neurons.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostContext, CostSpec};
use crate::error::{Error, Result};
use crate::nn::{ParamVector, ShallowNet};
use crate::parallel::{self, Execution};
use crate::state::{Discretization, StateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientDescent,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_iters: usize,
    /// Stop once `‖∇j‖ ≤ grad_tolerance`.
    pub grad_tolerance: f64,
    pub seed: u64,
    pub trace_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            method: Method::Adam,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_iters: 500,
            grad_tolerance: 1e-10,
            seed: 0,
            trace_every: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.trace_every == 0 {
            return Err(Error::invalid("trace_every must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return Err(Error::invalid("adam parameters out of range"));
        }
        if !(self.grad_tolerance >= 0.0) {
            return Err(Error::invalid("grad_tolerance must be nonnegative"));
        }
        Ok(())
    }

    /// Seeded random network.
    pub fn initial_net(&self, input_dim: usize, n_neurons: usize) -> Result<ShallowNet> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        ShallowNet::random(input_dim, n_neurons, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub cost: f64,
    pub best_cost: f64,
    pub grad_norm: f64,
    pub xi_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Best net seen, not the last iterate.
    pub final_net: ShallowNet,
    pub initial_cost: f64,
    pub best_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

impl TrainTrace {
    /// `iter,cost,grad_norm,xi_l2`, with `cost` the best-seen envelope.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,cost,grad_norm,xi_l2")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{:e},{:e}", r.iter, r.best_cost, r.grad_norm, r.xi_l2)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// `j(ξ) = J₁(S_h(ξ)) + (α/2)‖ξ‖²` on a fixed discretisation.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    disc: Discretization,
    cost: CostContext,
}

impl ReducedProblem {
    pub fn new(disc: Discretization, cost: CostSpec) -> Result<Self> {
        let cost = CostContext::new(cost, &disc)?;
        Ok(ReducedProblem { disc, cost })
    }

    pub fn disc(&self) -> &Discretization {
        &self.disc
    }

    pub fn cost(&self) -> &CostContext {
        &self.cost
    }

    pub fn evaluate(&self, net: &ShallowNet) -> Result<(f64, StateSolution)> {
        let sol = self.disc.solve(net)?;
        Ok((self.cost.eval(&sol, net), sol))
    }

    pub fn cost_value(&self, net: &ShallowNet) -> Result<f64> {
        Ok(self.evaluate(net)?.0)
    }

    /// `j` and `∇_θ j` from one state solve and one adjoint solve.
    pub fn value_and_gradient(&self, net: &ShallowNet) -> Result<(f64, ParamVector)> {
        let (j, sol) = self.evaluate(net)?;
        let g = self.gradient_at(&sol, net)?;
        Ok((j, g))
    }

    pub fn gradient_at(&self, sol: &StateSolution, net: &ShallowNet) -> Result<ParamVector> {
        let g_u = self.cost.grad_u(sol.u.coeffs().as_slice());
        let mut g = if g_u.iter().all(|v| *v == 0.0) {
            ParamVector::zeros(net.n_params())
        } else {
            self.disc.adjoint_gradient(sol, net, &g_u)?
        };
        for (a, b) in g.0.iter_mut().zip(self.cost.grad_xi_reg(net).0) {
            *a += b;
        }
        Ok(g)
    }

    /// Costs of many nets, fanned out according to `exec`.
    pub fn cost_batch(&self, nets: &[ShallowNet], exec: Execution) -> Vec<Result<f64>> {
        parallel::map(exec, nets, |n| self.cost_value(n))
    }

    pub fn gradient_batch(&self, nets: &[ShallowNet], exec: Execution) -> Vec<Result<(f64, ParamVector)>> {
        parallel::map(exec, nets, |n| self.value_and_gradient(n))
    }
}

pub fn reduced_cost(rp: &ReducedProblem, xi: &ShallowNet) -> Result<f64> {
    rp.cost_value(xi)
}

pub fn reduced_gradient(rp: &ReducedProblem, xi: &ShallowNet) -> Result<ParamVector> {
    Ok(rp.value_and_gradient(xi)?.1)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

pub fn quasi_minimize(rp: &ReducedProblem, xi0: &ShallowNet, config: &OptimConfig) -> Result<TrainTrace> {
    config.validate()?;
    let start = Instant::now();
    let mut params = xi0.params();
    let np = params.len();
    let mut adam = Adam { m: vec![0.0; np], v: vec![0.0; np], t: 0 };
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, xi0.clone());
    let mut initial_cost = f64::NAN;
    let mut converged = false;
    let mut last_iter = 0;

    let trace_of = |records: Vec<TraceRecord>, best: (f64, ShallowNet), init: f64, iters: usize, conv: bool| TrainTrace {
        records,
        final_net: best.1,
        initial_cost: init,
        best_cost: best.0,
        iterations: iters,
        converged: conv,
        wall_time_s: start.elapsed().as_secs_f64(),
    };

    for k in 0..=config.max_iters {
        last_iter = k;
        let net = xi0.with_params(&params)?;
        let (j, g) = rp.value_and_gradient(&net)?;
        let gnorm = g.norm();
        if !j.is_finite() || !gnorm.is_finite() {
            let trace = trace_of(records, best, initial_cost, k, false);
            return Err(Error::Diverged { iteration: k, trace: Box::new(trace) });
        }
        if k == 0 {
            initial_cost = j;
        }
        if j < best.0 {
            best = (j, net.clone());
        }
        converged = gnorm <= config.grad_tolerance;
        let done = converged || k == config.max_iters;
        if k % config.trace_every == 0 || done {
            records.push(TraceRecord {
                iter: k,
                cost: j,
                best_cost: best.0,
                grad_norm: gnorm,
                xi_l2: rp.cost.xi_l2_squared(&net).sqrt(),
            });
        }
        if done {
            break;
        }
        match config.method {
            Method::GradientDescent => {
                for (p, gi) in params.0.iter_mut().zip(&g.0) {
                    *p -= config.learning_rate * gi;
                }
            }
            Method::Adam => {
                adam.t += 1;
                let c1 = 1.0 - config.beta1.powi(adam.t);
                let c2 = 1.0 - config.beta2.powi(adam.t);
                for i in 0..np {
                    adam.m[i] = config.beta1 * adam.m[i] + (1.0 - config.beta1) * g.0[i];
                    adam.v[i] = config.beta2 * adam.v[i] + (1.0 - config.beta2) * g.0[i] * g.0[i];
                    let mh = adam.m[i] / c1;
                    let vh = adam.v[i] / c2;
                    params.0[i] -= config.learning_rate * mh / (vh.sqrt() + config.eps_adam);
                }
            }
        }
        if params.0.iter().any(|p| !p.is_finite()) {
            let trace = trace_of(records, best, initial_cost, k + 1, false);
            return Err(Error::Diverged { iteration: k + 1, trace: Box::new(trace) });
        }
    }
    Ok(trace_of(records, best, initial_cost, last_iter, converged))
}

/// Result of checking the quasi-optimal error estimate on synthetic quadratics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub cases: usize,
    pub violations: usize,
    /// Largest `‖ξ̄ - ξ̄_n‖ / bound` over all checked quasi-minimisers.
    pub max_ratio: f64,
    /// Largest disagreement between the closed-form and brute-force infimum
    /// and distance.
    pub oracle_gap: f64,
    pub passed: bool,
}

impl ToyReport {
    fn empty() -> Self {
        ToyReport { cases: 0, violations: 0, max_ratio: 0.0, oracle_gap: 0.0, passed: true }
    }

    fn merge(&mut self, o: &ToyReport) {
        self.cases += o.cases;
        self.violations += o.violations;
        self.max_ratio = self.max_ratio.max(o.max_ratio);
        self.oracle_gap = self.oracle_gap.max(o.oracle_gap);
        self.passed &= o.passed;
    }
}

/// `j(x) = ½(x - x̄)ᵀH(x - x̄)` over the span of `basis`.
#[derive(Debug, Clone)]
pub struct QuadraticInstance {
    pub hessian: DMatrix<f64>,
    pub minimizer: DVector<f64>,
    /// Orthonormal columns spanning the subspace.
    pub basis: DMatrix<f64>,
}

const GRID_PER_AXIS: usize = 41;
const BOUNDARY_SAMPLES: usize = 64;

impl QuadraticInstance {
    /// Eigenvalues of `H` uniform in `[0.5, 5]`.
    pub fn random<R: Rng + ?Sized>(dimension: usize, subspace_dim: usize, rng: &mut R) -> Result<Self> {
        if dimension < 1 || subspace_dim < 1 || subspace_dim > dimension.min(3) {
            return Err(Error::invalid(format!(
                "need 1 <= subspace_dim <= min(3, dimension), got {subspace_dim} and {dimension}"
            )));
        }
        let q = orthonormal(DMatrix::from_fn(dimension, dimension, |_, _| rng.gen_range(-1.0..1.0)));
        let lam = DVector::from_fn(dimension, |_, _| rng.gen_range(0.5..5.0));
        let hessian = &q * DMatrix::from_diagonal(&lam) * q.transpose();
        let minimizer = DVector::from_fn(dimension, |_, _| rng.gen_range(-2.0..2.0));
        let basis = orthonormal(DMatrix::from_fn(dimension, subspace_dim, |_, _| rng.gen_range(-1.0..1.0)));
        Ok(QuadraticInstance { hessian: (&hessian + hessian.transpose()) * 0.5, minimizer, basis })
    }

    pub fn j(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.minimizer;
        0.5 * e.dot(&(&self.hessian * &e))
    }

    /// `(γ, L)`.
    pub fn constants(&self) -> (f64, f64) {
        let ev = SymmetricEigen::new(self.hessian.clone()).eigenvalues;
        (ev.min(), ev.max())
    }

    /// Minimiser coefficients of `j` on the subspace and the infimum.
    pub fn subspace_minimum(&self) -> Result<(DVector<f64>, f64)> {
        let v = &self.basis;
        let hr = v.transpose() * &self.hessian * v;
        let rhs = v.transpose() * &self.hessian * &self.minimizer;
        let a = crate::linalg::dense_solve(&hr, &rhs)?;
        let inf = self.j(&(v * &a));
        Ok((a, inf))
    }

    pub fn distance_squared(&self) -> f64 {
        let proj = &self.basis * (self.basis.transpose() * &self.minimizer);
        (&self.minimizer - proj).norm_squared()
    }

    /// Checks the estimate for every quasi-minimiser found by enumerating
    /// a coefficient grid over each `δ`-sublevel set, plus samples on its
    /// boundary.
    pub fn check(&self, deltas: &[f64]) -> Result<ToyReport> {
        let (gamma, l) = self.constants();
        let (a_star, inf) = self.subspace_minimum()?;
        let dist2 = self.distance_squared();
        let k = self.basis.ncols();
        let hr = self.basis.transpose() * &self.hessian * &self.basis;
        let hr_min = SymmetricEigen::new(hr.clone()).eigenvalues.min();

        let mut report = ToyReport::empty();
        report.oracle_gap = self.brute_force_gap(&a_star, inf, dist2);

        for &delta in deltas {
            let bound = (l / gamma * dist2 + delta / gamma).sqrt();
            let radius = (delta / hr_min).sqrt();
            let mut candidates: Vec<DVector<f64>> = Vec::new();
            for idx in 0..GRID_PER_AXIS.pow(k as u32) {
                let s = DVector::from_fn(k, |i, _| {
                    let t = (idx / GRID_PER_AXIS.pow(i as u32)) % GRID_PER_AXIS;
                    radius * (2.0 * t as f64 / (GRID_PER_AXIS - 1) as f64 - 1.0)
                });
                candidates.push(s);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(delta.to_bits());
            for _ in 0..BOUNDARY_SAMPLES {
                let dir = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
                let curv = dir.dot(&(&hr * &dir));
                if curv > 0.0 {
                    candidates.push(dir * (delta / curv).sqrt());
                }
            }
            for s in candidates {
                let y = &self.basis * (&a_star + s);
                if self.j(&y) > inf + delta / 2.0 {
                    continue;
                }
                let err = (&y - &self.minimizer).norm();
                let ratio = if bound > 0.0 { err / bound } else if err == 0.0 { 0.0 } else { f64::INFINITY };
                report.cases += 1;
                report.max_ratio = report.max_ratio.max(ratio);
                if ratio > 1.0 + 1e-10 {
                    report.violations += 1;
                }
            }
        }
        report.passed = report.violations == 0 && report.oracle_gap <= 1e-8 && report.cases > 0;
        Ok(report)
    }

    /// Zooming grid search for the infimum of `j` and of `‖x̄ - x‖²` over the
    /// subspace, compared against the closed forms.
    fn brute_force_gap(&self, a_star: &DVector<f64>, inf: f64, dist2: f64) -> f64 {
        let k = self.basis.ncols();
        let search = |f: &dyn Fn(&DVector<f64>) -> f64| -> f64 {
            let mut center = DVector::zeros(k);
            let mut radius = 4.0 * (self.minimizer.norm() + 1.0);
            let mut best = f(&center);
            let n = 21usize;
            for _ in 0..40 {
                let mut best_pt = center.clone();
                for idx in 0..n.pow(k as u32) {
                    let p = DVector::from_fn(k, |i, _| {
                        let t = (idx / n.pow(i as u32)) % n;
                        center[i] + radius * (2.0 * t as f64 / (n - 1) as f64 - 1.0)
                    });
                    let v = f(&p);
                    if v < best {
                        best = v;
                        best_pt = p;
                    }
                }
                center = best_pt;
                radius *= 0.5;
            }
            best
        };
        let j_inf = search(&|a| self.j(&(&self.basis * a)));
        let d_inf = search(&|a| (&self.minimizer - &self.basis * a).norm_squared());
        let closed_j = self.j(&(&self.basis * a_star));
        // the closed forms must not be beaten, and must be reached
        let below = (closed_j - j_inf).max(0.0).max((dist2 - d_inf).max(0.0));
        let above = (j_inf - inf).abs().max((d_inf - dist2).abs());
        below.max(above) / (1.0 + inf.abs().max(dist2))
    }
}

fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    m.qr().q().columns(0, cols).into_owned()
}

/// Runs the quasi-optimality check on one random quadratic in `dimension`
/// variables over a subspace of dimension `min(2, dimension - 1)`, with 100
/// log-uniform `δ ∈ [1e-8, 1]`.
pub fn toy_quasi_optimality_check(dimension: usize, seed: u64) -> Result<ToyReport> {
    if dimension < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = QuadraticInstance::random(dimension, 2.min(dimension - 1), &mut rng)?;
    let deltas: Vec<f64> = (0..100).map(|_| 10f64.powf(rng.gen_range(-8.0..0.0))).collect();
    inst.check(&deltas)
}

/// Aggregates [`toy_quasi_optimality_check`] over `count` seeds.
pub fn toy_quasi_optimality_sweep(dimension: usize, count: usize, seed: u64, exec: Execution) -> Result<ToyReport> {
    let reports = parallel::map_range(exec, count, |i| toy_quasi_optimality_check(dimension, seed.wrapping_add(i as u64)));
    let mut total = ToyReport::empty();
    for r in reports {
        total.merge(&r?);
    }
    Ok(total)
}
