//! Cost functionals `J = J₁(u_h) + (α/2)‖ξ‖²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::assembly::{BasisTable, IntegrationGrid};
use crate::fem::quadrature::default_rule;
use crate::fem::{FunctionSpace, Point, Shape, SpaceKind};
use crate::nn::{ParamVector, ShallowNet};
use crate::state::solver::accurate_rule;
use crate::state::{Discretization, ProblemSpec, ScalarField, StateSolution};

pub const DEFAULT_L1_SMOOTHING: f64 = 1e-8;

/// A point-value datum `½(u(x₀) - q̄)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDatum {
    pub x0: Point,
    pub target: f64,
}

#[derive(Clone)]
pub enum CostKind {
    /// `Σ ½(u(x₀) - q̄)²`
    PointValue(Vec<PointDatum>),
    /// `½∫ω̄ (f - Bu)²`
    WeightedResidualL2(ScalarField),
    /// `∫|∇u|_ε`; jumps `Σ|[u]|_ε` across interior nodes for P0 in 1D
    TotalVariation,
    /// `∫|f - Bu|_ε`
    ResidualL1,
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::PointValue(d) => f.debug_tuple("PointValue").field(d).finish(),
            CostKind::WeightedResidualL2(_) => f.write_str("WeightedResidualL2"),
            CostKind::TotalVariation => f.write_str("TotalVariation"),
            CostKind::ResidualL1 => f.write_str("ResidualL1"),
        }
    }
}

impl CostKind {
    /// `ω̄(x) = 1 + sin(πx/2)`.
    pub fn default_residual_weight() -> ScalarField {
        Arc::new(|x: Point| 1.0 + (PI * x[0] / 2.0).sin())
    }

    pub fn weighted_residual_l2() -> Self {
        CostKind::WeightedResidualL2(Self::default_residual_weight())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostKind::PointValue(_) => "point_value",
            CostKind::WeightedResidualL2(_) => "weighted_residual_l2",
            CostKind::TotalVariation => "total_variation",
            CostKind::ResidualL1 => "residual_l1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostSpec {
    pub kind: CostKind,
    pub alpha: f64,
    pub epsilon: f64,
}

impl CostSpec {
    pub fn new(kind: CostKind, alpha: f64) -> Self {
        CostSpec { kind, alpha, epsilon: DEFAULT_L1_SMOOTHING }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("smoothing must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// `√(t² + ε²)` and its derivative.
fn smooth_abs(t: f64, eps: f64) -> (f64, f64) {
    let s = (t * t + eps * eps).sqrt();
    (s, t / s)
}

/// A cost bound to one discretization: quadrature tables for `J₁` and the
/// regulariser are built once.
#[derive(Debug, Clone)]
pub struct CostContext {
    spec: CostSpec,
    problem: ProblemSpec,
    trial: Arc<FunctionSpace>,
    grid: IntegrationGrid,
    table: BasisTable,
    f_q: Vec<f64>,
    weight_q: Vec<f64>,
    points: Vec<(Shape, f64)>,
    reg_grid: IntegrationGrid,
}

impl CostContext {
    pub fn new(spec: CostSpec, disc: &Discretization) -> Result<Self> {
        spec.validate()?;
        let trial = disc.trial().clone();
        let mesh = trial.mesh().clone();
        let problem = disc.problem().clone();
        let grid = IntegrationGrid::new(mesh.clone(), &accurate_rule(mesh.dim()))?;
        let table = BasisTable::new(&trial, &grid)?;
        let f_q = grid.points().iter().map(|q| problem.f(q.x)).collect();
        let weight_q = match &spec.kind {
            CostKind::WeightedResidualL2(w) => grid.points().iter().map(|q| w(q.x)).collect(),
            _ => Vec::new(),
        };
        let points = match &spec.kind {
            CostKind::PointValue(data) => data
                .iter()
                .map(|d| {
                    let e = mesh.locate(d.x0).map_err(|_| {
                        Error::invalid(format!("point-value location {:?} outside the domain", d.x0))
                    })?;
                    Ok((trial.shape(e, d.x0), d.target))
                })
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        if matches!(spec.kind, CostKind::TotalVariation) && trial.kind() == SpaceKind::P0 && mesh.dim() != 1 {
            return Err(Error::invalid("total variation of P0 functions is only provided in 1D"));
        }
        let reg_grid = IntegrationGrid::new(mesh.clone(), &default_rule(mesh.dim()))?;
        Ok(CostContext { spec, problem, trial, grid, table, f_q, weight_q, points, reg_grid })
    }

    pub fn spec(&self) -> &CostSpec {
        &self.spec
    }

    /// `J₁(u)` for trial coefficients `u`.
    pub fn j1(&self, u: &[f64]) -> f64 {
        let p = &self.problem;
        let eps = self.spec.epsilon;
        match &self.spec.kind {
            CostKind::PointValue(_) => self
                .points
                .iter()
                .map(|(s, t)| 0.5 * (s.combine(u).value - t).powi(2))
                .sum(),
            CostKind::WeightedResidualL2(_) => {
                let uq = self.table.evaluate(u);
                self.grid.integrate(|q, _| 0.5 * self.weight_q[q] * (self.f_q[q] - p.apply_b(&uq[q])).powi(2))
            }
            CostKind::ResidualL1 => {
                let uq = self.table.evaluate(u);
                self.grid.integrate(|q, _| smooth_abs(self.f_q[q] - p.apply_b(&uq[q]), eps).0)
            }
            CostKind::TotalVariation => {
                if self.trial.kind() == SpaceKind::P0 {
                    u.windows(2).map(|w| smooth_abs(w[1] - w[0], eps).0).sum()
                } else {
                    let uq = self.table.evaluate(u);
                    self.grid.integrate(|q, _| {
                        let g = uq[q].grad;
                        (g[0] * g[0] + g[1] * g[1] + eps * eps).sqrt()
                    })
                }
            }
        }
    }

    /// `∂J₁/∂u`.
    pub fn grad_u(&self, u: &[f64]) -> DVector<f64> {
        let n = self.trial.dim();
        let mut g = DVector::zeros(n);
        let p = &self.problem;
        let eps = self.spec.epsilon;
        let mut scatter = |table: &BasisTable, grid: &IntegrationGrid, density: &dyn Fn(usize, &crate::fem::Jet) -> f64| {
            for (q, pt) in grid.points().iter().enumerate() {
                for (i, phi) in table.shape(q).iter() {
                    g[i] += pt.weight * density(q, phi);
                }
            }
        };
        match &self.spec.kind {
            CostKind::PointValue(_) => {
                for (s, t) in &self.points {
                    let mis = s.combine(u).value - t;
                    for (i, phi) in s.iter() {
                        g[i] += mis * phi.value;
                    }
                }
            }
            CostKind::WeightedResidualL2(_) => {
                let uq = self.table.evaluate(u);
                scatter(&self.table, &self.grid, &|q, phi| {
                    -self.weight_q[q] * (self.f_q[q] - p.apply_b(&uq[q])) * p.apply_b(phi)
                });
            }
            CostKind::ResidualL1 => {
                let uq = self.table.evaluate(u);
                scatter(&self.table, &self.grid, &|q, phi| {
                    -smooth_abs(self.f_q[q] - p.apply_b(&uq[q]), eps).1 * p.apply_b(phi)
                });
            }
            CostKind::TotalVariation => {
                if self.trial.kind() == SpaceKind::P0 {
                    for e in 0..n.saturating_sub(1) {
                        let d = smooth_abs(u[e + 1] - u[e], eps).1;
                        g[e + 1] += d;
                        g[e] -= d;
                    }
                } else {
                    let uq = self.table.evaluate(u);
                    scatter(&self.table, &self.grid, &|q, phi| {
                        let gr = uq[q].grad;
                        let s = (gr[0] * gr[0] + gr[1] * gr[1] + eps * eps).sqrt();
                        (gr[0] * phi.grad[0] + gr[1] * phi.grad[1]) / s
                    });
                }
            }
        }
        g
    }

    /// `‖ξ‖²_{L²}` by quadrature on the trial mesh.
    pub fn xi_l2_squared(&self, net: &ShallowNet) -> f64 {
        self.reg_grid.integrate(|_, x| net.eval(x).powi(2))
    }

    pub fn regularizer(&self, net: &ShallowNet) -> f64 {
        0.5 * self.spec.alpha * self.xi_l2_squared(net)
    }

    /// `α ∫ξ ∂ξ/∂θ`.
    pub fn grad_xi_reg(&self, net: &ShallowNet) -> ParamVector {
        let mut g = vec![0.0; net.n_params()];
        if self.spec.alpha == 0.0 {
            return ParamVector(g);
        }
        for q in self.reg_grid.points() {
            let s = self.spec.alpha * q.weight * net.eval(q.x);
            net.accumulate_param_gradient(q.x, s, [0.0; 2], &mut g);
        }
        ParamVector(g)
    }

    pub fn eval(&self, sol: &StateSolution, net: &ShallowNet) -> f64 {
        self.j1(sol.u.coeffs().as_slice()) + self.regularizer(net)
    }
}

pub fn cost_eval(ctx: &CostContext, sol: &StateSolution, xi: &ShallowNet) -> f64 {
    ctx.eval(sol, xi)
}

pub fn cost_grad_u(ctx: &CostContext, sol: &StateSolution) -> DVector<f64> {
    ctx.grad_u(sol.u.coeffs().as_slice())
}

pub fn cost_grad_xi_reg(ctx: &CostContext, xi: &ShallowNet) -> ParamVector {
    ctx.grad_xi_reg(xi)
}
