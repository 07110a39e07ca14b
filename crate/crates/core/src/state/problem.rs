use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{Jet, Point};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

const BOUNDARY_TOL: f64 = 1e-12;

/// Which part of the boundary carries a homogeneous essential condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    None,
    /// `x₁ = 0`
    Left,
    /// `x₁ = 1`
    Right,
    /// `x₁ = 0` and `x₁ = 1`
    LeftRight,
    /// the whole boundary
    All,
}

impl Boundary {
    pub fn contains(&self, p: Point, dim: usize) -> bool {
        let at = |v: f64, t: f64| (v - t).abs() <= BOUNDARY_TOL;
        match self {
            Boundary::None => false,
            Boundary::Left => at(p[0], 0.0),
            Boundary::Right => at(p[0], 1.0),
            Boundary::LeftRight => at(p[0], 0.0) || at(p[0], 1.0),
            Boundary::All => (0..dim).any(|k| at(p[k], 0.0) || at(p[k], 1.0)),
        }
    }
}

/// First-order advection–reaction problem `β·∇u + σu - κΔu = f` on the unit
/// interval or square. `κ` is only used by the weighted Galerkin solver.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub beta: [f64; 2],
    pub sigma: f64,
    pub kappa: f64,
    pub forcing: ScalarField,
    /// Essential condition of the trial space.
    pub trial_bc: Boundary,
    /// Essential condition of the discrete test space (dd-minres).
    pub test_bc: Boundary,
    pub exact: Option<ScalarField>,
    /// `sup u` of the exact solution, for the overshoot metric.
    pub exact_sup: Option<f64>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("sigma", &self.sigma)
            .field("kappa", &self.kappa)
            .field("trial_bc", &self.trial_bc)
            .field("test_bc", &self.test_bc)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::invalid(format!("dimension {} not supported", self.dim)));
        }
        if self.sigma < 0.0 || self.kappa < 0.0 {
            return Err(Error::invalid("reaction and diffusion must be nonnegative"));
        }
        if self.kappa == 0.0 && self.beta == [0.0, 0.0] {
            return Err(Error::invalid("pure advection problem with zero advection field"));
        }
        if self.dim == 1 && self.beta[1] != 0.0 {
            return Err(Error::invalid("1D problem with a 2D advection field"));
        }
        Ok(())
    }

    /// `Bw = β·∇w + σw` from a value/gradient jet.
    pub fn apply_b(&self, w: &Jet) -> f64 {
        w.dot_grad(self.beta) + self.sigma * w.value
    }

    /// Formal adjoint `σv - β·∇v`.
    pub fn apply_b_adjoint(&self, v: &Jet) -> f64 {
        self.sigma * v.value - v.dot_grad(self.beta)
    }

    pub fn f(&self, x: Point) -> f64 {
        (self.forcing)(x)
    }

    /// `u' + σu = σ` with `u(0) = 0`; exact solution `1 - e^{-σx}`.
    pub fn boundary_layer(sigma: f64) -> Self {
        ProblemSpec {
            name: format!("boundary_layer(sigma={sigma})"),
            dim: 1,
            beta: [1.0, 0.0],
            sigma,
            kappa: 0.0,
            forcing: Arc::new(move |_| sigma),
            trial_bc: Boundary::Left,
            test_bc: Boundary::Right,
            exact: Some(Arc::new(move |x| 1.0 - (-sigma * x[0]).exp())),
            exact_sup: Some(1.0),
        }
    }

    /// `u' = π sin(πx)`, `u(0) = 0`; exact solution `1 - cos(πx)`.
    pub fn sine_advection() -> Self {
        ProblemSpec {
            name: "sine_advection".into(),
            dim: 1,
            beta: [1.0, 0.0],
            sigma: 0.0,
            kappa: 0.0,
            forcing: Arc::new(|x| PI * (PI * x[0]).sin()),
            trial_bc: Boundary::Left,
            test_bc: Boundary::Right,
            exact: Some(Arc::new(|x| 1.0 - (PI * x[0]).cos())),
            exact_sup: Some(2.0),
        }
    }

    /// `u' + u = 1` with both `u(0) = 0` and `u(1) = 0`. The reference
    /// solution `1 - e^{-x}` only satisfies the inflow condition.
    pub fn overconstrained_1d() -> Self {
        ProblemSpec {
            name: "overconstrained_1d".into(),
            dim: 1,
            beta: [1.0, 0.0],
            sigma: 1.0,
            kappa: 0.0,
            forcing: Arc::new(|_| 1.0),
            trial_bc: Boundary::LeftRight,
            test_bc: Boundary::Right,
            exact: Some(Arc::new(|x| 1.0 - (-x[0]).exp())),
            exact_sup: Some(1.0 - (-1.0f64).exp()),
        }
    }

    /// `∂u/∂x₁ + u = 1` on the unit square with `u = 0` on `x₁ = 0` and
    /// `x₁ = 1`; reference `1 - e^{-x₁}`.
    pub fn overconstrained_2d() -> Self {
        ProblemSpec {
            name: "overconstrained_2d".into(),
            dim: 2,
            beta: [1.0, 0.0],
            sigma: 1.0,
            kappa: 0.0,
            forcing: Arc::new(|_| 1.0),
            trial_bc: Boundary::LeftRight,
            test_bc: Boundary::Right,
            exact: Some(Arc::new(|x| 1.0 - (-x[0]).exp())),
            exact_sup: Some(1.0 - (-1.0f64).exp()),
        }
    }

    /// `u' = 1`, `u(0) = 0`; exact solution `x`.
    pub fn linear_consistency() -> Self {
        ProblemSpec {
            name: "linear_consistency".into(),
            dim: 1,
            beta: [1.0, 0.0],
            sigma: 0.0,
            kappa: 0.0,
            forcing: Arc::new(|_| 1.0),
            trial_bc: Boundary::Left,
            test_bc: Boundary::Right,
            exact: Some(Arc::new(|x| x[0])),
            exact_sup: Some(1.0),
        }
    }

    /// `-u'' = f` with homogeneous conditions at both ends.
    pub fn laplacian(forcing: ScalarField) -> Self {
        ProblemSpec {
            name: "laplacian".into(),
            dim: 1,
            beta: [0.0, 0.0],
            sigma: 0.0,
            kappa: 1.0,
            forcing,
            trial_bc: Boundary::LeftRight,
            test_bc: Boundary::LeftRight,
            exact: None,
            exact_sup: None,
        }
    }

    /// `-κu'' + σu = f` with homogeneous conditions at both ends.
    pub fn reaction_diffusion(kappa: f64, sigma: f64, forcing: ScalarField) -> Self {
        ProblemSpec {
            name: "reaction_diffusion".into(),
            dim: 1,
            beta: [0.0, 0.0],
            sigma,
            kappa,
            forcing,
            trial_bc: Boundary::LeftRight,
            test_bc: Boundary::LeftRight,
            exact: None,
            exact_sup: None,
        }
    }

    /// Same operator and boundary data, different forcing.
    pub fn with_forcing(&self, forcing: ScalarField) -> Self {
        ProblemSpec { forcing, exact: None, exact_sup: None, ..self.clone() }
    }
}
