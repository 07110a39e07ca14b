use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, FailureKind, Result};
use crate::fem::assembly::{assemble_matrix, assemble_vector, BasisTable, IntegrationGrid};
use crate::fem::quadrature::{default_rule, gauss_quadrature_1d, QuadratureRule};
use crate::fem::{FEFunction, FunctionSpace, Jet, Mesh, Point};
use crate::linalg::{self, LuFactor, RANK_TOLERANCE};
use crate::nn::{ParamVector, ShallowNet};
use crate::state::problem::ProblemSpec;
use crate::weight::WeightSpec;

/// Threshold below which an estimated stability constant counts as lost.
pub const STABILITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Weighted least squares, normal equations.
    WeightedLsq,
    /// Weighted least squares as a saddle system with an explicit residual.
    MixedLsq,
    WeightedGalerkin,
    /// Weighted discrete-dual minimal residual.
    DdMinres,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] =
        [SolverKind::WeightedLsq, SolverKind::MixedLsq, SolverKind::WeightedGalerkin, SolverKind::DdMinres];

    /// Refinement of the residual/test mesh relative to the trial mesh.
    pub fn default_refinement(self) -> usize {
        match self {
            SolverKind::WeightedLsq => 1,
            SolverKind::MixedLsq => 4,
            SolverKind::WeightedGalerkin | SolverKind::DdMinres => 2,
        }
    }

    pub fn is_saddle(self) -> bool {
        matches!(self, SolverKind::MixedLsq | SolverKind::DdMinres)
    }
}

/// Residual space of the mixed least-squares form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpace {
    P0,
    P1Disc,
}

/// Inner product on the dd-minres test space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerProduct {
    /// `∫ω ∇r·∇v`
    Seminorm,
    /// `∫ω (∇r·∇v + r v)`
    WeightedH1,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Defaults to order-3 Gauss in 1D and the mid-edge rule in 2D.
    pub quadrature: Option<QuadratureRule>,
    pub refinement: Option<usize>,
    pub residual_space: ResidualSpace,
    pub inner_product: InnerProduct,
    /// Weighted Galerkin: refuse solves whose kernel coercivity is lost.
    pub kernel_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            quadrature: None,
            refinement: None,
            residual_space: ResidualSpace::P0,
            inner_product: InnerProduct::Seminorm,
            kernel_check: true,
        }
    }
}

/// The residual representative `r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    Field(FEFunction),
    /// Values at the integration points (normal-equation least squares).
    Pointwise(Vec<f64>),
}

impl Residual {
    pub fn field(&self) -> Option<&FEFunction> {
        match self {
            Residual::Field(f) => Some(f),
            Residual::Pointwise(_) => None,
        }
    }
}

/// `[[A, B], [Bᵀ, 0]]` for saddle formulations, `K` otherwise.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Size of the residual block (0 for normal-equation systems).
    pub n_residual: usize,
    pub n_trial: usize,
}

impl AssembledSystem {
    pub fn a_block(&self) -> DMatrix<f64> {
        let m = self.n_residual;
        self.matrix.view((0, 0), (m, m)).into_owned()
    }

    pub fn b_block(&self) -> DMatrix<f64> {
        let m = self.n_residual;
        self.matrix.view((0, m), (m, self.n_trial)).into_owned()
    }

    pub fn f_block(&self) -> DVector<f64> {
        self.rhs.rows(0, self.n_residual).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct StateSolution {
    pub kind: SolverKind,
    pub u: FEFunction,
    pub r: Residual,
    pub weight: WeightSpec,
    /// Kernel coercivity estimate (weighted Galerkin only).
    pub kernel_alpha: Option<f64>,
    z: DVector<f64>,
    control: Vec<(f64, [f64; 2])>,
    coeff: Vec<f64>,
    coeff_grad: Vec<[f64; 2]>,
    factor: Arc<LuFactor>,
}

impl StateSolution {
    /// Full unknown vector `(r, u)` (or `u` alone).
    pub fn state_vector(&self) -> &DVector<f64> {
        &self.z
    }

    /// `ξ` and `∇ξ` at the integration points.
    pub fn control_samples(&self) -> &[(f64, [f64; 2])] {
        &self.control
    }

    /// Form coefficient (`ω(ξ)`, or `ϖ(ξ)` for mixed least squares) at the integration points.
    pub fn coefficient_samples(&self) -> &[f64] {
        &self.coeff
    }

    pub fn factor(&self) -> &LuFactor {
        &self.factor
    }
}

#[derive(Debug, Clone)]
struct GalerkinAux {
    fine: Arc<FunctionSpace>,
    fine_tab: BasisTable,
    recon: LuFactor,
    kernel: DMatrix<f64>,
    kernel_whitener: DMatrix<f64>,
}

/// One state problem, with everything that does not depend on `ξ`
/// assembled once.
#[derive(Debug, Clone)]
pub struct Discretization {
    problem: ProblemSpec,
    weight: WeightSpec,
    kind: SolverKind,
    options: SolverOptions,
    trial: Arc<FunctionSpace>,
    test: Option<Arc<FunctionSpace>>,
    grid: IntegrationGrid,
    trial_tab: BasisTable,
    test_tab: Option<BasisTable>,
    f_q: Vec<f64>,
    fixed_matrix: DMatrix<f64>,
    fixed_rhs: DVector<f64>,
    beta_h: Option<f64>,
    galerkin: Option<GalerkinAux>,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn rule_for(mesh: &Mesh, options: &SolverOptions) -> QuadratureRule {
    options.quadrature.clone().unwrap_or_else(|| default_rule(mesh.dim()))
}

impl Discretization {
    /// Builds the default spaces for `kind` on `mesh`: P1 trial (P0 for
    /// dd-minres) and the residual/test space on the refined mesh.
    pub fn new(
        problem: ProblemSpec,
        weight: WeightSpec,
        kind: SolverKind,
        mesh: Arc<Mesh>,
        options: SolverOptions,
    ) -> Result<Self> {
        problem.validate()?;
        if mesh.dim() != problem.dim {
            return Err(Error::invalid(format!("{}D problem on a {}D mesh", problem.dim, mesh.dim())));
        }
        let rho = options.refinement.unwrap_or(kind.default_refinement());
        let fine = if rho == 1 { mesh.clone() } else { Arc::new(mesh.refined(rho)?) };
        let dim = problem.dim;
        let trial_bc = problem.trial_bc;
        let trial = match kind {
            SolverKind::DdMinres => FunctionSpace::p0(mesh.clone()),
            _ => FunctionSpace::p1(mesh.clone(), |p| trial_bc.contains(p, dim)),
        };
        let test = match kind {
            SolverKind::WeightedLsq => None,
            SolverKind::MixedLsq => Some(match options.residual_space {
                ResidualSpace::P0 => FunctionSpace::p0(fine),
                ResidualSpace::P1Disc => FunctionSpace::p1_disc(fine),
            }),
            SolverKind::DdMinres => {
                let bc = problem.test_bc;
                Some(FunctionSpace::p1(fine, |p| bc.contains(p, dim)))
            }
            SolverKind::WeightedGalerkin => Some(FunctionSpace::p1(fine, |p| trial_bc.contains(p, dim))),
        };
        Self::with_spaces(problem, weight, kind, Arc::new(trial), test.map(Arc::new), options)
    }

    /// Uses caller-provided spaces. `test` is the residual space of the
    /// saddle formulations and the (nested, finer) reconstruction space of
    /// weighted Galerkin; normal-equation least squares takes none.
    pub fn with_spaces(
        problem: ProblemSpec,
        weight: WeightSpec,
        kind: SolverKind,
        trial: Arc<FunctionSpace>,
        test: Option<Arc<FunctionSpace>>,
        options: SolverOptions,
    ) -> Result<Self> {
        problem.validate()?;
        weight.validate()?;
        let rule = rule_for(trial.mesh(), &options);
        let grid = match (&test, kind) {
            (None, SolverKind::WeightedLsq) => {
                IntegrationGrid::for_spaces(&[&trial], options.refinement.unwrap_or(1), &rule)?
            }
            (Some(t), SolverKind::MixedLsq | SolverKind::DdMinres | SolverKind::WeightedGalerkin) => {
                IntegrationGrid::for_spaces(&[&trial, t], 1, &rule)?
            }
            _ => return Err(Error::invalid(format!("{kind:?} called with the wrong set of spaces"))),
        };
        let trial_tab = BasisTable::new(&trial, &grid)?;
        let test_tab = test.as_ref().map(|t| BasisTable::new(t, &grid)).transpose()?;
        let f_q = grid.points().iter().map(|q| problem.f(q.x)).collect();
        let mut d = Discretization {
            problem,
            weight,
            kind,
            options,
            trial,
            test,
            grid,
            trial_tab,
            test_tab,
            f_q,
            fixed_matrix: DMatrix::zeros(0, 0),
            fixed_rhs: DVector::zeros(0),
            beta_h: None,
            galerkin: None,
        };
        d.assemble_fixed();
        if kind == SolverKind::DdMinres {
            let beta = d.minres_infsup()?;
            if beta < STABILITY_TOLERANCE {
                return Err(Error::failure(
                    FailureKind::InfSupViolated,
                    format!("discrete inf-sup constant {beta:.3e} below {STABILITY_TOLERANCE:.0e}"),
                ));
            }
            d.beta_h = Some(beta);
        }
        if kind == SolverKind::WeightedGalerkin {
            d.galerkin = Some(d.galerkin_aux()?);
        }
        Ok(d)
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn trial(&self) -> &Arc<FunctionSpace> {
        &self.trial
    }

    pub fn test(&self) -> Option<&Arc<FunctionSpace>> {
        self.test.as_ref()
    }

    pub fn grid(&self) -> &IntegrationGrid {
        &self.grid
    }

    pub fn trial_table(&self) -> &BasisTable {
        &self.trial_tab
    }

    pub fn test_table(&self) -> Option<&BasisTable> {
        self.test_tab.as_ref()
    }

    pub fn forcing_samples(&self) -> &[f64] {
        &self.f_q
    }

    /// Inf-sup constant of `b` (dd-minres), computed at construction.
    pub fn beta_h(&self) -> Option<f64> {
        self.beta_h
    }

    pub fn n_residual(&self) -> usize {
        if self.kind.is_saddle() {
            self.test.as_ref().map_or(0, |t| t.dim())
        } else {
            0
        }
    }

    pub fn system_dim(&self) -> usize {
        self.n_residual() + self.trial.dim()
    }

    /// Returns a copy with a different weight map.
    pub fn with_weight(&self, weight: WeightSpec) -> Result<Self> {
        weight.validate()?;
        Ok(Discretization { weight, ..self.clone() })
    }

    /// `(c, c', c'')` of the form coefficient as a function of `ξ`.
    fn coefficient(&self, s: f64) -> (f64, f64, f64) {
        let w = &self.weight;
        match self.kind {
            SolverKind::MixedLsq => (w.inv(s), w.inv_deriv(s), w.inv_second_deriv(s)),
            _ => (w.eval(s), w.deriv(s), w.second_deriv(s)),
        }
    }

    pub fn sample_control(&self, net: &ShallowNet) -> Result<Vec<(f64, [f64; 2])>> {
        if net.input_dim() != self.problem.dim {
            return Err(Error::invalid(format!(
                "{}-input network for a {}D problem",
                net.input_dim(),
                self.problem.dim
            )));
        }
        Ok(self.grid.points().iter().map(|q| net.eval_jet(q.x)).collect())
    }

    fn coefficient_fields(&self, control: &[(f64, [f64; 2])]) -> (Vec<f64>, Vec<[f64; 2]>) {
        control
            .iter()
            .map(|(s, g)| {
                let (c, c1, _) = self.coefficient(*s);
                (c, [c1 * g[0], c1 * g[1]])
            })
            .unzip()
    }

    fn embed(&self, block: DMatrix<f64>, rhs: Option<DVector<f64>>) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.system_dim();
        let m = self.n_residual();
        let mut s = DMatrix::zeros(n, n);
        s.view_mut((0, 0), block.shape()).copy_from(&block);
        let mut f = DVector::zeros(n);
        if let Some(r) = rhs {
            f.rows_mut(0, r.len()).copy_from(&r);
        }
        debug_assert!(m + self.trial.dim() == n);
        (s, f)
    }

    /// The `ξ`-dependent part of the system. Linear in the coefficient
    /// samples `c` and their gradients `cx`, so it also yields derivatives.
    fn weighted_part(&self, c: &[f64], cx: &[[f64; 2]]) -> (DMatrix<f64>, DVector<f64>) {
        let p = &self.problem;
        let (g, tu) = (&self.grid, &self.trial_tab);
        let f = &self.f_q;
        match self.kind {
            SolverKind::WeightedLsq => {
                let k = assemble_matrix(g, tu, tu, |q, u, v| c[q] * p.apply_b(u) * p.apply_b(v));
                let r = assemble_vector(g, tu, |q, v| c[q] * f[q] * p.apply_b(v));
                (k, r)
            }
            SolverKind::WeightedGalerkin => {
                let kap = p.kappa;
                let k = assemble_matrix(g, tu, tu, |q, u, v| {
                    let diff = if kap != 0.0 {
                        kap * (c[q] * dot(u.grad, v.grad) + v.value * dot(u.grad, cx[q]))
                    } else {
                        0.0
                    };
                    diff + p.apply_b(u) * c[q] * v.value
                });
                let r = assemble_vector(g, tu, |q, v| c[q] * f[q] * v.value);
                (k, r)
            }
            SolverKind::MixedLsq => {
                let tv = self.test_tab.as_ref().expect("saddle kinds have a test table");
                let a = assemble_matrix(g, tv, tv, |q, r, v| c[q] * r.value * v.value);
                self.embed(a, None)
            }
            SolverKind::DdMinres => {
                let tv = self.test_tab.as_ref().expect("saddle kinds have a test table");
                let full = self.options.inner_product == InnerProduct::WeightedH1;
                let a = assemble_matrix(g, tv, tv, |q, r, v| {
                    let mass = if full { r.value * v.value } else { 0.0 };
                    c[q] * (dot(r.grad, v.grad) + mass)
                });
                self.embed(a, None)
            }
        }
    }

    /// `b(w, v)` between trial basis `w` and test basis `v` for the saddle kinds.
    fn coupling_kernel(&self, u: &Jet, v: &Jet) -> f64 {
        match self.kind {
            SolverKind::DdMinres => u.value * self.problem.apply_b_adjoint(v),
            _ => self.problem.apply_b(u) * v.value,
        }
    }

    fn assemble_fixed(&mut self) {
        let n = self.system_dim();
        self.fixed_matrix = DMatrix::zeros(n, n);
        self.fixed_rhs = DVector::zeros(n);
        if !self.kind.is_saddle() {
            return;
        }
        let tv = self.test_tab.as_ref().expect("saddle kinds have a test table");
        let m = tv.dim();
        let b = assemble_matrix(&self.grid, &self.trial_tab, tv, |_, u, v| self.coupling_kernel(u, v));
        let f = assemble_vector(&self.grid, tv, |q, v| self.f_q[q] * v.value);
        self.fixed_matrix.view_mut((0, m), b.shape()).copy_from(&b);
        self.fixed_matrix.view_mut((m, 0), (b.ncols(), b.nrows())).copy_from(&b.transpose());
        self.fixed_rhs.rows_mut(0, m).copy_from(&f);
    }

    /// Unweighted Gram matrices `(G_V, G_U)` of the test and trial norms for
    /// the saddle kinds: for dd-minres the (semi-)H¹ test norm and L² trial
    /// norm, for mixed least squares the L² test norm and graph trial norm.
    pub fn saddle_grams(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let tv = self.test_tab.as_ref()?;
        match self.kind {
            SolverKind::DdMinres => {
                let full = self.options.inner_product == InnerProduct::WeightedH1;
                let gv = assemble_matrix(&self.grid, tv, tv, |_, r, v| {
                    dot(r.grad, v.grad) + if full { r.value * v.value } else { 0.0 }
                });
                let gu = assemble_matrix(&self.grid, &self.trial_tab, &self.trial_tab, |_, u, v| u.value * v.value);
                Some((gv, gu))
            }
            SolverKind::MixedLsq => {
                let p = &self.problem;
                let gv = assemble_matrix(&self.grid, tv, tv, |_, r, v| r.value * v.value);
                let gu = assemble_matrix(&self.grid, &self.trial_tab, &self.trial_tab, |_, u, v| {
                    u.value * v.value + p.apply_b(u) * p.apply_b(v)
                });
                Some((gv, gu))
            }
            _ => None,
        }
    }

    fn minres_infsup(&self) -> Result<f64> {
        let (gv, gu) = self.saddle_grams().expect("dd-minres");
        let m = self.n_residual();
        let b = self.fixed_matrix.view((0, m), (m, self.trial.dim())).into_owned();
        let whitened = linalg::inv_sqrt_spd(&gv)? * b * linalg::inv_sqrt_spd(&gu)?;
        Ok(linalg::min_singular_value(&whitened))
    }

    fn galerkin_aux(&self) -> Result<GalerkinAux> {
        let fine = self.test.clone().expect("weighted Galerkin has a reconstruction space");
        let fine_tab = self.test_tab.clone().expect("weighted Galerkin has a reconstruction table");
        let p = &self.problem;
        let kap = p.kappa;
        let bform = |u: &Jet, v: &Jet| kap * dot(u.grad, v.grad) + p.apply_b(u) * v.value;
        // rows: test function v, columns: unknown r; entry b(v, r)
        let recon_mat = assemble_matrix(&self.grid, &fine_tab, &fine_tab, |_, r, v| bform(v, r));
        let recon = LuFactor::new(&recon_mat).map_err(|e| {
            Error::failure(FailureKind::SingularSystem, format!("residual reconstruction: {e}"))
        })?;
        let coupling = assemble_matrix(&self.grid, &self.trial_tab, &fine_tab, |_, u, v| bform(u, v));
        let kernel = linalg::left_kernel_basis(&coupling, RANK_TOLERANCE);
        let gram = assemble_matrix(&self.grid, &fine_tab, &fine_tab, |_, u, v| {
            dot(u.grad, v.grad) + u.value * v.value
        });
        let kernel_whitener = if kernel.ncols() > 0 {
            linalg::inv_sqrt_spd(&(kernel.transpose() * gram * &kernel))?
        } else {
            DMatrix::zeros(0, 0)
        };
        Ok(GalerkinAux { fine, fine_tab, recon, kernel, kernel_whitener })
    }

    /// Weighted Galerkin kernel coercivity: the smallest `|λ|` of the
    /// symmetric part of `b(ϖv, v)` on the discrete kernel, whitened by the
    /// H¹ Gram; 0 when the eigenvalues change sign. `None` for a trivial kernel.
    pub fn kernel_coercivity(&self, c: &[f64], cx: &[[f64; 2]]) -> Result<Option<f64>> {
        let aux = self.galerkin.as_ref().ok_or_else(|| Error::invalid("not a weighted Galerkin discretization"))?;
        if aux.kernel.ncols() == 0 {
            return Ok(None);
        }
        let p = &self.problem;
        let kap = p.kappa;
        let form = assemble_matrix(&self.grid, &aux.fine_tab, &aux.fine_tab, |q, w, v| {
            // w ↦ ϖ w with ϖ = 1/c, ∇ϖ = -cx/c²
            let vp = 1.0 / c[q];
            let vpx = [-cx[q][0] * vp * vp, -cx[q][1] * vp * vp];
            let g = [vp * w.grad[0] + vpx[0] * w.value, vp * w.grad[1] + vpx[1] * w.value];
            let weighted = Jet::new(vp * w.value, g);
            kap * dot(weighted.grad, v.grad) + p.apply_b(&weighted) * v.value
        });
        let restricted = aux.kernel.transpose() * linalg::sym_part(&form) * &aux.kernel;
        let h = &aux.kernel_whitener * restricted * &aux.kernel_whitener;
        let eig = nalgebra::SymmetricEigen::new(linalg::sym_part(&h)).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        Ok(Some(if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        }))
    }

    /// Right-hand side of the Galerkin residual reconstruction,
    /// `f(ωv) - b(u, ωv)` tested with fine basis functions `v`.
    fn galerkin_recon_rhs(&self, u: &[f64], with_f: bool, c: &[f64], cx: &[[f64; 2]]) -> DVector<f64> {
        let aux = self.galerkin.as_ref().expect("weighted Galerkin");
        let uq = self.trial_tab.evaluate(u);
        let p = &self.problem;
        let kap = p.kappa;
        assemble_vector(&self.grid, &aux.fine_tab, |q, v| {
            let fpart = if with_f { self.f_q[q] } else { 0.0 };
            let uj = &uq[q];
            c[q] * (fpart - p.apply_b(uj)) * v.value
                - kap * (c[q] * dot(uj.grad, v.grad) + v.value * dot(uj.grad, cx[q]))
        })
    }

    /// Assembles the full system at `net`.
    pub fn assemble(&self, net: &ShallowNet) -> Result<AssembledSystem> {
        let control = self.sample_control(net)?;
        let (c, cx) = self.coefficient_fields(&control);
        let (w, wr) = self.weighted_part(&c, &cx);
        Ok(AssembledSystem {
            matrix: &self.fixed_matrix + w,
            rhs: &self.fixed_rhs + wr,
            n_residual: self.n_residual(),
            n_trial: self.trial.dim(),
        })
    }

    pub fn solve(&self, net: &ShallowNet) -> Result<StateSolution> {
        let control = self.sample_control(net)?;
        let (coeff, coeff_grad) = self.coefficient_fields(&control);
        let mut kernel_alpha = None;
        if self.kind == SolverKind::WeightedGalerkin {
            kernel_alpha = self.kernel_coercivity(&coeff, &coeff_grad)?;
            if self.options.kernel_check {
                if let Some(a) = kernel_alpha {
                    if a <= STABILITY_TOLERANCE {
                        return Err(Error::failure(
                            FailureKind::KernelCoercivityViolated,
                            format!("estimated alpha_h = {a:.3e}"),
                        ));
                    }
                }
            }
        }
        let (w, wr) = self.weighted_part(&coeff, &coeff_grad);
        let s = &self.fixed_matrix + w;
        let rhs = &self.fixed_rhs + wr;
        let factor = LuFactor::new(&s).map_err(|e| {
            let (lo, hi) = (s.abs().min(), s.abs().max());
            Error::failure(FailureKind::SingularSystem, format!("{e}; |entries| in [{lo:.3e}, {hi:.3e}]"))
        })?;
        let z = factor.solve(&rhs);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::failure(FailureKind::SingularSystem, "non-finite state"));
        }
        let (u, r) = self.split(&z, &coeff, &coeff_grad)?;
        Ok(StateSolution {
            kind: self.kind,
            u,
            r,
            weight: self.weight,
            kernel_alpha,
            z,
            control,
            coeff,
            coeff_grad,
            factor: Arc::new(factor),
        })
    }

    fn split(&self, z: &DVector<f64>, c: &[f64], cx: &[[f64; 2]]) -> Result<(FEFunction, Residual)> {
        let m = self.n_residual();
        let u = FEFunction::new(self.trial.clone(), z.rows(m, self.trial.dim()).into_owned())?;
        let r = match self.kind {
            SolverKind::MixedLsq | SolverKind::DdMinres => {
                let test = self.test.clone().expect("saddle kinds have a test space");
                Residual::Field(FEFunction::new(test, z.rows(0, m).into_owned())?)
            }
            SolverKind::WeightedLsq => {
                let uq = self.trial_tab.evaluate(u.coeffs().as_slice());
                Residual::Pointwise(
                    uq.iter().enumerate().map(|(q, j)| c[q] * (self.f_q[q] - self.problem.apply_b(j))).collect(),
                )
            }
            SolverKind::WeightedGalerkin => {
                let aux = self.galerkin.as_ref().expect("weighted Galerkin");
                let rhs = self.galerkin_recon_rhs(u.coeffs().as_slice(), true, c, cx);
                Residual::Field(FEFunction::new(aux.fine.clone(), aux.recon.solve(&rhs))?)
            }
        };
        Ok((u, r))
    }

    /// Derivatives of the coefficient samples along the parameter direction `eta`.
    fn coefficient_derivative(&self, net: &ShallowNet, control: &[(f64, [f64; 2])], eta: &ParamVector) -> (Vec<f64>, Vec<[f64; 2]>) {
        self.grid
            .points()
            .iter()
            .zip(control)
            .map(|(q, (s, g))| {
                let (_, c1, c2) = self.coefficient(*s);
                let (ds, dg) = net.directional(q.x, eta.as_slice());
                (c1 * ds, [c2 * ds * g[0] + c1 * dg[0], c2 * ds * g[1] + c1 * dg[1]])
            })
            .unzip()
    }

    /// Directional derivative `(dr, du)` of the state along parameter
    /// direction `eta`, re-using the state factorization.
    pub fn state_derivative(&self, sol: &StateSolution, net: &ShallowNet, eta: &ParamVector) -> Result<(Residual, FEFunction)> {
        if eta.len() != net.n_params() {
            return Err(Error::invalid(format!("direction of length {} for {} parameters", eta.len(), net.n_params())));
        }
        let (dc, dcx) = self.coefficient_derivative(net, &sol.control, eta);
        let (dw, dwr) = self.weighted_part(&dc, &dcx);
        let rhs = dwr - dw * &sol.z;
        let dz = sol.factor.solve(&rhs);
        let m = self.n_residual();
        let du = FEFunction::new(self.trial.clone(), dz.rows(m, self.trial.dim()).into_owned())?;
        let dr = match self.kind {
            SolverKind::MixedLsq | SolverKind::DdMinres => {
                let test = self.test.clone().expect("saddle kinds have a test space");
                Residual::Field(FEFunction::new(test, dz.rows(0, m).into_owned())?)
            }
            SolverKind::WeightedLsq => {
                let uq = self.trial_tab.evaluate(sol.u.coeffs().as_slice());
                let duq = self.trial_tab.evaluate(du.coeffs().as_slice());
                let p = &self.problem;
                Residual::Pointwise(
                    (0..uq.len())
                        .map(|q| dc[q] * (self.f_q[q] - p.apply_b(&uq[q])) - sol.coeff[q] * p.apply_b(&duq[q]))
                        .collect(),
                )
            }
            SolverKind::WeightedGalerkin => {
                let aux = self.galerkin.as_ref().expect("weighted Galerkin");
                let rhs = self.galerkin_recon_rhs(sol.u.coeffs().as_slice(), true, &dc, &dcx)
                    + self.galerkin_recon_rhs(du.coeffs().as_slice(), false, &sol.coeff, &sol.coeff_grad);
                Residual::Field(FEFunction::new(aux.fine.clone(), aux.recon.solve(&rhs))?)
            }
        };
        Ok((dr, du))
    }

    /// `∇_θ J₁(u_h(θ))` from `g_u = ∂J₁/∂u` with one transposed solve.
    pub fn adjoint_gradient(&self, sol: &StateSolution, net: &ShallowNet, g_u: &DVector<f64>) -> Result<ParamVector> {
        let n = self.trial.dim();
        if g_u.len() != n {
            return Err(Error::invalid(format!("gradient of length {} for {n} trial dofs", g_u.len())));
        }
        let m = self.n_residual();
        let mut rhs = DVector::zeros(m + n);
        rhs.rows_mut(m, n).copy_from(g_u);
        let lambda = sol.factor.solve_transpose(&rhs);
        let p = &self.problem;
        // per-point sensitivities of the weighted part w.r.t. (c, ∇-part)
        let dens: Vec<(f64, [f64; 2])> = match self.kind {
            SolverKind::WeightedLsq => {
                let uq = self.trial_tab.evaluate(sol.u.coeffs().as_slice());
                let lq = self.trial_tab.evaluate(lambda.as_slice());
                (0..uq.len())
                    .map(|q| ((self.f_q[q] - p.apply_b(&uq[q])) * p.apply_b(&lq[q]), [0.0; 2]))
                    .collect()
            }
            SolverKind::MixedLsq => {
                let tv = self.test_tab.as_ref().expect("saddle");
                let rq = tv.evaluate(&sol.z.as_slice()[..m]);
                let lq = tv.evaluate(&lambda.as_slice()[..m]);
                rq.iter().zip(&lq).map(|(r, l)| (-r.value * l.value, [0.0; 2])).collect()
            }
            SolverKind::DdMinres => {
                let tv = self.test_tab.as_ref().expect("saddle");
                let full = self.options.inner_product == InnerProduct::WeightedH1;
                let rq = tv.evaluate(&sol.z.as_slice()[..m]);
                let lq = tv.evaluate(&lambda.as_slice()[..m]);
                rq.iter()
                    .zip(&lq)
                    .map(|(r, l)| {
                        let mass = if full { r.value * l.value } else { 0.0 };
                        (-(dot(r.grad, l.grad) + mass), [0.0; 2])
                    })
                    .collect()
            }
            SolverKind::WeightedGalerkin => {
                let uq = self.trial_tab.evaluate(sol.u.coeffs().as_slice());
                let lq = self.trial_tab.evaluate(lambda.as_slice());
                let kap = p.kappa;
                (0..uq.len())
                    .map(|q| {
                        let (u, l) = (&uq[q], &lq[q]);
                        let value = self.f_q[q] * l.value - kap * dot(u.grad, l.grad) - p.apply_b(u) * l.value;
                        (value, [-kap * u.grad[0] * l.value, -kap * u.grad[1] * l.value])
                    })
                    .collect()
            }
        };
        let mut grad = vec![0.0; net.n_params()];
        for (q, pt) in self.grid.points().iter().enumerate() {
            let (s, xg) = sol.control[q];
            let (_, c1, c2) = self.coefficient(s);
            let (dv, dg) = dens[q];
            let d = pt.weight * (dv * c1 + dot(dg, xg) * c2);
            let e = [pt.weight * dg[0] * c1, pt.weight * dg[1] * c1];
            if d != 0.0 || e != [0.0; 2] {
                net.accumulate_param_gradient(pt.x, d, e, &mut grad);
            }
        }
        Ok(ParamVector(grad))
    }

    /// Largest residual of the constraint `b(w_h, r) = 0` over trial basis
    /// functions `w_h`.
    pub fn constraint_residual(&self, sol: &StateSolution) -> f64 {
        let p = &self.problem;
        let v = match (&sol.r, self.kind) {
            (Residual::Pointwise(r), _) => {
                assemble_vector(&self.grid, &self.trial_tab, |q, w| p.apply_b(w) * r[q])
            }
            (Residual::Field(r), SolverKind::WeightedGalerkin) => {
                let aux = self.galerkin.as_ref().expect("weighted Galerkin");
                let rq = aux.fine_tab.evaluate(r.coeffs().as_slice());
                assemble_vector(&self.grid, &self.trial_tab, |q, w| {
                    p.kappa * dot(w.grad, rq[q].grad) + p.apply_b(w) * rq[q].value
                })
            }
            (Residual::Field(r), _) => {
                let m = self.n_residual();
                let b = self.fixed_matrix.view((0, m), (m, self.trial.dim()));
                b.transpose() * r.coeffs()
            }
        };
        v.amax()
    }
}

/// Order-5 Gauss in 1D, the degree-4 rule in 2D.
pub fn accurate_rule(dim: usize) -> QuadratureRule {
    if dim == 1 {
        gauss_quadrature_1d(5).expect("order 5 is supported")
    } else {
        crate::fem::quadrature::triangle_degree4()
    }
}

/// Evaluates `f` at the physical points of `grid`.
pub fn sample(grid: &IntegrationGrid, f: impl Fn(Point) -> f64) -> Vec<f64> {
    grid.points().iter().map(|q| f(q.x)).collect()
}
