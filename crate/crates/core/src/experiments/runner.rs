use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentName};
use crate::cost::{CostKind, CostSpec, PointDatum};
use crate::error::{Error, Result};
use crate::fem::assembly::IntegrationGrid;
use crate::fem::quadrature::gauss_quadrature_1d;
use crate::fem::{FEFunction, Mesh};
use crate::nn::ShallowNet;
use crate::optim::{quasi_minimize, ReducedProblem, TrainTrace};
use crate::parallel;
use crate::state::solver::accurate_rule;
use crate::state::{Discretization, ProblemSpec, ResidualSpace, SolverKind, SolverOptions};
use crate::verify::{probe_convexity, verify_instance, ConvexityProbe, VerificationReport};
use crate::weight::WeightSpec;

/// Plot samples per element.
pub const SAMPLES_PER_ELEMENT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub trace_path: PathBuf,
    pub solution_path: PathBuf,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub xi_l2: f64,
    pub point_value_error: Option<f64>,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
    /// L¹ error on `x₁ ≤ 1 - h`, away from the outflow boundary.
    pub l1_error_trimmed: Option<f64>,
    /// The same for the `ξ ≡ 0` (constant weight) solution.
    pub baseline_l1_error_trimmed: Option<f64>,
    pub max_overshoot: Option<f64>,
    /// `‖ξ̄ - ξ_n‖_{L²}` where a reference control is known.
    pub xi_error: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub n: Vec<usize>,
    pub error: Vec<f64>,
    pub initial_error: Vec<f64>,
    pub slope: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub runs: Vec<RunSummary>,
    pub convergence: Option<ConvergenceSummary>,
}

impl ExperimentResult {
    pub fn run(&self, label: &str) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One training run of a sweep.
#[derive(Debug, Clone)]
struct RunSpec {
    label: String,
    weight: WeightSpec,
    alpha: f64,
    n_neurons: usize,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Random,
    InterpolateXiBar,
}

/// `ξ̄(x) = -ln(2/(sin(πx/2) + 1/2) - 1)`, for which `ω(ξ̄) = 1 + sin(πx/2)`.
pub fn reference_control(x: f64) -> f64 {
    -(2.0 / ((PI * x / 2.0).sin() + 0.5) - 1.0).ln()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `‖ξ̄ - ξ‖_{L²(0,1)}` by 5-point Gauss on 256 cells.
pub fn reference_control_error(net: &ShallowNet) -> Result<f64> {
    let grid = IntegrationGrid::new(Arc::new(Mesh::interval(256)?), &gauss_quadrature_1d(5)?)?;
    Ok(grid.integrate(|_, x| (net.eval(x) - reference_control(x[0])).powi(2)).sqrt())
}

fn problem_for(cfg: &ExperimentConfig) -> ProblemSpec {
    match cfg.experiment {
        ExperimentName::PointValueLsq | ExperimentName::PointValueMinres | ExperimentName::TotalVariation => {
            ProblemSpec::boundary_layer(cfg.problem.sigma)
        }
        ExperimentName::WeightConvergence => ProblemSpec::sine_advection(),
        ExperimentName::L1Residual1d => ProblemSpec::overconstrained_1d(),
        ExperimentName::L1Residual2d => ProblemSpec::overconstrained_2d(),
    }
}

fn mesh_for(cfg: &ExperimentConfig) -> Result<Arc<Mesh>> {
    let n = cfg.problem.n_elements;
    Ok(Arc::new(match cfg.experiment {
        ExperimentName::L1Residual2d => Mesh::square(n, n)?,
        _ => Mesh::interval(n)?,
    }))
}

fn cost_kind_for(cfg: &ExperimentConfig, problem: &ProblemSpec) -> CostKind {
    match cfg.experiment {
        ExperimentName::PointValueLsq | ExperimentName::PointValueMinres => {
            let h = 1.0 / cfg.problem.n_elements as f64;
            let exact = problem.exact.as_ref().expect("boundary layer has an exact solution");
            CostKind::PointValue(vec![PointDatum { x0: [h, 0.0], target: exact([h, 0.0]) }])
        }
        ExperimentName::WeightConvergence => CostKind::weighted_residual_l2(),
        ExperimentName::TotalVariation => CostKind::TotalVariation,
        ExperimentName::L1Residual1d | ExperimentName::L1Residual2d => CostKind::ResidualL1,
    }
}

fn with_m(w: WeightSpec, m: f64) -> WeightSpec {
    match w {
        WeightSpec::LogisticOffset { .. } => WeightSpec::LogisticOffset { m },
        other => other,
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

fn run_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let base = RunSpec {
        label: "base".into(),
        weight: cfg.weight,
        alpha: cfg.cost.alpha,
        n_neurons: cfg.network.n_neurons,
        init: Init::Random,
    };
    if cfg.experiment == ExperimentName::WeightConvergence {
        return cfg
            .sweep
            .n
            .iter()
            .map(|&n| RunSpec { label: format!("n_{n}"), n_neurons: n, init: Init::InterpolateXiBar, ..base.clone() })
            .collect();
    }
    let mut specs = Vec::new();
    for &m in &cfg.sweep.m {
        specs.push(RunSpec { label: format!("M_{}", fmt_value(m)), weight: with_m(cfg.weight, m), ..base.clone() });
    }
    for &a in &cfg.sweep.alpha {
        specs.push(RunSpec { label: format!("alpha_{}", fmt_value(a)), alpha: a, ..base.clone() });
    }
    if specs.is_empty() {
        specs.push(base);
    }
    specs
}

struct Errors {
    l1: f64,
    l2: f64,
    l1_trimmed: f64,
}

fn solution_errors(u: &FEFunction, problem: &ProblemSpec, h: f64) -> Result<Option<Errors>> {
    let Some(exact) = problem.exact.as_ref() else { return Ok(None) };
    let mesh = u.space().mesh().clone();
    let grid = IntegrationGrid::new(mesh.clone(), &accurate_rule(mesh.dim()))?;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut l1t = 0.0;
    for q in grid.points() {
        let d = (u.jet_in(q.element, q.x).value - exact(q.x)).abs();
        l1 += q.weight * d;
        l2 += q.weight * d * d;
        if q.x[0] <= 1.0 - h + 1e-12 {
            l1t += q.weight * d;
        }
    }
    Ok(Some(Errors { l1, l2: l2.sqrt(), l1_trimmed: l1t }))
}

fn write_solution(path: &Path, u: &FEFunction, problem: &ProblemSpec) -> Result<f64> {
    let mesh = u.space().mesh();
    let dim = mesh.dim();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", if dim == 1 { "x,u_h,u_exact" } else { "x,y,u_h,u_exact" })?;
    let mut max_uh = f64::NEG_INFINITY;
    for p in mesh.sample_points(SAMPLES_PER_ELEMENT) {
        let uh = u.eval(p)?;
        max_uh = max_uh.max(uh);
        let ex = problem.exact.as_ref().map_or(f64::NAN, |f| f(p));
        if dim == 1 {
            writeln!(w, "{:e},{:e},{:e}", p[0], uh, ex)?;
        } else {
            writeln!(w, "{:e},{:e},{:e},{:e}", p[0], p[1], uh, ex)?;
        }
    }
    w.flush()?;
    Ok(max_uh)
}

fn initial_net(cfg: &ExperimentConfig, spec: &RunSpec, dim: usize) -> Result<ShallowNet> {
    match spec.init {
        Init::Random => {
            let opt = crate::optim::OptimConfig { seed: cfg.seed, ..cfg.optimizer.clone() };
            opt.initial_net(dim, spec.n_neurons)
        }
        Init::InterpolateXiBar => ShallowNet::interpolate_1d(spec.n_neurons, reference_control),
    }
}

fn execute_run(cfg: &ExperimentConfig, spec: &RunSpec, dir: &Path) -> Result<(RunSummary, TrainTrace)> {
    let problem = problem_for(cfg);
    let mesh = mesh_for(cfg)?;
    let h = mesh.h();
    let disc = Discretization::new(problem.clone(), spec.weight, cfg.problem.solver, mesh, SolverOptions::default())?;
    let kind = cost_kind_for(cfg, &problem);
    let point = match &kind {
        CostKind::PointValue(d) => d.first().copied(),
        _ => None,
    };
    let mut cost = CostSpec::new(kind, spec.alpha);
    cost.epsilon = cfg.cost.epsilon;
    let rp = ReducedProblem::new(disc, cost)?;
    let net0 = initial_net(cfg, spec, problem.dim)?;
    let optimizer = crate::optim::OptimConfig { seed: cfg.seed, ..cfg.optimizer.clone() };
    let trace = quasi_minimize(&rp, &net0, &optimizer)?;

    std::fs::create_dir_all(dir)?;
    let trace_path = dir.join("trace.csv");
    let solution_path = dir.join("solution.csv");
    trace.save_csv(&trace_path)?;
    let (_, sol) = rp.evaluate(&trace.final_net)?;
    let max_uh = write_solution(&solution_path, &sol.u, &problem)?;
    let errors = solution_errors(&sol.u, &problem, h)?;
    let baseline = rp.disc().solve(&ShallowNet::zeros(problem.dim, spec.n_neurons)?)?;
    let baseline_errors = solution_errors(&baseline.u, &problem, h)?;
    let xi_error = match spec.init {
        Init::InterpolateXiBar => Some(reference_control_error(&trace.final_net)?),
        Init::Random => None,
    };
    let summary = RunSummary {
        label: spec.label.clone(),
        trace_path,
        solution_path,
        initial_cost: trace.initial_cost,
        final_cost: trace.best_cost,
        iterations: trace.iterations,
        converged: trace.converged,
        xi_l2: rp.cost().xi_l2_squared(&trace.final_net).sqrt(),
        point_value_error: match point {
            Some(d) => Some((sol.u.eval(d.x0)? - d.target).abs()),
            None => None,
        },
        l1_error: errors.as_ref().map(|e| e.l1),
        l2_error: errors.as_ref().map(|e| e.l2),
        l1_error_trimmed: errors.as_ref().map(|e| e.l1_trimmed),
        baseline_l1_error_trimmed: baseline_errors.as_ref().map(|e| e.l1_trimmed),
        max_overshoot: problem.exact_sup.map(|s| max_uh - s),
        xi_error,
        wall_time_s: trace.wall_time_s,
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok((summary, trace))
}

/// Runs every sweep point of `cfg`, writing `trace.csv`, `solution.csv` and
/// `summary.json` per run and an aggregated `summary.json` at the top.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let specs = run_specs(cfg);
    let results = parallel::map(cfg.execution, &specs, |s| execute_run(cfg, s, &out.join(&s.label)));
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?.0);
    }
    let convergence = if cfg.experiment == ExperimentName::WeightConvergence {
        let n: Vec<usize> = cfg.sweep.n.clone();
        let error: Vec<f64> = runs.iter().map(|r| r.xi_error.unwrap_or(f64::NAN)).collect();
        let initial_error = n
            .iter()
            .map(|&k| reference_control_error(&ShallowNet::interpolate_1d(k, reference_control)?))
            .collect::<Result<Vec<f64>>>()?;
        let nf: Vec<f64> = n.iter().map(|&k| k as f64).collect();
        let slope = if n.len() >= 2 { loglog_slope(&nf, &error) } else { f64::NAN };
        let path = out.join("convergence.csv");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "n,error,initial_error")?;
        for i in 0..n.len() {
            writeln!(w, "{},{:e},{:e}", n[i], error[i], initial_error[i])?;
        }
        w.flush()?;
        Some(ConvergenceSummary { n, error, initial_error, slope, path })
    } else {
        None
    };
    let result = ExperimentResult { experiment: cfg.experiment, seed: cfg.seed, output_dir: out.clone(), runs, convergence };
    std::fs::write(out.join("summary.json"), result.to_json()?)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub experiment: ExperimentName,
    pub solver: SolverKind,
    pub samples: usize,
    pub min_alpha_h: Option<f64>,
    pub beta_h: f64,
    pub min_c1: f64,
    pub max_c2: f64,
    pub min_apriori_margin: f64,
    pub max_pg_residual: f64,
    pub convexity: Option<ConvexityProbe>,
    pub reports: Vec<VerificationReport>,
    pub passed: bool,
}

/// Verifies the state problem of `cfg` at `verify.samples` random controls.
/// Normal-equation least squares is checked through its mixed form with a
/// discontinuous P1 residual space, which has the same solution.
pub fn run_verification(cfg: &ExperimentConfig) -> Result<VerificationSummary> {
    cfg.validate()?;
    if cfg.verify.samples == 0 {
        return Err(Error::Config("verify.samples must be positive".into()));
    }
    let problem = problem_for(cfg);
    let mesh = mesh_for(cfg)?;
    let (solver, options) = match cfg.problem.solver {
        SolverKind::WeightedLsq | SolverKind::MixedLsq => (
            SolverKind::MixedLsq,
            SolverOptions { residual_space: ResidualSpace::P1Disc, refinement: Some(1), ..SolverOptions::default() },
        ),
        SolverKind::DdMinres => (SolverKind::DdMinres, SolverOptions::default()),
        SolverKind::WeightedGalerkin => {
            return Err(Error::Config("verification covers least squares and dd-minres".into()))
        }
    };
    let disc = Discretization::new(problem.clone(), cfg.weight, solver, mesh.clone(), options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.network.n_neurons;
    let d = problem.dim;
    let nets: Vec<ShallowNet> = (0..cfg.verify.samples)
        .map(|_| {
            ShallowNet::new(
                d,
                (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
        })
        .collect::<Result<_>>()?;
    let reports = parallel::map(cfg.execution, &nets, |net| verify_instance(&disc, net))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let convexity = if cfg.verify.probe_pairs > 0 {
        let lsq = Discretization::new(problem.clone(), cfg.weight, cfg.problem.solver, mesh, SolverOptions::default())?;
        let mut cost = CostSpec::new(cost_kind_for(cfg, &problem), cfg.cost.alpha);
        cost.epsilon = cfg.cost.epsilon;
        let rp = ReducedProblem::new(lsq, cost)?;
        Some(probe_convexity(&rp, n, cfg.verify.probe_pairs, cfg.seed, cfg.execution)?)
    } else {
        None
    };
    let min_alpha_h = reports.iter().filter_map(|r| r.alpha_h).reduce(f64::min);
    Ok(VerificationSummary {
        experiment: cfg.experiment,
        solver,
        samples: reports.len(),
        min_alpha_h,
        beta_h: reports.iter().map(|r| r.beta_h).fold(f64::INFINITY, f64::min),
        min_c1: reports.iter().map(|r| r.c1).fold(f64::INFINITY, f64::min),
        max_c2: reports.iter().map(|r| r.c2).fold(0.0, f64::max),
        min_apriori_margin: reports.iter().map(|r| r.apriori_margin).fold(f64::INFINITY, f64::min),
        max_pg_residual: reports.iter().map(|r| r.pg_residual).fold(0.0, f64::max),
        passed: reports.iter().all(|r| r.passed()),
        convexity,
        reports,
    })
}
