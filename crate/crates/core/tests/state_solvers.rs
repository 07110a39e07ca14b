use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use neurofem::fem::{FunctionSpace, Mesh};
use neurofem::nn::{ParamVector, ShallowNet};
use neurofem::state::*;
use neurofem::weight::WeightSpec;
use neurofem::{Error, FailureKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ONE: WeightSpec = WeightSpec::Constant { value: 1.0 };

fn line(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::interval(n).unwrap())
}

fn left_p1(n: usize) -> Arc<FunctionSpace> {
    Arc::new(FunctionSpace::p1(line(n), |p| p[0] == 0.0))
}

fn random_net(rng: &mut ChaCha8Rng, n: usize) -> ShallowNet {
    ShallowNet::random(1, n, rng).unwrap()
}

fn admissible_weights() -> Vec<WeightSpec> {
    vec![
        WeightSpec::LogisticOffset { m: 100.0 },
        WeightSpec::LogisticOffset { m: 1.0 },
        WeightSpec::BoundedLogistic,
        WeightSpec::Constant { value: 2.0 },
    ]
}

/// Exact element integrals of the unweighted normal equations for
/// `u' + σu = f` with constant `f` on a uniform mesh, `u(0) = 0`.
fn lsq_oracle(n: usize, sigma: f64, f: f64) -> DVector<f64> {
    let h = 1.0 / n as f64;
    let nodes = n + 1;
    let mut k = DMatrix::zeros(nodes, nodes);
    let mut rhs = DVector::zeros(nodes);
    for e in 0..n {
        let d = [-1.0 / h, 1.0 / h];
        for a in 0..2 {
            // ∫ B φ_a = φ_a' h + σ h/2
            rhs[e + a] += f * (d[a] * h + sigma * h / 2.0);
            for b in 0..2 {
                let mass = if a == b { h / 3.0 } else { h / 6.0 };
                // ∫ φ_a' φ_b = d_a h/2
                let cross = d[a] * h / 2.0 + d[b] * h / 2.0;
                k[(e + a, e + b)] += d[a] * d[b] * h + sigma * cross + sigma * sigma * mass;
            }
        }
    }
    let kr = k.view((1, 1), (n, n)).into_owned();
    let fr = rhs.rows(1, n).into_owned();
    kr.lu().solve(&fr).unwrap()
}

#[test]
fn lsq_unit_weight_matches_independent_normal_equations() {
    let p = ProblemSpec::boundary_layer(160.0);
    let sol = solve_weighted_lsq(&p, &left_p1(16), ONE, &ShallowNet::zeros(1, 4).unwrap()).unwrap();
    let oracle = lsq_oracle(16, 160.0, 160.0);
    let err = (sol.u.coeffs() - &oracle).amax() / oracle.amax();
    assert!(err < 1e-11, "relative error {err}");
}

#[test]
fn every_solver_is_consistent_for_linear_solution() {
    let p = ProblemSpec::linear_consistency();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mesh = line(4);
    let trial = left_p1(4);
    let fine_test = Arc::new(FunctionSpace::p1(Arc::new(mesh.refined(2).unwrap()), |x| x[0] == 1.0));
    let res = Arc::new(FunctionSpace::p0(Arc::new(mesh.refined(4).unwrap())));
    for weight in admissible_weights() {
        for _ in 0..5 {
            let net = random_net(&mut rng, 6);
            let sols = [
                solve_weighted_lsq(&p, &trial, weight, &net).unwrap(),
                solve_mixed_lsq(&p, &trial, &res, weight, &net).unwrap(),
                solve_weighted_galerkin(&p, &trial, weight, &net, false).unwrap(),
                solve_dd_minres(&p, &trial, &fine_test, InnerProduct::Seminorm, weight, &net).unwrap(),
            ];
            for sol in sols {
                for (i, c) in sol.u.coeffs().iter().enumerate() {
                    let x = (i + 1) as f64 / 4.0;
                    assert!((c - x).abs() < 1e-10, "{:?}: {c} vs {x}", sol.kind);
                }
                if let Residual::Field(r) = &sol.r {
                    assert!(r.coeffs().amax() < 1e-10, "{:?}", sol.kind);
                }
                if let Residual::Pointwise(r) = &sol.r {
                    assert!(r.iter().all(|v| v.abs() < 1e-10));
                }
            }
        }
    }
}

#[test]
fn zero_forcing_gives_zero_state() {
    let p = ProblemSpec::boundary_layer(10.0).with_forcing(Arc::new(|_| 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = random_net(&mut rng, 5);
    for kind in SolverKind::ALL {
        let d = Discretization::new(p.clone(), WeightSpec::BoundedLogistic, kind, line(8), SolverOptions::default()).unwrap();
        let sol = d.solve(&net).unwrap();
        assert_eq!(sol.state_vector().amax(), 0.0, "{kind:?}");
    }
}

#[test]
fn mixed_lsq_equals_normal_equations_when_residual_is_representable() {
    let p = ProblemSpec::boundary_layer(10.0);
    let mesh = line(4);
    let trial = Arc::new(FunctionSpace::p1(mesh.clone(), |x| x[0] == 0.0));
    let res = Arc::new(FunctionSpace::p1_disc(mesh));
    let net = ShallowNet::zeros(1, 3).unwrap();
    let a = solve_weighted_lsq(&p, &trial, ONE, &net).unwrap();
    let b = solve_mixed_lsq(&p, &trial, &res, ONE, &net).unwrap();
    assert!((a.u.coeffs() - b.u.coeffs()).amax() < 1e-9);
}

#[test]
fn mixed_lsq_residual_is_weighted_pointwise_residual() {
    let p = ProblemSpec::boundary_layer(10.0);
    let mesh = line(6);
    let opts = SolverOptions { residual_space: ResidualSpace::P1Disc, refinement: Some(1), ..Default::default() };
    let w = WeightSpec::Constant { value: 3.0 };
    let d = Discretization::new(p.clone(), w, SolverKind::MixedLsq, mesh, opts).unwrap();
    let sol = d.solve(&ShallowNet::zeros(1, 2).unwrap()).unwrap();
    let r = sol.r.field().unwrap();
    for q in d.grid().points() {
        let uj = sol.u.jet(q.x).unwrap();
        let expected = 3.0 * (p.f(q.x) - p.apply_b(&uj));
        let got = r.jet_in(q.element, q.x).value;
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }
}

#[test]
fn lsq_solution_minimizes_weighted_residual() {
    let p = ProblemSpec::boundary_layer(160.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = random_net(&mut rng, 8);
    let w = WeightSpec::LogisticOffset { m: 100.0 };
    let d = Discretization::new(p.clone(), w, SolverKind::WeightedLsq, line(16), SolverOptions::default()).unwrap();
    let sol = d.solve(&net).unwrap();
    let functional = |c: &DVector<f64>| {
        let uq = d.trial_table().evaluate(c.as_slice());
        let coeff = sol.coefficient_samples();
        d.grid().integrate(|q, x| 0.5 * coeff[q] * (p.f(x) - p.apply_b(&uq[q])).powi(2))
    };
    let best = functional(sol.u.coeffs());
    for _ in 0..100 {
        let delta = DVector::from_fn(sol.u.coeffs().len(), |_, _| rng.gen_range(-1e-3..1e-3));
        assert!(functional(&(sol.u.coeffs() + delta)) >= best);
    }
}

#[test]
fn constraint_holds_for_every_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in SolverKind::ALL {
        let p = ProblemSpec::boundary_layer(160.0);
        let d = Discretization::new(p, WeightSpec::BoundedLogistic, kind, line(16), SolverOptions::default()).unwrap();
        for _ in 0..5 {
            match d.solve(&random_net(&mut rng, 8)) {
                Ok(sol) => assert!(d.constraint_residual(&sol) < 1e-10, "{kind:?}: {}", d.constraint_residual(&sol)),
                Err(Error::SolverFailure { kind: FailureKind::KernelCoercivityViolated, .. }) => {}
                Err(e) => panic!("{kind:?}: {e}"),
            }
        }
    }
}

/// Classical Galerkin for `u' + u = 1`, `u(0) = 0`, with exact element integrals.
#[test]
fn galerkin_unit_weight_is_classical_galerkin() {
    let n = 8;
    let h = 1.0 / n as f64;
    let mut k = DMatrix::zeros(n + 1, n + 1);
    let mut f = DVector::zeros(n + 1);
    for e in 0..n {
        let d = [-1.0 / h, 1.0 / h];
        for a in 0..2 {
            f[e + a] += h / 2.0;
            for b in 0..2 {
                // ∫ φ_b' φ_a + φ_b φ_a
                k[(e + a, e + b)] += d[b] * h / 2.0 + if a == b { h / 3.0 } else { h / 6.0 };
            }
        }
    }
    let oracle = k.view((1, 1), (n, n)).into_owned().lu().solve(&f.rows(1, n).into_owned()).unwrap();
    let mut p = ProblemSpec::boundary_layer(1.0);
    p.forcing = Arc::new(|_| 1.0);
    let sol = solve_weighted_galerkin(&p, &left_p1(n), ONE, &ShallowNet::zeros(1, 2).unwrap(), true).unwrap();
    assert!((sol.u.coeffs() - oracle).amax() < 1e-12);
}

#[test]
fn galerkin_reaction_diffusion_is_always_solvable() {
    let p = ProblemSpec::reaction_diffusion(0.01, 1.0, Arc::new(|x| 1.0 + x[0]));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let space = Arc::new(FunctionSpace::p1(line(10), |x| x[0] == 0.0 || x[0] == 1.0));
    for _ in 0..20 {
        let sol = solve_weighted_galerkin(&p, &space, WeightSpec::BoundedLogistic, &random_net(&mut rng, 6), false).unwrap();
        assert!(sol.u.coeffs().iter().all(|v| v.is_finite()));
    }
}

/// `ξ = k (x - 1/2)` through two neurons.
fn ramp(k: f64) -> ShallowNet {
    ShallowNet::new(1, vec![1.0, -1.0], vec![-0.5, 0.5], vec![k, -k]).unwrap()
}

#[test]
fn steep_weight_breaks_galerkin_kernel_coercivity() {
    // For u' = f, b(ϖv, v) = ∫ ½ϖ' v² + ½ϖ(1) v(1)²: a steeply decreasing ϖ
    // (steeply increasing ω) makes the form indefinite on the kernel.
    let p = ProblemSpec::sine_advection();
    let space = left_p1(8);
    let w = WeightSpec::LogisticOffset { m: 1000.0 };
    let err = solve_weighted_galerkin(&p, &space, w, &ramp(60.0), true).unwrap_err();
    assert!(matches!(err, Error::SolverFailure { kind: FailureKind::KernelCoercivityViolated, .. }), "{err}");
    assert!(err.to_string().contains("kernel-coercivity violated"));
    // a mild control passes
    let ok = solve_weighted_galerkin(&p, &space, w, &ramp(-1.0), true).unwrap();
    assert!(ok.kernel_alpha.unwrap() > 1e-10);
}

#[test]
fn linear_inverse_weight_on_the_laplacian_stays_coercive() {
    // b(ϖv, v) = ∫ϖ v'² + ϖ' ∫ v v' and ∫ v v' = 0 on H¹₀: a linear ϖ ≥ w_min
    // cannot destroy coercivity, whatever its slope.
    let p = ProblemSpec::laplacian(Arc::new(|_| 1.0));
    let d = Discretization::new(p, ONE, SolverKind::WeightedGalerkin, line(8), SolverOptions::default()).unwrap();
    for slope in [1.0, 10.0, 1e3, 1e5] {
        let (c, cx): (Vec<f64>, Vec<[f64; 2]>) = d
            .grid()
            .points()
            .iter()
            .map(|q| {
                let varpi = 0.1 + slope * q.x[0];
                (1.0 / varpi, [-slope / (varpi * varpi), 0.0])
            })
            .unzip();
        let alpha = d.kernel_coercivity(&c, &cx).unwrap().unwrap();
        assert!(alpha > 1e-10, "slope {slope}: {alpha}");
    }
}

#[test]
fn minres_unit_weight_matches_unweighted_assembly() {
    // Independent assembly of the unweighted H¹ dd-minres system with exact
    // element integrals: P0 on N, P1 on 2N with v(1) = 0.
    let (n, sigma) = (8, 5.0);
    let p = ProblemSpec::boundary_layer(sigma);
    let m = 2 * n;
    let h = 1.0 / m as f64;
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DMatrix::zeros(m + 1, n);
    let mut f = DVector::zeros(m + 1);
    for e in 0..m {
        let d = [-1.0 / h, 1.0 / h];
        for i in 0..2 {
            f[e + i] += sigma * h / 2.0;
            // ∫ (σ ψ_i - ψ_i') over the fine element, coarse element e / 2
            b[(e + i, e / 2)] += sigma * h / 2.0 - d[i] * h;
            for j in 0..2 {
                a[(e + i, e + j)] += d[i] * d[j] * h + if i == j { h / 3.0 } else { h / 6.0 };
            }
        }
    }
    let mut s = DMatrix::zeros(m + n, m + n);
    s.view_mut((0, 0), (m, m)).copy_from(&a.view((0, 0), (m, m)));
    s.view_mut((0, m), (m, n)).copy_from(&b.view((0, 0), (m, n)));
    s.view_mut((m, 0), (n, m)).copy_from(&b.view((0, 0), (m, n)).transpose());
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(&f.rows(0, m));
    let oracle = s.lu().solve(&rhs).unwrap();

    let trial = Arc::new(FunctionSpace::p0(line(n)));
    let test = Arc::new(FunctionSpace::p1(line(m), |x| x[0] == 1.0));
    let sol = solve_dd_minres(&p, &trial, &test, InnerProduct::WeightedH1, ONE, &ShallowNet::zeros(1, 2).unwrap()).unwrap();
    assert!((sol.u.coeffs() - oracle.rows(m, n)).amax() < 1e-11);
    assert!((sol.r.field().unwrap().coeffs() - oracle.rows(0, m)).amax() < 1e-11);
}

#[test]
fn minres_boundary_layer_constraint() {
    let p = ProblemSpec::boundary_layer(160.0);
    let d = Discretization::new(p, WeightSpec::LogisticOffset { m: 100.0 }, SolverKind::DdMinres, line(16), SolverOptions::default()).unwrap();
    assert_eq!(d.test().unwrap().dim(), 32);
    assert!(d.beta_h().unwrap() > 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let sol = d.solve(&random_net(&mut rng, 8)).unwrap();
        assert!(d.constraint_residual(&sol) < 1e-10);
    }
}

#[test]
fn state_derivative_trivial_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = random_net(&mut rng, 5);
    for kind in SolverKind::ALL {
        let p = ProblemSpec::boundary_layer(3.0);
        let d = Discretization::new(p.clone(), WeightSpec::BoundedLogistic, kind, line(8), SolverOptions::default()).unwrap();
        let sol = d.solve(&net).unwrap();
        let (_, du) = state_derivative(&d, &sol, &net, &ParamVector::zeros(net.n_params())).unwrap();
        assert_eq!(du.coeffs().amax(), 0.0);
        let dc = d.with_weight(WeightSpec::Constant { value: 2.0 }).unwrap();
        let sc = dc.solve(&net).unwrap();
        let eta = ParamVector((0..net.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (dr, du) = state_derivative(&dc, &sc, &net, &eta).unwrap();
        assert_eq!(du.coeffs().amax(), 0.0);
        match dr {
            Residual::Field(f) => assert_eq!(f.coeffs().amax(), 0.0),
            Residual::Pointwise(v) => assert!(v.iter().all(|x| *x == 0.0)),
        }
    }
}

#[test]
fn state_derivative_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let step = 1e-5;
    for kind in SolverKind::ALL {
        let p = ProblemSpec::boundary_layer(3.0);
        let d = Discretization::new(p, WeightSpec::LogisticOffset { m: 10.0 }, kind, line(8), SolverOptions::default()).unwrap();
        for _ in 0..3 {
            let net = random_net(&mut rng, 5);
            let eta = ParamVector((0..net.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let sol = d.solve(&net).unwrap();
            let (_, du) = state_derivative(&d, &sol, &net, &eta).unwrap();
            let plus = d.solve(&net.with_params(&net.params().axpy(step, &eta)).unwrap()).unwrap();
            let minus = d.solve(&net.with_params(&net.params().axpy(-step, &eta)).unwrap()).unwrap();
            let fd = (plus.u.coeffs() - minus.u.coeffs()) / (2.0 * step);
            let err = (du.coeffs() - &fd).norm() / fd.norm().max(1e-12);
            assert!(err < 1e-6, "{kind:?}: {err}");
        }
    }
}
