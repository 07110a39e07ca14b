use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::mesh::{Mesh, QuadPoint};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::{FunctionSpace, Jet, Shape};
use crate::fem::Point;

/// Quadrature points on an integration mesh. Every space integrated on it
/// must live on a mesh that this mesh refines.
#[derive(Debug, Clone)]
pub struct IntegrationGrid {
    mesh: Arc<Mesh>,
    points: Vec<QuadPoint>,
}

impl IntegrationGrid {
    pub fn new(mesh: Arc<Mesh>, rule: &QuadratureRule) -> Result<Self> {
        let points = mesh.integration_points(rule)?;
        Ok(IntegrationGrid { mesh, points })
    }

    /// Grid on the finest mesh among `spaces`, refined further by `refine`.
    pub fn for_spaces(spaces: &[&FunctionSpace], refine: usize, rule: &QuadratureRule) -> Result<Self> {
        let finest = spaces
            .iter()
            .map(|s| s.mesh())
            .max_by_key(|m| m.n_elements())
            .ok_or_else(|| Error::invalid("no spaces given"))?;
        for s in spaces {
            if s.mesh().dim() != finest.dim() {
                return Err(Error::invalid("spaces live on meshes of different dimension"));
            }
        }
        let mesh = if refine == 1 { finest.clone() } else { Arc::new(finest.refined(refine)?) };
        Self::new(mesh, rule)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn points(&self) -> &[QuadPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(usize, Point) -> f64) -> f64 {
        self.points.iter().enumerate().map(|(q, p)| p.weight * f(q, p.x)).sum()
    }
}

/// Basis functions of one space sampled at every point of a grid.
#[derive(Debug, Clone)]
pub struct BasisTable {
    dim: usize,
    shapes: Vec<Shape>,
}

impl BasisTable {
    pub fn new(space: &FunctionSpace, grid: &IntegrationGrid) -> Result<Self> {
        let own = space.mesh();
        let fine = grid.mesh();
        if own.dim() != fine.dim() || fine.n_elements() % own.n_elements() != 0 {
            return Err(Error::invalid(format!(
                "integration mesh ({} elements) does not refine the space mesh ({} elements)",
                fine.n_elements(),
                own.n_elements()
            )));
        }
        let same = Arc::ptr_eq(own, fine) || own.as_ref() == fine.as_ref();
        let parent: Vec<usize> = if same {
            (0..fine.n_elements()).collect()
        } else {
            (0..fine.n_elements())
                .map(|e| own.locate(fine.centroid(e)))
                .collect::<Result<_>>()?
        };
        let shapes = grid.points.iter().map(|q| space.shape(parent[q.element], q.x)).collect();
        Ok(BasisTable { dim: space.dim(), shapes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self, q: usize) -> &Shape {
        &self.shapes[q]
    }

    /// Field values and gradients at every grid point.
    pub fn evaluate(&self, coeffs: &[f64]) -> Vec<Jet> {
        self.shapes.iter().map(|s| s.combine(coeffs)).collect()
    }
}

/// Matrix `M[i][j] = Σ_q w_q k(q, φ_j, ψ_i)` with trial `φ` and test `ψ`.
pub fn assemble_matrix(
    grid: &IntegrationGrid,
    trial: &BasisTable,
    test: &BasisTable,
    kernel: impl Fn(usize, &Jet, &Jet) -> f64,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(test.dim, trial.dim);
    for (q, p) in grid.points.iter().enumerate() {
        for (i, v) in test.shapes[q].iter() {
            for (j, u) in trial.shapes[q].iter() {
                m[(i, j)] += p.weight * kernel(q, u, v);
            }
        }
    }
    m
}

pub fn assemble_vector(grid: &IntegrationGrid, test: &BasisTable, kernel: impl Fn(usize, &Jet) -> f64) -> DVector<f64> {
    let mut f = DVector::zeros(test.dim);
    for (q, p) in grid.points.iter().enumerate() {
        for (i, v) in test.shapes[q].iter() {
            f[i] += p.weight * kernel(q, v);
        }
    }
    f
}

/// Generic bilinear-form assembly. The kernel sees the trial jet, the test
/// jet, the physical point and the weight field sampled there. Integration
/// runs on the finer of the two meshes. Result is `test.dim x trial.dim`.
pub fn assemble_form(
    trial: &FunctionSpace,
    test: &FunctionSpace,
    kernel: impl Fn(&Jet, &Jet, Point, f64) -> f64,
    weight_field: impl Fn(Point) -> f64,
    quad: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    let grid = IntegrationGrid::for_spaces(&[trial, test], 1, quad)?;
    let tu = BasisTable::new(trial, &grid)?;
    let tv = BasisTable::new(test, &grid)?;
    let w: Vec<f64> = grid.points.iter().map(|p| weight_field(p.x)).collect();
    Ok(assemble_matrix(&grid, &tu, &tv, |q, u, v| kernel(u, v, grid.points[q].x, w[q])))
}

/// Generic linear-functional assembly.
pub fn assemble_functional(
    test: &FunctionSpace,
    kernel: impl Fn(&Jet, Point) -> f64,
    quad: &QuadratureRule,
) -> Result<DVector<f64>> {
    let grid = IntegrationGrid::for_spaces(&[test], 1, quad)?;
    let tv = BasisTable::new(test, &grid)?;
    Ok(assemble_vector(&grid, &tv, |q, v| kernel(v, grid.points[q].x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quadrature::{default_rule, gauss_quadrature_1d, triangle_midedge};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::interval(n).unwrap())
    }

    fn mass(u: &Jet, v: &Jet, _x: Point, w: f64) -> f64 {
        w * u.value * v.value
    }

    fn stiffness(u: &Jet, v: &Jet, _x: Point, w: f64) -> f64 {
        w * (u.grad[0] * v.grad[0] + u.grad[1] * v.grad[1])
    }

    #[test]
    fn mass_matrix_two_elements_left_constrained() {
        let s = FunctionSpace::p1(line(2), |p| p[0] == 0.0);
        let m = assemble_form(&s, &s, mass, |_| 1.0, &default_rule(1)).unwrap();
        // hat products: interior hat 2h/3, end hat h/3, overlap h/6, h = 1/2
        let h = 0.5;
        let expected = DMatrix::from_row_slice(2, 2, &[2.0 * h / 3.0, h / 6.0, h / 6.0, h / 3.0]);
        assert!((m - expected).abs().max() < 1e-15);
    }

    #[test]
    fn single_hat_stiffness() {
        let s = FunctionSpace::p1(line(1), |p| p[0] == 0.0);
        let k = assemble_form(&s, &s, stiffness, |_| 1.0, &default_rule(1)).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert!((k[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_gives_zero_matrix() {
        let s = FunctionSpace::p1_free(line(6));
        let k = assemble_form(&s, &s, mass, |_| 0.0, &default_rule(1)).unwrap();
        assert_eq!(k.abs().max(), 0.0);
    }

    #[test]
    fn load_vector_unit_source() {
        let s = FunctionSpace::p1(line(2), |p| p[0] == 0.0);
        let f = assemble_functional(&s, |v, _| v.value, &default_rule(1)).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-15 && (f[1] - 0.25).abs() < 1e-15);
        let z = assemble_functional(&s, |v, _| 0.0 * v.value, &default_rule(1)).unwrap();
        assert_eq!(z.abs().max(), 0.0);
    }

    #[test]
    fn sine_load_against_closed_form() {
        // ∫ π sin(πx) φ_i for an interior hat at x_i with spacing h, in closed form:
        // (sin(π(x_i-h)) - 2 sin(πx_i) + sin(π(x_i+h))) / (-π h) ... integrated twice
        let n = 10;
        let h = 1.0 / n as f64;
        let s = FunctionSpace::p1_free(line(n));
        let rule = gauss_quadrature_1d(3).unwrap();
        let f = assemble_functional(&s, |v, x| PI * (PI * x[0]).sin() * v.value, &rule).unwrap();
        let big = gauss_quadrature_1d(5).unwrap();
        let fine = assemble_functional(&s, |v, x| PI * (PI * x[0]).sin() * v.value, &big).unwrap();
        for i in 1..n {
            let xi = i as f64 * h;
            let exact = ((PI * (xi - h)).sin() - 2.0 * (PI * xi).sin() + (PI * (xi + h)).sin()) / (-PI * h);
            assert!((fine[i] - exact).abs() < 1e-10, "{i}");
            assert!((f[i] - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn mixed_mesh_assembly_matches_fine_grid() {
        // P0 trial on N, P1 test on 2N: the coupling ∫ u v.
        let coarse = FunctionSpace::p0(line(3));
        let fine = FunctionSpace::p1_free(line(6));
        let m = assemble_form(&coarse, &fine, mass, |_| 1.0, &default_rule(1)).unwrap();
        assert_eq!(m.shape(), (7, 3));
        // column sums are the element lengths
        for j in 0..3 {
            assert!((m.column(j).sum() - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = FunctionSpace::p1_free(line(2));
        let b = FunctionSpace::p1_free(Arc::new(Mesh::square(2, 2).unwrap()));
        assert!(assemble_form(&a, &b, mass, |_| 1.0, &default_rule(1)).is_err());
        assert!(assemble_form(&a, &a, mass, |_| 1.0, &triangle_midedge()).is_err());
    }

    #[test]
    fn square_mass_total() {
        let mesh = Arc::new(Mesh::square(4, 4).unwrap());
        let s = FunctionSpace::p1_free(mesh);
        let m = assemble_form(&s, &s, mass, |_| 1.0, &triangle_midedge()).unwrap();
        assert!((m.sum() - 1.0).abs() < 1e-12);
        assert!((&m - m.transpose()).abs().max() < 1e-15);
    }

    proptest! {
        #[test]
        fn assembly_is_linear_in_kernel(a in -3.0..3.0f64, b in -3.0..3.0f64, n in 1usize..12) {
            let s = FunctionSpace::p1(line(n), |p| p[0] == 0.0);
            let q = default_rule(1);
            let w = |x: Point| 1.0 + x[0];
            let k1 = assemble_form(&s, &s, mass, w, &q).unwrap();
            let k2 = assemble_form(&s, &s, |u, v, x, w| u.grad[0] * v.value * w * x[0], w, &q).unwrap();
            let k12 = assemble_form(&s, &s, |u, v, x, w| a * mass(u, v, x, w) + b * u.grad[0] * v.value * w * x[0], w, &q).unwrap();
            prop_assert!((k12 - (k1 * a + k2 * b)).abs().max() < 1e-13);
        }

        #[test]
        fn symmetric_kernel_gives_symmetric_matrix(n in 1usize..10, c in 0.1..5.0f64) {
            let mesh = Arc::new(Mesh::square(n, n).unwrap());
            let s = FunctionSpace::p1(mesh, |p| p[0] == 0.0);
            let k = assemble_form(&s, &s, |u, v, x, w| stiffness(u, v, x, w) + c * mass(u, v, x, w),
                |x| 1.0 + x[0] * x[1], &triangle_midedge()).unwrap();
            prop_assert!((&k - k.transpose()).abs().max() < 1e-13);
        }
    }
}
