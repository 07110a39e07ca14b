use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::mesh::Mesh;
use crate::fem::Point;

/// Value and gradient of a scalar field at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
}

impl Jet {
    pub fn new(value: f64, grad: [f64; 2]) -> Self {
        Jet { value, grad }
    }

    pub fn constant(value: f64) -> Self {
        Jet { value, grad: [0.0; 2] }
    }

    pub fn dot_grad(&self, v: [f64; 2]) -> f64 {
        self.grad[0] * v[0] + self.grad[1] * v[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Piecewise constants.
    P0,
    /// Continuous piecewise linears.
    P1,
    /// Discontinuous piecewise linears.
    P1Disc,
}

/// The free basis functions that are nonzero on one element, evaluated at a
/// point. Constrained nodes are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shape {
    len: usize,
    dofs: [usize; 3],
    jets: [Jet; 3],
}

impl Shape {
    fn push(&mut self, dof: usize, jet: Jet) {
        self.dofs[self.len] = dof;
        self.jets[self.len] = jet;
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Jet)> + '_ {
        self.dofs[..self.len].iter().copied().zip(&self.jets[..self.len])
    }

    /// Combines basis jets with coefficients.
    pub fn combine(&self, coeffs: &[f64]) -> Jet {
        let mut out = Jet::default();
        for (d, j) in self.iter() {
            let c = coeffs[d];
            out.value += c * j.value;
            out.grad[0] += c * j.grad[0];
            out.grad[1] += c * j.grad[1];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    kind: SpaceKind,
    bc_mask: Vec<bool>,
    node_dof: Vec<Option<usize>>,
    dim: usize,
}

impl FunctionSpace {
    pub fn p0(mesh: Arc<Mesh>) -> Self {
        let dim = mesh.n_elements();
        FunctionSpace { mesh, kind: SpaceKind::P0, bc_mask: Vec::new(), node_dof: Vec::new(), dim }
    }

    /// Continuous P1 with the nodes selected by `constrained` pinned to zero.
    pub fn p1(mesh: Arc<Mesh>, constrained: impl Fn(Point) -> bool) -> Self {
        let n = mesh.n_nodes();
        let bc_mask: Vec<bool> = (0..n).map(|i| constrained(mesh.node(i))).collect();
        let mut next = 0;
        let node_dof = bc_mask
            .iter()
            .map(|&c| {
                if c {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        FunctionSpace { mesh, kind: SpaceKind::P1, bc_mask, node_dof, dim: next }
    }

    pub fn p1_free(mesh: Arc<Mesh>) -> Self {
        Self::p1(mesh, |_| false)
    }

    pub fn p1_disc(mesh: Arc<Mesh>) -> Self {
        let dim = mesh.n_elements() * (mesh.dim() + 1);
        FunctionSpace {
            mesh,
            kind: SpaceKind::P1Disc,
            bc_mask: Vec::new(),
            node_dof: Vec::new(),
            dim,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-node constraint flags (empty for element-based spaces).
    pub fn bc_mask(&self) -> &[bool] {
        &self.bc_mask
    }

    /// Free dof attached to a mesh node, if any.
    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_dof.get(node).copied().flatten()
    }

    /// Evaluates the local basis on element `e` of this space's mesh at `x`.
    pub fn shape(&self, e: usize, x: Point) -> Shape {
        let mut s = Shape::default();
        match self.kind {
            SpaceKind::P0 => s.push(e, Jet::constant(1.0)),
            SpaceKind::P1 | SpaceKind::P1Disc => {
                let (nodes, len) = self.mesh.element_nodes(e);
                let lam = barycentric(&self.mesh, e, x);
                for (i, jet) in lam.iter().take(len).enumerate() {
                    let dof = if self.kind == SpaceKind::P1 {
                        self.node_dof[nodes[i]]
                    } else {
                        Some(e * len + i)
                    };
                    if let Some(d) = dof {
                        s.push(d, *jet);
                    }
                }
            }
        }
        s
    }

    pub fn locate(&self, x: Point) -> Result<usize> {
        self.mesh.locate(x)
    }

    /// Mesh-node coordinates carrying each dof (element centroids for P0).
    pub fn dof_points(&self) -> Vec<Point> {
        match self.kind {
            SpaceKind::P0 => (0..self.dim).map(|e| self.mesh.centroid(e)).collect(),
            SpaceKind::P1 => {
                let mut pts = vec![[0.0; 2]; self.dim];
                for (node, d) in self.node_dof.iter().enumerate() {
                    if let Some(d) = d {
                        pts[*d] = self.mesh.node(node);
                    }
                }
                pts
            }
            SpaceKind::P1Disc => {
                let mut pts = Vec::with_capacity(self.dim);
                for e in 0..self.mesh.n_elements() {
                    let (nodes, len) = self.mesh.element_nodes(e);
                    pts.extend(nodes[..len].iter().map(|&v| self.mesh.node(v)));
                }
                pts
            }
        }
    }
}

/// Barycentric coordinates (P1 shape functions) and their gradients.
fn barycentric(mesh: &Mesh, e: usize, x: Point) -> [Jet; 3] {
    let (nodes, len) = mesh.element_nodes(e);
    if len == 2 {
        let a = mesh.node(nodes[0])[0];
        let b = mesh.node(nodes[1])[0];
        let h = b - a;
        return [
            Jet::new((b - x[0]) / h, [-1.0 / h, 0.0]),
            Jet::new((x[0] - a) / h, [1.0 / h, 0.0]),
            Jet::default(),
        ];
    }
    let p = nodes.map(|v| mesh.node(v));
    let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut out = [Jet::default(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let grad = [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a];
        let value = ((p[j][0] - x[0]) * (p[k][1] - x[1]) - (p[k][0] - x[0]) * (p[j][1] - x[1])) / two_a;
        out[i] = Jet::new(value, grad);
    }
    out
}

/// Coefficients on a function space.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    space: Arc<FunctionSpace>,
    coeffs: DVector<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FunctionSpace>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::invalid(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(FEFunction { space, coeffs })
    }

    pub fn zero(space: Arc<FunctionSpace>) -> Self {
        let n = space.dim();
        FEFunction { space, coeffs: DVector::zeros(n) }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn jet(&self, x: Point) -> Result<Jet> {
        let e = self.space.locate(x)?;
        Ok(self.jet_in(e, x))
    }

    /// Evaluation when the containing element is already known.
    pub fn jet_in(&self, e: usize, x: Point) -> Jet {
        self.space.shape(e, x).combine(self.coeffs.as_slice())
    }

    pub fn eval(&self, x: Point) -> Result<f64> {
        self.jet(x).map(|j| j.value)
    }

    pub fn eval_grad(&self, x: Point) -> Result<[f64; 2]> {
        self.jet(x).map(|j| j.grad)
    }
}

/// Evaluates an FE function at `x`.
pub fn eval_fe(function: &FEFunction, x: Point) -> Result<f64> {
    function.eval(x)
}

/// Gradient of an FE function at `x` (piecewise constant for P1).
pub fn eval_fe_grad(function: &FEFunction, x: Point) -> Result<[f64; 2]> {
    function.eval_grad(x)
}

/// Nodal interpolation (centroid values for P0). Constrained nodes stay 0.
pub fn interpolate(space: &Arc<FunctionSpace>, f: impl Fn(Point) -> f64) -> FEFunction {
    let coeffs = DVector::from_iterator(space.dim(), space.dof_points().into_iter().map(f));
    FEFunction { space: space.clone(), coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::interval(n).unwrap())
    }

    #[test]
    fn p1_reproduces_linear() {
        for n in [1, 3, 7] {
            let space = Arc::new(FunctionSpace::p1_free(line(n)));
            let u = interpolate(&space, |p| p[0]);
            assert!((u.eval([0.37, 0.0]).unwrap() - 0.37).abs() < 1e-15);
            assert!((u.eval_grad([0.37, 0.0]).unwrap()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn p0_constant() {
        let space = Arc::new(FunctionSpace::p0(line(5)));
        let u = interpolate(&space, |_| 2.5);
        for x in [0.0, 0.13, 0.5, 1.0] {
            assert_eq!(u.eval([x, 0.0]).unwrap(), 2.5);
        }
    }

    #[test]
    fn hat_at_midpoint() {
        let space = Arc::new(FunctionSpace::p1(line(2), |p| p[0] == 0.0 || p[0] == 1.0));
        assert_eq!(space.dim(), 1);
        let u = FEFunction::new(space, DVector::from_element(1, 1.0)).unwrap();
        assert!((u.eval([0.25, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outside_domain() {
        let space = Arc::new(FunctionSpace::p1_free(line(4)));
        let u = FEFunction::zero(space);
        assert!(matches!(u.eval([1.2, 0.0]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn wrong_coefficient_length() {
        let space = Arc::new(FunctionSpace::p0(line(4)));
        assert!(FEFunction::new(space, DVector::zeros(3)).is_err());
    }

    #[test]
    fn constrained_nodes_vanish() {
        let space = Arc::new(FunctionSpace::p1(line(4), |p| p[0] == 0.0));
        assert_eq!(space.dim(), 4);
        let u = interpolate(&space, |p| 1.0 + p[0]);
        assert_eq!(u.eval([0.0, 0.0]).unwrap(), 0.0);
        assert!((u.eval([1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn p1_2d_reproduces_affine() {
        let mesh = Arc::new(Mesh::square(3, 2).unwrap());
        let space = Arc::new(FunctionSpace::p1_free(mesh));
        let u = interpolate(&space, |p| 0.3 + 2.0 * p[0] - p[1]);
        for p in [[0.1, 0.2], [0.77, 0.51], [1.0, 1.0], [0.5, 0.0]] {
            let j = u.jet(p).unwrap();
            assert!((j.value - (0.3 + 2.0 * p[0] - p[1])).abs() < 1e-13);
            assert!((j.grad[0] - 2.0).abs() < 1e-12 && (j.grad[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn p1_disc_dimension() {
        let space = FunctionSpace::p1_disc(Arc::new(Mesh::square(2, 2).unwrap()));
        assert_eq!(space.dim(), 16 * 3);
        assert_eq!(FunctionSpace::p1_disc(line(4)).dim(), 8);
    }

    #[test]
    fn refinement_keeps_p1_interpolant() {
        let coarse = Arc::new(FunctionSpace::p1_free(line(5)));
        let fine = Arc::new(FunctionSpace::p1_free(Arc::new(coarse.mesh().refined(2).unwrap())));
        let u = interpolate(&coarse, |p| (3.0 * p[0]).sin());
        let v = interpolate(&fine, |p| u.eval(p).unwrap());
        for i in 0..=100 {
            let x = [i as f64 / 100.0, 0.0];
            assert!((u.eval(x).unwrap() - v.eval(x).unwrap()).abs() < 1e-14);
        }
    }
}
