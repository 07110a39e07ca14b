use crate::error::{Error, Result};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::Point;

const DOMAIN_TOL: f64 = 1e-12;

/// Uniform partition of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    h: f64,
}

impl Mesh1D {
    pub fn uniform(n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::invalid("a 1D mesh needs at least one element"));
        }
        let h = 1.0 / n_elements as f64;
        let mut nodes: Vec<f64> = (0..=n_elements).map(|i| i as f64 * h).collect();
        nodes[n_elements] = 1.0;
        Ok(Mesh1D { nodes, h })
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Element containing `x`; a node belongs to the element on its left.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) {
            return Err(Error::OutOfDomain(vec![x]));
        }
        let n = self.n_elements();
        let e = (x * n as f64).ceil() as isize - 1;
        Ok(e.clamp(0, n as isize - 1) as usize)
    }
}

/// Criss-cross triangulation of the unit square: every cell of an
/// `nx x ny` grid is split into four triangles through its centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2DTri {
    nx: usize,
    ny: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl Mesh2DTri {
    pub fn structured(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("a 2D mesh needs at least one cell per axis"));
        }
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([i as f64 * hx, j as f64 * hy]);
            }
        }
        let corner = |i: usize, j: usize| j * (nx + 1) + i;
        let centre_base = vertices.len();
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]);
            }
        }
        let mut triangles = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = centre_base + j * nx + i;
                let (v00, v10) = (corner(i, j), corner(i + 1, j));
                let (v11, v01) = (corner(i + 1, j + 1), corner(i, j + 1));
                // bottom, right, top, left
                triangles.push([v00, v10, c]);
                triangles.push([v10, v11, c]);
                triangles.push([v11, v01, c]);
                triangles.push([v01, v00, c]);
            }
        }
        Ok(Mesh2DTri { nx, ny, vertices, triangles })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn locate(&self, p: Point) -> Result<usize> {
        let inside = |v: f64| (-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&v);
        if !inside(p[0]) || !inside(p[1]) {
            return Err(Error::OutOfDomain(p.to_vec()));
        }
        let fx = p[0] * self.nx as f64;
        let fy = p[1] * self.ny as f64;
        let i = (fx.floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let j = (fy.floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        let (s, t) = (fx - i as f64, fy - j as f64);
        let local = if t <= s && t <= 1.0 - s {
            0
        } else if s >= t && s >= 1.0 - t {
            1
        } else if t >= s && t >= 1.0 - s {
            2
        } else {
            3
        };
        Ok(4 * (j * self.nx + i) + local)
    }
}

/// Either supported mesh family.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh {
    Interval(Mesh1D),
    Square(Mesh2DTri),
}

impl Mesh {
    pub fn interval(n_elements: usize) -> Result<Self> {
        Mesh1D::uniform(n_elements).map(Mesh::Interval)
    }

    pub fn square(nx: usize, ny: usize) -> Result<Self> {
        Mesh2DTri::structured(nx, ny).map(Mesh::Square)
    }

    pub fn dim(&self) -> usize {
        match self {
            Mesh::Interval(_) => 1,
            Mesh::Square(_) => 2,
        }
    }

    pub fn n_elements(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.n_elements(),
            Mesh::Square(m) => m.triangles.len(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.nodes.len(),
            Mesh::Square(m) => m.vertices.len(),
        }
    }

    pub fn node(&self, i: usize) -> Point {
        match self {
            Mesh::Interval(m) => [m.nodes[i], 0.0],
            Mesh::Square(m) => m.vertices[i],
        }
    }

    /// Vertex indices of an element (2 in 1D, 3 in 2D).
    pub fn element_nodes(&self, e: usize) -> ([usize; 3], usize) {
        match self {
            Mesh::Interval(_) => ([e, e + 1, usize::MAX], 2),
            Mesh::Square(m) => (m.triangles[e], 3),
        }
    }

    pub fn element_measure(&self, e: usize) -> f64 {
        match self {
            Mesh::Interval(m) => m.nodes[e + 1] - m.nodes[e],
            Mesh::Square(m) => m.signed_area(e),
        }
    }

    pub fn centroid(&self, e: usize) -> Point {
        let (nodes, len) = self.element_nodes(e);
        let mut c = [0.0; 2];
        for &v in &nodes[..len] {
            let p = self.node(v);
            c[0] += p[0] / len as f64;
            c[1] += p[1] / len as f64;
        }
        c
    }

    pub fn locate(&self, p: Point) -> Result<usize> {
        match self {
            Mesh::Interval(m) => m.locate(p[0]),
            Mesh::Square(m) => m.locate(p),
        }
    }

    /// Typical element diameter along the first axis.
    pub fn h(&self) -> f64 {
        match self {
            Mesh::Interval(m) => m.h,
            Mesh::Square(m) => 1.0 / m.nx as f64,
        }
    }

    /// Uniform refinement by an integer factor per axis. Refined meshes are
    /// nested in the parent mesh.
    pub fn refined(&self, factor: usize) -> Result<Mesh> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        match self {
            Mesh::Interval(m) => Mesh::interval(m.n_elements() * factor),
            Mesh::Square(m) => Mesh::square(m.nx * factor, m.ny * factor),
        }
    }

    /// Maps a reference-element point to physical coordinates.
    pub fn map_point(&self, e: usize, r: Point) -> Point {
        match self {
            Mesh::Interval(m) => [m.nodes[e] + r[0] * (m.nodes[e + 1] - m.nodes[e]), 0.0],
            Mesh::Square(m) => {
                let [a, b, c] = m.triangles[e].map(|v| m.vertices[v]);
                [
                    a[0] + r[0] * (b[0] - a[0]) + r[1] * (c[0] - a[0]),
                    a[1] + r[0] * (b[1] - a[1]) + r[1] * (c[1] - a[1]),
                ]
            }
        }
    }

    /// Physical quadrature points of `rule` on every element.
    pub fn integration_points(&self, rule: &QuadratureRule) -> Result<Vec<QuadPoint>> {
        if rule.dim != self.dim() {
            return Err(Error::invalid(format!(
                "{}D quadrature rule on a {}D mesh",
                rule.dim,
                self.dim()
            )));
        }
        let mut out = Vec::with_capacity(self.n_elements() * rule.len());
        for e in 0..self.n_elements() {
            let scale = self.element_measure(e) / rule.reference_measure();
            for (r, w) in rule.points.iter().zip(&rule.weights) {
                out.push(QuadPoint { x: self.map_point(e, *r), weight: w * scale, element: e });
            }
        }
        Ok(out)
    }

    /// Plot samples: `per_element` equispaced interior points per element in
    /// 1D (plus the endpoints), a `k x k` grid per cell in 2D.
    pub fn sample_points(&self, per_element: usize) -> Vec<Point> {
        match self {
            Mesh::Interval(m) => {
                let n = m.n_elements() * per_element;
                (0..=n).map(|i| [i as f64 / n as f64, 0.0]).collect()
            }
            Mesh::Square(m) => {
                let kx = m.nx * per_element;
                let ky = m.ny * per_element;
                let mut pts = Vec::with_capacity((kx + 1) * (ky + 1));
                for j in 0..=ky {
                    for i in 0..=kx {
                        pts.push([i as f64 / kx as f64, j as f64 / ky as f64]);
                    }
                }
                pts
            }
        }
    }
}

/// A physical quadrature point with its weight (Jacobian included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub weight: f64,
    pub element: usize,
}

/// Builds a uniform 1D mesh of `n_elements` cells.
pub fn build_uniform_mesh_1d(n_elements: usize) -> Result<Mesh1D> {
    Mesh1D::uniform(n_elements)
}
