//! One-hidden-layer ReLU networks `ξ(x) = Σ_j c_j ReLU(W_j·x + b_j)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Point;

/// Flat parameter vector in canonical order: `W` (row-major), `b`, `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowNet {
    input_dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ShallowNet {
    pub fn new(input_dim: usize, w: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&input_dim) {
            return Err(Error::invalid(format!("input dimension {input_dim} (expected 1 or 2)")));
        }
        let n = c.len();
        if b.len() != n || w.len() != n * input_dim {
            return Err(Error::invalid(format!(
                "inconsistent layer sizes: |W| = {}, |b| = {}, |c| = {}",
                w.len(),
                b.len(),
                n
            )));
        }
        Ok(ShallowNet { input_dim, w, b, c })
    }

    pub fn zeros(input_dim: usize, n_neurons: usize) -> Result<Self> {
        Self::new(input_dim, vec![0.0; n_neurons * input_dim], vec![0.0; n_neurons], vec![0.0; n_neurons])
    }

    /// Seeded random init: `W, b ~ U(-1, 1)`, `c ~ U(-1/2, 1/2)`.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, n_neurons: usize, rng: &mut R) -> Result<Self> {
        let w = (0..n_neurons * input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..n_neurons).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = (0..n_neurons).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self::new(input_dim, w, b, c)
    }

    /// Rebuilds a net from a parameter vector of matching layout.
    pub fn from_params(input_dim: usize, n_neurons: usize, p: &ParamVector) -> Result<Self> {
        let (nw, n) = (n_neurons * input_dim, n_neurons);
        if p.len() != n * (input_dim + 2) {
            return Err(Error::invalid(format!(
                "parameter vector of length {} for {n} neurons in dimension {input_dim}",
                p.len()
            )));
        }
        let v = &p.0;
        Self::new(input_dim, v[..nw].to_vec(), v[nw..nw + n].to_vec(), v[nw + n..].to_vec())
    }

    pub fn with_params(&self, p: &ParamVector) -> Result<Self> {
        Self::from_params(self.input_dim, self.n_neurons(), p)
    }

    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.c);
        ParamVector(v)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_neurons(&self) -> usize {
        self.c.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_neurons() * (self.input_dim + 2)
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.c
    }

    /// Index of `c_j` in the flat parameter vector.
    pub fn c_offset(&self) -> usize {
        self.n_neurons() * (self.input_dim + 1)
    }

    fn pre_activation(&self, j: usize, x: Point) -> f64 {
        let d = self.input_dim;
        let mut z = self.b[j];
        for k in 0..d {
            z += self.w[j * d + k] * x[k];
        }
        z
    }

    /// `ξ(x)` for a physical point (only the first `input_dim` coordinates are read).
    pub fn eval(&self, x: Point) -> f64 {
        (0..self.n_neurons()).map(|j| self.c[j] * self.pre_activation(j, x).max(0.0)).sum()
    }

    /// `ξ(x)` and its spatial gradient.
    pub fn eval_jet(&self, x: Point) -> (f64, [f64; 2]) {
        let d = self.input_dim;
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for j in 0..self.n_neurons() {
            let z = self.pre_activation(j, x);
            if z > 0.0 {
                v += self.c[j] * z;
                for k in 0..d {
                    g[k] += self.c[j] * self.w[j * d + k];
                }
            }
        }
        (v, g)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval(self.point(x)?))
    }

    fn point(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "{}-dimensional input to a {}-dimensional network",
                x.len(),
                self.input_dim
            )));
        }
        let mut p = [0.0; 2];
        p[..x.len()].copy_from_slice(x);
        Ok(p)
    }

    /// Writes `∂ξ(x)/∂θ` into `out` (length `n_params`).
    pub fn param_gradient_into(&self, x: Point, out: &mut [f64]) {
        let (d, n) = (self.input_dim, self.n_neurons());
        let (nw, off_c) = (n * d, n * (d + 1));
        for j in 0..n {
            let z = self.pre_activation(j, x);
            let (act, h) = if z > 0.0 { (z, 1.0) } else { (0.0, 0.0) };
            for k in 0..d {
                out[j * d + k] = self.c[j] * h * x[k];
            }
            out[nw + j] = self.c[j] * h;
            out[off_c + j] = act;
        }
    }

    pub fn param_gradient(&self, x: &[f64]) -> Result<ParamVector> {
        let p = self.point(x)?;
        let mut out = vec![0.0; self.n_params()];
        self.param_gradient_into(p, &mut out);
        Ok(ParamVector(out))
    }

    /// Adds `s_value * ∂ξ/∂θ + s_grad · ∂(∇ξ)/∂θ` at `x` into `out`.
    pub fn accumulate_param_gradient(&self, x: Point, s_value: f64, s_grad: [f64; 2], out: &mut [f64]) {
        let (d, n) = (self.input_dim, self.n_neurons());
        let (nw, off_c) = (n * d, n * (d + 1));
        for j in 0..n {
            let z = self.pre_activation(j, x);
            if z <= 0.0 {
                continue;
            }
            let mut wg = 0.0;
            for k in 0..d {
                let wjk = self.w[j * d + k];
                out[j * d + k] += self.c[j] * (s_value * x[k] + s_grad[k]);
                wg += wjk * s_grad[k];
            }
            out[nw + j] += self.c[j] * s_value;
            out[off_c + j] += s_value * z + wg;
        }
    }

    /// Directional derivative of `(ξ(x), ∇ξ(x))` along the parameter direction `eta`.
    pub fn directional(&self, x: Point, eta: &[f64]) -> (f64, [f64; 2]) {
        let (d, n) = (self.input_dim, self.n_neurons());
        let (nw, off_c) = (n * d, n * (d + 1));
        let mut dv = 0.0;
        let mut dg = [0.0; 2];
        for j in 0..n {
            let z = self.pre_activation(j, x);
            if z <= 0.0 {
                continue;
            }
            let mut dz = eta[nw + j];
            for k in 0..d {
                dz += eta[j * d + k] * x[k];
                dg[k] += eta[off_c + j] * self.w[j * d + k] + self.c[j] * eta[j * d + k];
            }
            dv += eta[off_c + j] * z + self.c[j] * dz;
        }
        (dv, dg)
    }

    /// Upper bound on the Lipschitz constant of `ξ`: `Σ_j |c_j| ‖W_j‖`.
    pub fn lipschitz_bound(&self) -> f64 {
        let d = self.input_dim;
        (0..self.n_neurons())
            .map(|j| {
                let wn: f64 = (0..d).map(|k| self.w[j * d + k].powi(2)).sum::<f64>().sqrt();
                self.c[j].abs() * wn
            })
            .sum()
    }

    /// 1D net reproducing the piecewise-linear interpolant of `target` at `n`
    /// uniform nodes on `[0, 1]`. Two neurons carry the affine part on
    /// `[0, 1]`, the other `n - 2` sit at the interior nodes.
    pub fn interpolate_1d(n: usize, target: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("interpolation needs n >= 2 neurons, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|k| if k == n - 1 { 1.0 } else { k as f64 * h }).collect();
        let y: Vec<f64> = nodes.iter().map(|&x| target(x)).collect();
        let slopes: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (nodes[k + 1] - nodes[k])).collect();
        // a + s x = α (x + 1) + β (1 - x) on [0, 1]
        let (a, s) = (y[0], slopes[0]);
        let mut w = vec![1.0, -1.0];
        let mut b = vec![1.0, 1.0];
        let mut c = vec![0.5 * (a + s), 0.5 * (a - s)];
        for k in 1..n - 1 {
            w.push(1.0);
            b.push(-nodes[k]);
            c.push(slopes[k] - slopes[k - 1]);
        }
        Self::new(1, w, b, c)
    }
}

pub fn nn_forward(net: &ShallowNet, x: &[f64]) -> Result<f64> {
    net.forward(x)
}

pub fn nn_param_gradient(net: &ShallowNet, x: &[f64]) -> Result<ParamVector> {
    net.param_gradient(x)
}

pub fn nn_interpolate_init(n: usize, target: impl Fn(f64) -> f64) -> Result<ShallowNet> {
    ShallowNet::interpolate_1d(n, target)
}
