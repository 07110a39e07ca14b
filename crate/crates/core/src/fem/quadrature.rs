use crate::error::{Error, Result};
use crate::fem::Point;

/// A quadrature rule on a reference element: the unit interval `[0, 1]` in
/// 1D, the triangle `(0,0), (1,0), (0,1)` in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Measure of the reference element.
    pub fn reference_measure(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            0.5
        }
    }

    /// Integrates `f` over the reference element.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }
}

/// Gauss–Legendre rule with `order` points on `[0, 1]`, exact for
/// polynomials of degree `2 * order - 1`.
pub fn gauss_quadrature_1d(order: usize) -> Result<QuadratureRule> {
    let (nodes, weights): (&[f64], &[f64]) = match order {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683_1,
                0.0,
                0.538_469_310_105_683_1,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                128.0 / 225.0,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => {
            return Err(Error::invalid(format!(
                "Gauss order {order} unsupported (expected 1..=5)"
            )))
        }
    };
    Ok(QuadratureRule {
        dim: 1,
        points: nodes.iter().map(|t| [0.5 * (1.0 + t), 0.0]).collect(),
        weights: weights.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Three-point mid-edge rule on the reference triangle (degree 2).
pub fn triangle_midedge() -> QuadratureRule {
    QuadratureRule {
        dim: 2,
        points: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
        weights: vec![1.0 / 6.0; 3],
    }
}

/// Six-point Strang–Fix rule on the reference triangle (degree 4).
pub fn triangle_degree4() -> QuadratureRule {
    let a = 0.445_948_490_915_965;
    let b = 0.091_576_213_509_771;
    let wa = 0.223_381_589_678_011 / 2.0;
    let wb = 0.109_951_743_655_322 / 2.0;
    QuadratureRule {
        dim: 2,
        points: vec![
            [a, a],
            [1.0 - 2.0 * a, a],
            [a, 1.0 - 2.0 * a],
            [b, b],
            [1.0 - 2.0 * b, b],
            [b, 1.0 - 2.0 * b],
        ],
        weights: vec![wa, wa, wa, wb, wb, wb],
    }
}

/// The default rule for a given dimension: order-3 Gauss or the mid-edge rule.
pub fn default_rule(dim: usize) -> QuadratureRule {
    if dim == 1 {
        gauss_quadrature_1d(3).expect("order 3 is supported")
    } else {
        triangle_midedge()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_two_integrates_cubic_exactly() {
        let q = gauss_quadrature_1d(2).unwrap();
        assert!((q.integrate(|p| p[0].powi(3)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn order_one_weights_sum_to_one() {
        let q = gauss_quadrature_1d(1).unwrap();
        assert_eq!(q.integrate(|_| 1.0), 1.0);
    }

    #[test]
    fn order_three_integrates_quintic() {
        let q = gauss_quadrature_1d(3).unwrap();
        assert!((q.integrate(|p| p[0].powi(5)) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn all_orders_exact_to_their_degree() {
        for order in 1..=5 {
            let q = gauss_quadrature_1d(order).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..(2 * order) {
                let exact = 1.0 / (deg as f64 + 1.0);
                let got = q.integrate(|p| p[0].powi(deg as i32));
                assert!((got - exact).abs() < 1e-14, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(gauss_quadrature_1d(0).is_err());
        assert!(gauss_quadrature_1d(6).is_err());
    }

    #[test]
    fn triangle_rules_exact() {
        // ∫_T x^a y^b = a! b! / (a+b+2)!
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        let mono = |a: u32, b: u32| fact(a) * fact(b) / fact(a + b + 2);
        let mid = triangle_midedge();
        let d4 = triangle_degree4();
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let exact = mono(a, b);
                let f = |p: Point| p[0].powi(a as i32) * p[1].powi(b as i32);
                if a + b <= 2 {
                    assert!((mid.integrate(f) - exact).abs() < 1e-15);
                }
                assert!((d4.integrate(f) - exact).abs() < 1e-13, "{a} {b}");
            }
        }
    }
}
