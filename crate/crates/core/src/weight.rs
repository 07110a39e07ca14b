use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps the control value `s = ξ(x)` to a positive weight `ω(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `ω(s) = 1 + M / (1 + e^{-s})`
    LogisticOffset {
        #[serde(rename = "M")]
        m: f64,
    },
    /// `ω(s) = 1/2 + 2 / (1 + e^{-s})`
    BoundedLogistic,
    Constant { value: f64 },
}

/// Logistic function, evaluated without overflow for large `|s|`.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::LogisticOffset { m } if !(m > 0.0 && m.is_finite()) => {
                Err(Error::invalid(format!("logistic offset M must be positive, got {m}")))
            }
            WeightSpec::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                Err(Error::invalid(format!("constant weight must be positive, got {value}")))
            }
            _ => Ok(()),
        }
    }

    /// Scale and offset: `ω = a + k σ(s)`.
    fn affine(&self) -> (f64, f64) {
        match *self {
            WeightSpec::LogisticOffset { m } => (1.0, m),
            WeightSpec::BoundedLogistic => (0.5, 2.0),
            WeightSpec::Constant { value } => (value, 0.0),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, WeightSpec::Constant { .. })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let (a, k) = self.affine();
        if k == 0.0 {
            return a;
        }
        a + k * sigmoid(s)
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let (_, k) = self.affine();
        if k == 0.0 {
            return 0.0;
        }
        let g = sigmoid(s);
        k * g * (1.0 - g)
    }

    pub fn second_deriv(&self, s: f64) -> f64 {
        let (_, k) = self.affine();
        if k == 0.0 {
            return 0.0;
        }
        let g = sigmoid(s);
        k * g * (1.0 - g) * (1.0 - 2.0 * g)
    }

    /// `ϖ(s) = 1 / ω(s)`.
    pub fn inv(&self, s: f64) -> f64 {
        1.0 / self.eval(s)
    }

    pub fn inv_deriv(&self, s: f64) -> f64 {
        let w = self.eval(s);
        -self.deriv(s) / (w * w)
    }

    pub fn inv_second_deriv(&self, s: f64) -> f64 {
        let (w, d1, d2) = (self.eval(s), self.deriv(s), self.second_deriv(s));
        (2.0 * d1 * d1 - d2 * w) / (w * w * w)
    }

    /// `(ω_min, ω_max)` over all real `s`.
    pub fn bounds(&self) -> (f64, f64) {
        let (a, k) = self.affine();
        (a, a + k)
    }
}

pub fn weight_eval(spec: &WeightSpec, s: f64) -> f64 {
    spec.eval(s)
}

pub fn weight_deriv(spec: &WeightSpec, s: f64) -> f64 {
    spec.deriv(s)
}

pub fn weight_inv(spec: &WeightSpec, s: f64) -> f64 {
    spec.inv(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const M100: WeightSpec = WeightSpec::LogisticOffset { m: 100.0 };

    #[test]
    fn closed_form_values() {
        assert_eq!(weight_eval(&M100, 0.0), 51.0);
        assert_eq!(weight_deriv(&M100, 0.0), 25.0);
        assert_eq!(weight_eval(&WeightSpec::BoundedLogistic, 0.0), 1.5);
        assert!((weight_inv(&WeightSpec::BoundedLogistic, 0.0) - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        for s in [-1e4, -710.0, 710.0, 1e4] {
            let w = M100.eval(s);
            assert!(w.is_finite() && (1.0..=101.0).contains(&w));
            assert!(M100.deriv(s).is_finite());
            assert!(M100.inv_second_deriv(s).is_finite());
        }
    }

    #[test]
    fn monotone_and_bounded() {
        for spec in [M100, WeightSpec::BoundedLogistic, WeightSpec::LogisticOffset { m: 1.0 }] {
            let (lo, hi) = spec.bounds();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let s = -20.0 + 40.0 * i as f64 / 999.0;
                let w = spec.eval(s);
                assert!(w > prev);
                assert!(lo <= w && w <= hi);
                assert!((spec.inv(s) * w - 1.0).abs() < 1e-15);
                prev = w;
            }
        }
        assert_eq!(WeightSpec::BoundedLogistic.bounds(), (0.5, 2.5));
        assert_eq!(M100.bounds(), (1.0, 101.0));
    }

    #[test]
    fn inverse_bounds_of_bounded_logistic() {
        let spec = WeightSpec::BoundedLogistic;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..2001 {
            let s = -40.0 + 80.0 * i as f64 / 2000.0;
            lo = lo.min(spec.inv(s));
            hi = hi.max(spec.inv(s));
        }
        assert!((lo - 0.4).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..100 {
            let s: f64 = rng.gen_range(-8.0..8.0);
            for spec in [M100, WeightSpec::BoundedLogistic] {
                let checks = [
                    (spec.deriv(s), (spec.eval(s + h) - spec.eval(s - h)) / (2.0 * h)),
                    (spec.second_deriv(s), (spec.deriv(s + h) - spec.deriv(s - h)) / (2.0 * h)),
                    (spec.inv_deriv(s), (spec.inv(s + h) - spec.inv(s - h)) / (2.0 * h)),
                    (spec.inv_second_deriv(s), (spec.inv_deriv(s + h) - spec.inv_deriv(s - h)) / (2.0 * h)),
                ];
                for (exact, fd) in checks {
                    assert!((exact - fd).abs() <= 1e-8 * exact.abs().max(1.0), "{exact} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn constant_has_no_derivative() {
        let c = WeightSpec::Constant { value: 3.0 };
        assert_eq!((c.eval(5.0), c.deriv(5.0), c.second_deriv(-1.0)), (3.0, 0.0, 0.0));
        assert!(WeightSpec::Constant { value: 0.0 }.validate().is_err());
        assert!(WeightSpec::LogisticOffset { m: -1.0 }.validate().is_err());
    }

    #[test]
    fn serde_names() {
        let s = serde_json::to_string(&M100).unwrap();
        assert_eq!(s, r#"{"variant":"logistic_offset","M":100.0}"#);
        let b: WeightSpec = serde_json::from_str(r#"{"variant":"bounded_logistic"}"#).unwrap();
        assert_eq!(b, WeightSpec::BoundedLogistic);
    }
}
