//! Degree-two polynomial activations `sigma(u) = a u^2 + b u + c` and the
//! least-squares fit that approximates a target nonlinearity on a grid.

use crate::error::{Error, Result};
use crate::linalg;
use ndarray::{array, Array1, Array2};
use serde::{Deserialize, Serialize};

/// Coefficient triple of `sigma(u) = a u^2 + b u + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyActivation {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PolyActivation {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidInput(
                "activation coefficients must be finite".to_string(),
            ));
        }
        Ok(Self { a, b, c })
    }

    /// The quadratic activation `sigma(u) = u^2`.
    pub const fn quadratic() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.a * u * u + self.b * u + self.c
    }

    /// `sigma'(u) = 2 a u + b`.
    pub fn derivative(&self, u: f64) -> f64 {
        2.0 * self.a * u + self.b
    }

    /// True exactly when the activation is a pure quadratic.
    pub fn is_quadratic(&self) -> bool {
        self.b == 0.0 && self.c == 0.0 && self.a != 0.0
    }
}

/// Fit `sigma(u) = a u^2 + b u + c` to `target` by least squares over `n`
/// linearly spaced points in `[lo, hi]`, both endpoints included. Solved
/// via the 3x3 normal equations of the Vandermonde system.
pub fn fit_activation<F: Fn(f64) -> f64>(
    target: F,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<PolyActivation> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidInput(format!(
            "need finite lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n < 3 {
        return Err(Error::Fit(format!("need at least 3 grid points, got {n}")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut tt: Array2<f64> = Array2::zeros((3, 3));
    let mut ts: Array1<f64> = Array1::zeros(3);
    for i in 0..n {
        let t = lo + step * i as f64;
        let s = target(t);
        if !s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "target function returned non-finite value at {t}"
            )));
        }
        let row = array![t * t, t, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                tt[[r, c]] += row[r] * row[c];
            }
        }
        for r in 0..3 {
            ts[r] += row[r] * s;
        }
    }
    let f = linalg::lu_factor(&tt)
        .map_err(|_| Error::Fit("rank-deficient grid; need 3 distinct points".to_string()))?;
    let coef = linalg::lu_solve(&f, &ts);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("normal equations produced non-finite coefficients".to_string()));
    }
    PolyActivation::new(coef[0], coef[1], coef[2])
}

/// ReLU, used as a fitting target.
pub fn relu(u: f64) -> f64 {
    u.max(0.0)
}

/// Swish `u / (1 + e^{-u})`, used as a fitting target.
pub fn swish(u: f64) -> f64 {
    u / (1.0 + (-u).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_examples() {
        let act = PolyActivation::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(act.eval(2.0), 7.0);
        assert_eq!(PolyActivation::quadratic().eval(-3.0), 9.0);
        let relu_fit = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        assert_eq!(relu_fit.eval(0.0), 0.47);
    }

    #[test]
    fn quadratic_flag() {
        assert!(PolyActivation::quadratic().is_quadratic());
        assert!(!PolyActivation::new(1.0, 0.5, 0.0).unwrap().is_quadratic());
        assert!(!PolyActivation::new(0.0, 0.0, 0.0).unwrap().is_quadratic());
    }

    #[test]
    fn fit_recovers_exact_polynomial() {
        let act = fit_activation(|u| 2.5 * u * u - 0.75 * u + 0.3, -2.0, 3.0, 57).unwrap();
        assert!((act.a - 2.5).abs() < 1e-10);
        assert!((act.b + 0.75).abs() < 1e-10);
        assert!((act.c - 0.3).abs() < 1e-10);
    }

    #[test]
    fn fit_identity_returns_linear() {
        let act = fit_activation(|u| u, -1.0, 4.0, 100).unwrap();
        assert!(act.a.abs() < 1e-10);
        assert!((act.b - 1.0).abs() < 1e-10);
        assert!(act.c.abs() < 1e-10);
    }

    #[test]
    fn fit_requires_three_points_and_valid_range() {
        assert!(matches!(fit_activation(relu, -1.0, 1.0, 2), Err(Error::Fit(_))));
        assert!(matches!(
            fit_activation(relu, 1.0, -1.0, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fit_beats_random_coefficient_triples() {
        let lo = -5.0;
        let hi = 5.0;
        let n = 500;
        let act = fit_activation(relu, lo, hi, n).unwrap();
        let residual = |a: f64, b: f64, c: f64| -> f64 {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    let t = lo + step * i as f64;
                    let r = a * t * t + b * t + c - relu(t);
                    r * r
                })
                .sum()
        };
        let best = residual(act.a, act.b, act.c);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            let c = rng.random_range(-1.0..1.0);
            assert!(residual(a, b, c) + 1e-12 >= best);
        }
    }
}
