use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;
use crate::expectation::{ParameterDomain, SampleSpace, StatisticalFamily};
use crate::manifold::ClosedFormGeometry;
use crate::tensor::{CubicTensor, MixedChristoffel};

/// `-log √(2π)`
const LOG_NORM: f64 = -0.918_938_533_204_672_8;

/// Closed-form α-geometry of `N(μ, σ²)` in the chart `θ = (μ, σ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalGeometry;

impl ClosedFormGeometry for NormalGeometry {
    fn metric(&self, theta: &[f64]) -> DMatrix<f64> {
        let s2 = theta[1] * theta[1];
        DMatrix::from_row_slice(2, 2, &[1.0 / s2, 0.0, 0.0, 2.0 / s2])
    }

    fn skewness(&self, theta: &[f64]) -> CubicTensor {
        let s3 = theta[1].powi(3);
        CubicTensor::from_fn(2, |i, j, k| match i + j + k {
            1 => 2.0 / s3,
            3 => 8.0 / s3,
            _ => 0.0,
        })
    }

    fn christoffel_lower(&self, theta: &[f64], alpha: f64) -> CubicTensor {
        let s3 = theta[1].powi(3);
        CubicTensor::from_fn(2, |i, j, k| match (i, j, k) {
            (0, 0, 1) => (1.0 - alpha) / s3,
            (0, 1, 0) | (1, 0, 0) => -(1.0 + alpha) / s3,
            (1, 1, 1) => -(2.0 + 4.0 * alpha) / s3,
            _ => 0.0,
        })
    }

    fn christoffel_mixed(&self, theta: &[f64], alpha: f64) -> MixedChristoffel {
        let s = theta[1];
        MixedChristoffel::from_fn(2, |k, i, j| match (k, i, j) {
            (1, 0, 0) => (1.0 - alpha) / (2.0 * s),
            (0, 0, 1) | (0, 1, 0) => -(1.0 + alpha) / s,
            (1, 1, 1) => -(1.0 + 2.0 * alpha) / s,
            _ => 0.0,
        })
    }

    fn christoffel_mixed_derivative(
        &self,
        theta: &[f64],
        alpha: f64,
    ) -> Option<Vec<MixedChristoffel>> {
        let s2 = theta[1] * theta[1];
        let d_mu = MixedChristoffel::zeros(2);
        let d_sigma = MixedChristoffel::from_fn(2, |k, i, j| match (k, i, j) {
            (1, 0, 0) => -(1.0 - alpha) / (2.0 * s2),
            (0, 0, 1) | (0, 1, 0) => (1.0 + alpha) / s2,
            (1, 1, 1) => (1.0 + 2.0 * alpha) / s2,
            _ => 0.0,
        });
        Some(vec![d_mu, d_sigma])
    }
}

/// The univariate normal family with closed-form scores and tensors.
pub fn make_normal() -> StatisticalFamily {
    let domain = ParameterDomain::new(vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (0.0, f64::INFINITY),
    ]);
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    StatisticalFamily::new(
        "normal",
        domain,
        SampleSpace::RealLine,
        Arc::new(|x, theta: &[f64]| {
            let (mu, sigma) = (theta[0], theta[1]);
            if !(sigma > 0.0) {
                return Err(Error::domain(theta, "σ must be positive"));
            }
            let z = (x - mu) / sigma;
            Ok(-0.5 * z * z - sigma.ln() + LOG_NORM)
        }),
    )
    .expect("normal family has two parameters")
    .with_score(Arc::new(|x, theta: &[f64], i| {
        let (mu, s) = (theta[0], theta[1]);
        let d = x - mu;
        match i {
            0 => d / (s * s),
            _ => d * d / (s * s * s) - 1.0 / s,
        }
    }))
    .with_score2(Arc::new(|x, theta: &[f64], i, j| {
        let (mu, s) = (theta[0], theta[1]);
        let d = x - mu;
        match (i, j) {
            (0, 0) => -1.0 / (s * s),
            (1, 1) => -3.0 * d * d / s.powi(4) + 1.0 / (s * s),
            _ => -2.0 * d / s.powi(3),
        }
    }))
    .with_quad_hint(Arc::new(|theta: &[f64]| (theta[0], theta[1])))
    .with_inverse_cdf(Arc::new(move |theta: &[f64], u| {
        theta[0] + theta[1] * std_normal.inverse_cdf(u)
    }))
    .with_closed_form(Arc::new(NormalGeometry))
}

/// `p(x; λ) = λ e^{-λx}` on `x > 0`, one parameter, analytic scores only.
pub fn make_exponential() -> StatisticalFamily {
    StatisticalFamily::new(
        "exponential",
        ParameterDomain::new(vec![(0.0, f64::INFINITY)]),
        SampleSpace::Interval {
            lower: 0.0,
            upper: f64::INFINITY,
        },
        Arc::new(|x, theta: &[f64]| {
            let rate = theta[0];
            if !(rate > 0.0) {
                return Err(Error::domain(theta, "rate must be positive"));
            }
            Ok(rate.ln() - rate * x)
        }),
    )
    .expect("exponential family has one parameter")
    .with_score(Arc::new(|x, theta: &[f64], _| 1.0 / theta[0] - x))
    .with_score2(Arc::new(|_, theta: &[f64], _, _| -1.0 / (theta[0] * theta[0])))
    .with_quad_hint(Arc::new(|theta: &[f64]| (0.0, 1.0 / theta[0])))
    .with_inverse_cdf(Arc::new(|theta: &[f64], u| -(1.0 - u).ln() / theta[0]))
}

/// `log √(2π)`, exposed for tests that check the normalising constant.
pub fn log_sqrt_two_pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}
