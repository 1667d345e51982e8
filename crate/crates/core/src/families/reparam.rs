use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expectation::{ParameterDomain, StatisticalFamily, FD_STEP, FD_STEP_SECOND};

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A chart change `θ' = φ(θ)`, `θ = ψ(θ')`.
///
/// The transition function is the Jacobian `J = ∂θ/∂θ'` of `ψ`, evaluated
/// at `θ'`. It is analytic when supplied, otherwise a central difference.
#[derive(Clone)]
pub struct Reparameterization {
    name: String,
    forward: MapFn,
    inverse: MapFn,
    jacobian: Option<JacobianFn>,
    domain: ParameterDomain,
}

impl fmt::Debug for Reparameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reparameterization")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

fn step(base: f64, coord: f64) -> f64 {
    base * coord.abs().max(1.0)
}

impl Reparameterization {
    /// `domain` is the image box `Θ'`.
    pub fn new(
        name: impl Into<String>,
        forward: MapFn,
        inverse: MapFn,
        domain: ParameterDomain,
    ) -> Self {
        Self {
            name: name.into(),
            forward,
            inverse,
            jacobian: None,
            domain,
        }
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn identity(domain: ParameterDomain) -> Self {
        let n = domain.dim();
        Self::new(
            "identity",
            Arc::new(|t: &[f64]| t.to_vec()),
            Arc::new(|t: &[f64]| t.to_vec()),
            domain,
        )
        .with_jacobian(Arc::new(move |_| DMatrix::identity(n, n)))
    }

    /// `θ_k ↦ log θ_k` for a coordinate bounded below by zero.
    pub fn log_coordinate(domain: &ParameterDomain, k: usize) -> Result<Self> {
        let Some(&(lo, hi)) = domain.bounds.get(k) else {
            return Err(Error::InvalidArgument(format!("no coordinate {k}")));
        };
        if lo < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coordinate {k} must be positive for a log chart, lower bound is {lo}"
            )));
        }
        let mut bounds = domain.bounds.clone();
        bounds[k] = (lo.ln(), hi.ln());
        let n = domain.dim();
        Ok(Self::new(
            format!("log th{}", k + 1),
            Arc::new(move |t: &[f64]| {
                let mut v = t.to_vec();
                v[k] = v[k].ln();
                v
            }),
            Arc::new(move |t: &[f64]| {
                let mut v = t.to_vec();
                v[k] = v[k].exp();
                v
            }),
            ParameterDomain::new(bounds),
        )
        .with_jacobian(Arc::new(move |t: &[f64]| {
            let mut j = DMatrix::identity(n, n);
            j[(k, k)] = t[k].exp();
            j
        })))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        (self.forward)(theta)
    }

    pub fn inverse(&self, theta_new: &[f64]) -> Vec<f64> {
        (self.inverse)(theta_new)
    }

    /// Transition function `g(θ') = ∂θ/∂θ'`.
    pub fn transition(&self, theta_new: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(theta_new);
        }
        let n = theta_new.len();
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = step(FD_STEP, theta_new[i]);
            let mut p = theta_new.to_vec();
            let mut m = theta_new.to_vec();
            p[i] += h;
            m[i] -= h;
            let (fp, fm) = (self.inverse(&p), self.inverse(&m));
            for a in 0..n {
                jac[(a, i)] = (fp[a] - fm[a]) / (2.0 * h);
            }
        }
        jac
    }

    /// `∂_m g(θ')` for each new coordinate `m`.
    pub fn transition_derivative(&self, theta_new: &[f64]) -> Vec<DMatrix<f64>> {
        let n = theta_new.len();
        let shifted = |moves: &[(usize, f64)]| {
            let mut t = theta_new.to_vec();
            for &(i, d) in moves {
                t[i] += d;
            }
            t
        };
        if self.jacobian.is_some() {
            return (0..n)
                .map(|m| {
                    let h = step(FD_STEP, theta_new[m]);
                    (self.transition(&shifted(&[(m, h)])) - self.transition(&shifted(&[(m, -h)])))
                        / (2.0 * h)
                })
                .collect();
        }
        // second differences of ψ directly rather than differences of differences
        (0..n)
            .map(|m| {
                let hm = step(FD_STEP_SECOND, theta_new[m]);
                let mut d = DMatrix::zeros(n, n);
                for j in 0..n {
                    let hj = step(FD_STEP_SECOND, theta_new[j]);
                    let col: Vec<f64> = if j == m {
                        let (p, c, q) = (
                            self.inverse(&shifted(&[(m, hm)])),
                            self.inverse(theta_new),
                            self.inverse(&shifted(&[(m, -hm)])),
                        );
                        (0..n).map(|a| (p[a] - 2.0 * c[a] + q[a]) / (hm * hm)).collect()
                    } else {
                        let pp = self.inverse(&shifted(&[(m, hm), (j, hj)]));
                        let pm = self.inverse(&shifted(&[(m, hm), (j, -hj)]));
                        let mp = self.inverse(&shifted(&[(m, -hm), (j, hj)]));
                        let mm = self.inverse(&shifted(&[(m, -hm), (j, -hj)]));
                        (0..n)
                            .map(|a| (pp[a] - pm[a] - mp[a] + mm[a]) / (4.0 * hm * hj))
                            .collect()
                    };
                    for a in 0..n {
                        d[(a, j)] = col[a];
                    }
                }
                d
            })
            .collect()
    }

    /// Checks `ψ∘φ = id` to 1e-8 and an invertible Jacobian at each grid point
    /// (given in the original chart).
    pub fn validate(&self, grid: &[Vec<f64>]) -> Result<()> {
        for theta in grid {
            let new = self.forward(theta);
            if !self.domain.contains(&new) {
                return Err(Error::domain(&new, format!("image of {theta:?} is outside Θ'")));
            }
            let back = self.inverse(&new);
            let err = theta
                .iter()
                .zip(&back)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / a.abs().max(1.0)));
            if !(err <= 1e-8) {
                return Err(Error::InvalidArgument(format!(
                    "inverse map does not undo the forward map at {theta:?} (error {err:e})"
                )));
            }
            let det = self.transition(&new).determinant();
            if !(det.abs() > 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "singular Jacobian at θ' = {new:?} (det {det:e})"
                )));
            }
        }
        Ok(())
    }
}

/// The family in the chart `θ' = φ(θ)`: `l'(x; θ') = l(x; ψ(θ'))`.
///
/// `test_grid` (original chart) is checked with [`Reparameterization::validate`].
/// Analytic scores of the base family are carried through the chain rule.
pub fn reparameterize(
    family: &StatisticalFamily,
    r: &Reparameterization,
    test_grid: &[Vec<f64>],
) -> Result<StatisticalFamily> {
    if r.domain().dim() != family.dim() {
        return Err(Error::Dimension {
            expected: family.dim(),
            got: r.domain().dim(),
        });
    }
    r.validate(test_grid)?;

    let base_l = family.log_density_fn().clone();
    let inv = r.clone();
    let mut out = StatisticalFamily::new(
        format!("{} [{}]", family.name(), r.name()),
        r.domain().clone(),
        family.sample_space(),
        Arc::new(move |x, t: &[f64]| base_l(x, &inv.inverse(t))),
    )?
    .with_monte_carlo(family.monte_carlo_config());

    let hint = family.quad_hint_fn().clone();
    let inv = r.clone();
    out = out.with_quad_hint(Arc::new(move |t: &[f64]| hint(&inv.inverse(t))));

    if let Some(icdf) = family.inverse_cdf_fn().cloned() {
        let inv = r.clone();
        out = out.with_inverse_cdf(Arc::new(move |t: &[f64], u| icdf(&inv.inverse(t), u)));
    }

    if let Some(s) = family.analytic_score_fn().cloned() {
        let n = family.dim();
        let rr = r.clone();
        let s1 = s.clone();
        out = out.with_score(Arc::new(move |x, t: &[f64], i| {
            let theta = rr.inverse(t);
            let j = rr.transition(t);
            (0..n).map(|a| s1(x, &theta, a) * j[(a, i)]).sum()
        }));
        if let Some(s2) = family.analytic_score2_fn().cloned() {
            let rr = r.clone();
            out = out.with_score2(Arc::new(move |x, t: &[f64], i, k| {
                let theta = rr.inverse(t);
                let j = rr.transition(t);
                let dj = rr.transition_derivative(t);
                let sv = DVector::from_fn(n, |a, _| s(x, &theta, a));
                let mut v = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        v += s2(x, &theta, a, b) * j[(a, i)] * j[(b, k)];
                    }
                    v += sv[a] * dj[i][(a, k)];
                }
                v
            }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expectation::{score, score2, ExpectationStrategy};
    use crate::families::make_normal;
    use crate::manifold::{christoffel_lower, fisher_metric};

    fn grid() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0], vec![1.5, 0.6], vec![-1.0, 2.5]]
    }

    fn log_sigma() -> Reparameterization {
        Reparameterization::log_coordinate(make_normal().domain(), 1).unwrap()
    }

    #[test]
    fn metric_transforms_as_a_tensor() {
        let base = make_normal();
        let f = reparameterize(&base, &log_sigma(), &grid()).unwrap();
        let q = ExpectationStrategy::quadrature();
        for theta in grid() {
            let tn = log_sigma().forward(&theta);
            let j = log_sigma().transition(&tn);
            let g = fisher_metric(&base, &theta, ExpectationStrategy::ClosedForm).unwrap();
            let expected = j.transpose() * g.matrix() * &j;
            let got = fisher_metric(&f, &tn, q).unwrap();
            assert!((got.matrix() - expected).amax() < 1e-9);
            // in (μ, log σ) the metric is diag(e^{-2s}, 2)
            assert!((got.get(1, 1) - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_map_gives_identical_tensors() {
        let base = make_normal();
        let r = Reparameterization::identity(base.domain().clone());
        let f = reparameterize(&base, &r, &grid()).unwrap();
        let q = ExpectationStrategy::quadrature();
        for theta in grid() {
            let a = christoffel_lower(&base, &theta, 0.3, q).unwrap();
            let b = christoffel_lower(&f, &theta, 0.3, q).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn chain_rule_scores_match_finite_differences() {
        let base = make_normal();
        let numeric = Reparameterization::new(
            "log sigma (numeric)",
            Arc::new(|t: &[f64]| vec![t[0], t[1].ln()]),
            Arc::new(|t: &[f64]| vec![t[0], t[1].exp()]),
            log_sigma().domain().clone(),
        );
        let a = reparameterize(&base, &log_sigma(), &grid()).unwrap();
        let b = reparameterize(&base, &numeric, &grid()).unwrap();
        let t = [0.4, -0.3];
        for x in [-1.0, 0.2, 2.0] {
            for i in 0..2 {
                let d = score(&a, &t, x, i).unwrap() - score(&b, &t, x, i).unwrap();
                assert!(d.abs() < 1e-8);
                for k in 0..2 {
                    let d2 = score2(&a, &t, x, i, k).unwrap() - score2(&b, &t, x, i, k).unwrap();
                    assert!(d2.abs() < 1e-6, "{d2}");
                }
            }
        }
        let ja = log_sigma().transition(&t);
        let jb = numeric.transition(&t);
        assert!((ja - jb).amax() < 1e-9);
        let da = log_sigma().transition_derivative(&t);
        let db = numeric.transition_derivative(&t);
        assert!((&da[1] - &db[1]).amax() < 1e-6);
    }

    #[test]
    fn validation_rejects_bad_maps() {
        let base = make_normal();
        let broken = Reparameterization::new(
            "broken",
            Arc::new(|t: &[f64]| vec![t[0], t[1]]),
            Arc::new(|t: &[f64]| vec![t[0], 2.0 * t[1]]),
            base.domain().clone(),
        );
        assert!(reparameterize(&base, &broken, &grid()).is_err());
        let flat = Reparameterization::new(
            "flat",
            Arc::new(|t: &[f64]| vec![t[0], t[1]]),
            Arc::new(|t: &[f64]| vec![t[0], t[1]]),
            base.domain().clone(),
        )
        .with_jacobian(Arc::new(|_| DMatrix::zeros(2, 2)));
        assert!(reparameterize(&base, &flat, &grid()).is_err());
        assert!(Reparameterization::log_coordinate(base.domain(), 0).is_err());
    }
}
