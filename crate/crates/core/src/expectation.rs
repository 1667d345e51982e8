//! Statistical families and expectations over their sample space.
//!
//! A [`StatisticalFamily`] is a log-density `l(x; θ)` on a one-dimensional
//! sample space together with optional analytic score functions. Expectations
//! `E[f] = ∫ f(x) p(x; θ) dx` are evaluated by Gaussian quadrature placed with
//! the family's location/scale hint, or by seeded inverse-CDF Monte-Carlo.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ClosedFormGeometry;
use crate::quadrature::{rule, RuleKind};

/// Default node count for quadrature-backed expectations.
pub const DEFAULT_NODES: usize = 64;

/// Relative step for first-order finite differences of the log-density.
pub const FD_STEP: f64 = 1e-5;

/// Relative step for second differences of chart maps.
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Step of the fourth-order stencils used for `∂_i∂_j l` when no analytic
/// second score is supplied.
pub const FD_STEP_HESSIAN: f64 = 1e-3;

pub type LogDensityFn = Arc<dyn Fn(f64, &[f64]) -> Result<f64> + Send + Sync>;
pub type ScoreFn = Arc<dyn Fn(f64, &[f64], usize) -> f64 + Send + Sync>;
pub type Score2Fn = Arc<dyn Fn(f64, &[f64], usize, usize) -> f64 + Send + Sync>;
pub type QuadHintFn = Arc<dyn Fn(&[f64]) -> (f64, f64) + Send + Sync>;
pub type InverseCdfFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// One-dimensional sample space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleSpace {
    RealLine,
    /// Open interval. At most one end may be infinite; a half-line is
    /// integrated with Gauss–Laguerre, a bounded interval with Gauss–Legendre.
    Interval {
        #[serde(with = "crate::serde_ext::opt_inf_lower")]
        lower: f64,
        #[serde(with = "crate::serde_ext::opt_inf_upper")]
        upper: f64,
    },
}

impl SampleSpace {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidArgument(format!(
                "interval bounds must satisfy lower < upper, got ({lower}, {upper})"
            )));
        }
        if lower.is_infinite() && upper.is_infinite() {
            return Ok(SampleSpace::RealLine);
        }
        Ok(SampleSpace::Interval { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            SampleSpace::RealLine => x.is_finite(),
            SampleSpace::Interval { lower, upper } => x > lower && x < upper,
        }
    }
}

/// Open box `Θ = Π (lo_i, hi_i)`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    #[serde(with = "crate::serde_ext::bounds")]
    pub bounds: Vec<(f64, f64)>,
}

impl ParameterDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds }
    }

    pub fn unbounded(n: usize) -> Self {
        Self::new(vec![(f64::NEG_INFINITY, f64::INFINITY); n])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(t, (lo, hi))| t.is_finite() && t > lo && t < hi)
    }

    /// Every coordinate can move by `margin_i` in both directions.
    pub fn contains_with_margin(&self, theta: &[f64], margin: &[f64]) -> bool {
        self.contains(theta)
            && theta
                .iter()
                .zip(margin)
                .zip(&self.bounds)
                .all(|((t, m), (lo, hi))| t - m > *lo && t + m < *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            count: 200_000,
            seed: 0x5eed,
        }
    }
}

/// How `E[·]` is evaluated.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectationStrategy {
    /// Use the family's closed-form tensor providers. Generic integrands (and
    /// families without closed forms) fall back to the default quadrature.
    #[default]
    ClosedForm,
    Quadrature { nodes: usize },
    MonteCarlo { count: usize, seed: u64 },
}


impl ExpectationStrategy {
    pub fn quadrature() -> Self {
        ExpectationStrategy::Quadrature {
            nodes: DEFAULT_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ExpectationStrategy::Quadrature { nodes } if nodes < 2 => Err(Error::InvalidArgument(
                format!("quadrature needs at least 2 nodes, got {nodes}"),
            )),
            ExpectationStrategy::MonteCarlo { count: 0, .. } => Err(Error::InvalidArgument(
                "Monte-Carlo needs at least one sample".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Nominal absolute accuracy for order-one integrands.
    pub fn tolerance(&self) -> f64 {
        match *self {
            ExpectationStrategy::ClosedForm | ExpectationStrategy::Quadrature { .. } => 1e-9,
            // five standard errors of a unit-variance integrand
            ExpectationStrategy::MonteCarlo { count, .. } => 5.0 / (count as f64).sqrt(),
        }
    }
}

impl fmt::Display for ExpectationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectationStrategy::ClosedForm => write!(f, "closed"),
            ExpectationStrategy::Quadrature { nodes } => write!(f, "quad:{nodes}"),
            ExpectationStrategy::MonteCarlo { count, seed } => write!(f, "mc:{count}:{seed}"),
        }
    }
}

impl FromStr for ExpectationStrategy {
    type Err = Error;

    /// Accepts `closed`, `quad:N`, `mc:N` and `mc:N:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognised strategy '{s}'"));
        let mut parts = s.trim().split(':');
        let strategy = match parts.next() {
            Some("closed") => ExpectationStrategy::ClosedForm,
            Some("quad") => {
                let nodes = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                ExpectationStrategy::Quadrature { nodes }
            }
            Some("mc") => {
                let count = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let seed = match parts.next() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => MonteCarloConfig::default().seed,
                };
                ExpectationStrategy::MonteCarlo { count, seed }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        strategy.validate()?;
        Ok(strategy)
    }
}

/// A parametric family of densities `p(x; θ)`, `θ ∈ Θ ⊂ R^n`.
#[derive(Clone)]
pub struct StatisticalFamily {
    name: String,
    domain: ParameterDomain,
    sample_space: SampleSpace,
    log_density: LogDensityFn,
    analytic_score: Option<ScoreFn>,
    analytic_score2: Option<Score2Fn>,
    quad_hint: QuadHintFn,
    inverse_cdf: Option<InverseCdfFn>,
    mc_config: MonteCarloConfig,
    closed_form: Option<Arc<dyn ClosedFormGeometry>>,
}

impl fmt::Debug for StatisticalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StatisticalFamily")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("domain", &self.domain)
            .field("sample_space", &self.sample_space)
            .field("analytic_score", &self.analytic_score.is_some())
            .field("analytic_score2", &self.analytic_score2.is_some())
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl StatisticalFamily {
    pub fn new(
        name: impl Into<String>,
        domain: ParameterDomain,
        sample_space: SampleSpace,
        log_density: LogDensityFn,
    ) -> Result<Self> {
        if domain.dim() == 0 {
            return Err(Error::InvalidArgument(
                "a family needs at least one parameter".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            domain,
            sample_space,
            log_density,
            analytic_score: None,
            analytic_score2: None,
            quad_hint: Arc::new(|_| (0.0, 1.0)),
            inverse_cdf: None,
            mc_config: MonteCarloConfig::default(),
            closed_form: None,
        })
    }

    pub fn with_score(mut self, score: ScoreFn) -> Self {
        self.analytic_score = Some(score);
        self
    }

    pub fn with_score2(mut self, score2: Score2Fn) -> Self {
        self.analytic_score2 = Some(score2);
        self
    }

    pub fn with_quad_hint(mut self, hint: QuadHintFn) -> Self {
        self.quad_hint = hint;
        self
    }

    pub fn with_inverse_cdf(mut self, inverse_cdf: InverseCdfFn) -> Self {
        self.inverse_cdf = Some(inverse_cdf);
        self
    }

    pub fn with_monte_carlo(mut self, config: MonteCarloConfig) -> Self {
        self.mc_config = config;
        self
    }

    pub fn with_closed_form(mut self, geometry: Arc<dyn ClosedFormGeometry>) -> Self {
        self.closed_form = Some(geometry);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn sample_space(&self) -> SampleSpace {
        self.sample_space
    }

    pub fn closed_form(&self) -> Option<&Arc<dyn ClosedFormGeometry>> {
        self.closed_form.as_ref()
    }

    pub fn has_analytic_score(&self) -> bool {
        self.analytic_score.is_some()
    }

    pub fn has_analytic_score2(&self) -> bool {
        self.analytic_score2.is_some()
    }

    pub fn monte_carlo_config(&self) -> MonteCarloConfig {
        self.mc_config
    }

    pub(crate) fn log_density_fn(&self) -> &LogDensityFn {
        &self.log_density
    }

    pub(crate) fn analytic_score_fn(&self) -> Option<&ScoreFn> {
        self.analytic_score.as_ref()
    }

    pub(crate) fn analytic_score2_fn(&self) -> Option<&Score2Fn> {
        self.analytic_score2.as_ref()
    }

    pub(crate) fn quad_hint_fn(&self) -> &QuadHintFn {
        &self.quad_hint
    }

    pub(crate) fn inverse_cdf_fn(&self) -> Option<&InverseCdfFn> {
        self.inverse_cdf.as_ref()
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        if !self.domain.contains(theta) {
            return Err(Error::domain(theta, format!("not in {:?}", self.domain.bounds)));
        }
        Ok(())
    }

    pub fn quad_hint(&self, theta: &[f64]) -> (f64, f64) {
        (self.quad_hint)(theta)
    }

    pub fn log_density(&self, x: f64, theta: &[f64]) -> Result<f64> {
        (self.log_density)(x, theta)
    }
}

fn check_index(family: &StatisticalFamily, i: usize) -> Result<()> {
    if i >= family.dim() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {i} out of range for a {}-parameter family",
            family.dim()
        )));
    }
    Ok(())
}

fn check_sample(family: &StatisticalFamily, x: f64) -> Result<()> {
    if family.sample_space.contains(x) {
        Ok(())
    } else {
        Err(Error::SampleSpace { x })
    }
}

fn shifted(theta: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut t = theta.to_vec();
    for &(i, d) in moves {
        t[i] += d;
    }
    t
}

fn fd_step(base: f64, coord: f64) -> f64 {
    base * coord.abs().max(1.0)
}

/// `∂_i l(x; θ)` (indices are zero-based).
pub fn score(family: &StatisticalFamily, theta: &[f64], x: f64, i: usize) -> Result<f64> {
    family.check_theta(theta)?;
    check_index(family, i)?;
    check_sample(family, x)?;
    score_unchecked(family, theta, x, i)
}

pub(crate) fn score_unchecked(
    family: &StatisticalFamily,
    theta: &[f64],
    x: f64,
    i: usize,
) -> Result<f64> {
    if let Some(s) = &family.analytic_score {
        return Ok(s(x, theta, i));
    }
    let h = fd_step(FD_STEP, theta[i]);
    let lp = family.log_density(x, &shifted(theta, &[(i, h)]))?;
    let lm = family.log_density(x, &shifted(theta, &[(i, -h)]))?;
    Ok((lp - lm) / (2.0 * h))
}

/// `∂_i ∂_j l(x; θ)`, symmetric in `(i, j)` by construction.
pub fn score2(
    family: &StatisticalFamily,
    theta: &[f64],
    x: f64,
    i: usize,
    j: usize,
) -> Result<f64> {
    family.check_theta(theta)?;
    check_index(family, i)?;
    check_index(family, j)?;
    check_sample(family, x)?;
    score2_unchecked(family, theta, x, i, j)
}

pub(crate) fn score2_unchecked(
    family: &StatisticalFamily,
    theta: &[f64],
    x: f64,
    i: usize,
    j: usize,
) -> Result<f64> {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    if let Some(s2) = &family.analytic_score2 {
        return Ok(s2(x, theta, i, j));
    }
    let l = |moves: &[(usize, f64)]| family.log_density(x, &shifted(theta, moves));
    let hi = fd_step(FD_STEP_HESSIAN, theta[i]);
    if i == j {
        let (p1, m1) = (l(&[(i, hi)])?, l(&[(i, -hi)])?);
        let (p2, m2) = (l(&[(i, 2.0 * hi)])?, l(&[(i, -2.0 * hi)])?);
        Ok((-p2 + 16.0 * p1 - 30.0 * l(&[])? + 16.0 * m1 - m2) / (12.0 * hi * hi))
    } else {
        // tensor product of the five-point first-derivative stencil
        const W: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let hj = fd_step(FD_STEP_HESSIAN, theta[j]);
        let mut acc = 0.0;
        for (si, wi) in W {
            for (sj, wj) in W {
                acc += wi * wj * l(&[(i, si * hi), (j, sj * hj)])?;
            }
        }
        Ok(acc / (144.0 * hi * hj))
    }
}

/// Visits `(x, w)` pairs with `Σ w f(x) ≈ E[f]`. The density is folded into `w`.
pub(crate) fn for_each_node(
    family: &StatisticalFamily,
    theta: &[f64],
    strategy: ExpectationStrategy,
    mut visit: impl FnMut(f64, f64) -> Result<()>,
) -> Result<()> {
    family.check_theta(theta)?;
    strategy.validate()?;
    let nodes = match strategy {
        ExpectationStrategy::ClosedForm => DEFAULT_NODES,
        ExpectationStrategy::Quadrature { nodes } => nodes,
        ExpectationStrategy::MonteCarlo { count, seed } => {
            let inv = family.inverse_cdf.as_ref().ok_or_else(|| {
                Error::Unsupported(format!(
                    "family '{}' has no inverse CDF for Monte-Carlo sampling",
                    family.name
                ))
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = 1.0 / count as f64;
            for _ in 0..count {
                let mut u: f64 = rng.random();
                while u <= 0.0 {
                    u = rng.random();
                }
                visit(inv(theta, u), w)?;
            }
            return Ok(());
        }
    };

    let (loc, scale) = family.quad_hint(theta);
    if !(scale > 0.0 && scale.is_finite() && loc.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "quadrature hint must have finite location and positive scale, got ({loc}, {scale})"
        )));
    }
    let density_weight = |x: f64, log_jacobian: f64| -> Result<f64> {
        let l = family.log_density(x, theta)?;
        if l.is_nan() || l == f64::INFINITY {
            return Err(Error::NonFinite {
                what: "log-density".into(),
                x,
            });
        }
        Ok((l + log_jacobian).exp())
    };

    match family.sample_space {
        SampleSpace::RealLine => {
            let r = rule(RuleKind::Hermite, nodes);
            let factor = scale * SQRT_2;
            for (t, w) in r.nodes.iter().zip(&r.weights) {
                let x = loc + factor * t;
                let dw = density_weight(x, t * t)?;
                if dw != 0.0 {
                    visit(x, w * factor * dw)?;
                }
            }
        }
        SampleSpace::Interval { lower, upper } if lower.is_finite() && upper.is_finite() => {
            let r = rule(RuleKind::Legendre, nodes);
            let half = 0.5 * (upper - lower);
            let mid = 0.5 * (upper + lower);
            for (t, w) in r.nodes.iter().zip(&r.weights) {
                let x = mid + half * t;
                let dw = density_weight(x, 0.0)?;
                if dw != 0.0 {
                    visit(x, w * half * dw)?;
                }
            }
        }
        SampleSpace::Interval { lower, upper } => {
            let r = rule(RuleKind::Laguerre, nodes);
            let (origin, dir) = if lower.is_finite() {
                (lower, 1.0)
            } else {
                (upper, -1.0)
            };
            for (t, w) in r.nodes.iter().zip(&r.weights) {
                let x = origin + dir * scale * t;
                let dw = density_weight(x, *t)?;
                if dw != 0.0 {
                    visit(x, w * scale * dw)?;
                }
            }
        }
    }
    Ok(())
}

/// `E[f] = ∫ f(x) p(x; θ) dx`.
pub fn expect(
    family: &StatisticalFamily,
    theta: &[f64],
    integrand: impl Fn(f64) -> f64,
    strategy: ExpectationStrategy,
) -> Result<f64> {
    let mut acc = 0.0;
    for_each_node(family, theta, strategy, |x, w| {
        let v = integrand(x);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "integrand".into(),
                x,
            });
        }
        acc += w * v;
        Ok(())
    })?;
    Ok(acc)
}

/// Like [`expect`] for an integrand that may itself fail.
pub fn try_expect(
    family: &StatisticalFamily,
    theta: &[f64],
    integrand: impl Fn(f64) -> Result<f64>,
    strategy: ExpectationStrategy,
) -> Result<f64> {
    let mut acc = 0.0;
    for_each_node(family, theta, strategy, |x, w| {
        let v = integrand(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "integrand".into(),
                x,
            });
        }
        acc += w * v;
        Ok(())
    })?;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_exponential, make_normal};

    #[test]
    fn normalization_and_fisher_entry() {
        let f = make_normal();
        let q = ExpectationStrategy::quadrature();
        let one = expect(&f, &[0.0, 1.0], |_| 1.0, q).unwrap();
        assert!((one - 1.0).abs() < 1e-13);
        let g11 = try_expect(
            &f,
            &[0.0, 1.0],
            |x| Ok(score(&f, &[0.0, 1.0], x, 0)?.powi(2)),
            q,
        )
        .unwrap();
        assert!((g11 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_central_moment() {
        // oracle: E[(x-mu)^4] = 3 sigma^4
        let f = make_normal();
        let m4 = expect(
            &f,
            &[0.0, 2.0],
            |x| x.powi(4),
            ExpectationStrategy::quadrature(),
        )
        .unwrap();
        assert!((m4 - 48.0).abs() < 1e-10, "{m4}");
    }

    #[test]
    fn score_examples() {
        let f = make_normal();
        assert_eq!(score(&f, &[0.0, 1.0], 2.0, 0).unwrap(), 2.0);
        assert_eq!(score(&f, &[0.0, 1.0], 0.0, 1).unwrap(), -1.0);
        assert_eq!(score2(&f, &[0.0, 1.0], 0.0, 0, 0).unwrap(), -1.0);
        assert_eq!(score2(&f, &[0.0, 1.0], 1.0, 0, 1).unwrap(), -2.0);
        assert_eq!(score2(&f, &[0.0, 1.0], 1.0, 1, 0).unwrap(), -2.0);
    }

    #[test]
    fn monte_carlo_is_seeded_and_close() {
        let f = make_normal();
        let mc = ExpectationStrategy::MonteCarlo {
            count: 100_000,
            seed: 11,
        };
        let a = expect(&f, &[1.0, 2.0], |x| x * x, mc).unwrap();
        let b = expect(&f, &[1.0, 2.0], |x| x * x, mc).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        // E[x^2] = mu^2 + sigma^2 = 5, Var[x^2] = 4 mu^2 s^2 + 2 s^4 = 48
        assert!((a - 5.0).abs() < 48f64.sqrt() * mc.tolerance(), "{a}");
    }

    #[test]
    fn monte_carlo_without_inverse_cdf_is_rejected() {
        let base = make_normal();
        let f = StatisticalFamily::new(
            "bare",
            base.domain().clone(),
            SampleSpace::RealLine,
            base.log_density_fn().clone(),
        )
        .unwrap();
        let err = expect(
            &f,
            &[0.0, 1.0],
            |_| 1.0,
            ExpectationStrategy::MonteCarlo { count: 10, seed: 1 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn errors() {
        let f = make_normal();
        let q = ExpectationStrategy::quadrature();
        assert!(matches!(
            expect(&f, &[0.0, -1.0], |_| 1.0, q),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            expect(&f, &[0.0, 1.0], |x| 1.0 / (x - x), q),
            Err(Error::NonFinite { .. })
        ));
        let e = make_exponential();
        assert!(matches!(
            score(&e, &[1.0], -1.0, 0),
            Err(Error::SampleSpace { .. })
        ));
        assert!("quad:1".parse::<ExpectationStrategy>().is_err());
        assert!("mc:0".parse::<ExpectationStrategy>().is_err());
        assert!("simpson".parse::<ExpectationStrategy>().is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "closed".parse::<ExpectationStrategy>().unwrap(),
            ExpectationStrategy::ClosedForm
        );
        assert_eq!(
            "quad:32".parse::<ExpectationStrategy>().unwrap(),
            ExpectationStrategy::Quadrature { nodes: 32 }
        );
        assert_eq!(
            "mc:500:9".parse::<ExpectationStrategy>().unwrap(),
            ExpectationStrategy::MonteCarlo { count: 500, seed: 9 }
        );
    }

    #[test]
    fn half_line_and_interval_rules() {
        let e = make_exponential();
        let q = ExpectationStrategy::quadrature();
        for rate in [0.3, 1.0, 4.0] {
            let m1 = expect(&e, &[rate], |x| x, q).unwrap();
            assert!((m1 - 1.0 / rate).abs() < 1e-12);
        }
        // uniform density on (0, 2)
        let u = StatisticalFamily::new(
            "uniform",
            ParameterDomain::unbounded(1),
            SampleSpace::interval(0.0, 2.0).unwrap(),
            Arc::new(|_, _| Ok(-(2f64.ln()))),
        )
        .unwrap();
        let m2 = expect(&u, &[0.0], |x| x * x, q).unwrap();
        assert!((m2 - 4.0 / 3.0).abs() < 1e-13);
    }
}
