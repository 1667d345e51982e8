//! Chart-level α-geometry: Fisher metric, skewness tensor, α-Christoffel
//! symbols, α-curvature and α-geodesics.
//!
//! Index conventions (zero-based throughout):
//!
//! * `Γ_ijk = ⟨∇_∂i ∂j, ∂k⟩ = E[(∂i∂j l)(∂k l)] + (1-α)/2 · T_ijk`
//! * `Γ^k_ij = Γ_ijl g^lk`, so `∇_∂i ∂j = Γ^k_ij ∂k`
//! * `R_ijkl = g(R(∂i, ∂j) ∂k, ∂l)` with `R(X,Y) = [∇_X, ∇_Y] - ∇_[X,Y]`,
//!   i.e. `R_ijkl = (∂iΓ^s_jk - ∂jΓ^s_ik) g_sl + Γ_itl Γ^t_jk - Γ_jtl Γ^t_ik`.
//!
//! With this ordering the normal family has `R_0101 = (1-α²)/σ⁴` and the
//! sectional curvature `K = -R_0101 / det g = -(1-α²)/2`.

mod geodesic;

pub use geodesic::{geodesic, Trajectory, TrajectorySample};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{
    for_each_node, score2_unchecked, score_unchecked, ExpectationStrategy, StatisticalFamily,
};
use crate::tensor::{CubicTensor, CurvatureTensor, MetricTensor, MixedChristoffel};

/// Relative step for finite differences of Christoffel symbols.
pub const GAMMA_FD_STEP: f64 = 1e-4;

/// Relative step for chart-side directional derivatives of vector fields.
pub const FIELD_FD_STEP: f64 = 1e-5;

/// Analytic tensor providers for families that have them.
pub trait ClosedFormGeometry: Send + Sync {
    fn metric(&self, theta: &[f64]) -> DMatrix<f64>;
    fn skewness(&self, theta: &[f64]) -> CubicTensor;
    fn christoffel_lower(&self, theta: &[f64], alpha: f64) -> CubicTensor;
    fn christoffel_mixed(&self, theta: &[f64], alpha: f64) -> MixedChristoffel;

    /// `∂_m Γ^k_ij` for `m = 0..n`, when known analytically.
    fn christoffel_mixed_derivative(
        &self,
        _theta: &[f64],
        _alpha: f64,
    ) -> Option<Vec<MixedChristoffel>> {
        None
    }
}

/// How `∂Γ` is obtained for the curvature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DerivativeMode {
    /// Analytic when the strategy is closed-form and the family provides it,
    /// otherwise central differences with the default step.
    #[default]
    Auto,
    /// Central differences with relative step `h · max(1, |θ_m|)`.
    FiniteDifference(f64),
}

fn closed_form(
    family: &StatisticalFamily,
    strategy: ExpectationStrategy,
) -> Option<&dyn ClosedFormGeometry> {
    match strategy {
        ExpectationStrategy::ClosedForm => family.closed_form().map(|c| c.as_ref()),
        _ => None,
    }
}

/// Score moments gathered in a single pass over the quadrature nodes.
struct ScoreMoments {
    metric: DMatrix<f64>,
    skew: CubicTensor,
    /// `E[(∂i∂j l)(∂k l)]`
    hess_score: Option<CubicTensor>,
}

fn score_moments(
    family: &StatisticalFamily,
    theta: &[f64],
    strategy: ExpectationStrategy,
    with_hessian: bool,
) -> Result<ScoreMoments> {
    let n = family.dim();
    let mut metric = DMatrix::zeros(n, n);
    let mut skew = CubicTensor::zeros(n);
    let mut hess = CubicTensor::zeros(n);
    let mut s = vec![0.0; n];
    let mut s2 = DMatrix::zeros(n, n);
    for_each_node(family, theta, strategy, |x, w| {
        for (i, si) in s.iter_mut().enumerate() {
            *si = score_unchecked(family, theta, x, i)?;
            if !si.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("score component {i}"),
                    x,
                });
            }
        }
        if with_hessian {
            for i in 0..n {
                for j in i..n {
                    let v = score2_unchecked(family, theta, x, i, j)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: format!("second score component ({i}, {j})"),
                            x,
                        });
                    }
                    s2[(i, j)] = v;
                    s2[(j, i)] = v;
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let sij = s[i] * s[j];
                metric[(i, j)] += w * sij;
                for (k, sk) in s.iter().enumerate().skip(j) {
                    let v = skew.get(i, j, k) + w * sij * sk;
                    skew.set(i, j, k, v);
                }
            }
        }
        if with_hessian {
            for i in 0..n {
                for j in i..n {
                    for (k, sk) in s.iter().enumerate() {
                        let v = hess.get(i, j, k) + w * s2[(i, j)] * sk;
                        hess.set(i, j, k, v);
                    }
                }
            }
        }
        Ok(())
    })?;

    // Fill the symmetric parts from the sorted-index accumulators.
    for i in 0..n {
        for j in 0..i {
            metric[(i, j)] = metric[(j, i)];
        }
    }
    let skew = CubicTensor::from_fn(n, |i, j, k| {
        let mut idx = [i, j, k];
        idx.sort_unstable();
        skew.get(idx[0], idx[1], idx[2])
    });
    let hess_score = with_hessian.then(|| {
        CubicTensor::from_fn(n, |i, j, k| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            hess.get(a, b, k)
        })
    });
    Ok(ScoreMoments {
        metric,
        skew,
        hess_score,
    })
}

/// `g_ij = E[(∂i l)(∂j l)]`.
pub fn fisher_metric(
    family: &StatisticalFamily,
    theta: &[f64],
    strategy: ExpectationStrategy,
) -> Result<MetricTensor> {
    family.check_theta(theta)?;
    if let Some(cf) = closed_form(family, strategy) {
        return MetricTensor::new(cf.metric(theta));
    }
    MetricTensor::new(score_moments(family, theta, strategy, false)?.metric)
}

/// `T_ijk = E[(∂i l)(∂j l)(∂k l)]`.
pub fn skewness_tensor(
    family: &StatisticalFamily,
    theta: &[f64],
    strategy: ExpectationStrategy,
) -> Result<CubicTensor> {
    family.check_theta(theta)?;
    if let Some(cf) = closed_form(family, strategy) {
        return Ok(cf.skewness(theta));
    }
    Ok(score_moments(family, theta, strategy, false)?.skew)
}

/// `Γ^(α)_ijk = E[(∂i∂j l)(∂k l)] + (1-α)/2 · T_ijk`.
pub fn christoffel_lower(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
) -> Result<CubicTensor> {
    family.check_theta(theta)?;
    if let Some(cf) = closed_form(family, strategy) {
        return Ok(cf.christoffel_lower(theta, alpha));
    }
    let m = score_moments(family, theta, strategy, true)?;
    Ok(lower_from_moments(&m, alpha))
}

fn lower_from_moments(m: &ScoreMoments, alpha: f64) -> CubicTensor {
    let hess = m.hess_score.as_ref().expect("moments gathered with hessian");
    let c = 0.5 * (1.0 - alpha);
    CubicTensor::from_fn(m.skew.dim(), |i, j, k| {
        hess.get(i, j, k) + c * m.skew.get(i, j, k)
    })
}

fn raise(lower: &CubicTensor, metric: &MetricTensor) -> MixedChristoffel {
    let n = lower.dim();
    let ginv = metric.inverse();
    MixedChristoffel::from_fn(n, |k, i, j| {
        (0..n).map(|l| lower.get(i, j, l) * ginv[(l, k)]).sum()
    })
}

/// `Γ^(α)k_ij = Γ^(α)_ijl g^lk`.
pub fn christoffel_mixed(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
) -> Result<MixedChristoffel> {
    family.check_theta(theta)?;
    if let Some(cf) = closed_form(family, strategy) {
        return Ok(cf.christoffel_mixed(theta, alpha));
    }
    let m = score_moments(family, theta, strategy, true)?;
    let metric = MetricTensor::new(m.metric.clone())?;
    Ok(raise(&lower_from_moments(&m, alpha), &metric))
}

/// Metric, lowered and mixed symbols from one quadrature pass.
pub fn connection_data(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
) -> Result<(MetricTensor, CubicTensor, MixedChristoffel)> {
    family.check_theta(theta)?;
    if let Some(cf) = closed_form(family, strategy) {
        return Ok((
            MetricTensor::new(cf.metric(theta))?,
            cf.christoffel_lower(theta, alpha),
            cf.christoffel_mixed(theta, alpha),
        ));
    }
    let m = score_moments(family, theta, strategy, true)?;
    let metric = MetricTensor::new(m.metric.clone())?;
    let lower = lower_from_moments(&m, alpha);
    let mixed = raise(&lower, &metric);
    Ok((metric, lower, mixed))
}

fn relative_steps(theta: &[f64], h: f64) -> Vec<f64> {
    theta.iter().map(|t| h * t.abs().max(1.0)).collect()
}

/// `∂_m Γ^(α)k_ij` for each coordinate `m`.
pub fn christoffel_mixed_derivative(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
    mode: DerivativeMode,
) -> Result<Vec<MixedChristoffel>> {
    family.check_theta(theta)?;
    let h = match mode {
        DerivativeMode::Auto => {
            if let Some(d) = closed_form(family, strategy)
                .and_then(|cf| cf.christoffel_mixed_derivative(theta, alpha))
            {
                return Ok(d);
            }
            GAMMA_FD_STEP
        }
        DerivativeMode::FiniteDifference(h) => h,
    };
    let steps = relative_steps(theta, h);
    if !family.domain().contains_with_margin(theta, &steps) {
        return Err(Error::DomainMargin {
            theta: theta.to_vec(),
            step: steps.iter().fold(0.0, |a: f64, b| a.max(*b)),
        });
    }
    (0..family.dim())
        .map(|m| {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[m] += steps[m];
            tm[m] -= steps[m];
            let gp = christoffel_mixed(family, &tp, alpha, strategy)?;
            let gm = christoffel_mixed(family, &tm, alpha, strategy)?;
            let inv = 1.0 / (2.0 * steps[m]);
            Ok(gp.combine(&gm, inv, -inv))
        })
        .collect()
}

/// `R^(α)_ijkl = g(R(∂i, ∂j) ∂k, ∂l)`; exactly antisymmetric in `(i, j)`.
pub fn curvature_tensor(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
    mode: DerivativeMode,
) -> Result<CurvatureTensor> {
    let (metric, lower, mixed) = connection_data(family, theta, alpha, strategy)?;
    let dgamma = christoffel_mixed_derivative(family, theta, alpha, strategy, mode)?;
    Ok(assemble_curvature(&metric, &lower, &mixed, &dgamma))
}

fn assemble_curvature(
    metric: &MetricTensor,
    lower: &CubicTensor,
    mixed: &MixedChristoffel,
    dgamma: &[MixedChristoffel],
) -> CurvatureTensor {
    let n = metric.dim();
    let mut r = CurvatureTensor::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = 0.0;
                    for s in 0..n {
                        v += (dgamma[i].get(s, j, k) - dgamma[j].get(s, i, k)) * metric.get(s, l);
                    }
                    for t in 0..n {
                        v += lower.get(i, t, l) * mixed.get(t, j, k)
                            - lower.get(j, t, l) * mixed.get(t, i, k);
                    }
                    r.set(i, j, k, l, v);
                    r.set(j, i, k, l, -v);
                }
            }
        }
    }
    r
}

/// `K = -R_0101 / det g` for two-parameter families.
pub fn sectional_curvature(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
    mode: DerivativeMode,
) -> Result<f64> {
    if family.dim() != 2 {
        return Err(Error::Unsupported(
            "sectional curvature is reported for two-parameter families only".into(),
        ));
    }
    let metric = fisher_metric(family, theta, strategy)?;
    let r = curvature_tensor(family, theta, alpha, strategy, mode)?;
    Ok(-r.get(0, 1, 0, 1) / metric.determinant())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub alpha: f64,
    pub max_abs_curvature: f64,
    pub worst_theta: Vec<f64>,
    pub tolerance: f64,
    pub flat: bool,
}

/// Max `|R^(α)_ijkl|` over a grid; flat iff below `tol`.
pub fn alpha_flatness(
    family: &StatisticalFamily,
    grid: &[Vec<f64>],
    alpha: f64,
    tol: f64,
    strategy: ExpectationStrategy,
    mode: DerivativeMode,
) -> Result<FlatnessReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty θ grid".into()));
    }
    let mut worst = (0.0, grid[0].clone());
    for theta in grid {
        let m = curvature_tensor(family, theta, alpha, strategy, mode)?.max_abs();
        if m > worst.0 {
            worst = (m, theta.clone());
        }
    }
    Ok(FlatnessReport {
        alpha,
        max_abs_curvature: worst.0,
        worst_theta: worst.1,
        tolerance: tol,
        flat: worst.0 < tol,
    })
}

/// A chart vector field `θ ↦ X(θ)`.
pub type VectorField<'a> = &'a dyn Fn(&[f64]) -> DVector<f64>;

/// Chart-side `∇^(α)_X Y = X(Y^k) ∂k + Γ^k_ij X^i Y^j ∂k` at `θ`.
pub fn covariant_derivative(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: ExpectationStrategy,
    x: VectorField<'_>,
    y: VectorField<'_>,
) -> Result<DVector<f64>> {
    let gamma = christoffel_mixed(family, theta, alpha, strategy)?;
    let xv = x(theta);
    let yv = y(theta);
    Ok(directional_derivative(y, theta, &xv, FIELD_FD_STEP) + gamma.contract(&xv, &yv))
}

/// Central difference of a chart field along `v`.
pub fn directional_derivative(
    f: VectorField<'_>,
    theta: &[f64],
    v: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let plus: Vec<f64> = theta.iter().zip(v.iter()).map(|(t, d)| t + h * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v.iter()).map(|(t, d)| t - h * d).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Chart Lie bracket `[X, Y]^k = X(Y^k) - Y(X^k)`.
pub fn lie_bracket(x: VectorField<'_>, y: VectorField<'_>, theta: &[f64]) -> DVector<f64> {
    directional_derivative(y, theta, &x(theta), FIELD_FD_STEP)
        - directional_derivative(x, theta, &y(theta), FIELD_FD_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_exponential, make_normal};

    const CF: ExpectationStrategy = ExpectationStrategy::ClosedForm;

    fn quad() -> ExpectationStrategy {
        ExpectationStrategy::quadrature()
    }

    #[test]
    fn metric_examples() {
        let f = make_normal();
        let g = fisher_metric(&f, &[0.0, 1.0], quad()).unwrap();
        assert!((g.get(0, 0) - 1.0).abs() < 1e-12 && (g.get(1, 1) - 2.0).abs() < 1e-12);
        assert!(g.get(0, 1).abs() < 1e-12);
        let g = fisher_metric(&f, &[3.0, 2.0], CF).unwrap();
        assert_eq!(g.matrix(), &DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn quadrature_matches_closed_form_metric_on_grid() {
        let f = make_normal();
        for mu in [-2.0, -1.0, 0.0, 1.5, 3.0] {
            for sigma in [0.3, 0.7, 1.0, 2.0, 4.0] {
                let a = fisher_metric(&f, &[mu, sigma], CF).unwrap();
                let b = fisher_metric(&f, &[mu, sigma], quad()).unwrap();
                let d = (a.matrix() - b.matrix()).amax();
                assert!(d < 1e-9, "({mu},{sigma}) diff {d}");
            }
        }
    }

    #[test]
    fn skewness_examples() {
        let f = make_normal();
        let t = skewness_tensor(&f, &[0.0, 1.0], quad()).unwrap();
        assert!((t.get(0, 0, 1) - 2.0).abs() < 1e-10);
        assert!((t.get(1, 1, 1) - 8.0).abs() < 1e-10);
        assert!(t.get(0, 0, 0).abs() < 1e-10 && t.get(0, 1, 1).abs() < 1e-10);
        assert!(t.symmetry_defect() < 1e-8);
        let t = skewness_tensor(&f, &[0.0, 2.0], quad()).unwrap();
        assert!((t.get(1, 1, 1) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn christoffel_examples_and_alpha_relation() {
        let f = make_normal();
        for alpha in [-1.0, -0.3, 0.0, 0.5, 1.0] {
            let g = christoffel_lower(&f, &[0.0, 1.0], alpha, quad()).unwrap();
            assert!((g.get(0, 0, 1) - (1.0 - alpha)).abs() < 1e-10);
            assert!((g.get(1, 1, 1) + (2.0 + 4.0 * alpha)).abs() < 1e-10);
            assert!(g.lower_pair_defect() < 1e-12);
        }
        let theta = [0.4, 1.3];
        let g1 = christoffel_lower(&f, &theta, 1.0, quad()).unwrap();
        let g0 = christoffel_lower(&f, &theta, 0.0, quad()).unwrap();
        let t = skewness_tensor(&f, &theta, quad()).unwrap();
        let rel = CubicTensor::from_fn(2, |i, j, k| g0.get(i, j, k) - 0.5 * t.get(i, j, k));
        assert!(g1.max_abs_diff(&rel) < 1e-8);
    }

    #[test]
    fn mixed_christoffel_examples() {
        let f = make_normal();
        let m = christoffel_mixed(&f, &[0.0, 1.0], 0.0, quad()).unwrap();
        assert!((m.get(1, 0, 0) - 0.5).abs() < 1e-10);
        assert!((m.get(0, 0, 1) + 1.0).abs() < 1e-10);
        let theta = [0.2, 0.8];
        let metric = fisher_metric(&f, &theta, quad()).unwrap();
        let lowered = christoffel_mixed(&f, &theta, 0.3, quad())
            .unwrap()
            .lower(&metric);
        let direct = christoffel_lower(&f, &theta, 0.3, quad()).unwrap();
        assert!(lowered.max_abs_diff(&direct) < 1e-9);
    }

    #[test]
    fn curvature_examples() {
        let f = make_normal();
        let r = curvature_tensor(&f, &[0.0, 1.0], 0.0, CF, DerivativeMode::Auto).unwrap();
        assert!((r.get(0, 1, 0, 1) - 1.0).abs() < 1e-12);
        let r = curvature_tensor(&f, &[0.0, 1.0], 1.0, quad(), DerivativeMode::Auto).unwrap();
        assert!(r.max_abs() < 1e-6);
        let r = curvature_tensor(&f, &[0.0, 2.0], 0.5, quad(), DerivativeMode::Auto).unwrap();
        assert!((r.get(0, 1, 0, 1) - 0.046875).abs() < 1e-8);
        assert_eq!(r.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn curvature_margin_error() {
        let f = make_normal();
        let err = curvature_tensor(
            &f,
            &[0.0, 1e-5],
            0.0,
            quad(),
            DerivativeMode::FiniteDifference(1e-4),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DomainMargin { .. }));
    }

    #[test]
    fn sectional_curvature_is_minus_half() {
        let f = make_normal();
        for theta in [[0.0, 1.0], [-1.0, 0.5], [2.0, 3.0]] {
            let k = sectional_curvature(&f, &theta, 0.0, CF, DerivativeMode::Auto).unwrap();
            assert!((k + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn flatness() {
        let f = make_normal();
        let grid: Vec<Vec<f64>> = [-1.0, 0.0, 1.0, 2.0]
            .iter()
            .flat_map(|&m| [0.5, 1.0, 1.5, 2.0].map(|s| vec![m, s]))
            .collect();
        for alpha in [-1.0, 1.0] {
            let rep = alpha_flatness(&f, &grid, alpha, 1e-6, CF, DerivativeMode::Auto).unwrap();
            assert!(rep.flat, "{rep:?}");
            let rep = alpha_flatness(&f, &grid, alpha, 1e-4, quad(), DerivativeMode::Auto).unwrap();
            assert!(rep.flat, "{rep:?}");
        }
        let rep = alpha_flatness(&f, &grid, 0.0, 1e-6, CF, DerivativeMode::Auto).unwrap();
        assert!(!rep.flat);
        assert!((rep.max_abs_curvature - 16.0).abs() < 1e-9);
        assert_eq!(rep.worst_theta[1], 0.5);
        let e = make_exponential();
        let grid: Vec<Vec<f64>> = vec![vec![0.5], vec![1.0], vec![3.0]];
        for alpha in [-1.0, 0.0, 2.0] {
            let rep = alpha_flatness(&e, &grid, alpha, 1e-12, quad(), DerivativeMode::Auto)
                .unwrap();
            assert!(rep.flat && rep.max_abs_curvature == 0.0);
        }
    }

    #[test]
    fn chart_covariant_derivative_of_coordinate_fields() {
        let f = make_normal();
        let e1 = |_: &[f64]| DVector::from_vec(vec![1.0, 0.0]);
        let e2 = |_: &[f64]| DVector::from_vec(vec![0.0, 1.0]);
        let d = covariant_derivative(&f, &[0.0, 2.0], 0.0, CF, &e1, &e2).unwrap();
        assert!((d[0] + 0.5).abs() < 1e-14 && d[1].abs() < 1e-14);
    }
}
