//! Concrete statistical families: the closed-form normal family, families
//! built from parsed log-density expressions, and chart reparameterizations.

pub mod expr;
mod normal;
mod reparam;

use std::sync::Arc;

pub use expr::{parse_density, DensityExpression, ParseError, ParseErrorKind};
pub use normal::{log_sqrt_two_pi, make_exponential, make_normal, NormalGeometry};
pub use reparam::{reparameterize, JacobianFn, MapFn, Reparameterization};

use crate::error::{Error, Result};
use crate::expectation::{ParameterDomain, QuadHintFn, SampleSpace, StatisticalFamily};

/// A family whose scores come from finite differences of `expr`.
pub fn make_family_from_expression(
    expr: DensityExpression,
    sample_space: SampleSpace,
    domain: ParameterDomain,
    quad_hint: QuadHintFn,
) -> Result<StatisticalFamily> {
    if expr.dim() != domain.dim() {
        return Err(Error::Dimension {
            expected: domain.dim(),
            got: expr.dim(),
        });
    }
    let name = format!("expression: {expr}");
    Ok(StatisticalFamily::new(
        name,
        domain,
        sample_space,
        Arc::new(move |x, theta: &[f64]| expr.eval(x, theta)),
    )?
    .with_quad_hint(quad_hint))
}

/// Location/scale hint from two expressions over `th1..thn` (`x` reads as 0).
pub fn expression_quad_hint(location: DensityExpression, scale: DensityExpression) -> QuadHintFn {
    Arc::new(move |theta: &[f64]| {
        let loc = location.eval(0.0, theta).unwrap_or(f64::NAN);
        let sc = scale.eval(0.0, theta).unwrap_or(f64::NAN);
        (loc, sc)
    })
}

/// Canonical expression text for the normal log-density.
pub const NORMAL_EXPRESSION: &str = "-(x - th1)^2 / (2 * th2^2) - log(th2) - 0.5 * log(2 * pi)";

/// The normal family rebuilt from [`NORMAL_EXPRESSION`], without any analytic
/// derivatives or closed forms.
pub fn make_normal_from_expression() -> StatisticalFamily {
    let expr = parse_density(NORMAL_EXPRESSION, 2).expect("normal expression parses");
    let hint = expression_quad_hint(
        parse_density("th1", 2).expect("parses"),
        parse_density("th2", 2).expect("parses"),
    );
    make_family_from_expression(
        expr,
        SampleSpace::RealLine,
        make_normal().domain().clone(),
        hint,
    )
    .expect("dimensions agree")
}
