//! α-geometry of statistical manifolds, computed on the parameter chart and on
//! the frame bundle, with numerical checks that the two descriptions agree.
//!
//! * [`expectation`]: families, scores and `E[·]` by quadrature or Monte-Carlo
//! * [`manifold`]: Fisher metric, skewness, α-Christoffel symbols, curvature, geodesics
//! * [`bundle`]: frames, connection/canonical forms, horizontal lifts, torsion and curvature forms
//! * [`families`]: the normal family, expression-defined families, reparameterizations
//! * [`verify`]: seeded residual checks with JSON reports

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod error;
pub mod expectation;
pub mod families;
pub mod manifold;
pub mod quadrature;
pub(crate) mod serde_ext;
pub mod tensor;
pub mod verify;

pub use bundle::{AlphaConnection, BundleTangent, BundleTrajectory, Frame, Steps};
pub use error::{Error, Result};
pub use expectation::{
    expect, score, score2, ExpectationStrategy, ParameterDomain, SampleSpace, StatisticalFamily,
};
pub use families::{make_normal, parse_density, DensityExpression, Reparameterization};
pub use manifold::{DerivativeMode, Trajectory};
pub use tensor::{CubicTensor, CurvatureTensor, MetricTensor, MixedChristoffel};
pub use verify::{CheckConfig, CheckReport};
