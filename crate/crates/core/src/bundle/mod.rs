//! Frame-bundle geometry of the α-connections.
//!
//! A point of the frame bundle is a [`Frame`] `u = (θ, A)`; column `j` of `A`
//! holds the chart components of the frame vector `e_j`, so `u(ξ) = Aξ`. A
//! tangent vector at `u` is a [`BundleTangent`] `(X, B)` with `X ∈ Rⁿ` the
//! base part and `B ∈ Rⁿˣⁿ` the matrix part. The right action is
//! `R_g(θ, A) = (θ, Ag)`, pushing tangents as `(X, B) ↦ (X, Bg)`.
//!
//! The α-connection form is
//!
//! ```text
//! ω̃(X, B) = A⁻¹ ω(X) A + A⁻¹ B,      ω(X)^k_j = Γ^k_ji X^i
//! ```
//!
//! which satisfies `ω̃(τ(C)) = C` and `R_g^* ω̃ = g⁻¹ ω̃ g`. At the identity
//! frame this reduces to `ω(X) + B`. The transposed ordering `A ω A⁻¹` agrees
//! there but is not right-equivariant, so it is not used.

mod calculus;
mod lift;

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{ExpectationStrategy, StatisticalFamily};
use crate::manifold::christoffel_mixed;
use crate::tensor::MixedChristoffel;

pub use calculus::{bracket, derivative_along, vertical_field, BianchiResiduals, BundleField, StructureResiduals};
pub use lift::{BundleSample, BundleTrajectory};

/// Frames with `|det A|` at or below this are rejected.
pub const MIN_FRAME_DET: f64 = 1e-12;

/// An element of `gl(n)`.
pub type LieAlgebraValue = DMatrix<f64>;

/// A point `u = (θ, A)` of the frame bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    theta: Vec<f64>,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl Frame {
    pub fn new(theta: Vec<f64>, a: DMatrix<f64>) -> Result<Self> {
        let n = theta.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: a.nrows().max(a.ncols()),
            });
        }
        let det = a.determinant();
        if !(det.abs() > MIN_FRAME_DET) {
            return Err(Error::SingularFrame { det: det.abs() });
        }
        let a_inv = a.clone().try_inverse().ok_or(Error::SingularFrame { det: det.abs() })?;
        Ok(Self { theta, a, a_inv })
    }

    pub fn identity(theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self::new(theta, DMatrix::identity(n, n)).expect("identity frame")
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn matrix_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// `u(ξ) = Aξ`.
    pub fn apply(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.a * xi
    }

    /// `u⁻¹(v) = A⁻¹v`.
    pub fn inverse_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a_inv * v
    }

    /// `R_g(u) = (θ, Ag)`.
    pub fn right_translate(&self, g: &DMatrix<f64>) -> Result<Self> {
        Self::new(self.theta.clone(), &self.a * g)
    }

    /// The point `(θ + tX, A + tB)` on the straight coordinate curve.
    pub fn offset(&self, v: &BundleTangent, t: f64) -> Result<Self> {
        let theta = self
            .theta
            .iter()
            .zip(v.base.iter())
            .map(|(a, b)| a + t * b)
            .collect();
        Self::new(theta, &self.a + &v.mat * t)
    }

    /// Row-major copy of `A`, convenient for reports.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.a
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// A tangent vector `(X, B)` to the frame bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleTangent {
    pub base: DVector<f64>,
    pub mat: DMatrix<f64>,
}

impl BundleTangent {
    pub fn new(base: DVector<f64>, mat: DMatrix<f64>) -> Self {
        Self { base, mat }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.base.amax().max(self.mat.amax())
    }

    /// `π_*`.
    pub fn project(&self) -> &DVector<f64> {
        &self.base
    }

    /// `R_{g*}(X, B) = (X, Bg)`.
    pub fn right_translate(&self, g: &DMatrix<f64>) -> Self {
        Self::new(self.base.clone(), &self.mat * g)
    }

    /// Base components followed by the column-major matrix entries.
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_iterator(
            n + n * n,
            self.base.iter().chain(self.mat.iter()).copied(),
        )
    }

    pub fn from_flat(n: usize, v: &DVector<f64>) -> Self {
        Self::new(
            DVector::from_iterator(n, v.iter().take(n).copied()),
            DMatrix::from_iterator(n, n, v.iter().skip(n).copied()),
        )
    }
}

impl Add for BundleTangent {
    type Output = BundleTangent;
    fn add(self, o: BundleTangent) -> BundleTangent {
        BundleTangent::new(self.base + o.base, self.mat + o.mat)
    }
}

impl Sub for BundleTangent {
    type Output = BundleTangent;
    fn sub(self, o: BundleTangent) -> BundleTangent {
        BundleTangent::new(self.base - o.base, self.mat - o.mat)
    }
}

impl Sub for &BundleTangent {
    type Output = BundleTangent;
    fn sub(self, o: &BundleTangent) -> BundleTangent {
        BundleTangent::new(&self.base - &o.base, &self.mat - &o.mat)
    }
}

impl Mul<f64> for BundleTangent {
    type Output = BundleTangent;
    fn mul(self, s: f64) -> BundleTangent {
        BundleTangent::new(self.base * s, self.mat * s)
    }
}

impl Neg for BundleTangent {
    type Output = BundleTangent;
    fn neg(self) -> BundleTangent {
        BundleTangent::new(-self.base, -self.mat)
    }
}

/// The matrix of 1-forms `ω^k_j = Γ^k_ji dθ^i` at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionFormLocal {
    pub theta: Vec<f64>,
    pub alpha: f64,
    gamma: MixedChristoffel,
}

impl ConnectionFormLocal {
    pub fn from_christoffel(theta: Vec<f64>, alpha: f64, gamma: MixedChristoffel) -> Self {
        Self {
            theta,
            alpha,
            gamma,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn christoffel(&self) -> &MixedChristoffel {
        &self.gamma
    }

    /// `ω(X)`, with entries `Γ^k_ji X^i`.
    pub fn eval(&self, x: &DVector<f64>) -> LieAlgebraValue {
        let n = self.dim();
        DMatrix::from_fn(n, n, |k, j| {
            (0..n).map(|i| self.gamma.get(k, j, i) * x[i]).sum()
        })
    }

    /// Coefficient matrix of `dθ^i`.
    pub fn component(&self, i: usize) -> LieAlgebraValue {
        let n = self.dim();
        DMatrix::from_fn(n, n, |k, j| self.gamma.get(k, j, i))
    }
}

/// `θ(X) = u⁻¹(π_* X) = A⁻¹X.base`.
pub fn canonical_form(u: &Frame, x: &BundleTangent) -> DVector<f64> {
    u.inverse_apply(&x.base)
}

/// `τ(C)_u = (0, AC)`, the velocity of `t ↦ (θ, A exp(tC))` at `t = 0`.
pub fn fundamental_vertical(u: &Frame, c: &LieAlgebraValue) -> BundleTangent {
    BundleTangent::new(DVector::zeros(u.dim()), u.matrix() * c)
}

/// Finite-difference steps for bundle-side derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Steps {
    /// Central-difference step for derivatives of functions along a vector.
    pub derivative: f64,
    /// Central-difference step inside Lie brackets.
    pub bracket: f64,
}

impl Default for Steps {
    fn default() -> Self {
        Self {
            derivative: 1e-5,
            bracket: 1e-4,
        }
    }
}

impl Steps {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            derivative: self.derivative * factor,
            bracket: self.bracket * factor,
        }
    }
}

/// The α-connection of a family on its frame bundle.
#[derive(Debug, Clone, Copy)]
pub struct AlphaConnection<'a> {
    family: &'a StatisticalFamily,
    alpha: f64,
    strategy: ExpectationStrategy,
    steps: Steps,
}

impl<'a> AlphaConnection<'a> {
    pub fn new(family: &'a StatisticalFamily, alpha: f64) -> Self {
        Self {
            family,
            alpha,
            strategy: ExpectationStrategy::ClosedForm,
            steps: Steps::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: ExpectationStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_steps(mut self, steps: Steps) -> Self {
        self.steps = steps;
        self
    }

    pub fn family(&self) -> &'a StatisticalFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn strategy(&self) -> ExpectationStrategy {
        self.strategy
    }

    pub fn steps(&self) -> Steps {
        self.steps
    }

    fn check_frame(&self, u: &Frame) -> Result<()> {
        if u.dim() != self.family.dim() {
            return Err(Error::Dimension {
                expected: self.family.dim(),
                got: u.dim(),
            });
        }
        Ok(())
    }

    fn check_vector(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.family.dim() {
            return Err(Error::Dimension {
                expected: self.family.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn local_connection_form(&self, theta: &[f64]) -> Result<ConnectionFormLocal> {
        let gamma = christoffel_mixed(self.family, theta, self.alpha, self.strategy)?;
        Ok(ConnectionFormLocal::from_christoffel(
            theta.to_vec(),
            self.alpha,
            gamma,
        ))
    }

    /// `ω̃(X) = A⁻¹ ω(π_*X) A + A⁻¹ B`.
    pub fn bundle_connection_form(&self, u: &Frame, x: &BundleTangent) -> Result<LieAlgebraValue> {
        self.check_frame(u)?;
        self.check_vector(&x.base)?;
        let w = self.local_connection_form(u.theta())?.eval(&x.base);
        Ok(u.matrix_inverse() * (w * u.matrix() + &x.mat))
    }

    /// `(X, -ω(X)A)`: the unique horizontal vector over `X`.
    pub fn horizontal_lift_vector(&self, u: &Frame, x: &DVector<f64>) -> Result<BundleTangent> {
        self.check_frame(u)?;
        self.check_vector(x)?;
        let w = self.local_connection_form(u.theta())?.eval(x);
        Ok(BundleTangent::new(x.clone(), -(w * u.matrix())))
    }

    /// `H(ξ)_u`, the horizontal lift of `u(ξ)`.
    pub fn fundamental_horizontal(&self, u: &Frame, xi: &DVector<f64>) -> Result<BundleTangent> {
        self.check_vector(xi)?;
        self.horizontal_lift_vector(u, &u.apply(xi))
    }

    /// `(vertical, horizontal)` parts of `X`; they add back to `X` exactly.
    pub fn split(&self, u: &Frame, x: &BundleTangent) -> Result<(BundleTangent, BundleTangent)> {
        let horizontal = self.horizontal_lift_vector(u, &x.base)?;
        let vertical = BundleTangent::new(DVector::zeros(u.dim()), &x.mat - &horizontal.mat);
        Ok((vertical, horizontal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::make_normal;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows.len(), rows.len(), &rows.concat())
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn local_form_examples() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, 0.0);
        let w = c.local_connection_form(&[0.0, 1.0]).unwrap();
        assert_eq!(w.eval(&v(&[1.0, 0.0])), m(&[&[0.0, -1.0], &[0.5, 0.0]]));
        assert_eq!(w.eval(&v(&[0.0, 1.0])), m(&[&[-1.0, 0.0], &[0.0, -1.0]]));
        assert_eq!(w.eval(&v(&[0.0, 0.0])), DMatrix::zeros(2, 2));
        assert_eq!(w.component(0), w.eval(&v(&[1.0, 0.0])));
    }

    #[test]
    fn identity_frame_connection_form() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, 0.0);
        let u = Frame::identity(vec![0.0, 1.0]);
        let x = BundleTangent::new(v(&[1.0, 0.0]), DMatrix::zeros(2, 2));
        assert_eq!(
            c.bundle_connection_form(&u, &x).unwrap(),
            m(&[&[0.0, -1.0], &[0.5, 0.0]])
        );
    }

    #[test]
    fn vertical_fields_reproduce_generators() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, 0.4);
        let u = Frame::new(vec![0.3, 1.4], m(&[&[0.7, -0.2], &[0.4, 0.9]])).unwrap();
        let gen = m(&[&[0.1, 2.0], &[-0.5, 0.3]]);
        let w = c.bundle_connection_form(&u, &fundamental_vertical(&u, &gen)).unwrap();
        assert!((w - &gen).amax() < 1e-14);
        assert_eq!(fundamental_vertical(&u, &DMatrix::zeros(2, 2)), BundleTangent::zeros(2));
    }

    #[test]
    fn horizontal_lift_examples() {
        let f = make_normal();
        let u = Frame::identity(vec![0.0, 1.0]);
        for alpha in [-1.0, 0.0, 0.5] {
            let c = AlphaConnection::new(&f, alpha);
            let x = c.horizontal_lift_vector(&u, &v(&[1.0, 0.0])).unwrap();
            assert_eq!(x.mat, m(&[&[0.0, 1.0 + alpha], &[-(1.0 - alpha) / 2.0, 0.0]]));
            assert!(c.bundle_connection_form(&u, &x).unwrap().amax() < 1e-12);
        }
        let c = AlphaConnection::new(&f, 0.0);
        let y = c.horizontal_lift_vector(&u, &v(&[0.0, 1.0])).unwrap();
        assert_eq!(y.mat, DMatrix::identity(2, 2));
        let z = c.horizontal_lift_vector(&u, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(z, BundleTangent::zeros(2));
    }

    #[test]
    fn split_examples() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, 0.0);
        let u = Frame::identity(vec![0.0, 1.0]);
        let x = BundleTangent::new(v(&[1.0, 0.0]), DMatrix::zeros(2, 2));
        let (vert, hor) = c.split(&u, &x).unwrap();
        assert_eq!(hor.mat, m(&[&[0.0, 1.0], &[-0.5, 0.0]]));
        assert_eq!(vert.base, v(&[0.0, 0.0]));
        assert_eq!(vert.clone() + hor.clone(), x);
        let (vert2, _) = c.split(&u, &hor).unwrap();
        assert_eq!(vert2.max_abs(), 0.0);
        let tau = fundamental_vertical(&u, &m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let (_, hor3) = c.split(&u, &tau).unwrap();
        assert_eq!(hor3.max_abs(), 0.0);
    }

    #[test]
    fn canonical_form_examples() {
        let u = Frame::identity(vec![0.0, 1.0]);
        let x = BundleTangent::new(v(&[1.0, 0.0]), DMatrix::zeros(2, 2));
        assert_eq!(canonical_form(&u, &x), v(&[1.0, 0.0]));
        let u = Frame::new(vec![0.0, 1.0], DMatrix::from_diagonal(&v(&[2.0, 1.0]))).unwrap();
        let x = BundleTangent::new(v(&[2.0, 3.0]), DMatrix::zeros(2, 2));
        assert_eq!(canonical_form(&u, &x), v(&[1.0, 3.0]));
    }

    #[test]
    fn fundamental_horizontal_reads_back_xi() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, -0.5);
        let u = Frame::new(vec![-1.0, 0.8], m(&[&[0.3, 0.5], &[-0.9, 0.2]])).unwrap();
        let xi = v(&[0.6, -1.3]);
        let h = c.fundamental_horizontal(&u, &xi).unwrap();
        assert_relative_eq!(canonical_form(&u, &h), xi, epsilon = 1e-14);
    }

    #[test]
    fn singular_frames_are_rejected() {
        assert!(matches!(
            Frame::new(vec![0.0, 1.0], m(&[&[1.0, 2.0], &[2.0, 4.0]])),
            Err(Error::SingularFrame { .. })
        ));
        assert!(Frame::new(vec![0.0, 1.0], DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn flatten_roundtrip() {
        let t = BundleTangent::new(v(&[1.0, 2.0]), m(&[&[3.0, 4.0], &[5.0, 6.0]]));
        assert_eq!(BundleTangent::from_flat(2, &t.flatten()), t);
    }
}
