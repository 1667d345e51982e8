//! Finite-difference calculus on the frame bundle.
//!
//! Derivatives of functions along a tangent `V` at `u` are central differences
//! along the straight coordinate curve `t ↦ u + tV`. Brackets are taken
//! componentwise, `[V, W]^i = V(W^i) - W(V^i)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{canonical_form, fundamental_vertical, AlphaConnection, BundleTangent, Frame, LieAlgebraValue};
use crate::error::Result;
use crate::manifold::VectorField;

type TwoForm<'a> = dyn Fn(&Frame, &BundleTangent, &BundleTangent) -> Result<DVector<f64>> + 'a;

/// A vector field on the frame bundle.
pub type BundleField<'f> = &'f dyn Fn(&Frame) -> Result<BundleTangent>;

fn flat(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unflat(n: usize, v: DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(n, n, v.iter().copied())
}

/// Central difference of `f` along `v` at `u`.
pub fn derivative_along(
    f: &dyn Fn(&Frame) -> Result<DVector<f64>>,
    u: &Frame,
    v: &BundleTangent,
    h: f64,
) -> Result<DVector<f64>> {
    let plus = f(&u.offset(v, h)?)?;
    let minus = f(&u.offset(v, -h)?)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Lie bracket of two bundle fields at `u`.
pub fn bracket(x: BundleField<'_>, y: BundleField<'_>, u: &Frame, h: f64) -> Result<BundleTangent> {
    let xf = |p: &Frame| Ok(x(p)?.flatten());
    let yf = |p: &Frame| Ok(y(p)?.flatten());
    let xy = derivative_along(&yf, u, &x(u)?, h)?;
    let yx = derivative_along(&xf, u, &y(u)?, h)?;
    Ok(BundleTangent::from_flat(u.dim(), &(xy - yx)))
}

/// Both sides of the first and second structure equations at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureResiduals {
    /// `Θ(V, W)` computed as `dθ(hV, hW)`.
    pub torsion: DVector<f64>,
    /// `Ω(V, W)` computed as `dω̃(hV, hW)`.
    pub curvature: DMatrix<f64>,
    /// `|Θ - (dθ + ω̃∧θ)|`, max norm.
    pub first: f64,
    /// `|Ω - (dω̃ + ω̃∧ω̃)|`, max norm.
    pub second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BianchiResiduals {
    /// `|dΘ - Ω∧θ + ω̃∧Θ|`, max norm.
    pub first: f64,
    /// `|dΩ - Ω∧ω̃ + ω̃∧Ω|`, max norm.
    pub second: f64,
}

/// `τ(C)` as a field.
pub fn vertical_field(c: LieAlgebraValue) -> impl Fn(&Frame) -> Result<BundleTangent> {
    move |u: &Frame| Ok(fundamental_vertical(u, &c))
}

impl<'a> AlphaConnection<'a> {
    /// `X̃`, the horizontal lift of a chart field.
    pub fn lift_field<'f>(
        &'f self,
        x: VectorField<'f>,
    ) -> impl Fn(&Frame) -> Result<BundleTangent> + 'f {
        move |u: &Frame| self.horizontal_lift_vector(u, &x(u.theta()))
    }

    /// `H(ξ)` as a field.
    pub fn horizontal_field<'f>(
        &'f self,
        xi: DVector<f64>,
    ) -> impl Fn(&Frame) -> Result<BundleTangent> + 'f {
        move |u: &Frame| self.fundamental_horizontal(u, &xi)
    }

    /// `[V, W]` at `u` with the bracket step.
    pub fn bracket(&self, v: BundleField<'_>, w: BundleField<'_>, u: &Frame) -> Result<BundleTangent> {
        bracket(v, w, u, self.steps.bracket)
    }

    fn derivative(
        &self,
        f: &dyn Fn(&Frame) -> Result<DVector<f64>>,
        u: &Frame,
        v: &BundleTangent,
    ) -> Result<DVector<f64>> {
        derivative_along(f, u, v, self.steps.derivative)
    }

    /// `∇_X Y = u(X̃(θ(Ỹ)))`, differentiating `θ(Ỹ)` along the straight
    /// bundle curve with velocity `X̃_u`.
    pub fn bundle_covariant_derivative(
        &self,
        x: VectorField<'_>,
        y: VectorField<'_>,
        u: &Frame,
    ) -> Result<DVector<f64>> {
        let xl = self.horizontal_lift_vector(u, &x(u.theta()))?;
        let theta_y = |p: &Frame| Ok(p.inverse_apply(&y(p.theta())));
        Ok(u.apply(&self.derivative(&theta_y, u, &xl)?))
    }

    /// `Θ(X̃, Ỹ) = X̃θ(Ỹ) - Ỹθ(X̃) - θ([X̃, Ỹ])` for lifts of chart fields.
    pub fn torsion_form_eval_fields(
        &self,
        u: &Frame,
        x: VectorField<'_>,
        y: VectorField<'_>,
    ) -> Result<DVector<f64>> {
        let xl = self.lift_field(x);
        let yl = self.lift_field(y);
        let theta_x = |p: &Frame| Ok(p.inverse_apply(&x(p.theta())));
        let theta_y = |p: &Frame| Ok(p.inverse_apply(&y(p.theta())));
        let a = self.derivative(&theta_y, u, &xl(u)?)?;
        let b = self.derivative(&theta_x, u, &yl(u)?)?;
        let c = canonical_form(u, &self.bracket(&xl, &yl, u)?);
        Ok(a - b - c)
    }

    /// Torsion form on the lifts of the constant fields `x`, `y`.
    pub fn torsion_form_eval(&self, u: &Frame, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, y) = (x.clone(), y.clone());
        self.torsion_form_eval_fields(u, &move |_| x.clone(), &move |_| y.clone())
    }

    /// `Ω(X̃, Ỹ) = -ω̃([X̃, Ỹ])` for lifts of chart fields.
    pub fn curvature_form_eval_fields(
        &self,
        u: &Frame,
        x: VectorField<'_>,
        y: VectorField<'_>,
    ) -> Result<LieAlgebraValue> {
        let xl = self.lift_field(x);
        let yl = self.lift_field(y);
        Ok(-self.bundle_connection_form(u, &self.bracket(&xl, &yl, u)?)?)
    }

    /// Curvature form on the lifts of the constant fields `x`, `y`.
    pub fn curvature_form_eval(&self, u: &Frame, x: &DVector<f64>, y: &DVector<f64>) -> Result<LieAlgebraValue> {
        let (x, y) = (x.clone(), y.clone());
        self.curvature_form_eval_fields(u, &move |_| x.clone(), &move |_| y.clone())
    }

    /// `R(X, Y)Z = u(Ω(X̃, Ỹ) u⁻¹(Z))`.
    pub fn curvature_via_bundle(
        &self,
        u: &Frame,
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let omega = self.curvature_form_eval(u, x, y)?;
        Ok(u.apply(&(omega * u.inverse_apply(z))))
    }

    /// Pointwise `Θ_u(v, w)`, extending `hv`, `hw` by fundamental horizontal fields.
    pub fn torsion_at(&self, u: &Frame, v: &BundleTangent, w: &BundleTangent) -> Result<DVector<f64>> {
        let hv = self.horizontal_field(canonical_form(u, v));
        let hw = self.horizontal_field(canonical_form(u, w));
        Ok(-canonical_form(u, &self.bracket(&hv, &hw, u)?))
    }

    /// Pointwise `Ω_u(v, w)`, extending `hv`, `hw` by fundamental horizontal fields.
    pub fn curvature_at(&self, u: &Frame, v: &BundleTangent, w: &BundleTangent) -> Result<LieAlgebraValue> {
        let hv = self.horizontal_field(canonical_form(u, v));
        let hw = self.horizontal_field(canonical_form(u, w));
        Ok(-self.bundle_connection_form(u, &self.bracket(&hv, &hw, u)?)?)
    }

    /// `dφ(V, W) = V φ(W) - W φ(V) - φ([V, W])` for a vector-valued 1-form.
    fn d_one_form(
        &self,
        phi: &dyn Fn(&Frame, &BundleTangent) -> Result<DVector<f64>>,
        v: BundleField<'_>,
        w: BundleField<'_>,
        u: &Frame,
    ) -> Result<DVector<f64>> {
        let phi_w = |p: &Frame| phi(p, &w(p)?);
        let phi_v = |p: &Frame| phi(p, &v(p)?);
        let a = self.derivative(&phi_w, u, &v(u)?)?;
        let b = self.derivative(&phi_v, u, &w(u)?)?;
        let c = phi(u, &self.bracket(v, w, u)?)?;
        Ok(a - b - c)
    }

    /// Evaluates both structure equations on the fields `V`, `W` at `u`.
    pub fn structure_equations(
        &self,
        u: &Frame,
        v: BundleField<'_>,
        w: BundleField<'_>,
    ) -> Result<StructureResiduals> {
        let n = u.dim();
        let hv = |p: &Frame| Ok(self.split(p, &v(p)?)?.1);
        let hw = |p: &Frame| Ok(self.split(p, &w(p)?)?.1);
        let theta = |p: &Frame, x: &BundleTangent| Ok(canonical_form(p, x));
        let omega = |p: &Frame, x: &BundleTangent| Ok(flat(&self.bundle_connection_form(p, x)?));

        let (vu, wu) = (v(u)?, w(u)?);
        let (wv, ww) = (
            self.bundle_connection_form(u, &vu)?,
            self.bundle_connection_form(u, &wu)?,
        );

        let torsion = self.d_one_form(&theta, &hv, &hw, u)?;
        let first_rhs = self.d_one_form(&theta, v, w, u)?
            + &wv * canonical_form(u, &wu)
            - &ww * canonical_form(u, &vu);

        let curvature = unflat(n, self.d_one_form(&omega, &hv, &hw, u)?);
        let second_rhs = unflat(n, self.d_one_form(&omega, v, w, u)?) + &wv * &ww - &ww * &wv;

        Ok(StructureResiduals {
            first: (&torsion - first_rhs).amax(),
            second: (&curvature - second_rhs).amax(),
            torsion,
            curvature,
        })
    }

    /// Both Bianchi identities on the fundamental horizontal fields through
    /// the base vectors `x[0..3]` at `u`.
    pub fn bianchi_residuals(&self, u: &Frame, x: [&DVector<f64>; 3]) -> Result<BianchiResiduals> {
        let n = u.dim();
        let fields: Vec<_> = x
            .iter()
            .map(|v| self.horizontal_field(u.inverse_apply(v)))
            .collect();
        let f = |i: usize, p: &Frame| fields[i](p);
        let at_u: Vec<BundleTangent> = (0..3).map(|i| f(i, u)).collect::<Result<_>>()?;
        let brackets = |i: usize, j: usize| self.bracket(&fields[i], &fields[j], u);
        let b01 = brackets(0, 1)?;
        let b02 = brackets(0, 2)?;
        let b12 = brackets(1, 2)?;

        // d of a 2-form: cyclic derivative terms minus bracket terms
        let d_two_form = |form: &TwoForm|
         -> Result<DVector<f64>> {
            let along = |i: usize, j: usize, k: usize| {
                let g = |p: &Frame| form(p, &f(j, p)?, &f(k, p)?);
                self.derivative(&g, u, &at_u[i])
            };
            Ok(along(0, 1, 2)? - along(1, 0, 2)? + along(2, 0, 1)?
                - form(u, &b01, &at_u[2])?
                + form(u, &b02, &at_u[1])?
                - form(u, &b12, &at_u[0])?)
        };

        let torsion = |p: &Frame, a: &BundleTangent, b: &BundleTangent| self.torsion_at(p, a, b);
        let curvature =
            |p: &Frame, a: &BundleTangent, b: &BundleTangent| Ok(flat(&self.curvature_at(p, a, b)?));

        let th: Vec<DVector<f64>> = at_u.iter().map(|t| canonical_form(u, t)).collect();
        let om: Vec<DMatrix<f64>> = at_u
            .iter()
            .map(|t| self.bundle_connection_form(u, t))
            .collect::<Result<_>>()?;
        let pairs = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
        let tor: Vec<DVector<f64>> = pairs
            .iter()
            .map(|&(i, j, _)| torsion(u, &at_u[i], &at_u[j]))
            .collect::<Result<_>>()?;
        let cur: Vec<DMatrix<f64>> = pairs
            .iter()
            .map(|&(i, j, _)| self.curvature_at(u, &at_u[i], &at_u[j]))
            .collect::<Result<_>>()?;

        let mut first = d_two_form(&torsion)?;
        let mut second = unflat(n, d_two_form(&curvature)?);
        for (c, &(_, _, k)) in pairs.iter().enumerate() {
            // (Ω∧θ), (ω̃∧Θ), (Ω∧ω̃), (ω̃∧Ω) as cyclic sums
            first -= &cur[c] * &th[k];
            first += &om[k] * &tor[c];
            second -= &cur[c] * &om[k];
            second += &om[k] * &cur[c];
        }
        Ok(BianchiResiduals {
            first: first.amax(),
            second: second.amax(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::Steps;
    use crate::expectation::ExpectationStrategy;
    use crate::families::make_normal;
    use crate::manifold::{covariant_derivative, curvature_tensor, fisher_metric, DerivativeMode};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn frame() -> Frame {
        Frame::new(
            vec![0.4, 1.3],
            DMatrix::from_row_slice(2, 2, &[0.8, -0.3, 0.25, 0.6]),
        )
        .unwrap()
    }

    #[test]
    fn covariant_derivative_golden_values() {
        let f = make_normal();
        let u = Frame::identity(vec![0.0, 1.0]);
        let e1 = |_: &[f64]| v(&[1.0, 0.0]);
        let e2 = |_: &[f64]| v(&[0.0, 1.0]);
        for alpha in [-1.0, 0.0, 0.5, 1.0] {
            let c = AlphaConnection::new(&f, alpha);
            let xx = c.bundle_covariant_derivative(&e1, &e1, &u).unwrap();
            assert!((xx - v(&[0.0, (1.0 - alpha) / 2.0])).amax() < 1e-8);
            let xy = c.bundle_covariant_derivative(&e1, &e2, &u).unwrap();
            assert!((xy - v(&[-(1.0 + alpha), 0.0])).amax() < 1e-8);
            let yy = c.bundle_covariant_derivative(&e2, &e2, &u).unwrap();
            assert!((yy - v(&[0.0, -(1.0 + 2.0 * alpha)])).amax() < 1e-8);
        }
    }

    #[test]
    fn covariant_derivative_matches_chart_and_ignores_frame() {
        let f = make_normal();
        let c = AlphaConnection::new(&f, 0.3);
        let x = |t: &[f64]| v(&[1.0 + 0.2 * t[1], -0.5 * t[0]]);
        let y = |t: &[f64]| v(&[t[0] * t[1], 0.7 + t[1]]);
        let u = frame();
        let bundle = c.bundle_covariant_derivative(&x, &y, &u).unwrap();
        let chart = covariant_derivative(&f, u.theta(), 0.3, ExpectationStrategy::ClosedForm, &x, &y).unwrap();
        assert!((&bundle - chart).amax() < 1e-8);
        let other = c
            .bundle_covariant_derivative(&x, &y, &Frame::identity(u.theta().to_vec()))
            .unwrap();
        assert!((bundle - other).amax() < 1e-8);
    }

    #[test]
    fn torsion_vanishes() {
        let f = make_normal();
        let u = frame();
        for alpha in [-1.0, 0.0, 0.7] {
            let c = AlphaConnection::new(&f, alpha);
            let t = c.torsion_form_eval(&u, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
            assert!(t.amax() < 1e-5);
            let same = c.torsion_form_eval(&u, &v(&[0.3, 0.2]), &v(&[0.3, 0.2])).unwrap();
            assert_eq!(same.amax(), 0.0);
            let x = |t: &[f64]| v(&[t[1], t[0] * t[0]]);
            let y = |t: &[f64]| v(&[1.0, t[0] + t[1]]);
            assert!(c.torsion_form_eval_fields(&u, &x, &y).unwrap().amax() < 1e-5);
        }
    }

    #[test]
    fn curvature_form_matches_chart_tensor() {
        let f = make_normal();
        let u = frame();
        for alpha in [-0.5, 0.0, 0.5] {
            let c = AlphaConnection::new(&f, alpha);
            let (x, y, z) = (v(&[1.0, 0.5]), v(&[-0.2, 1.0]), v(&[0.3, 0.8]));
            let bundle = c.curvature_via_bundle(&u, &x, &y, &z).unwrap();
            let r = curvature_tensor(&f, u.theta(), alpha, ExpectationStrategy::ClosedForm, DerivativeMode::Auto).unwrap();
            let g = fisher_metric(&f, u.theta(), ExpectationStrategy::ClosedForm).unwrap();
            let chart = r.apply(&g, &x, &y, &z);
            assert!((&bundle - chart).amax() < 1e-6);
            let swapped = c.curvature_via_bundle(&u, &y, &x, &z).unwrap();
            assert!((bundle + swapped).amax() < 1e-12);
        }
    }

    #[test]
    fn corrected_pairing_golden_value() {
        // g(u Ω u⁻¹ X, Y) recovers R_0101 = (1-α²)/σ⁴
        let f = make_normal();
        let u = Frame::identity(vec![0.0, 1.0]);
        let (x, y) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let g = fisher_metric(&f, u.theta(), ExpectationStrategy::ClosedForm).unwrap();
        for alpha in [-1.0, 0.0, 0.5, 1.0] {
            let c = AlphaConnection::new(&f, alpha);
            let r = c.curvature_via_bundle(&u, &x, &y, &x).unwrap();
            assert!((g.inner(&r, &y) - (1.0 - alpha * alpha)).abs() < 1e-6);
        }
        let c = AlphaConnection::new(&f, 1.0);
        assert!(c.curvature_form_eval(&u, &x, &y).unwrap().amax() < 1e-5);
    }

    #[test]
    fn structure_equations_on_mixed_fields() {
        let f = make_normal();
        let u = frame();
        let c = AlphaConnection::new(&f, 0.5);
        let hv = c.horizontal_field(v(&[0.7, -0.4]));
        let hw = c.horizontal_field(v(&[0.2, 0.9]));
        let cv = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, 0.5, 0.2]);
        let cw = DMatrix::from_row_slice(2, 2, &[-0.4, 0.6, 0.1, 0.3]);
        let tv = vertical_field(cv);
        let tw = vertical_field(cw);
        let mv = |p: &Frame| Ok(hv(p)? + tv(p)?);
        let mw = |p: &Frame| Ok(hw(p)? + tw(p)?);
        let r = c.structure_equations(&u, &mv, &mw).unwrap();
        assert!(r.first < 1e-6 && r.second < 1e-6, "{r:?}");
        let vv = c.structure_equations(&u, &tv, &tw).unwrap();
        assert!(vv.torsion.amax() == 0.0 && vv.curvature.amax() == 0.0);
        assert!(vv.first < 1e-8 && vv.second < 1e-8, "{vv:?}");
    }

    #[test]
    fn bianchi_identities() {
        let f = make_normal();
        let u = frame();
        let (a, b, d) = (v(&[1.0, 0.2]), v(&[-0.3, 0.8]), v(&[0.5, 0.5]));
        for alpha in [-1.0, 0.0, 0.5, 1.0] {
            let c = AlphaConnection::new(&f, alpha);
            let r = c.bianchi_residuals(&u, [&a, &b, &d]).unwrap();
            assert!(r.first < 1e-4 && r.second < 1e-4, "{r:?}");
            let z = c.bianchi_residuals(&u, [&a, &a, &d]).unwrap();
            assert_eq!((z.first, z.second), (0.0, 0.0));
        }
    }

    #[test]
    fn bracket_of_vertical_and_horizontal() {
        let f = make_normal();
        let u = frame();
        let c = AlphaConnection::new(&f, -0.5);
        let gen = DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -0.7, 0.4]);
        let xi = v(&[0.6, -0.3]);
        let tau = vertical_field(gen.clone());
        let h = c.horizontal_field(xi.clone());
        let lhs = c.bracket(&tau, &h, &u).unwrap();
        let rhs = c.fundamental_horizontal(&u, &(gen * xi)).unwrap();
        assert!((lhs - rhs).max_abs() < 1e-8);
    }

    #[test]
    fn coarse_steps_converge_at_second_order() {
        let f = make_normal();
        let u = frame();
        let (a, b, d) = (v(&[1.0, 0.2]), v(&[-0.3, 0.8]), v(&[0.5, 0.5]));
        let coarse = Steps::default().scaled(400.0);
        let r1 = AlphaConnection::new(&f, 0.0)
            .with_steps(coarse)
            .bianchi_residuals(&u, [&a, &b, &d])
            .unwrap();
        let r2 = AlphaConnection::new(&f, 0.0)
            .with_steps(coarse.scaled(0.5))
            .bianchi_residuals(&u, [&a, &b, &d])
            .unwrap();
        // Θ vanishes on horizontal fields, so the first identity is round-off only
        assert!(r1.first.max(r2.first) < 1e-9, "{r1:?} {r2:?}");
        assert!(r1.second / r2.second >= 4.0, "{r1:?} {r2:?}");
    }
}
