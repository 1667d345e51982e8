use nalgebra::{DMatrix, DVector};

use super::{AlphaConnection, Frame, LieAlgebraValue};
use crate::error::{Error, Result};
use crate::manifold::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSample {
    pub t: f64,
    pub frame: Frame,
}

/// A horizontal curve in the frame bundle together with the base curve it lifts.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleTrajectory {
    pub samples: Vec<BundleSample>,
    pub base: Trajectory,
}

impl BundleTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &BundleSample {
        self.samples.last().expect("lift has samples")
    }

    /// `θ(γ̃') = A(t)⁻¹ γ'(t)` at each sample.
    pub fn canonical_velocity(&self) -> Vec<DVector<f64>> {
        self.samples
            .iter()
            .zip(&self.base.samples)
            .map(|(s, b)| s.frame.inverse_apply(&DVector::from_column_slice(&b.velocity)))
            .collect()
    }
}

impl<'a> AlphaConnection<'a> {
    fn omega_along(&self, theta: &DVector<f64>, velocity: &DVector<f64>) -> Result<LieAlgebraValue> {
        Ok(self.local_connection_form(theta.as_slice())?.eval(velocity))
    }

    /// Horizontal lift of `γ` starting at `u0`: RK4 on `A' = -ω(γ')A` over
    /// the samples of `γ`, with cubic Hermite interpolation at half steps.
    pub fn horizontal_lift_curve(&self, gamma: &Trajectory, u0: &Frame) -> Result<BundleTrajectory> {
        if gamma.is_empty() {
            return Err(Error::InvalidArgument("cannot lift an empty curve".into()));
        }
        let start = &gamma.first().theta;
        let mismatch = start
            .iter()
            .zip(u0.theta())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if start.len() != u0.dim() || mismatch > 1e-12 * (1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            return Err(Error::InvalidArgument(format!(
                "initial frame sits over {:?}, curve starts at {start:?}",
                u0.theta()
            )));
        }

        let mut a = u0.matrix().clone();
        let mut samples = vec![BundleSample {
            t: gamma.first().t,
            frame: u0.clone(),
        }];
        for k in 0..gamma.len() - 1 {
            let s0 = &gamma.samples[k];
            let s1 = &gamma.samples[k + 1];
            let h = s1.t - s0.t;
            let (mid_theta, mid_vel) = gamma.hermite(k, s0.t + 0.5 * h);
            let m0 = self.omega_along(
                &DVector::from_column_slice(&s0.theta),
                &DVector::from_column_slice(&s0.velocity),
            )?;
            let mh = self.omega_along(&mid_theta, &mid_vel)?;
            let m1 = self.omega_along(
                &DVector::from_column_slice(&s1.theta),
                &DVector::from_column_slice(&s1.velocity),
            )?;
            let k1: DMatrix<f64> = -(&m0 * &a);
            let k2: DMatrix<f64> = -(&mh * (&a + &k1 * (0.5 * h)));
            let k3: DMatrix<f64> = -(&mh * (&a + &k2 * (0.5 * h)));
            let k4: DMatrix<f64> = -(&m1 * (&a + &k3 * h));
            a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let det = a.determinant();
            if !(det.abs() > super::MIN_FRAME_DET) {
                return Err(Error::LiftDegeneracy {
                    t: s1.t,
                    det: det.abs(),
                });
            }
            samples.push(BundleSample {
                t: s1.t,
                frame: Frame::new(s1.theta.clone(), a.clone())?,
            });
        }
        Ok(BundleTrajectory {
            samples,
            base: gamma.clone(),
        })
    }

    /// `v(t) = A(t) A(0)⁻¹ v0` at every sample of `γ`, lifting from `u0`.
    pub fn parallel_transport_path(
        &self,
        gamma: &Trajectory,
        u0: &Frame,
        v0: &DVector<f64>,
    ) -> Result<(BundleTrajectory, Vec<DVector<f64>>)> {
        if v0.len() != u0.dim() {
            return Err(Error::Dimension {
                expected: u0.dim(),
                got: v0.len(),
            });
        }
        let lift = self.horizontal_lift_curve(gamma, u0)?;
        let xi = u0.inverse_apply(v0);
        let vectors = lift.samples.iter().map(|s| s.frame.apply(&xi)).collect();
        Ok((lift, vectors))
    }

    /// Parallel transport of `v0` from the start to the end of `γ`.
    pub fn parallel_transport(&self, gamma: &Trajectory, v0: &DVector<f64>) -> Result<DVector<f64>> {
        if gamma.is_empty() {
            return Err(Error::InvalidArgument("cannot transport along an empty curve".into()));
        }
        let u0 = Frame::identity(gamma.first().theta.clone());
        let (_, vectors) = self.parallel_transport_path(gamma, &u0, v0)?;
        Ok(vectors.last().expect("non-empty").clone())
    }
}
