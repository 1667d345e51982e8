use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{ExpectationStrategy, StatisticalFamily};
use crate::manifold::{christoffel_mixed, fisher_metric};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Local error estimate of the step that produced this sample
    /// (one full RK4 step against two half steps); zero for sampled curves.
    pub residual: f64,
}

/// A time-sampled curve on the base manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub alpha: f64,
    pub dt: f64,
    /// The integration stopped because a stage left the parameter domain.
    pub exited_domain: bool,
}

impl Trajectory {
    /// Samples an explicit curve `t ↦ (θ(t), θ'(t))` on `[t0, t_end]`.
    pub fn from_curve(
        curve: impl Fn(f64) -> (Vec<f64>, Vec<f64>),
        t0: f64,
        t_end: f64,
        dt: f64,
    ) -> Result<Self> {
        let times = time_grid(t0, t_end, dt)?;
        let samples = times
            .into_iter()
            .map(|t| {
                let (theta, velocity) = curve(t);
                TrajectorySample {
                    t,
                    theta,
                    velocity,
                    residual: 0.0,
                }
            })
            .collect();
        Ok(Self {
            samples,
            alpha: f64::NAN,
            dt,
            exited_domain: false,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.residual))
    }

    /// Cubic Hermite interpolation of position and velocity between the
    /// samples `k` and `k + 1`.
    pub fn hermite(&self, k: usize, t: f64) -> (DVector<f64>, DVector<f64>) {
        let a = &self.samples[k];
        let b = &self.samples[k + 1];
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let n = a.theta.len();
        let pos = DVector::from_fn(n, |i, _| {
            h00 * a.theta[i] + h10 * h * a.velocity[i] + h01 * b.theta[i] + h11 * h * b.velocity[i]
        });
        let vel = DVector::from_fn(n, |i, _| {
            (d00 * a.theta[i] + d10 * h * a.velocity[i] + d01 * b.theta[i] + d11 * h * b.velocity[i])
                / h
        });
        (pos, vel)
    }

    /// Relative drift of `g(θ', θ')` along the curve.
    pub fn speed_drift(
        &self,
        family: &StatisticalFamily,
        strategy: ExpectationStrategy,
    ) -> Result<f64> {
        let speed = |s: &TrajectorySample| -> Result<f64> {
            let g = fisher_metric(family, &s.theta, strategy)?;
            let v = DVector::from_column_slice(&s.velocity);
            Ok(g.inner(&v, &v))
        };
        let s0 = speed(self.first())?;
        let scale = s0.abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            worst = worst.max((speed(s)? - s0).abs() / scale);
        }
        Ok(if s0 == 0.0 { worst * scale } else { worst })
    }
}

pub(crate) fn time_grid(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= t0 && t_end.is_finite() && t0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time interval [{t0}, {t_end}] is empty or non-finite"
        )));
    }
    let steps = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
    times.push(t_end);
    Ok(times)
}

type State = (DVector<f64>, DVector<f64>);

enum Stage {
    Ok(State),
    Exited,
}

/// Integrates `θ''^k + Γ^(α)k_ij θ'^i θ'^j = 0` with classical RK4 at a fixed
/// step, stopping early (flagged) if any stage leaves the parameter domain.
pub fn geodesic(
    family: &StatisticalFamily,
    theta0: &[f64],
    v0: &[f64],
    alpha: f64,
    t_end: f64,
    dt: f64,
    strategy: ExpectationStrategy,
) -> Result<Trajectory> {
    family.check_theta(theta0)?;
    if v0.len() != family.dim() {
        return Err(Error::Dimension {
            expected: family.dim(),
            got: v0.len(),
        });
    }
    let times = time_grid(0.0, t_end, dt)?;

    let accel = |theta: &DVector<f64>, v: &DVector<f64>| -> Result<Option<DVector<f64>>> {
        if !family.domain().contains(theta.as_slice()) {
            return Ok(None);
        }
        let gamma = christoffel_mixed(family, theta.as_slice(), alpha, strategy)?;
        Ok(Some(-gamma.contract(v, v)))
    };
    let rk4 = |(theta, v): &State, h: f64| -> Result<Stage> {
        macro_rules! stage {
            ($th:expr, $v:expr) => {
                match accel(&$th, &$v)? {
                    Some(a) => a,
                    None => return Ok(Stage::Exited),
                }
            };
        }
        let k1v = stage!(theta, v);
        let k1x = v.clone();
        let x2 = theta + &k1x * (0.5 * h);
        let v2 = v + &k1v * (0.5 * h);
        let k2v = stage!(x2, v2);
        let k2x = v2;
        let x3 = theta + &k2x * (0.5 * h);
        let v3 = v + &k2v * (0.5 * h);
        let k3v = stage!(x3, v3);
        let k3x = v3;
        let x4 = theta + &k3x * h;
        let v4 = v + &k3v * h;
        let k4v = stage!(x4, v4);
        let k4x = v4;
        let theta_next = theta + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (h / 6.0);
        let v_next = v + (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
        if !family.domain().contains(theta_next.as_slice()) {
            return Ok(Stage::Exited);
        }
        Ok(Stage::Ok((theta_next, v_next)))
    };

    let mut state: State = (
        DVector::from_column_slice(theta0),
        DVector::from_column_slice(v0),
    );
    let mut samples = vec![TrajectorySample {
        t: 0.0,
        theta: theta0.to_vec(),
        velocity: v0.to_vec(),
        residual: 0.0,
    }];
    let mut exited = false;
    for w in times.windows(2) {
        let h = w[1] - w[0];
        let full = match rk4(&state, h)? {
            Stage::Ok(s) => s,
            Stage::Exited => {
                exited = true;
                break;
            }
        };
        let residual = match rk4(&state, 0.5 * h)? {
            Stage::Ok(half) => match rk4(&half, 0.5 * h)? {
                Stage::Ok(two) => ((&full.0 - two.0).norm_squared() + (&full.1 - two.1).norm_squared())
                    .sqrt(),
                Stage::Exited => f64::NAN,
            },
            Stage::Exited => f64::NAN,
        };
        if full.0.iter().chain(full.1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t: w[1],
                last_theta: state.0.as_slice().to_vec(),
            });
        }
        state = full;
        samples.push(TrajectorySample {
            t: w[1],
            theta: state.0.as_slice().to_vec(),
            velocity: state.1.as_slice().to_vec(),
            residual,
        });
    }
    Ok(Trajectory {
        samples,
        alpha,
        dt,
        exited_domain: exited,
    })
}
