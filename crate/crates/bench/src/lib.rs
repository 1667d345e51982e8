//! Shared fixtures for the criterion benchmarks.

use alpha_bundle::{make_normal, Frame, StatisticalFamily, Trajectory};

pub fn normal() -> StatisticalFamily {
    make_normal()
}

/// The straight line `μ = t, σ = 1` on `[0, t_end]`.
pub fn mean_line(t_end: f64, dt: f64) -> Trajectory {
    Trajectory::from_curve(|t| (vec![t, 1.0], vec![1.0, 0.0]), 0.0, t_end, dt).expect("valid grid")
}

pub fn identity_frame() -> Frame {
    Frame::identity(vec![0.0, 1.0])
}
