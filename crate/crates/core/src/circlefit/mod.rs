//! Robust circle fitting for 2D stem cross-sections.
//!
//! Candidates are scored with a kernel objective: every point contributes
//! `(1/s)·φ((‖p − c‖ − r)/s)` with `φ` the standard normal density, summed
//! over all points. Two candidate generators are available, a multi-start
//! Newton/gradient optimizer ([`fit_gradient`]) and RANSAC ([`fit_ransac`]);
//! [`select_best_circle`] reduces their output to a single circle via
//! deduplication, non-maximum suppression and an optional circular
//! completeness filter.
//!
//! Ellipse fitting is not provided.

mod gradient;
mod objective;
mod ransac;
mod select;

pub use gradient::fit_gradient;
pub use objective::{circle_objective, circular_completeness_index, loss_and_gradient, loss_derivatives};
pub use ransac::{circle_through, fit_least_squares, fit_ransac};
pub use select::select_best_circle;

use crate::error::{Error, Result};

/// Number of angular regions used by the completeness index.
pub const CCI_REGIONS: usize = 73;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    /// Kernel goodness-of-fit over the input points.
    pub score: f64,
    /// Points within one bandwidth of the outline.
    pub inlier_count: usize,
}

impl Circle {
    pub fn center(&self) -> [f64; 2] {
        [self.a, self.b]
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Gradient,
    Ransac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleFitParams {
    /// Kernel bandwidth `s`; also the RANSAC inlier tolerance and the CCI
    /// distance threshold.
    pub bandwidth: f64,
    pub min_score: f64,
    pub min_diameter: f64,
    pub max_diameter: f64,
    pub min_points: usize,
    pub cci_min: Option<f64>,
    pub rng_seed: u64,
    pub ransac_iterations: usize,
    pub method: FitMethod,
}

impl Default for CircleFitParams {
    fn default() -> Self {
        Self::tls()
    }
}

impl CircleFitParams {
    pub fn tls() -> Self {
        CircleFitParams {
            bandwidth: 0.01,
            min_score: 100.0,
            min_diameter: 0.02,
            max_diameter: 1.0,
            min_points: 15,
            cci_min: Some(0.3),
            rng_seed: 0,
            ransac_iterations: 1000,
            method: FitMethod::Ransac,
        }
    }

    pub fn uls() -> Self {
        CircleFitParams {
            bandwidth: 0.03,
            min_score: 5.0,
            min_points: 3,
            ..Self::tls()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::param("bandwidth", "must be positive"));
        }
        if !(self.min_diameter > 0.0 && self.max_diameter > self.min_diameter) {
            return Err(Error::param(
                "min_diameter/max_diameter",
                "need 0 < min_diameter < max_diameter",
            ));
        }
        if let Some(c) = self.cci_min {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::param("cci_min", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Returned when a point set is too small to fit a circle at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsufficientPoints {
    pub have: usize,
    pub need: usize,
}

/// Axis-aligned bounds of the points, widened by the center margin.
///
/// Degenerate sides are widened to `2·min_diameter` before the margin
/// `max(s, 5 % of the diagonal)` is added.
pub(crate) fn center_bounds(points: &[[f64; 2]], params: &CircleFitParams) -> ([f64; 2], [f64; 2]) {
    use num_traits::Float;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    for d in 0..2 {
        if hi[d] - lo[d] <= 0.0 {
            lo[d] -= params.min_diameter;
            hi[d] += params.min_diameter;
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let margin = params.bandwidth.max(0.05 * diag);
    (
        [lo[0] - margin, lo[1] - margin],
        [hi[0] + margin, hi[1] + margin],
    )
}

pub(crate) fn admissible(
    a: f64,
    b: f64,
    r: f64,
    bounds: &([f64; 2], [f64; 2]),
    params: &CircleFitParams,
) -> bool {
    let d = 2.0 * r;
    d.is_finite()
        && d >= params.min_diameter
        && d <= params.max_diameter
        && a >= bounds.0[0]
        && a <= bounds.1[0]
        && b >= bounds.0[1]
        && b <= bounds.1[1]
}

/// Fits candidates with the configured method and selects the best circle.
pub fn fit_circle(
    points: &[[f64; 2]],
    params: &CircleFitParams,
) -> core::result::Result<Option<Circle>, InsufficientPoints> {
    let candidates = match params.method {
        FitMethod::Gradient => fit_gradient(points, params)?,
        FitMethod::Ransac => fit_ransac(points, params)?,
    };
    Ok(select_best_circle(&candidates, points, params))
}
