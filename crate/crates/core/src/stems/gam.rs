//! Cyclic penalized spline of radius against angle, used to re-estimate the
//! cross-section diameter of a stem layer.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::circlefit::Circle;
use crate::linalg::{cholesky, cholesky_solve, SquareMatrix};

/// Number of cyclic cubic B-spline basis functions.
pub const N_BASIS: usize = 20;
const N_LAMBDA: usize = 20;
const MIN_POINTS: usize = 4;

/// Outcome of [`gam_layer_diameter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerDiameter {
    pub diameter: f64,
    /// `false` when the spline was rejected and the circle diameter is used.
    pub valid: bool,
}

/// Cardinal cubic B-spline on `[-2, 2]`.
fn bspline3(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let t = 2.0 - a;
        t * t * t / 6.0
    } else {
        0.0
    }
}

/// Row of the cyclic design matrix at angle `theta`.
fn basis_row(theta: f64) -> [f64; N_BASIS] {
    let k = N_BASIS as f64;
    let turns = theta / (2.0 * PI);
    let x = (turns - turns.floor()) * k;
    let mut row = [0.0; N_BASIS];
    for (j, r) in row.iter_mut().enumerate() {
        let mut u = x - j as f64;
        // wrap into [-k/2, k/2)
        u -= k * ((u + k / 2.0) / k).floor();
        *r = bspline3(u);
    }
    row
}

/// Smooth periodic fit `r(θ)`; holds the basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicSpline {
    pub coefficients: [f64; N_BASIS],
    pub lambda: f64,
}

impl CyclicSpline {
    pub fn eval(&self, theta: f64) -> f64 {
        basis_row(theta)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }

    /// Fits `(θ, r)` samples, choosing the smoothing weight by generalized
    /// cross-validation over a log-spaced grid.
    ///
    /// The roughness penalty is the sum of squared cyclic second differences
    /// of the coefficients. The grid spans `1e-6..1e2` times
    /// `tr(XᵀX)/tr(P)` so it adapts to the sample count. `None` for fewer than
    /// four samples.
    pub fn fit(samples: &[(f64, f64)]) -> Option<Self> {
        if samples.len() < MIN_POINTS {
            return None;
        }
        let k = N_BASIS;
        let mut xtx = SquareMatrix::zeros(k);
        let mut xty = vec![0.0; k];
        let rows: Vec<[f64; N_BASIS]> = samples.iter().map(|s| basis_row(s.0)).collect();
        for (row, s) in rows.iter().zip(samples) {
            for i in 0..k {
                if row[i] == 0.0 {
                    continue;
                }
                xty[i] += row[i] * s.1;
                for j in 0..k {
                    *xtx.at_mut(i, j) += row[i] * row[j];
                }
            }
        }
        // P = DᵀD with D the cyclic second-difference operator
        let mut pen = SquareMatrix::zeros(k);
        for r in 0..k {
            let idx = [(r + k - 1) % k, r, (r + 1) % k];
            let w = [1.0, -2.0, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    *pen.at_mut(idx[a], idx[b]) += w[a] * w[b];
                }
            }
        }
        let trace = |m: &SquareMatrix| (0..k).map(|i| m.at(i, i)).sum::<f64>();
        let scale = trace(&xtx) / trace(&pen);
        let n = samples.len() as f64;

        let mut best: Option<(f64, Self)> = None;
        for step in 0..N_LAMBDA {
            let lambda = scale * 10f64.powf(-6.0 + 8.0 * step as f64 / (N_LAMBDA - 1) as f64);
            let mut m = xtx.clone();
            for (a, p) in m.a.iter_mut().zip(&pen.a) {
                *a += lambda * p;
            }
            let Some(l) = cholesky(&m) else { continue };
            let beta = cholesky_solve(&l, &xty);
            // tr(A) = tr((XᵀX + λP)⁻¹ XᵀX)
            let mut edf = 0.0;
            let mut col = vec![0.0; k];
            for j in 0..k {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = xtx.at(i, j);
                }
                edf += cholesky_solve(&l, &col)[j];
            }
            let rss: f64 = rows
                .iter()
                .zip(samples)
                .map(|(row, s)| {
                    let fit: f64 = row.iter().zip(&beta).map(|(b, c)| b * c).sum();
                    (s.1 - fit).powi(2)
                })
                .sum();
            let denom = n - edf;
            if !(denom > 1e-9) {
                continue;
            }
            let gcv = n * rss / (denom * denom);
            if best.as_ref().is_none_or(|(g, _)| gcv < *g) {
                let mut coefficients = [0.0; N_BASIS];
                coefficients.copy_from_slice(&beta);
                best = Some((gcv, CyclicSpline { coefficients, lambda }));
            }
        }
        best.map(|(_, s)| s)
    }
}

/// Shoelace area of the polygon with vertices at `radii[i]` and angle `i`
/// degrees.
fn polygon_area(radii: &[f64]) -> f64 {
    let n = radii.len();
    let v: Vec<[f64; 2]> = radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let t = (i as f64).to_radians() * 360.0 / n as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let mut twice = 0.0;
    for i in 0..n {
        let p = v[i];
        let q = v[(i + 1) % n];
        twice += p[0] * q[1] - q[0] * p[1];
    }
    (twice / 2.0).abs()
}

/// Diameter of one stem layer from a smooth radius-versus-angle model.
///
/// Points within `buffer` of the circle outline are centred on the circle,
/// converted to polar form and fitted with [`CyclicSpline`]. The radius is
/// predicted in 1° steps and the resulting 360-gon's area `A` gives the
/// diameter `2·√(A/π)` (or `√A` with `literal_sqrt_area`). If fewer than four
/// points fall in the buffer, or the predicted radii spread by more than
/// `max_spread`, the circle's own diameter is returned and flagged invalid.
pub fn gam_layer_diameter(
    points: &[[f64; 2]],
    circle: &Circle,
    buffer: f64,
    max_spread: f64,
    literal_sqrt_area: bool,
) -> LayerDiameter {
    let fallback = LayerDiameter {
        diameter: circle.diameter(),
        valid: false,
    };
    let samples: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| {
            let dx = p[0] - circle.a;
            let dy = p[1] - circle.b;
            let r = (dx * dx + dy * dy).sqrt();
            ((r - circle.r).abs() <= buffer).then(|| (dy.atan2(dx), r))
        })
        .collect();
    let Some(spline) = CyclicSpline::fit(&samples) else {
        return fallback;
    };
    let radii: Vec<f64> = (0..360).map(|d| spline.eval((d as f64).to_radians())).collect();
    let lo = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo <= max_spread) {
        return fallback;
    }
    let area = polygon_area(&radii);
    let diameter = if literal_sqrt_area {
        area.sqrt()
    } else {
        2.0 * (area / PI).sqrt()
    };
    LayerDiameter {
        diameter,
        valid: true,
    }
}
