use alloc::vec::Vec;

use num_traits::Float;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::objective::circle_objective;
use super::{admissible, center_bounds, Circle, CircleFitParams, InsufficientPoints};
use crate::linalg::solve3;

/// Circumscribed circle of three points as `(a, b, r)`; `None` when they are
/// collinear.
pub fn circle_through(p: [f64; 2], q: [f64; 2], t: [f64; 2]) -> Option<(f64, f64, f64)> {
    // relative to p for conditioning
    let (bx, by) = (q[0] - p[0], q[1] - p[1]);
    let (cx, cy) = (t[0] - p[0], t[1] - p[1]);
    let d = 2.0 * (bx * cy - by * cx);
    if d == 0.0 {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let r = (ux * ux + uy * uy).sqrt();
    r.is_finite().then_some((p[0] + ux, p[1] + uy, r))
}

/// Algebraic least-squares circle (minimizes `Σ (x² + y² + Dx + Ey + F)²`).
pub fn fit_least_squares(points: &[[f64; 2]]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    let (mx, my) = (mx / n, my / n);
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for p in points {
        let x = p[0] - mx;
        let y = p[1] - my;
        let z = x * x + y * y;
        let row = [x, y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            v[i] -= row[i] * z;
        }
    }
    let [d, e, f] = solve3(m, v)?;
    let a = -d / 2.0;
    let b = -e / 2.0;
    let r2 = a * a + b * b - f;
    if !(r2 > 0.0) {
        return None;
    }
    Some((a + mx, b + my, r2.sqrt()))
}

#[inline]
fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// RANSAC circle detection.
///
/// Each iteration draws three distinct points, builds their circumcircle and
/// rejects it when it is degenerate (radius above `10·max_diameter`), its
/// diameter leaves `[min_diameter, max_diameter]` or its center leaves the
/// expanded bounding box. Points within `s` of the outline form the consensus
/// set, the circle is re-fitted to it by least squares, and the result is
/// kept when it remains admissible, the consensus holds at least three points
/// and the score over all points reaches `min_score`. The sequence of draws
/// depends only on `rng_seed`.
pub fn fit_ransac(
    points: &[[f64; 2]],
    params: &CircleFitParams,
) -> Result<Vec<Circle>, InsufficientPoints> {
    let need = params.min_points.max(3);
    if points.len() < need {
        return Err(InsufficientPoints {
            have: points.len(),
            need,
        });
    }
    let s = params.bandwidth;
    let n = points.len();
    let bounds = center_bounds(points, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut out = Vec::new();
    let mut consensus: Vec<[f64; 2]> = Vec::with_capacity(n);
    for _ in 0..params.ransac_iterations {
        let i = uniform_index(&mut rng, n);
        let mut j = uniform_index(&mut rng, n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = uniform_index(&mut rng, n - 2);
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if k >= lo {
            k += 1;
        }
        if k >= hi {
            k += 1;
        }
        let Some((a, b, r)) = circle_through(points[i], points[j], points[k]) else {
            continue;
        };
        if r > 10.0 * params.max_diameter || !admissible(a, b, r, &bounds, params) {
            continue;
        }
        consensus.clear();
        consensus.extend(points.iter().copied().filter(|p| {
            let d = ((p[0] - a).powi(2) + (p[1] - b).powi(2)).sqrt();
            (d - r).abs() <= s
        }));
        if consensus.len() < 3 {
            continue;
        }
        let Some((a, b, r)) = fit_least_squares(&consensus) else {
            continue;
        };
        if !admissible(a, b, r, &bounds, params) {
            continue;
        }
        let score = circle_objective(points, [a, b], r, s);
        if score >= params.min_score {
            out.push(Circle {
                a,
                b,
                r,
                score,
                inlier_count: consensus.len(),
            });
        }
    }
    Ok(out)
}
