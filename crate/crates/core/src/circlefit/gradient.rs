use alloc::vec::Vec;

use num_traits::Float;

use super::objective::{circle_objective, loss_derivatives};
use super::{admissible, center_bounds, Circle, CircleFitParams, InsufficientPoints};
use crate::linalg::{cholesky, cholesky_solve, SquareMatrix};

const MAX_ITERATIONS: usize = 1000;
const MIN_UPDATE: f64 = 1e-5;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;

/// Multi-start kernel-objective circle fitting.
///
/// Starts from a 3×3 grid of centers spanning the bounding box of the points
/// combined with three radii (half of the minimum, maximum and mid-range
/// diameter) and minimizes `-S/N`. Each step is a Newton step when the
/// Hessian is positive definite and a normalized gradient step of length `s`
/// otherwise, followed by a backtracking line search. A start is discarded
/// as soon as its diameter or center leaves the admissible range; it
/// converges once the update norm drops below 1e-5 (at most 1000
/// iterations). Converged circles scoring at least `min_score` are returned.
pub fn fit_gradient(
    points: &[[f64; 2]],
    params: &CircleFitParams,
) -> Result<Vec<Circle>, InsufficientPoints> {
    if points.len() < params.min_points.max(1) {
        return Err(InsufficientPoints {
            have: points.len(),
            need: params.min_points.max(1),
        });
    }
    let s = params.bandwidth;
    let bounds = center_bounds(points, params);
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
    let radii = [
        params.min_diameter / 2.0,
        params.max_diameter / 2.0,
        (params.min_diameter + 0.5 * (params.max_diameter - params.min_diameter)) / 2.0,
    ];

    let mut out = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let a0 = lo[0] + (hi[0] - lo[0]) * i as f64 / 2.0;
            let b0 = lo[1] + (hi[1] - lo[1]) * j as f64 / 2.0;
            for &r0 in &radii {
                if let Some(theta) = optimize(points, [a0, b0, r0], s, &bounds, params) {
                    let score = circle_objective(points, [theta[0], theta[1]], theta[2], s);
                    if score >= params.min_score {
                        out.push(Circle {
                            a: theta[0],
                            b: theta[1],
                            r: theta[2],
                            score,
                            inlier_count: count_inliers(points, theta, s),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn count_inliers(points: &[[f64; 2]], theta: [f64; 3], s: f64) -> usize {
    points
        .iter()
        .filter(|p| {
            let d = ((p[0] - theta[0]).powi(2) + (p[1] - theta[1]).powi(2)).sqrt();
            (d - theta[2]).abs() <= s
        })
        .count()
}

fn optimize(
    points: &[[f64; 2]],
    start: [f64; 3],
    s: f64,
    bounds: &([f64; 2], [f64; 2]),
    params: &CircleFitParams,
) -> Option<[f64; 3]> {
    let mut theta = start;
    let n = points.len() as f64;
    for _ in 0..MAX_ITERATIONS {
        let (loss, g, h) = loss_derivatives(points, theta, s);
        let gnorm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if gnorm == 0.0 {
            return Some(theta);
        }
        let mut hm = SquareMatrix::zeros(3);
        for r in 0..3 {
            for c in 0..3 {
                *hm.at_mut(r, c) = h[r][c];
            }
        }
        let dir = match cholesky(&hm) {
            Some(l) => {
                let x = cholesky_solve(&l, &g);
                [-x[0], -x[1], -x[2]]
            }
            None => [-g[0] * s / gnorm, -g[1] * s / gnorm, -g[2] * s / gnorm],
        };
        let slope = g[0] * dir[0] + g[1] * dir[1] + g[2] * dir[2];
        let mut t = 1.0;
        let mut next = theta;
        for _ in 0..MAX_HALVINGS {
            next = [theta[0] + t * dir[0], theta[1] + t * dir[1], theta[2] + t * dir[2]];
            let l_next = -circle_objective(points, [next[0], next[1]], next[2], s) / n;
            if l_next <= loss + ARMIJO * t * slope {
                break;
            }
            t *= 0.5;
        }
        let step = t * (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        theta = next;
        if !admissible(theta[0], theta[1], theta[2], bounds, params) {
            return None;
        }
        if step < MIN_UPDATE {
            return Some(theta);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn ring(n: usize, c: [f64; 2], r: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_circle() {
        let pts = ring(200, [0.0, 0.0], 0.3);
        let circles = fit_gradient(&pts, &CircleFitParams::tls()).unwrap();
        assert!(!circles.is_empty());
        let best = super::super::select_best_circle(&circles, &pts, &CircleFitParams::tls()).unwrap();
        assert!(best.a.abs() < 1e-4 && best.b.abs() < 1e-4 && (best.r - 0.3).abs() < 1e-4);
    }

    #[test]
    fn collinear_points_yield_nothing() {
        let pts: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 0.0]).collect();
        let p = CircleFitParams {
            min_points: 3,
            ..CircleFitParams::tls()
        };
        assert!(fit_gradient(&pts, &p).unwrap().is_empty());
    }

    #[test]
    fn oversized_circle_rejected() {
        let pts = ring(200, [0.0, 0.0], 2.0);
        assert!(fit_gradient(&pts, &CircleFitParams::tls()).unwrap().is_empty());
    }

    #[test]
    fn too_few_points() {
        let e = fit_gradient(&[[0.0, 0.0]; 2], &CircleFitParams::tls()).unwrap_err();
        assert_eq!(e, InsufficientPoints { have: 2, need: 15 });
    }
}
