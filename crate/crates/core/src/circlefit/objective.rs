use core::f64::consts::PI;

use num_traits::Float;

use super::Circle;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
fn gauss(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Kernel goodness-of-fit `S(a, b, r)`; zero for an empty point set.
pub fn circle_objective(points: &[[f64; 2]], center: [f64; 2], radius: f64, s: f64) -> f64 {
    let mut sum = 0.0;
    for p in points {
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
        sum += gauss((d - radius) / s);
    }
    sum / s
}

/// Loss `-S/N` at `theta = [a, b, r]` and its gradient.
pub fn loss_and_gradient(points: &[[f64; 2]], theta: [f64; 3], s: f64) -> (f64, [f64; 3]) {
    let (l, g, _) = loss_derivatives(points, theta, s);
    (l, g)
}

/// Loss `-S/N`, gradient and Hessian at `theta = [a, b, r]`.
///
/// With `e = (d - r)/s` and `f(e) = φ(e)/s` per point, `f' = -e·φ/s` and
/// `f'' = (e² - 1)·φ/s`. The Hessian is `f''·∇e∇eᵀ + f'·∇²e`, where
/// `∇e = ((a - x)/(s·d), (b - y)/(s·d), -1/s)`.
pub fn loss_derivatives(points: &[[f64; 2]], theta: [f64; 3], s: f64) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let [a, b, r] = theta;
    let n = points.len().max(1) as f64;
    let mut f_sum = 0.0;
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];
    for p in points {
        let dx = a - p[0];
        let dy = b - p[1];
        let d = (dx * dx + dy * dy).sqrt();
        let e = (d - r) / s;
        let phi = gauss(e);
        let f = phi / s;
        let f1 = -e * phi / s;
        let f2 = (e * e - 1.0) * phi / s;
        f_sum += f;
        if d == 0.0 {
            // center on a data point: only the radius derivative is defined
            g[2] += f1 * (-1.0 / s);
            h[2][2] += f2 / (s * s);
            continue;
        }
        let ge = [dx / (s * d), dy / (s * d), -1.0 / s];
        let d3 = d * d * d;
        let he = [
            [dy * dy / (s * d3), -dx * dy / (s * d3), 0.0],
            [-dx * dy / (s * d3), dx * dx / (s * d3), 0.0],
            [0.0, 0.0, 0.0],
        ];
        for i in 0..3 {
            g[i] += f1 * ge[i];
            for j in 0..3 {
                h[i][j] += f2 * ge[i] * ge[j] + f1 * he[i][j];
            }
        }
    }
    for i in 0..3 {
        g[i] = -g[i] / n;
        for j in 0..3 {
            h[i][j] = -h[i][j] / n;
        }
    }
    (-f_sum / n, g, h)
}

/// Fraction of `regions` equal angular sectors around the circle that hold
/// at least one point within `s` of the outline.
pub fn circular_completeness_index(points: &[[f64; 2]], circle: &Circle, s: f64, regions: usize) -> f64 {
    if regions == 0 || points.is_empty() {
        return 0.0;
    }
    let mut hit = alloc::vec![false; regions];
    let width = 2.0 * PI / regions as f64;
    for p in points {
        let dx = p[0] - circle.a;
        let dy = p[1] - circle.b;
        let d = (dx * dx + dy * dy).sqrt();
        if (d - circle.r).abs() > s {
            continue;
        }
        let mut ang = dy.atan2(dx);
        if ang < 0.0 {
            ang += 2.0 * PI;
        }
        let bin = ((ang / width).floor() as usize).min(regions - 1);
        hit[bin] = true;
    }
    hit.iter().filter(|&&h| h).count() as f64 / regions as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn ring(n: usize, c: [f64; 2], r: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn objective_closed_forms() {
        let pts = ring(100, [0.0, 0.0], 0.3);
        let s = circle_objective(&pts, [0.0, 0.0], 0.3, 0.01);
        let expect = 100.0 / (0.01 * (2.0 * PI).sqrt());
        assert!((s - expect).abs() < 1e-9 * expect);
        assert!((expect - 3989.42).abs() < 0.01);

        let one = circle_objective(&[[1.0, 0.0]], [0.0, 0.0], 1.0, 0.2);
        assert!((one - 1.0 / (0.2 * (2.0 * PI).sqrt())).abs() < 1e-12);

        assert!(circle_objective(&pts, [0.0, 0.0], 0.6, 0.01) < 1e-6);
        assert_eq!(circle_objective(&[], [0.0, 0.0], 0.6, 0.01), 0.0);
    }

    #[test]
    fn cci_full_and_empty() {
        let c = Circle {
            a: 0.0,
            b: 0.0,
            r: 0.3,
            score: 0.0,
            inlier_count: 0,
        };
        let pts = ring(730, [0.0, 0.0], 0.3);
        assert_eq!(circular_completeness_index(&pts, &c, 0.01, 73), 1.0);
        assert_eq!(circular_completeness_index(&[], &c, 0.01, 73), 0.0);
    }
}
