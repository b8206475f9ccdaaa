use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use super::objective::circular_completeness_index;
use super::{Circle, CircleFitParams, CCI_REGIONS};

fn by_score_desc(x: &Circle, y: &Circle) -> Ordering {
    y.score
        .partial_cmp(&x.score)
        .unwrap_or(Ordering::Equal)
        .then(x.a.partial_cmp(&y.a).unwrap_or(Ordering::Equal))
        .then(x.b.partial_cmp(&y.b).unwrap_or(Ordering::Equal))
        .then(x.r.partial_cmp(&y.r).unwrap_or(Ordering::Equal))
}

fn rounded(c: &Circle) -> [i64; 3] {
    [
        (c.a * 1e4).round() as i64,
        (c.b * 1e4).round() as i64,
        (c.r * 1e4).round() as i64,
    ]
}

/// Reduces candidate circles to the single best one.
///
/// 1. Circles equal after rounding to four decimals are merged.
/// 2. Non-maximum suppression: walking by descending score, a circle is
///    dropped when its center lies closer than `r₁ + r₂` to a kept circle.
/// 3. With `cci_min` set, circles whose completeness index falls below it are
///    dropped.
/// 4. The highest-scoring survivor is returned.
pub fn select_best_circle(
    candidates: &[Circle],
    points: &[[f64; 2]],
    params: &CircleFitParams,
) -> Option<Circle> {
    let mut sorted: Vec<Circle> = candidates.to_vec();
    sorted.sort_by(by_score_desc);

    let mut unique: Vec<Circle> = Vec::with_capacity(sorted.len());
    let mut seen = BTreeSet::new();
    for c in sorted {
        if seen.insert(rounded(&c)) {
            unique.push(c);
        }
    }

    let mut kept: Vec<Circle> = Vec::new();
    for c in unique {
        let overlaps = kept.iter().any(|k| {
            let d = ((k.a - c.a).powi(2) + (k.b - c.b).powi(2)).sqrt();
            d < k.r + c.r
        });
        if !overlaps {
            kept.push(c);
        }
    }

    kept.into_iter().find(|c| match params.cci_min {
        Some(min) => circular_completeness_index(points, c, params.bandwidth, CCI_REGIONS) >= min,
        None => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn circle(a: f64, b: f64, r: f64, score: f64) -> Circle {
        Circle {
            a,
            b,
            r,
            score,
            inlier_count: 0,
        }
    }

    #[test]
    fn dedup_to_four_decimals() {
        let p = CircleFitParams {
            cci_min: None,
            ..CircleFitParams::tls()
        };
        let c = [circle(1.0000001, 2.0, 0.3, 10.0), circle(1.0000002, 2.0, 0.3, 11.0)];
        let best = select_best_circle(&c, &[], &p).unwrap();
        assert_eq!(best.score, 11.0);
    }

    #[test]
    fn nms_keeps_strongest() {
        let p = CircleFitParams {
            cci_min: None,
            ..CircleFitParams::tls()
        };
        let c = vec![circle(0.0, 0.0, 0.2, 10.0), circle(0.0, 0.0, 0.25, 50.0)];
        assert_eq!(select_best_circle(&c, &[], &p).unwrap().score, 50.0);
    }

    #[test]
    fn empty_candidates() {
        assert!(select_best_circle(&[], &[], &CircleFitParams::tls()).is_none());
    }
}
