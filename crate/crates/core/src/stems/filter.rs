use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use super::{StemCluster, StemDetectionParams, MAX_SUBSET_LAYERS};
use crate::circlefit::{fit_circle, Circle};
use crate::cloud::PointCloud;
use crate::linalg::sym_eigen3;
use crate::par;
use crate::spatial::KdTree;
use crate::terrain::RasterDtm;

/// Height interval `[lo, hi]` above terrain of layer `i`.
pub fn layer_bounds(i: usize, params: &StemDetectionParams) -> (f64, f64) {
    let lo = params.first_layer_height + i as f64 * (params.layer_height - params.layer_overlap);
    (lo, lo + params.layer_height)
}

/// Percentile `q ∈ [0, 100]` with linear interpolation between order
/// statistics; `None` for an empty slice.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaSummary {
    /// Share of total variance along the first principal axis.
    pub explained_variance: f64,
    /// Angle between the first principal axis and the z axis, degrees.
    pub inclination_deg: f64,
}

pub fn pca_summary(points: &[[f64; 3]]) -> Option<PcaSummary> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for d in 0..3 {
            mean[d] += p[d] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    let (vals, vecs) = sym_eigen3(cov);
    let total = vals.iter().map(|v| v.max(0.0)).sum::<f64>();
    if !(total > 0.0) {
        return None;
    }
    Some(PcaSummary {
        explained_variance: vals[0].max(0.0) / total,
        inclination_deg: vecs[0][2].abs().min(1.0).acos().to_degrees(),
    })
}

fn population_std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Result of [`best_layer_subset`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSubset {
    /// Positions into the slice passed in, ascending.
    pub members: Vec<usize>,
    /// Population standard deviation of the member diameters.
    pub std: f64,
    /// Number of subsets examined.
    pub enumerated: usize,
}

/// Exhaustive search over all `C(n, size)` subsets for the one whose
/// diameters have the smallest population standard deviation. Subsets are
/// visited in lexicographic order and the first minimum wins.
pub fn best_layer_subset(diameters: &[f64], size: usize) -> Option<LayerSubset> {
    let n = diameters.len();
    if size == 0 || size > n {
        return None;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut enumerated = 0;
    loop {
        enumerated += 1;
        let s = population_std(idx.iter().map(|&i| diameters[i]));
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, idx.clone()));
        }
        // next combination
        let mut k = size;
        while k > 0 && idx[k - 1] == n - size + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.map(|(std, members)| LayerSubset {
        members,
        std,
        enumerated,
    })
}

fn passes_basic_rules(c: &StemCluster, layer: &PointCloud, params: &StemDetectionParams) -> bool {
    if c.indices.len() < params.min_cluster_points {
        return false;
    }
    let (lo, hi) = c
        .indices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(layer.z()[i]), hi.max(layer.z()[i]))
        });
    if !(hi - lo >= params.min_vertical_extent) {
        return false;
    }
    if let (Some(min), Some(intensity)) = (params.min_intensity, layer.intensity()) {
        let vals: Vec<f64> = c.indices.iter().map(|&i| intensity[i]).collect();
        if !percentile(&vals, 80.0).is_some_and(|p| p >= min) {
            return false;
        }
    }
    if params.pca_min_explained_variance.is_some() || params.pca_max_inclination_deg.is_some() {
        let pts: Vec<[f64; 3]> = c.indices.iter().map(|&i| layer.point(i)).collect();
        let Some(pca) = pca_summary(&pts) else {
            return false;
        };
        if params.pca_min_explained_variance.is_some_and(|t| pca.explained_variance < t) {
            return false;
        }
        if params.pca_max_inclination_deg.is_some_and(|t| pca.inclination_deg > t) {
            return false;
        }
    }
    true
}

struct FullLayer<'a> {
    cloud: &'a PointCloud,
    tree: KdTree<2>,
}

fn refine(circle: Circle, lo: f64, hi: f64, ground: f64, full: &FullLayer, params: &StemDetectionParams) -> Option<Circle> {
    let b = params.gam_buffer;
    let pts: Vec<[f64; 2]> = full
        .tree
        .within(&[circle.a, circle.b], circle.r + b)
        .into_iter()
        .filter(|&i| {
            let h = full.cloud.z()[i] - ground;
            let [x, y] = full.cloud.xy(i);
            let d = ((x - circle.a).powi(2) + (y - circle.b).powi(2)).sqrt();
            h >= lo && h <= hi && (d - circle.r).abs() <= b
        })
        .map(|i| full.cloud.xy(i))
        .collect();
    fit_circle(&pts, &params.circle).ok().flatten()
}

fn evaluate_layers(
    mut c: StemCluster,
    layer: &PointCloud,
    dtm: &RasterDtm,
    params: &StemDetectionParams,
    full: Option<&FullLayer>,
) -> Option<StemCluster> {
    c.terrain_height = dtm.terrain_height(c.centroid[0], c.centroid[1]);
    c.layers = (0..params.n_layers)
        .map(|l| {
            let (lo, hi) = layer_bounds(l, params);
            c.indices
                .iter()
                .copied()
                .filter(|&i| {
                    let h = layer.z()[i] - c.terrain_height;
                    h >= lo && h <= hi
                })
                .collect()
        })
        .collect();
    c.circles = c
        .layers
        .iter()
        .enumerate()
        .map(|(l, members)| {
            let pts: Vec<[f64; 2]> = members.iter().map(|&i| layer.xy(i)).collect();
            let circle = fit_circle(&pts, &params.circle).ok().flatten()?;
            match full {
                Some(full) => {
                    let (lo, hi) = layer_bounds(l, params);
                    refine(circle, lo, hi, c.terrain_height, full, params).or(Some(circle))
                }
                None => Some(circle),
            }
        })
        .collect();

    let mut fitted: Vec<usize> = (0..params.n_layers).filter(|&l| c.circles[l].is_some()).collect();
    if fitted.len() < params.n_sample {
        return None;
    }
    if fitted.len() > MAX_SUBSET_LAYERS {
        fitted.sort_by(|&a, &b| {
            let (sa, sb) = (c.circles[a].unwrap().score, c.circles[b].unwrap().score);
            sb.partial_cmp(&sa).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        fitted.truncate(MAX_SUBSET_LAYERS);
        fitted.sort_unstable();
    }
    let diameters: Vec<f64> = fitted.iter().map(|&l| c.circles[l].unwrap().diameter()).collect();
    let best = best_layer_subset(&diameters, params.n_sample)?;
    if !(best.std <= params.max_diameter_std) {
        return None;
    }
    c.best_layers = best.members.iter().map(|&m| fitted[m]).collect();
    c.diameter_std = best.std;
    if let Some(max_c) = params.max_center_std {
        let cs: Vec<Circle> = c.best_layers.iter().map(|&l| c.circles[l].unwrap()).collect();
        let spread = (population_std(cs.iter().map(|k| k.a)).powi(2) + population_std(cs.iter().map(|k| k.b)).powi(2)).sqrt();
        if !(spread <= max_c) {
            return None;
        }
    }
    Some(c)
}

/// Applies the cluster filter rules and returns the accepted clusters with
/// their layer circles filled in, in input order.
///
/// 1. at least `min_cluster_points` points;
/// 2. vertical extent of at least `min_vertical_extent`;
/// 3. with intensity present and `min_intensity` set, the 80th intensity
///    percentile reaches the threshold;
/// 4. `n_layers` layers are cut at heights above the terrain under the
///    cluster centroid and a circle is fitted to each; at least `n_sample`
///    fits must succeed and the best `n_sample`-subset must have a diameter
///    standard deviation of at most `max_diameter_std`. With
///    `max_center_std` set, the center spread `√(var(a) + var(b))` of that
///    subset is bounded too.
///
/// The optional PCA rules run between 3 and 4. With `refine_circles` and a
/// full-resolution stem layer, each circle is re-fitted on the full-resolution
/// points of its layer within `gam_buffer` of the first fit.
pub fn filter_clusters(
    candidates: Vec<StemCluster>,
    layer: &PointCloud,
    dtm: &RasterDtm,
    params: &StemDetectionParams,
    full_layer: Option<&PointCloud>,
) -> Vec<StemCluster> {
    let full = full_layer.filter(|_| params.refine_circles).map(|cloud| FullLayer {
        cloud,
        tree: KdTree::new(&cloud.points_xy()),
    });
    par::map(&candidates, |c| {
        if !passes_basic_rules(c, layer, params) {
            return None;
        }
        evaluate_layers(c.clone(), layer, dtm, params, full.as_ref())
    })
    .into_iter()
    .flatten()
    .collect()
}
