//! Stem detection: stem-layer extraction, two-stage DBSCAN, cluster filtering
//! and per-stem DBH / position estimation.

mod dbscan;
mod filter;
mod gam;

pub use dbscan::{dbscan, DbscanLabels};
pub use filter::{
    best_layer_subset, filter_clusters, layer_bounds, percentile, pca_summary, LayerSubset, PcaSummary,
};
pub use gam::{gam_layer_diameter, CyclicSpline, LayerDiameter, N_BASIS};

use alloc::vec::Vec;

use crate::circlefit::{Circle, CircleFitParams};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::par;
use crate::terrain::RasterDtm;
use crate::voxel::voxel_downsample;

/// Breast height in meters.
pub const BREAST_HEIGHT: f64 = 1.3;

/// Subset enumeration only considers this many layers (highest circle score
/// first).
pub const MAX_SUBSET_LAYERS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StemDetectionParams {
    pub h_min: f64,
    pub h_max: f64,
    pub voxel_size: f64,
    pub eps_2d: f64,
    pub min_pts_2d: usize,
    pub eps_3d: f64,
    pub min_pts_3d: usize,
    /// Minimum points per cluster (`N_min`).
    pub min_cluster_points: usize,
    /// Minimum vertical extent of a cluster (`ΔH_min`).
    pub min_vertical_extent: f64,
    /// Threshold on the 80th intensity percentile; ignored without intensity.
    pub min_intensity: Option<f64>,
    pub n_layers: usize,
    pub first_layer_height: f64,
    pub layer_height: f64,
    pub layer_overlap: f64,
    pub n_sample: usize,
    pub max_diameter_std: f64,
    pub max_center_std: Option<f64>,
    /// Buffer width `b` around the circle outline for the spline fit.
    pub gam_buffer: f64,
    pub max_radius_spread: f64,
    pub circle: CircleFitParams,
    /// Use `√A` instead of `2·√(A/π)` for the polygon diameter.
    pub literal_sqrt_area: bool,
    /// Re-fit circles on full-resolution points near the first fit.
    pub refine_circles: bool,
    /// Minimum share of variance along the first principal axis.
    pub pca_min_explained_variance: Option<f64>,
    /// Maximum angle between the first principal axis and z, in degrees.
    pub pca_max_inclination_deg: Option<f64>,
}

impl Default for StemDetectionParams {
    fn default() -> Self {
        Self::tls()
    }
}

impl StemDetectionParams {
    pub fn tls() -> Self {
        StemDetectionParams {
            h_min: 1.0,
            h_max: 4.0,
            voxel_size: 0.015,
            eps_2d: 0.025,
            min_pts_2d: 90,
            eps_3d: 0.1,
            min_pts_3d: 15,
            min_cluster_points: 300,
            min_vertical_extent: 1.5,
            min_intensity: Some(6000.0),
            n_layers: 15,
            first_layer_height: 1.0,
            layer_height: 0.225,
            layer_overlap: 0.025,
            n_sample: 6,
            max_diameter_std: 0.04,
            max_center_std: None,
            gam_buffer: 0.03,
            max_radius_spread: 0.3,
            circle: CircleFitParams::tls(),
            literal_sqrt_area: false,
            refine_circles: false,
            pca_min_explained_variance: None,
            pca_max_inclination_deg: None,
        }
    }

    pub fn uls() -> Self {
        StemDetectionParams {
            h_max: 5.0,
            eps_2d: 0.07,
            min_pts_2d: 15,
            eps_3d: 0.3,
            min_pts_3d: 1,
            min_cluster_points: 20,
            n_layers: 4,
            layer_height: 1.4,
            layer_overlap: 0.4,
            n_sample: 2,
            max_diameter_std: 0.1,
            circle: CircleFitParams::uls(),
            ..Self::tls()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_max > self.h_min) {
            return Err(Error::param("h_max", "must exceed h_min"));
        }
        if !(self.voxel_size > 0.0) {
            return Err(Error::param("voxel_size", "must be positive"));
        }
        if !(self.eps_2d > 0.0 && self.eps_3d > 0.0) {
            return Err(Error::param("eps_2d/eps_3d", "must be positive"));
        }
        if self.min_pts_2d == 0 || self.min_pts_3d == 0 {
            return Err(Error::param("min_pts_2d/min_pts_3d", "must be at least 1"));
        }
        if !(self.layer_height > 0.0 && self.layer_overlap >= 0.0 && self.layer_overlap < self.layer_height) {
            return Err(Error::param("layer_overlap", "need 0 <= layer_overlap < layer_height"));
        }
        if self.n_sample == 0 || self.n_sample > self.n_layers {
            return Err(Error::param("n_sample", "must lie in [1, n_layers]"));
        }
        if !(self.gam_buffer > 0.0) {
            return Err(Error::param("gam_buffer", "must be positive"));
        }
        self.circle.validate()
    }
}

/// A stem candidate and, once filtered, its per-layer circle fits.
#[derive(Debug, Clone, PartialEq)]
pub struct StemCluster {
    /// Indices into the stem-layer cloud, ascending.
    pub indices: Vec<usize>,
    pub centroid: [f64; 2],
    /// Terrain height at the centroid.
    pub terrain_height: f64,
    /// Stem-layer indices per horizontal layer.
    pub layers: Vec<Vec<usize>>,
    pub circles: Vec<Option<Circle>>,
    /// Layer indices of the subset with the smallest diameter spread.
    pub best_layers: Vec<usize>,
    pub diameter_std: f64,
}

impl StemCluster {
    fn new(layer: &PointCloud, indices: Vec<usize>) -> Self {
        let n = indices.len().max(1) as f64;
        let (sx, sy) = indices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &i| (sx + layer.x()[i], sy + layer.y()[i]));
        StemCluster {
            indices,
            centroid: [sx / n, sy / n],
            terrain_height: 0.0,
            layers: Vec::new(),
            circles: Vec::new(),
            best_layers: Vec::new(),
            diameter_std: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StemDetection {
    pub position_bh: [f64; 2],
    pub dbh: f64,
    /// Mid-height above terrain of each selected layer.
    pub layer_heights: Vec<f64>,
    pub layer_diameters: Vec<f64>,
    pub layer_diameter_valid: Vec<bool>,
    pub cluster: StemCluster,
}

/// Points whose height above the terrain lies in `[h_min, h_max]`,
/// voxel-downsampled at `voxel_size`.
pub fn extract_stem_layer(cloud: &PointCloud, heights: &[f64], params: &StemDetectionParams) -> Result<PointCloud> {
    if heights.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "heights",
            expected: cloud.len(),
            actual: heights.len(),
        });
    }
    let inside: Vec<usize> = (0..cloud.len())
        .filter(|&i| heights[i] >= params.h_min && heights[i] <= params.h_max)
        .collect();
    let (layer, _) = voxel_downsample(&cloud.select(&inside), params.voxel_size)?;
    Ok(layer)
}

/// 2D DBSCAN on xy, then 3D DBSCAN inside each 2D cluster.
///
/// Candidates are ordered by 2D cluster id, then 3D cluster id.
pub fn cluster_stem_candidates(layer: &PointCloud, params: &StemDetectionParams) -> Vec<StemCluster> {
    let xy = layer.points_xy();
    let clusters_2d = dbscan(&xy, params.eps_2d, params.min_pts_2d).members();
    let nested = par::map(&clusters_2d, |members| {
        let pts: Vec<[f64; 3]> = members.iter().map(|&i| layer.point(i)).collect();
        dbscan(&pts, params.eps_3d, params.min_pts_3d)
            .members()
            .into_iter()
            .map(|sub| sub.into_iter().map(|j| members[j]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    });
    nested
        .into_iter()
        .flatten()
        .map(|indices| StemCluster::new(layer, indices))
        .collect()
}

/// Ordinary least-squares line through `(xs, ys)` evaluated at `x0`; the mean
/// of `ys` when all `xs` coincide.
pub fn ols_predict(xs: &[f64], ys: &[f64], x0: f64) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    my + sxy / sxx * (x0 - mx)
}

/// Breast-height position and diameter from per-layer estimates.
///
/// Diameter and both center coordinates are regressed linearly on layer
/// height and predicted at 1.3 m. Returns `(position_bh, dbh)`.
pub fn estimate_dbh(heights: &[f64], diameters: &[f64], centers: &[[f64; 2]]) -> ([f64; 2], f64) {
    let cx: Vec<f64> = centers.iter().map(|c| c[0]).collect();
    let cy: Vec<f64> = centers.iter().map(|c| c[1]).collect();
    (
        [
            ols_predict(heights, &cx, BREAST_HEIGHT),
            ols_predict(heights, &cy, BREAST_HEIGHT),
        ],
        ols_predict(heights, diameters, BREAST_HEIGHT),
    )
}

fn finish_detection(layer: &PointCloud, cluster: StemCluster, params: &StemDetectionParams) -> StemDetection {
    let mut heights = Vec::new();
    let mut diameters = Vec::new();
    let mut valid = Vec::new();
    let mut centers = Vec::new();
    for &l in &cluster.best_layers {
        let circle = cluster.circles[l].expect("selected layers carry circles");
        let pts: Vec<[f64; 2]> = cluster.layers[l].iter().map(|&i| layer.xy(i)).collect();
        let d = gam_layer_diameter(
            &pts,
            &circle,
            params.gam_buffer,
            params.max_radius_spread,
            params.literal_sqrt_area,
        );
        let (lo, hi) = layer_bounds(l, params);
        heights.push((lo + hi) / 2.0);
        diameters.push(d.diameter);
        valid.push(d.valid);
        centers.push(circle.center());
    }
    let (position_bh, dbh) = estimate_dbh(&heights, &diameters, &centers);
    StemDetection {
        position_bh,
        // extrapolated diameters are kept inside the admissible circle range
        dbh: dbh.clamp(params.circle.min_diameter, params.circle.max_diameter),
        layer_heights: heights,
        layer_diameters: diameters,
        layer_diameter_valid: valid,
        cluster,
    }
}

/// Full stem detection on a cloud with its terrain model.
///
/// Detections are ordered by their source candidate (2D then 3D cluster id).
pub fn detect_stems(cloud: &PointCloud, dtm: &RasterDtm, params: &StemDetectionParams) -> Result<Vec<StemDetection>> {
    params.validate()?;
    let heights = dtm.height_above_ground(cloud);
    let layer = extract_stem_layer(cloud, &heights, params)?;
    if layer.is_empty() {
        return Ok(Vec::new());
    }
    let full_layer = if params.refine_circles {
        let inside: Vec<usize> = (0..cloud.len())
            .filter(|&i| heights[i] >= params.h_min && heights[i] <= params.h_max)
            .collect();
        Some(cloud.select(&inside))
    } else {
        None
    };
    let candidates = cluster_stem_candidates(&layer, params);
    log::debug!("{} stem candidates", candidates.len());
    let accepted = filter_clusters(candidates, &layer, dtm, params, full_layer.as_ref());
    log::debug!("{} clusters accepted", accepted.len());
    Ok(par::map(&accepted, |c| finish_detection(&layer, c.clone(), params)))
}
