use alloc::vec::Vec;

use num_traits::Float;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::par;
use crate::spatial::KdTree;
use crate::voxel::voxel_downsample;

/// Planar distance below which a terrain point is treated as coincident with
/// a grid node.
const COINCIDENT: f64 = 1e-9;

/// Relative slack under which two neighbor distances count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DtmParams {
    /// Grid node spacing in meters.
    pub resolution: f64,
    /// Number of nearest terrain points per node.
    pub k: usize,
    /// Inverse distance weighting power.
    pub power: f64,
    /// Terrain points are voxel-downsampled at this size before interpolation.
    pub voxel_size: f64,
}

impl Default for DtmParams {
    fn default() -> Self {
        DtmParams {
            resolution: 0.25,
            k: 400,
            power: 1.0,
            voxel_size: 0.05,
        }
    }
}

impl DtmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::param("resolution", "must be positive"));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if !(self.power >= 0.0) {
            return Err(Error::param("power", "must be non-negative"));
        }
        if !(self.voxel_size > 0.0) {
            return Err(Error::param("voxel_size", "must be positive"));
        }
        Ok(())
    }
}

/// Regular grid of terrain heights.
///
/// Node `(col, row)` sits at `origin + (col, row) * resolution`; heights are
/// stored row-major with rows running along +y.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterDtm {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub ncols: usize,
    pub nrows: usize,
    pub heights: Vec<f64>,
}

impl RasterDtm {
    #[inline]
    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.ncols + col]
    }

    pub fn node_xy(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + col as f64 * self.resolution,
            self.origin[1] + row as f64 * self.resolution,
        ]
    }

    /// Bilinear terrain height at `(x, y)`; positions outside the grid are
    /// clamped onto its boundary.
    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin[0]) / self.resolution).clamp(0.0, (self.ncols - 1) as f64);
        let fy = ((y - self.origin[1]) / self.resolution).clamp(0.0, (self.nrows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.ncols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.nrows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.ncols - 1);
        let r1 = (r0 + 1).min(self.nrows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let bottom = self.node(c0, r0) * (1.0 - tx) + self.node(c1, r0) * tx;
        let top = self.node(c0, r1) * (1.0 - tx) + self.node(c1, r1) * tx;
        bottom * (1.0 - ty) + top * ty
    }

    /// `z` minus the interpolated terrain height, per point.
    pub fn height_above_ground(&self, cloud: &PointCloud) -> Vec<f64> {
        (0..cloud.len())
            .map(|i| cloud.z()[i] - self.terrain_height(cloud.x()[i], cloud.y()[i]))
            .collect()
    }
}

/// Inverse-distance-weighted mean of neighbor heights.
///
/// `neighbors` holds `(planar_distance, z)` pairs sorted by distance. A
/// neighbor closer than 1e-9 m short-circuits to its own height.
pub fn idw_estimate(neighbors: &[(f64, f64)], power: f64) -> f64 {
    if let Some(&(_, z)) = neighbors.iter().find(|(d, _)| *d < COINCIDENT) {
        return z;
    }
    let mut wsum = 0.0;
    let mut zsum = 0.0;
    for &(d, z) in neighbors {
        let w = 1.0 / d.powf(power);
        wsum += w;
        zsum += w * z;
    }
    zsum / wsum
}

/// The `k` nearest points plus any tied with the k-th distance, as sorted
/// `(distance, z)` pairs. Keeping whole distance shells makes the set
/// independent of input order and symmetric on regular layouts.
fn neighborhood(tree: &KdTree<2>, xy: &[[f64; 2]], terrain: &[[f64; 3]], q: [f64; 2], k: usize) -> Vec<(f64, f64)> {
    let nn = tree.nearest_k(&q, k);
    let d2 = |i: usize| (xy[i][0] - q[0]).powi(2) + (xy[i][1] - q[1]).powi(2);
    let Some(&(last, dk)) = nn.last() else {
        return Vec::new();
    };
    // distances equal up to rounding count as ties
    let cut = d2(last) * (1.0 + TIE_TOLERANCE);
    let mut out: Vec<(f64, f64, usize)> = Vec::with_capacity(nn.len());
    tree.for_each_within(&q, dk * (1.0 + TIE_TOLERANCE), |i, _| {
        let d = d2(i);
        if d <= cut {
            out.push((d.sqrt(), terrain[i][2], i));
        }
    });
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal).then(a.2.cmp(&b.2)));
    out.into_iter().map(|(d, z, _)| (d, z)).collect()
}

/// Interpolates a grid covering `[min, max]` from the given terrain points
/// without any downsampling.
pub fn interpolate_grid(
    terrain: &[[f64; 3]],
    min: [f64; 2],
    max: [f64; 2],
    params: &DtmParams,
) -> Result<RasterDtm> {
    params.validate()?;
    if terrain.is_empty() {
        return Err(Error::param("terrain", "at least one terrain point is required"));
    }
    let res = params.resolution;
    let count = |lo: f64, hi: f64| {
        let mut n = ((hi - lo) / res).floor() as usize + 1;
        if lo + (n - 1) as f64 * res < hi {
            n += 1;
        }
        n
    };
    let ncols = count(min[0], max[0]);
    let nrows = count(min[1], max[1]);
    let xy: Vec<[f64; 2]> = terrain.iter().map(|p| [p[0], p[1]]).collect();
    let tree = KdTree::new(&xy);
    let k = params.k.min(terrain.len());
    let heights = par::map_range(ncols * nrows, |id| {
        let q = [
            min[0] + (id % ncols) as f64 * res,
            min[1] + (id / ncols) as f64 * res,
        ];
        idw_estimate(&neighborhood(&tree, &xy, terrain, q, k), params.power)
    });
    Ok(RasterDtm {
        origin: min,
        resolution: res,
        ncols,
        nrows,
        heights,
    })
}

/// Builds the terrain raster from classified terrain points.
///
/// The grid spans the xy bounding box of `terrain`. Points are first
/// voxel-downsampled at `params.voxel_size`; each node height is the IDW mean
/// of the `k` nearest remaining points (all of them when fewer exist, plus
/// any tied with the k-th distance).
pub fn rasterize_dtm(terrain: &PointCloud, params: &DtmParams) -> Result<RasterDtm> {
    params.validate()?;
    let Some((lo, hi)) = terrain.bounds() else {
        return Err(Error::param("terrain", "at least one terrain point is required"));
    };
    let (down, _) = voxel_downsample(terrain, params.voxel_size)?;
    interpolate_grid(&down.points(), [lo[0], lo[1]], [hi[0], hi[1]], params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_point() {
        let c = PointCloud::from_points(&[[3.0, 4.0, 2.0]]).unwrap();
        let d = rasterize_dtm(&c, &DtmParams::default()).unwrap();
        assert_eq!((d.ncols, d.nrows), (1, 1));
        assert_eq!(d.heights, vec![2.0]);
        assert_eq!(d.terrain_height(100.0, -5.0), 2.0);
    }

    #[test]
    fn two_neighbors_direct() {
        // distance 1 -> z 0, distance 3 -> z 4: (0*1 + 4/3)/(1 + 1/3) = 1
        let h = idw_estimate(&[(1.0, 0.0), (3.0, 4.0)], 1.0);
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_power_is_mean() {
        let h = idw_estimate(&[(1.0, 1.0), (2.0, 2.0), (5.0, 6.0)], 0.0);
        assert!((h - 3.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_node_takes_point_height() {
        let pts = [[0.0, 0.0, 7.0], [0.25, 0.0, 1.0], [0.0, 0.25, 1.0]];
        let d = interpolate_grid(&pts, [0.0, 0.0], [0.25, 0.25], &DtmParams::default()).unwrap();
        assert_eq!(d.node(0, 0), 7.0);
    }

    #[test]
    fn bilinear_exact_at_nodes_and_center() {
        let d = RasterDtm {
            origin: [0.0, 0.0],
            resolution: 1.0,
            ncols: 2,
            nrows: 2,
            heights: vec![0.0, 0.0, 4.0, 4.0],
        };
        let c = PointCloud::from_points(&[[0.5, 0.5, 2.0], [0.0, 1.0, 10.0]]).unwrap();
        let h = d.height_above_ground(&c);
        assert!(h[0].abs() < 1e-12);
        assert!((h[1] - 6.0).abs() < 1e-12);
        // out of extent clamps to the boundary
        assert_eq!(d.terrain_height(-3.0, 9.0), 4.0);
    }

    #[test]
    fn node_height_on_grid() {
        let d = RasterDtm {
            origin: [10.0, 20.0],
            resolution: 0.5,
            ncols: 3,
            nrows: 3,
            heights: vec![0.0, 1.0, 2.0, 3.0, 3.0, 3.0, 1.0, 1.0, 1.0],
        };
        let c = PointCloud::from_points(&[[10.5, 20.5, 10.0]]).unwrap();
        assert!((d.height_above_ground(&c)[0] - 7.0).abs() < 1e-12);
    }
}
