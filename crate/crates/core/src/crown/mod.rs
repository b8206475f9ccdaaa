//! Crown delineation by seeded region growing with an adaptive search radius.

mod grow;

pub use grow::{grow_regions, GrowthStats};

use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::KdTree;
use crate::stems::{StemDetection, BREAST_HEIGHT};
use crate::terrain::RasterDtm;
use crate::voxel::{upsample_labels, voxel_downsample};
use crate::NON_TREE;

#[derive(Debug, Clone, PartialEq)]
pub struct CrownParams {
    pub voxel_size: f64,
    /// Height of the seed cylinder (`h_seed`).
    pub seed_height: f64,
    /// DBH multiplier for the seed cylinder diameter (`f_seed`).
    pub seed_diameter_factor: f64,
    pub min_seed_diameter: f64,
    /// z is divided by this before growing (`f_z`).
    pub z_scale: f64,
    pub max_radius: f64,
    /// Newly assigned / unassigned ratio below which the radius grows.
    pub min_total_ratio: f64,
    /// Share of trees that grew below which the radius grows.
    pub min_tree_ratio: f64,
    /// Unchanged iterations before the radius is halved (`Δt_↓`).
    pub radius_decrease_interval: usize,
    pub max_iterations: usize,
    /// Cumulative search distance limit for terrain points (`d_terrain`).
    pub max_terrain_distance: f64,
}

impl Default for CrownParams {
    fn default() -> Self {
        CrownParams {
            voxel_size: 0.05,
            seed_height: 0.6,
            seed_diameter_factor: 1.05,
            min_seed_diameter: 0.05,
            z_scale: 2.0,
            max_radius: 0.5,
            min_total_ratio: 0.002,
            min_tree_ratio: 0.3,
            radius_decrease_interval: 10,
            max_iterations: 500,
            max_terrain_distance: 0.8,
        }
    }
}

impl CrownParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) {
            return Err(Error::param("voxel_size", "must be positive"));
        }
        if !(self.z_scale > 0.0) {
            return Err(Error::param("z_scale", "must be positive"));
        }
        if !(self.max_radius >= self.voxel_size) {
            return Err(Error::param("max_radius", "must be at least voxel_size"));
        }
        if !(self.seed_height >= 0.0 && self.seed_diameter_factor > 0.0 && self.min_seed_diameter >= 0.0) {
            return Err(Error::param("seed", "cylinder dimensions must be non-negative"));
        }
        Ok(())
    }

    /// Seed cylinder diameter for a stem of the given DBH.
    pub fn seed_diameter(&self, dbh: f64) -> f64 {
        (dbh * self.seed_diameter_factor).max(self.min_seed_diameter)
    }
}

/// Per-point tree ids; [`NON_TREE`] marks points outside every tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceLabeling {
    pub labels: Vec<i64>,
    pub tree_count: usize,
    /// Index of the source stem of each tree id.
    pub stem_of_tree: Vec<usize>,
}

impl InstanceLabeling {
    pub fn empty(n: usize) -> Self {
        InstanceLabeling {
            labels: vec![NON_TREE; n],
            tree_count: 0,
            stem_of_tree: Vec::new(),
        }
    }
}

/// Seed points of each stem: points inside a vertical cylinder around the
/// breast-height position with diameter `max(dbh·f_seed, d_min_seed)`,
/// spanning `1.3 ± h_seed/2` above the terrain at the stem position.
///
/// A point inside several cylinders goes to the stem with the nearest axis
/// (lowest stem index on ties). Returned lists are ascending and may be
/// empty.
pub fn select_seeds(cloud: &PointCloud, dtm: &RasterDtm, stems: &[StemDetection], params: &CrownParams) -> Vec<Vec<usize>> {
    let tree = KdTree::new(&cloud.points_xy());
    let mut owner: Vec<Option<(f64, usize)>> = vec![None; cloud.len()];
    for (s, stem) in stems.iter().enumerate() {
        let [px, py] = stem.position_bh;
        let ground = dtm.terrain_height(px, py);
        let lo = ground + BREAST_HEIGHT - params.seed_height / 2.0;
        let hi = ground + BREAST_HEIGHT + params.seed_height / 2.0;
        let radius = params.seed_diameter(stem.dbh) / 2.0;
        tree.for_each_within(&[px, py], radius, |i, d2| {
            let z = cloud.z()[i];
            if z < lo || z > hi {
                return;
            }
            if owner[i].is_none_or(|(best, _)| d2 < best) {
                owner[i] = Some((d2, s));
            }
        });
    }
    let mut seeds = vec![Vec::new(); stems.len()];
    for (i, o) in owner.iter().enumerate() {
        if let Some((_, s)) = o {
            seeds[*s].push(i);
        }
    }
    seeds
}

/// Crown delineation on the full cloud.
///
/// The cloud is voxel-downsampled, seeds are selected on the voxel
/// representatives, regions are grown, and labels are propagated back to all
/// points. `ground_like` flags (one per input point) mark points that may
/// only join a tree within `max_terrain_distance` of its seeds. Stems
/// without any seed point are dropped with a warning; tree ids are assigned
/// to the remaining stems in order.
pub fn delineate_crowns(
    cloud: &PointCloud,
    dtm: &RasterDtm,
    stems: &[StemDetection],
    ground_like: &[bool],
    params: &CrownParams,
) -> Result<InstanceLabeling> {
    params.validate()?;
    if ground_like.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "ground_like",
            expected: cloud.len(),
            actual: ground_like.len(),
        });
    }
    if stems.is_empty() || cloud.is_empty() {
        return Ok(InstanceLabeling::empty(cloud.len()));
    }
    let (ds, map) = voxel_downsample(cloud, params.voxel_size)?;
    let ds_ground: Vec<bool> = map.representative_of_voxel.iter().map(|&i| ground_like[i]).collect();

    let mut seeds = Vec::new();
    let mut stem_of_tree = Vec::new();
    for (s, list) in select_seeds(&ds, dtm, stems, params).into_iter().enumerate() {
        if list.is_empty() {
            log::warn!("stem {s} has no seed points and is dropped");
            continue;
        }
        seeds.push(list);
        stem_of_tree.push(s);
    }
    let (voxel_labels, stats) = grow_regions(&ds.points(), &seeds, &ds_ground, params)?;
    log::debug!(
        "region growing: {} iterations, final radius {}",
        stats.iterations,
        stats.final_radius
    );
    Ok(InstanceLabeling {
        labels: upsample_labels(&map, &voxel_labels)?,
        tree_count: seeds.len(),
        stem_of_tree,
    })
}
