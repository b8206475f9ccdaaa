//! Voxel-grid downsampling and label upsampling.
//!
//! The grid is anchored at `floor(min / voxel_size) * voxel_size` of the
//! cloud's bounding box. Each occupied voxel keeps one real input point: the
//! point closest to the voxel centroid, ties resolved by the lexicographically
//! smallest `(x, y, z)`. Output points are ordered by voxel key, so the result
//! does not depend on input order.

use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Integer voxel coordinates relative to the grid origin.
pub type VoxelKey = [i64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMap {
    pub voxel_size: f64,
    pub origin: [f64; 3],
    /// For each input point, the index of its voxel (= its representative
    /// in the downsampled cloud).
    pub voxel_of_point: Vec<u32>,
    /// For each voxel, the input index of the retained point.
    pub representative_of_voxel: Vec<usize>,
    /// Integer key of each voxel, ascending.
    pub keys: Vec<VoxelKey>,
}

impl VoxelMap {
    pub fn n_points(&self) -> usize {
        self.voxel_of_point.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.representative_of_voxel.len()
    }
}

fn lex(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a[0].partial_cmp(&b[0])
        .unwrap_or(Ordering::Equal)
        .then(a[1].partial_cmp(&b[1]).unwrap_or(Ordering::Equal))
        .then(a[2].partial_cmp(&b[2]).unwrap_or(Ordering::Equal))
}

pub fn voxel_key(p: &[f64; 3], voxel_size: f64) -> [i64; 3] {
    [
        (p[0] / voxel_size).floor() as i64,
        (p[1] / voxel_size).floor() as i64,
        (p[2] / voxel_size).floor() as i64,
    ]
}

pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<(PointCloud, VoxelMap)> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::param("voxel_size", "must be positive and finite"));
    }
    let n = cloud.len();
    let Some((lo, _)) = cloud.bounds() else {
        return Ok((
            cloud.select(&[]),
            VoxelMap {
                voxel_size,
                origin: [0.0; 3],
                voxel_of_point: Vec::new(),
                representative_of_voxel: Vec::new(),
                keys: Vec::new(),
            },
        ));
    };
    let base = voxel_key(&lo, voxel_size);
    let origin = [
        base[0] as f64 * voxel_size,
        base[1] as f64 * voxel_size,
        base[2] as f64 * voxel_size,
    ];

    let keyed: Vec<(VoxelKey, [f64; 3], usize)> = (0..n)
        .map(|i| {
            let p = cloud.point(i);
            let k = voxel_key(&p, voxel_size);
            ([k[0] - base[0], k[1] - base[1], k[2] - base[2]], p, i)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // canonical order: key, then coordinates, then input index
    order.sort_unstable_by(|&a, &b| {
        let (ka, pa, ia) = &keyed[a];
        let (kb, pb, ib) = &keyed[b];
        ka.cmp(kb).then(lex(pa, pb)).then(ia.cmp(ib))
    });

    let mut voxel_of_point = alloc::vec![0u32; n];
    let mut reps = Vec::new();
    let mut keys = Vec::new();
    let mut start = 0;
    while start < n {
        let key = keyed[order[start]].0;
        let mut end = start + 1;
        while end < n && keyed[order[end]].0 == key {
            end += 1;
        }
        let group = &order[start..end];
        let m = group.len() as f64;
        let mut c = [0.0; 3];
        for &i in group {
            for d in 0..3 {
                c[d] += keyed[i].1[d];
            }
        }
        for v in c.iter_mut() {
            *v /= m;
        }
        // first minimum in canonical order = lexicographic tie-break
        let mut best = group[0];
        let mut best_d = f64::INFINITY;
        for &i in group {
            let p = &keyed[i].1;
            let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let vid = reps.len() as u32;
        for &i in group {
            voxel_of_point[i] = vid;
        }
        reps.push(best);
        keys.push(key);
        start = end;
    }

    let down = cloud.select(&reps);
    Ok((
        down,
        VoxelMap {
            voxel_size,
            origin,
            voxel_of_point,
            representative_of_voxel: reps,
            keys,
        },
    ))
}

/// Propagates one label per voxel to every original point.
pub fn upsample_labels<T: Copy>(map: &VoxelMap, voxel_labels: &[T]) -> Result<Vec<T>> {
    if voxel_labels.len() != map.n_voxels() {
        return Err(Error::LengthMismatch {
            what: "voxel labels",
            expected: map.n_voxels(),
            actual: voxel_labels.len(),
        });
    }
    Ok(map
        .voxel_of_point
        .iter()
        .map(|&v| voxel_labels[v as usize])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cube() -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        PointCloud::from_points(&pts).unwrap()
    }

    #[test]
    fn coarse_voxel_keeps_one() {
        let (d, m) = voxel_downsample(&cube(), 10.0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(m.voxel_of_point, vec![0; 8]);
    }

    #[test]
    fn fine_voxel_keeps_all() {
        let c = cube();
        let (d, m) = voxel_downsample(&c, 0.5).unwrap();
        assert_eq!(d.len(), 8);
        let labels: Vec<i64> = (0..8).collect();
        let up = upsample_labels(&m, &labels).unwrap();
        // bijective: every point is its own representative
        for (i, &l) in up.iter().enumerate() {
            assert_eq!(m.representative_of_voxel[l as usize], i);
        }
    }

    #[test]
    fn single_voxel_label_broadcast() {
        let c = PointCloud::from_points(&[[0.1, 0.1, 0.1]; 5]).unwrap();
        let (_, m) = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(upsample_labels(&m, &[3]).unwrap(), vec![3; 5]);
    }

    #[test]
    fn representative_nearest_centroid() {
        let c = PointCloud::from_points(&[[0.0, 0.0, 0.0], [0.4, 0.4, 0.4], [0.9, 0.9, 0.9]]).unwrap();
        let (d, _) = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(d.point(0), [0.4, 0.4, 0.4]);
    }

    #[test]
    fn errors() {
        assert!(voxel_downsample(&cube(), 0.0).is_err());
        assert!(voxel_downsample(&cube(), -1.0).is_err());
        let (d, m) = voxel_downsample(&PointCloud::default(), 1.0).unwrap();
        assert!(d.is_empty() && m.n_voxels() == 0);
        let (_, m) = voxel_downsample(&cube(), 0.5).unwrap();
        assert!(upsample_labels(&m, &[1, 2]).is_err());
    }
}
