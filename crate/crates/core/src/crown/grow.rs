use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use super::CrownParams;
use crate::error::{Error, Result};
use crate::par;
use crate::spatial::KdTree;
use crate::NON_TREE;

/// Summary of one region-growing run.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthStats {
    pub iterations: usize,
    pub final_radius: f64,
    /// Search radius used in each iteration.
    pub radii: Vec<f64>,
}

/// Index over the points still unassigned when it was built.
struct Pending {
    tree: KdTree<3>,
    ids: Vec<usize>,
    claimed_since_build: usize,
}

impl Pending {
    fn build(points: &[[f64; 3]], labels: &[i64]) -> Self {
        let ids: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == NON_TREE).collect();
        let pts: Vec<[f64; 3]> = ids.iter().map(|&i| points[i]).collect();
        Pending {
            tree: KdTree::new(&pts),
            ids,
            claimed_since_build: 0,
        }
    }
}

#[derive(Clone, Copy)]
struct Claim {
    point: usize,
    dist: f64,
    cumulative: f64,
}

/// Seeded region growing.
///
/// `points` are in original coordinates; z is divided by `z_scale` once and
/// every radius and distance below lives in that scaled space. `seeds[t]`
/// lists the initial points of tree `t`; `ground_like` points join a tree
/// only while their cumulative hop distance from an initial seed stays within
/// `max_terrain_distance`.
///
/// Each iteration, every seed of every tree claims unassigned points within
/// the current radius. A point claimed by several seeds goes to the nearest
/// one (lowest tree id on exact ties) and is never reassigned. Afterwards:
///
/// - if `new / unassigned_before < min_total_ratio` or
///   `growing_trees / trees < min_tree_ratio`, the radius doubles (capped at
///   `max_radius`) and every assigned point becomes a seed; when already at
///   the cap and nothing was assigned, growing stops;
/// - otherwise, after `radius_decrease_interval` iterations without a change
///   the radius is halved (never below `voxel_size`);
/// - without an increase the newly assigned points are the next seeds.
///
/// Growing also stops when no seeds remain, nothing is left to assign, or
/// after `max_iterations`.
pub fn grow_regions(
    points: &[[f64; 3]],
    seeds: &[Vec<usize>],
    ground_like: &[bool],
    params: &CrownParams,
) -> Result<(Vec<i64>, GrowthStats)> {
    params.validate()?;
    let n = points.len();
    if ground_like.len() != n {
        return Err(Error::LengthMismatch {
            what: "ground_like",
            expected: n,
            actual: ground_like.len(),
        });
    }
    let scaled: Vec<[f64; 3]> = points.iter().map(|p| [p[0], p[1], p[2] / params.z_scale]).collect();
    let mut labels = vec![NON_TREE; n];
    let mut cumulative = vec![0.0f64; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    let mut current: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for (t, list) in seeds.iter().enumerate() {
        for &i in list {
            if i >= n {
                return Err(Error::param("seeds", "seed index out of range"));
            }
            if labels[i] == NON_TREE {
                labels[i] = t as i64;
                members[t].push(i);
                current[t].push(i);
            }
        }
    }
    let mut stats = GrowthStats {
        iterations: 0,
        final_radius: params.voxel_size,
        radii: Vec::new(),
    };
    if seeds.is_empty() {
        return Ok((labels, stats));
    }

    let mut unassigned = labels.iter().filter(|&&l| l == NON_TREE).count();
    let mut pending = Pending::build(&scaled, &labels);
    let mut radius = params.voxel_size;
    let mut unchanged = 0usize;
    let n_trees = seeds.len() as f64;

    while stats.iterations < params.max_iterations {
        if unassigned == 0 || current.iter().all(|s| s.is_empty()) {
            break;
        }
        if pending.claimed_since_build * 4 > pending.ids.len() {
            pending = Pending::build(&scaled, &labels);
        }
        stats.iterations += 1;
        stats.radii.push(radius);

        // per-tree proposals against the frozen state of this iteration
        let proposals: Vec<Vec<Claim>> = par::map(&current, |seed_list| {
            let mut claims = Vec::new();
            for &s in seed_list {
                pending.tree.for_each_within(&scaled[s], radius, |k, d2| {
                    let q = pending.ids[k];
                    if labels[q] != NON_TREE {
                        return;
                    }
                    let dist = d2.sqrt();
                    let cum = cumulative[s] + dist;
                    if ground_like[q] && cum > params.max_terrain_distance {
                        return;
                    }
                    claims.push(Claim {
                        point: q,
                        dist,
                        cumulative: cum,
                    });
                });
            }
            claims.sort_by(|a, b| {
                a.point
                    .cmp(&b.point)
                    .then(a.dist.partial_cmp(&b.dist).unwrap_or(Ordering::Equal))
                    .then(a.cumulative.partial_cmp(&b.cumulative).unwrap_or(Ordering::Equal))
            });
            claims.dedup_by_key(|c| c.point);
            claims
        });

        // merge in tree order; strict comparison keeps the lower id on ties
        let mut best: Vec<(usize, Claim)> = Vec::new();
        {
            let mut slot: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
            for (t, claims) in proposals.iter().enumerate() {
                for c in claims {
                    match slot.get(&c.point) {
                        Some(&k) => {
                            if c.dist < best[k].1.dist {
                                best[k] = (t, *c);
                            }
                        }
                        None => {
                            slot.insert(c.point, best.len());
                            best.push((t, *c));
                        }
                    }
                }
            }
        }
        let mut fresh: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
        for (t, c) in &best {
            labels[c.point] = *t as i64;
            cumulative[c.point] = c.cumulative;
            fresh[*t].push(c.point);
        }
        for (t, f) in fresh.iter_mut().enumerate() {
            f.sort_unstable();
            members[t].extend_from_slice(f);
        }
        let n_new = best.len();
        pending.claimed_since_build += n_new;
        let total_ratio = n_new as f64 / unassigned as f64;
        let tree_ratio = fresh.iter().filter(|f| !f.is_empty()).count() as f64 / n_trees;
        unassigned -= n_new;

        let wants_increase = total_ratio < params.min_total_ratio || tree_ratio < params.min_tree_ratio;
        let mut increased = false;
        if wants_increase {
            if radius >= params.max_radius {
                if n_new == 0 {
                    break;
                }
                unchanged += 1;
            } else {
                radius = (radius * 2.0).min(params.max_radius);
                increased = true;
                unchanged = 0;
            }
        } else {
            unchanged += 1;
            if unchanged >= params.radius_decrease_interval && radius > params.voxel_size {
                radius = (radius / 2.0).max(params.voxel_size);
                unchanged = 0;
            }
        }
        current = if increased {
            members.iter().map(|m| {
                let mut m = m.clone();
                m.sort_unstable();
                m
            }).collect()
        } else {
            fresh
        };
    }
    stats.final_radius = radius;
    Ok((labels, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, x0: f64, step: f64) -> Vec<[f64; 3]> {
        (0..n).map(|i| [x0 + i as f64 * step, 0.0, 0.0]).collect()
    }

    #[test]
    fn two_separate_lines() {
        let mut pts = line(20, 0.0, 0.05);
        pts.extend(line(20, 5.0, 0.05));
        let seeds = vec![vec![0], vec![20]];
        let (labels, _) = grow_regions(&pts, &seeds, &[false; 40], &CrownParams::default()).unwrap();
        assert!(labels[..20].iter().all(|&l| l == 0));
        assert!(labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn contested_point_goes_to_nearest_seed() {
        // point 2 lies 0.04 from seed 0 and 0.03 from seed 1
        let pts = vec![[0.0, 0.0, 0.0], [0.07, 0.0, 0.0], [0.04, 0.0, 0.0]];
        let seeds = vec![vec![0], vec![1]];
        let (labels, _) = grow_regions(&pts, &seeds, &[false; 3], &CrownParams::default()).unwrap();
        assert_eq!(labels, vec![0, 1, 1]);
        // exact tie resolves to the lower tree id
        let pts = vec![[0.0, 0.0, 0.0], [0.08, 0.0, 0.0], [0.04, 0.0, 0.0]];
        let (labels, _) = grow_regions(&pts, &seeds, &[false; 3], &CrownParams::default()).unwrap();
        assert_eq!(labels, vec![0, 1, 0]);
    }

    #[test]
    fn terrain_stops_at_cumulative_distance() {
        let pts = line(40, 0.0, 0.05);
        let (labels, _) = grow_regions(&pts, &[vec![0]], &[true; 40], &CrownParams::default()).unwrap();
        // hops of 0.05 reach 0.8 after 16 steps; larger radii cover the same chain
        let assigned = labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(assigned, 17);
    }

    #[test]
    fn radius_doubles_when_nothing_grows() {
        let pts = vec![[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]];
        let (labels, stats) = grow_regions(&pts, &[vec![0]], &[false; 2], &CrownParams::default()).unwrap();
        assert_eq!(labels, vec![0, 0]);
        assert_eq!(&stats.radii[..3], &[0.05, 0.1, 0.2]);
        assert!(stats.radii.iter().all(|&r| (0.05..=0.5).contains(&r)));
    }

    #[test]
    fn z_is_compressed() {
        // 0.08 apart vertically, 0.04 after scaling by 2
        let pts = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.08]];
        let (_, stats) = grow_regions(&pts, &[vec![0]], &[false; 2], &CrownParams::default()).unwrap();
        assert_eq!(stats.radii, vec![0.05]);
    }
}
