use std::collections::BinaryHeap;
use std::f64::consts::PI;

use forestseg_core::crown::{delineate_crowns, grow_regions, select_seeds, CrownParams};
use forestseg_core::stems::{StemCluster, StemDetection};
use forestseg_core::terrain::RasterDtm;
use forestseg_core::{PointCloud, NON_TREE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat() -> RasterDtm {
    RasterDtm {
        origin: [0.0, 0.0],
        resolution: 1.0,
        ncols: 1,
        nrows: 1,
        heights: vec![0.0],
    }
}

fn detection(position: [f64; 2], dbh: f64) -> StemDetection {
    StemDetection {
        position_bh: position,
        dbh,
        layer_heights: Vec::new(),
        layer_diameters: Vec::new(),
        layer_diameter_valid: Vec::new(),
        cluster: StemCluster {
            indices: Vec::new(),
            centroid: position,
            terrain_height: 0.0,
            layers: Vec::new(),
            circles: Vec::new(),
            best_layers: Vec::new(),
            diameter_std: 0.0,
        },
    }
}

/// Straightforward replay of the growing loop with exhaustive neighbor
/// scans. Returns labels and the radius of every iteration.
fn replay(points: &[[f64; 3]], seeds: &[Vec<usize>], ground: &[bool], p: &CrownParams) -> (Vec<i64>, Vec<f64>) {
    let pts: Vec<[f64; 3]> = points.iter().map(|q| [q[0], q[1], q[2] / p.z_scale]).collect();
    let n = pts.len();
    let mut labels = vec![NON_TREE; n];
    let mut cum = vec![0.0; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    let mut current: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for (t, s) in seeds.iter().enumerate() {
        for &i in s {
            if labels[i] == NON_TREE {
                labels[i] = t as i64;
                members[t].push(i);
                current[t].push(i);
            }
        }
    }
    let mut radius = p.voxel_size;
    let mut radii = Vec::new();
    let mut unchanged = 0;
    for _ in 0..p.max_iterations {
        let unassigned = labels.iter().filter(|&&l| l == NON_TREE).count();
        if unassigned == 0 || current.iter().all(|c| c.is_empty()) {
            break;
        }
        radii.push(radius);
        let mut fresh: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
        let mut commits = Vec::new();
        for q in 0..n {
            if labels[q] != NON_TREE {
                continue;
            }
            // (distance, tree, cumulative), smallest wins
            let mut best: Option<(f64, usize, f64)> = None;
            for (t, list) in current.iter().enumerate() {
                for &s in list {
                    let d2: f64 = (0..3).map(|k| (pts[s][k] - pts[q][k]).powi(2)).sum();
                    if d2 > radius * radius {
                        continue;
                    }
                    let d = d2.sqrt();
                    let c = cum[s] + d;
                    if ground[q] && c > p.max_terrain_distance {
                        continue;
                    }
                    if best.is_none_or(|b| (d, t, c) < b) {
                        best = Some((d, t, c));
                    }
                }
            }
            if let Some((_, t, c)) = best {
                commits.push((q, t, c));
            }
        }
        for &(q, t, c) in &commits {
            labels[q] = t as i64;
            cum[q] = c;
            fresh[t].push(q);
            members[t].push(q);
        }
        let total = commits.len() as f64 / unassigned as f64;
        let trees = fresh.iter().filter(|f| !f.is_empty()).count() as f64 / seeds.len() as f64;
        let mut increased = false;
        if total < p.min_total_ratio || trees < p.min_tree_ratio {
            if radius >= p.max_radius {
                if commits.is_empty() {
                    break;
                }
                unchanged += 1;
            } else {
                radius = (radius * 2.0).min(p.max_radius);
                increased = true;
                unchanged = 0;
            }
        } else {
            unchanged += 1;
            if unchanged >= p.radius_decrease_interval && radius > p.voxel_size {
                radius = (radius / 2.0).max(p.voxel_size);
                unchanged = 0;
            }
        }
        current = if increased { members.clone() } else { fresh };
    }
    (labels, radii)
}

fn small_scene(rng: &mut ChaCha8Rng) -> (Vec<[f64; 3]>, Vec<Vec<usize>>, Vec<bool>) {
    let n = rng.random_range(5..260);
    // a lattice makes exact distance ties common
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(0..30) as f64 * 0.05,
                rng.random_range(0..6) as f64 * 0.05,
                rng.random_range(0..40) as f64 * 0.05,
            ]
        })
        .collect();
    let ground: Vec<bool> = pts.iter().map(|p| p[2] < 0.15 && rng.random_bool(0.8)).collect();
    let trees = rng.random_range(1..5);
    let seeds = (0..trees).map(|_| vec![rng.random_range(0..n)]).collect();
    (pts, seeds, ground)
}

#[test]
fn growth_matches_exhaustive_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for trial in 0..150 {
        let (pts, seeds, ground) = small_scene(&mut rng);
        let mut p = CrownParams::default();
        if trial % 2 == 1 {
            p.radius_decrease_interval = rng.random_range(1..4);
            p.min_total_ratio = rng.random_range(0.0..0.3);
            p.max_iterations = rng.random_range(1..60);
        }
        let (got, stats) = grow_regions(&pts, &seeds, &ground, &p).unwrap();
        let (want, radii) = replay(&pts, &seeds, &ground, &p);
        assert_eq!(got, want, "trial {trial}");
        assert_eq!(stats.radii, radii, "trial {trial}");
        assert!(stats.radii.iter().all(|&r| r >= p.voxel_size && r <= p.max_radius));
    }
}

/// Shortest hop paths over edges no longer than `max_edge`, from the seeds,
/// in z-scaled space.
fn geodesic(points: &[[f64; 3]], seeds: &[usize], max_edge: f64, z_scale: f64) -> Vec<f64> {
    let pts: Vec<[f64; 3]> = points.iter().map(|q| [q[0], q[1], q[2] / z_scale]).collect();
    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut heap = BinaryHeap::new();
    for &s in seeds {
        dist[s] = 0.0;
        heap.push((std::cmp::Reverse(0u64), s));
    }
    while let Some((std::cmp::Reverse(dbits), u)) = heap.pop() {
        let du = f64::from_bits(dbits);
        if du > dist[u] {
            continue;
        }
        for v in 0..pts.len() {
            let d2: f64 = (0..3).map(|k| (pts[u][k] - pts[v][k]).powi(2)).sum();
            if d2 <= max_edge * max_edge {
                let nd = du + d2.sqrt();
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push((std::cmp::Reverse(nd.to_bits()), v));
                }
            }
        }
    }
    dist
}

#[test]
fn terrain_claims_respect_geodesic_budget() {
    let mut pts = Vec::new();
    let mut ground = Vec::new();
    for i in 1..=100 {
        pts.push([0.0, 0.0, i as f64 * 0.05]);
        ground.push(false);
    }
    for i in -30..=30 {
        for j in -30..=30 {
            pts.push([i as f64 * 0.05, j as f64 * 0.05, 0.0]);
            ground.push(true);
        }
    }
    let seeds: Vec<usize> = (0..pts.len()).filter(|&i| !ground[i] && (1.0..=1.6).contains(&pts[i][2])).collect();
    let p = CrownParams::default();
    let (labels, _) = grow_regions(&pts, std::slice::from_ref(&seeds), &ground, &p).unwrap();
    assert!((0..100).all(|i| labels[i] == 0), "every trunk point joins the tree");
    let geo = geodesic(&pts, &seeds, p.max_radius, p.z_scale);
    let mut claimed = 0;
    for i in 100..pts.len() {
        if labels[i] == 0 {
            claimed += 1;
            assert!(geo[i] <= p.max_terrain_distance + 1e-9, "terrain point {i} at geodesic {}", geo[i]);
        }
        if geo[i] > p.max_terrain_distance {
            assert_eq!(labels[i], NON_TREE);
        }
    }
    assert!(claimed > 0 && claimed < pts.len() - 100);
}

fn blob(rng: &mut ChaCha8Rng, c: [f64; 3], half: f64, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| std::array::from_fn(|k| c[k] + rng.random_range(-half..half)))
        .collect()
}

#[test]
fn separated_trees_never_mix() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pts = blob(&mut rng, [0.0, 0.0, 5.0], 1.0, 3000);
    let split = pts.len();
    // gaps of at least twice the maximum radius between the two crowns
    pts.extend(blob(&mut rng, [3.2, 0.0, 5.0], 1.0, 3000));
    let seeds = vec![vec![0], vec![split]];
    let (labels, _) = grow_regions(&pts, &seeds, &vec![false; pts.len()], &CrownParams::default()).unwrap();
    assert!(labels[..split].iter().all(|&l| l != 1));
    assert!(labels[split..].iter().all(|&l| l != 0));
    let assigned = labels.iter().filter(|&&l| l != NON_TREE).count();
    assert!(assigned as f64 > 0.99 * pts.len() as f64);
}

#[test]
fn seeds_are_the_shell_points_in_the_breast_height_band() {
    let mut pts = Vec::new();
    for i in 0..=300 {
        let z = i as f64 * 0.01;
        for k in 0..60 {
            let t = 2.0 * PI * k as f64 / 60.0;
            pts.push([1.0 + 0.15 * t.cos(), 2.0 + 0.15 * t.sin(), z]);
        }
    }
    // clutter just outside the cylinder
    for k in 0..60 {
        let t = 2.0 * PI * k as f64 / 60.0;
        pts.push([1.0 + 0.2 * t.cos(), 2.0 + 0.2 * t.sin(), 1.3]);
    }
    let cloud = PointCloud::from_points(&pts).unwrap();
    let seeds = select_seeds(&cloud, &flat(), &[detection([1.0, 2.0], 0.30)], &CrownParams::default());
    let want: Vec<usize> = (0..pts.len())
        .filter(|&i| {
            let r = (pts[i][0] - 1.0).hypot(pts[i][1] - 2.0);
            r <= 0.1575 && pts[i][2] >= 1.0 - 1e-12 && pts[i][2] <= 1.6 + 1e-12
        })
        .collect();
    assert_eq!(seeds, vec![want]);
}

#[test]
fn no_stems_no_trees() {
    let cloud = PointCloud::from_points(&[[0.0, 0.0, 1.0], [1.0, 1.0, 2.0]]).unwrap();
    let l = delineate_crowns(&cloud, &flat(), &[], &[false; 2], &CrownParams::default()).unwrap();
    assert_eq!(l.tree_count, 0);
    assert!(l.labels.iter().all(|&x| x == NON_TREE));
}

#[test]
fn seedless_stems_are_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = blob(&mut rng, [0.0, 0.0, 1.3], 0.3, 2000);
    let cloud = PointCloud::from_points(&pts).unwrap();
    let stems = [detection([10.0, 10.0], 0.3), detection([0.0, 0.0], 0.3)];
    let l = delineate_crowns(&cloud, &flat(), &stems, &vec![false; pts.len()], &CrownParams::default()).unwrap();
    assert_eq!(l.tree_count, 1);
    assert_eq!(l.stem_of_tree, vec![1]);
    assert!(l.labels.iter().all(|&x| x == 0 || x == NON_TREE));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_are_reproducible_and_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pts, seeds, ground) = small_scene(&mut rng);
        let p = CrownParams::default();
        let (a, _) = grow_regions(&pts, &seeds, &ground, &p).unwrap();
        let (b, _) = grow_regions(&pts, &seeds, &ground, &p).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|&l| l == NON_TREE || (0..seeds.len() as i64).contains(&l)));
        // initial seeds keep their tree (first listed tree wins a shared seed)
        for s in &seeds {
            let first = seeds.iter().position(|o| o[0] == s[0]).unwrap();
            prop_assert_eq!(a[s[0]], first as i64);
        }
    }
}
