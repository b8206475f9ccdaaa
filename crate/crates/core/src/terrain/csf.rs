use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const GRAVITY: f64 = 0.2;
const TIME_STEP: f64 = 0.65;
const DAMPING: f64 = 0.01;
const CLOTH_BUFFER: usize = 2;
const CLOTH_LIFT: f64 = 0.05;
const CONVERGENCE: f64 = 1e-5;
const SLOPE_SMOOTH_THRESHOLD: f64 = 0.3;
const SLOPE_MAX_COMPONENT: usize = 50;

/// Cloth simulation filter settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CsfParams {
    pub cloth_resolution: f64,
    /// 1 (soft) to 3 (rigid): number of constraint relaxation passes.
    pub rigidness: u8,
    pub max_iterations: usize,
    pub steep_slope_fit: bool,
    pub terrain_threshold: f64,
    pub tree_threshold: f64,
}

impl Default for CsfParams {
    fn default() -> Self {
        CsfParams {
            cloth_resolution: 0.5,
            rigidness: 2,
            max_iterations: 500,
            steep_slope_fit: false,
            terrain_threshold: 0.5,
            tree_threshold: 0.5,
        }
    }
}

impl CsfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cloth_resolution > 0.0) {
            return Err(Error::param("cloth_resolution", "must be positive"));
        }
        if !(1..=3).contains(&self.rigidness) {
            return Err(Error::param("rigidness", "must be 1, 2 or 3"));
        }
        if !(self.terrain_threshold >= 0.0) {
            return Err(Error::param("terrain_threshold", "must be non-negative"));
        }
        if !(self.tree_threshold >= self.terrain_threshold) {
            return Err(Error::param(
                "tree_threshold",
                "must be at least terrain_threshold",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainClassification {
    pub is_terrain: Vec<bool>,
    /// Vertical distance between each point and the settled cloth.
    pub cloth_distance: Vec<f64>,
}

impl TerrainClassification {
    pub fn n_terrain(&self) -> usize {
        self.is_terrain.iter().filter(|&&t| t).count()
    }

    /// Points closer to the cloth than `tree_threshold`: never tree points on
    /// their own, claimable only near stems during crown growing.
    pub fn ground_like(&self, tree_threshold: f64) -> Vec<bool> {
        self.is_terrain
            .iter()
            .zip(&self.cloth_distance)
            .map(|(&t, &d)| t || d < tree_threshold)
            .collect()
    }
}

struct Cloth {
    ox: f64,
    oy: f64,
    step: f64,
    w: usize,
    h: usize,
    pos: Vec<f64>,
    old: Vec<f64>,
    movable: Vec<bool>,
    floor: Vec<f64>,
}

impl Cloth {
    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (w, h) = (self.w, self.h);
        let (c, r) = (i % w, i / w);
        let mut out = [usize::MAX; 4];
        if c > 0 {
            out[0] = i - 1;
        }
        if c + 1 < w {
            out[1] = i + 1;
        }
        if r > 0 {
            out[2] = i - w;
        }
        if r + 1 < h {
            out[3] = i + w;
        }
        out.into_iter().filter(|&j| j != usize::MAX)
    }

    /// One Verlet step plus constraint relaxation; returns the largest
    /// vertical displacement of a movable particle.
    fn step(&mut self, single: f64, double: f64) -> f64 {
        let accel = -GRAVITY * TIME_STEP * TIME_STEP;
        let before = self.pos.clone();
        for i in 0..self.pos.len() {
            if self.movable[i] {
                let cur = self.pos[i];
                self.pos[i] = cur + (cur - self.old[i]) * (1.0 - DAMPING) + accel;
                self.old[i] = cur;
            }
        }
        for i in 0..self.pos.len() {
            for j in self.neighbors(i) {
                let corr = self.pos[j] - self.pos[i];
                match (self.movable[i], self.movable[j]) {
                    (true, true) => {
                        self.pos[i] += corr * double;
                        self.pos[j] -= corr * double;
                    }
                    (true, false) => self.pos[i] += corr * single,
                    (false, true) => self.pos[j] -= corr * single,
                    (false, false) => {}
                }
            }
        }
        let mut max_diff: f64 = 0.0;
        for i in 0..self.pos.len() {
            if self.movable[i] {
                max_diff = max_diff.max((self.pos[i] - before[i]).abs());
            }
        }
        max_diff
    }

    fn collide(&mut self) {
        for i in 0..self.pos.len() {
            if self.pos[i] < self.floor[i] {
                self.pos[i] = self.floor[i];
                self.old[i] = self.floor[i];
                self.movable[i] = false;
            }
        }
    }

    /// Snaps small movable patches bordering settled cloth onto their floor
    /// heights when the gap is small.
    fn fit_steep_slopes(&mut self) {
        let n = self.pos.len();
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] || !self.movable[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = q.pop_front() {
                comp.push(i);
                for j in self.neighbors(i) {
                    if !seen[j] && self.movable[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
            if comp.len() >= SLOPE_MAX_COMPONENT {
                continue;
            }
            let mut q: VecDeque<usize> = comp
                .iter()
                .copied()
                .filter(|&i| self.neighbors(i).any(|j| !self.movable[j]))
                .collect();
            while let Some(i) = q.pop_front() {
                if !self.movable[i] {
                    continue;
                }
                if (self.pos[i] - self.floor[i]).abs() < SLOPE_SMOOTH_THRESHOLD {
                    self.pos[i] = self.floor[i];
                    self.movable[i] = false;
                    for j in self.neighbors(i) {
                        if self.movable[j] {
                            q.push_back(j);
                        }
                    }
                }
            }
        }
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.ox) / self.step).clamp(0.0, (self.w - 1) as f64);
        let fy = ((y - self.oy) / self.step).clamp(0.0, (self.h - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.w.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.h.saturating_sub(2));
        let c1 = (c0 + 1).min(self.w - 1);
        let r1 = (r0 + 1).min(self.h - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let p = |c: usize, r: usize| self.pos[r * self.w + c];
        let top = p(c0, r0) * (1.0 - tx) + p(c1, r0) * tx;
        let bot = p(c0, r1) * (1.0 - tx) + p(c1, r1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

/// Classifies terrain points with a cloth simulation filter.
///
/// The cloud is inverted along z and a grid cloth, starting above the
/// inverted cloud, falls under gravity. Each cloth particle collides with the
/// inverted height of the input point closest to it in xy; particles without
/// points take the value of the nearest particle that has one. Internal
/// constraints relax each particle toward its four neighbors `rigidness`
/// times per step. The simulation stops after `max_iterations` steps or once
/// no particle moves more than 1e-5 m. A point is terrain when its vertical
/// distance to the settled cloth is at most `terrain_threshold`.
pub fn csf_classify(cloud: &PointCloud, params: &CsfParams) -> Result<TerrainClassification> {
    params.validate()?;
    let Some((lo, hi)) = cloud.bounds() else {
        return Err(Error::param("cloud", "terrain classification needs at least one point"));
    };
    let n = cloud.len();
    if lo == hi {
        return Ok(TerrainClassification {
            is_terrain: vec![true; n],
            cloth_distance: vec![0.0; n],
        });
    }

    let step = params.cloth_resolution;
    let w = ((hi[0] - lo[0]) / step).floor() as usize + 1 + 2 * CLOTH_BUFFER;
    let h = ((hi[1] - lo[1]) / step).floor() as usize + 1 + 2 * CLOTH_BUFFER;
    let ox = lo[0] - CLOTH_BUFFER as f64 * step;
    let oy = lo[1] - CLOTH_BUFFER as f64 * step;
    let start = -lo[2] + CLOTH_LIFT;

    // nearest point per particle, in inverted heights
    let mut best_d = vec![f64::INFINITY; w * h];
    let mut floor = vec![f64::NAN; w * h];
    for i in 0..n {
        let [x, y, z] = cloud.point(i);
        let c = ((x - ox) / step).round() as usize;
        let r = ((y - oy) / step).round() as usize;
        let (c, r) = (c.min(w - 1), r.min(h - 1));
        let id = r * w + c;
        let px = ox + c as f64 * step;
        let py = oy + r as f64 * step;
        let d = (x - px).powi(2) + (y - py).powi(2);
        if d < best_d[id] {
            best_d[id] = d;
            floor[id] = -z;
        }
    }
    fill_from_nearest(&mut floor, w, h);

    let mut cloth = Cloth {
        ox,
        oy,
        step,
        w,
        h,
        pos: vec![start; w * h],
        old: vec![start; w * h],
        movable: vec![true; w * h],
        floor,
    };
    let k = params.rigidness as i32;
    let single = 1.0 - 0.7f64.powi(k);
    let double = 0.5 * (1.0 - 0.4f64.powi(k));
    for _ in 0..params.max_iterations {
        let diff = cloth.step(single, double);
        cloth.collide();
        if diff < CONVERGENCE {
            break;
        }
    }
    if params.steep_slope_fit {
        cloth.fit_steep_slopes();
    }

    let mut is_terrain = Vec::with_capacity(n);
    let mut cloth_distance = Vec::with_capacity(n);
    for i in 0..n {
        let [x, y, z] = cloud.point(i);
        let d = (cloth.height_at(x, y) - (-z)).abs();
        cloth_distance.push(d);
        is_terrain.push(d <= params.terrain_threshold);
    }
    Ok(TerrainClassification {
        is_terrain,
        cloth_distance,
    })
}

/// Breadth-first fill of NaN cells from their nearest filled cell.
fn fill_from_nearest(v: &mut [f64], w: usize, h: usize) {
    let mut q: VecDeque<usize> = (0..v.len()).filter(|&i| !v[i].is_nan()).collect();
    while let Some(i) = q.pop_front() {
        let (c, r) = (i % w, i / w);
        let mut visit = |j: usize| {
            if v[j].is_nan() {
                v[j] = v[i];
                q.push_back(j);
            }
        };
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < w {
            visit(i + 1);
        }
        if r > 0 {
            visit(i - w);
        }
        if r + 1 < h {
            visit(i + w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(n_side: usize, spacing: f64) -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                v.push([i as f64 * spacing, j as f64 * spacing, 0.0]);
            }
        }
        v
    }

    #[test]
    fn flat_plane_all_terrain() {
        let c = PointCloud::from_points(&plane(100, 0.2)).unwrap();
        let t = csf_classify(&c, &CsfParams::default()).unwrap();
        assert_eq!(t.n_terrain(), c.len());
    }

    #[test]
    fn blob_above_plane_is_not_terrain() {
        let mut pts = plane(100, 0.2);
        let n_plane = pts.len();
        for i in 0..100 {
            let a = i as f64 * 0.1;
            pts.push([10.0 + 0.3 * a.cos(), 10.0 + 0.3 * a.sin(), 5.0 + 0.01 * i as f64]);
        }
        let c = PointCloud::from_points(&pts).unwrap();
        let t = csf_classify(&c, &CsfParams::default()).unwrap();
        assert!(t.is_terrain[..n_plane].iter().all(|&b| b));
        assert!(t.is_terrain[n_plane..].iter().all(|&b| !b));
        assert_eq!(t.n_terrain() + (c.len() - t.n_terrain()), c.len());
    }

    #[test]
    fn coincident_points_all_terrain() {
        let c = PointCloud::from_points(&[[1.0, 2.0, 3.0]; 10]).unwrap();
        let t = csf_classify(&c, &CsfParams::default()).unwrap();
        assert_eq!(t.n_terrain(), 10);
    }

    #[test]
    fn parameter_checks() {
        let c = PointCloud::from_points(&plane(3, 1.0)).unwrap();
        let bad = CsfParams {
            tree_threshold: 0.1,
            ..CsfParams::default()
        };
        assert!(csf_classify(&c, &bad).is_err());
        let bad = CsfParams {
            rigidness: 4,
            ..CsfParams::default()
        };
        assert!(csf_classify(&c, &bad).is_err());
        assert!(csf_classify(&PointCloud::default(), &CsfParams::default()).is_err());
    }

    #[test]
    fn steep_slope_option_runs() {
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                let x = i as f64 * 0.2;
                pts.push([x, j as f64 * 0.2, if x > 6.0 { (x - 6.0) * 1.5 } else { 0.0 }]);
            }
        }
        let c = PointCloud::from_points(&pts).unwrap();
        let p = CsfParams {
            steep_slope_fit: true,
            ..CsfParams::default()
        };
        let with = csf_classify(&c, &p).unwrap();
        let without = csf_classify(&c, &CsfParams::default()).unwrap();
        assert!(with.n_terrain() >= without.n_terrain());
    }
}
