//! Synthetic forest plots with per-point ground truth.
//!
//! Terrain is `z = amplitude · sin(x / wavelength) + slope · (x, y)`. Each
//! tree is a tapered cylinder shell from the ground up to the crown centre
//! plus a filled crown ellipsoid. Every point carries an `instance_id`
//! channel (`-1` off-tree), an `is_terrain` flag and a `component` code
//! (0 ground, 1 stem, 2 crown).

use forestseg_core::stems::BREAST_HEIGHT;
use forestseg_core::{Channel, PointCloud, NON_TREE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const GROUND: i64 = 0;
pub const STEM: i64 = 1;
pub const CROWN: i64 = 2;

const MIN_STEM_RADIUS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Terrain {
    pub amplitude: f64,
    pub wavelength: f64,
    pub slope: [f64; 2],
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain {
            amplitude: 0.5,
            wavelength: 5.0,
            slope: [0.0, 0.0],
        }
    }
}

impl Terrain {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (x / self.wavelength).sin() + self.slope[0] * x + self.slope[1] * y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub position: [f64; 2],
    /// Stem diameter at 1.3 m.
    pub dbh: f64,
    /// Diameter loss per metre of height.
    #[serde(default)]
    pub taper: f64,
    pub height: f64,
    pub crown_base: f64,
    pub crown_radius: f64,
}

impl TreeSpec {
    pub fn radius_at(&self, h: f64) -> f64 {
        ((self.dbh - self.taper * (h - BREAST_HEIGHT)) / 2.0).max(MIN_STEM_RADIUS)
    }

    fn crown_center(&self) -> f64 {
        (self.crown_base + self.height) / 2.0
    }

    fn crown_half_height(&self) -> f64 {
        (self.height - self.crown_base) / 2.0
    }
}

/// Sampling densities. The defaults emulate terrestrial scanning: dense
/// stems, moderately dense ground and a thinner canopy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Density {
    pub ground_spacing: f64,
    pub ground_noise: f64,
    pub stem_points_per_m2: f64,
    pub stem_noise: f64,
    pub crown_points_per_m3: f64,
}

impl Default for Density {
    fn default() -> Self {
        Density {
            ground_spacing: 0.1,
            ground_noise: 0.01,
            stem_points_per_m2: 5000.0,
            stem_noise: 0.003,
            crown_points_per_m3: 200.0,
        }
    }
}

/// Share of points kept per component when emulating UAV-borne scanning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resample {
    pub ground: f64,
    pub stem: f64,
    pub crown: f64,
}

impl Resample {
    pub const ULS: Resample = Resample {
        ground: 0.3,
        stem: 0.05,
        crown: 0.5,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Plot size; the plot spans `[0, extent[0]] × [0, extent[1]]`.
    pub extent: [f64; 2],
    #[serde(default)]
    pub terrain: Terrain,
    pub trees: Vec<TreeSpec>,
    #[serde(default)]
    pub density: Density,
    #[serde(default = "yes")]
    pub intensity: bool,
}

fn yes() -> bool {
    true
}

impl SceneSpec {
    /// `n` trees on a jittered grid with crowns at least 1.2 m apart.
    pub fn forest(n: usize, extent: [f64; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f0e5);
        let cols = ((n as f64 * extent[0] / extent[1]).sqrt().ceil() as usize).max(1);
        let rows = n.div_ceil(cols).max(1);
        let cell = [extent[0] / cols as f64, extent[1] / rows as f64];
        let jitter = 0.15;
        let min_gap = (1.0 - 2.0 * jitter) * cell[0].min(cell[1]);
        let crown_radius = ((min_gap - 1.2) / 2.0).min(2.5);
        let trees = (0..n)
            .map(|i| {
                let (c, r) = (i % cols, i / cols);
                let mut j = || rng.random_range(-jitter..jitter);
                let position = [(c as f64 + 0.5 + j()) * cell[0], (r as f64 + 0.5 + j()) * cell[1]];
                let height = rng.random_range(14.0..20.0);
                TreeSpec {
                    position,
                    dbh: rng.random_range(0.2..0.45),
                    taper: 0.01,
                    height,
                    crown_base: rng.random_range(6.0..9.0),
                    crown_radius: crown_radius * rng.random_range(0.8..1.0),
                }
            })
            .collect();
        SceneSpec {
            extent,
            terrain: Terrain::default(),
            trees,
            density: Density::default(),
            intensity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AppError::validation(format!("scene spec: {msg}")));
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive".into());
        }
        let d = &self.density;
        if !(d.ground_spacing > 0.0) || d.stem_points_per_m2 < 0.0 || d.crown_points_per_m3 < 0.0 {
            return bad("densities must be positive".into());
        }
        if d.ground_noise < 0.0 || d.stem_noise < 0.0 {
            return bad("noise must be non-negative".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !(t.dbh > 0.0 && t.height > t.crown_base && t.crown_base > 0.0 && t.crown_radius > 0.0) {
                return bad(format!("tree {i} needs dbh > 0 and 0 < crown_base < height"));
            }
        }
        for (i, a) in self.trees.iter().enumerate() {
            for (j, b) in self.trees.iter().enumerate().skip(i + 1) {
                let dist = (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]);
                if dist < a.radius_at(0.0) + b.radius_at(0.0) {
                    return bad(format!("stems of trees {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Builder {
    points: Vec<[f64; 3]>,
    intensity: Vec<f64>,
    instance: Vec<i64>,
    component: Vec<i64>,
}

impl Builder {
    fn push(&mut self, p: [f64; 3], intensity: f64, instance: i64, component: i64) {
        self.points.push(p);
        self.intensity.push(intensity);
        self.instance.push(instance);
        self.component.push(component);
    }
}

/// Generates the plot described by `spec`; identical seeds give identical
/// clouds.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &spec.density;
    let ground_noise = Normal::new(0.0, d.ground_noise).unwrap();
    let stem_noise = Normal::new(0.0, d.stem_noise).unwrap();
    let mut b = Builder::default();

    let nx = (spec.extent[0] / d.ground_spacing).ceil() as usize;
    let ny = (spec.extent[1] / d.ground_spacing).ceil() as usize;
    for i in 0..nx {
        for j in 0..ny {
            let x = (i as f64 + rng.random::<f64>()) * d.ground_spacing;
            let y = (j as f64 + rng.random::<f64>()) * d.ground_spacing;
            let z = spec.terrain.height(x, y) + ground_noise.sample(&mut rng);
            let intensity = rng.random_range(1000.0..8000.0f64).round();
            b.push([x, y, z], intensity, NON_TREE, GROUND);
        }
    }

    for (id, t) in spec.trees.iter().enumerate() {
        let id = id as i64;
        let [cx, cy] = t.position;
        let base = spec.terrain.height(cx, cy);
        let top = t.crown_center();
        let mean_r = (t.radius_at(0.0) + t.radius_at(top)) / 2.0;
        let n_stem = (d.stem_points_per_m2 * std::f64::consts::TAU * mean_r * top).round() as usize;
        for _ in 0..n_stem {
            let h = rng.random::<f64>() * top;
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let r = t.radius_at(h) + stem_noise.sample(&mut rng);
            let intensity = rng.random_range(25_000.0..35_000.0f64).round();
            b.push([cx + r * theta.cos(), cy + r * theta.sin(), base + h], intensity, id, STEM);
        }

        let (a, c) = (t.crown_radius, t.crown_half_height());
        let volume = 4.0 / 3.0 * std::f64::consts::PI * a * a * c;
        let n_crown = (d.crown_points_per_m3 * volume).round() as usize;
        let mut placed = 0;
        while placed < n_crown {
            let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
            if u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0 {
                continue;
            }
            let intensity = rng.random_range(2000.0..20_000.0f64).round();
            b.push([cx + a * u[0], cy + a * u[1], base + top + c * u[2]], intensity, id, CROWN);
            placed += 1;
        }
    }

    let mut cloud = PointCloud::from_points(&b.points)?;
    if spec.intensity {
        cloud.set_intensity(b.intensity)?;
    }
    let terrain = b.component.iter().map(|&c| i64::from(c == GROUND)).collect();
    cloud.set_channel("instance_id", Channel::Int(b.instance))?;
    cloud.set_channel("is_terrain", Channel::Int(terrain))?;
    cloud.set_channel("component", Channel::Int(b.component))?;
    Ok(cloud)
}

/// Thins a generated cloud per component, e.g. to emulate sparse stems.
pub fn resample(cloud: &PointCloud, keep: Resample, seed: u64) -> Result<PointCloud> {
    let Some(Channel::Int(component)) = cloud.channel("component") else {
        return Err(AppError::validation("resampling needs the `component` channel of a generated scene"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0075_1500);
    let kept: Vec<usize> = component
        .iter()
        .enumerate()
        .filter(|&(_, &c)| {
            let share = match c {
                GROUND => keep.ground,
                STEM => keep.stem,
                _ => keep.crown,
            };
            rng.random_bool(share.clamp(0.0, 1.0))
        })
        .map(|(i, _)| i)
        .collect();
    Ok(cloud.select(&kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tree() -> SceneSpec {
        SceneSpec {
            extent: [6.0, 6.0],
            terrain: Terrain::default(),
            trees: vec![TreeSpec {
                position: [3.0, 3.0],
                dbh: 0.3,
                taper: 0.0,
                height: 12.0,
                crown_base: 6.0,
                crown_radius: 2.0,
            }],
            density: Density::default(),
            intensity: true,
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&one_tree(), 7).unwrap();
        let b = generate(&one_tree(), 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&one_tree(), 8).unwrap());
    }

    #[test]
    fn stem_shell_at_specified_radius() {
        let c = generate(&one_tree(), 7).unwrap();
        let Some(Channel::Int(comp)) = c.channel("component") else { panic!() };
        let radii: Vec<f64> = (0..c.len())
            .filter(|&i| comp[i] == STEM)
            .map(|i| (c.x()[i] - 3.0).hypot(c.y()[i] - 3.0))
            .collect();
        let n = radii.len() as f64;
        let mean = radii.iter().sum::<f64>() / n;
        let sd = (radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - 0.15).abs() < 3.0 * 0.003 / n.sqrt() + 1e-4, "{mean}");
        assert!((sd - 0.003).abs() < 3e-4, "{sd}");
    }

    #[test]
    fn labels_follow_components() {
        let c = generate(&one_tree(), 1).unwrap();
        let (Some(Channel::Int(id)), Some(Channel::Int(comp)), Some(Channel::Int(terrain))) =
            (c.channel("instance_id"), c.channel("component"), c.channel("is_terrain"))
        else {
            panic!()
        };
        for i in 0..c.len() {
            assert_eq!(id[i] == NON_TREE, comp[i] == GROUND);
            assert_eq!(terrain[i] == 1, comp[i] == GROUND);
        }
    }

    #[test]
    fn overlapping_stems_rejected() {
        let mut s = one_tree();
        let mut t = s.trees[0].clone();
        t.position = [3.2, 3.0];
        s.trees.push(t);
        assert!(generate(&s, 1).unwrap_err().to_string().contains("overlap"));
    }

    #[test]
    fn forest_layout_keeps_crowns_apart() {
        let s = SceneSpec::forest(20, [40.0, 40.0], 3);
        s.validate().unwrap();
        for (i, a) in s.trees.iter().enumerate() {
            assert!(a.position.iter().all(|&v| (0.0..40.0).contains(&v)));
            for b in &s.trees[i + 1..] {
                let d = (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]);
                assert!(d - a.crown_radius - b.crown_radius >= 1.2, "{d}");
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SceneSpec::forest(3, [12.0, 8.0], 1);
        let back: SceneSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let minimal: SceneSpec = serde_json::from_str(r#"{"extent":[5,5],"trees":[]}"#).unwrap();
        assert_eq!(minimal.density, Density::default());
    }

    #[test]
    fn resample_keeps_expected_shares() {
        let c = generate(&one_tree(), 2).unwrap();
        let r = resample(&c, Resample::ULS, 2).unwrap();
        let count = |cloud: &PointCloud, k: i64| match cloud.channel("component") {
            Some(Channel::Int(v)) => v.iter().filter(|&&c| c == k).count() as f64,
            _ => panic!(),
        };
        for (k, share) in [(GROUND, 0.3), (STEM, 0.05), (CROWN, 0.5)] {
            let ratio = count(&r, k) / count(&c, k);
            assert!((ratio - share).abs() < 0.02, "{k}: {ratio}");
        }
    }
}
