//! Run configuration as flat `key = value` text with dotted section names.
//!
//! A configuration starts from a preset, then file entries are applied, then
//! `--set` overrides, then `--seed`. Optional thresholds take the value
//! `none` to disable the corresponding filter.

use std::fmt;
use std::str::FromStr;

use forestseg_core::circlefit::FitMethod;
use forestseg_core::crown::CrownParams;
use forestseg_core::stems::StemDetectionParams;
use forestseg_core::terrain::{CsfParams, DtmParams};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tls,
    Uls,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tls => "tls",
            Preset::Uls => "uls",
        })
    }
}

impl FromStr for Preset {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tls" => Ok(Preset::Tls),
            "uls" => Ok(Preset::Uls),
            _ => Err(AppError::validation(format!("unknown preset `{s}` (expected tls or uls)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub preset: Preset,
    pub csf: CsfParams,
    pub dtm: DtmParams,
    pub stems: StemDetectionParams,
    pub crown: CrownParams,
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        Config {
            preset,
            csf: CsfParams::default(),
            dtm: DtmParams::default(),
            stems: match preset {
                Preset::Tls => StemDetectionParams::tls(),
                Preset::Uls => StemDetectionParams::uls(),
            },
            crown: CrownParams::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.stems.circle.rng_seed
    }

    /// Builds a configuration from its sources in precedence order.
    ///
    /// The preset comes from `preset`, else from a `preset` entry in the
    /// file, else TLS.
    pub fn resolve(
        preset: Option<Preset>,
        file: Option<&str>,
        overrides: &[(String, String)],
        seed: Option<u64>,
    ) -> Result<Self> {
        let file_entries = file.map(parse_entries).transpose()?.unwrap_or_default();
        let file_preset = file_entries
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.parse())
            .transpose()?;
        let mut config = Config::preset(preset.or(file_preset).unwrap_or(Preset::Tls));
        for (key, value) in file_entries.iter().filter(|(k, _)| k != "preset") {
            config.set(key, value)?;
        }
        for (key, value) in overrides {
            if key == "preset" {
                return Err(AppError::validation("choose the preset with --preset, not --set"));
            }
            config.set(key, value)?;
        }
        if let Some(seed) = seed {
            config.stems.circle.rng_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    /// Text form; unmodified presets serialize to the published defaults.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Config::resolve(None, Some(text), &[], None)
    }

    pub fn validate(&self) -> Result<()> {
        self.csf.validate()?;
        self.dtm.validate()?;
        self.stems.validate()?;
        self.crown.validate()?;
        Ok(())
    }

    /// Every key with its current value, in serialization order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (c, d, s, r) = (&self.csf, &self.dtm, &self.stems, &self.crown);
        vec![
            ("preset", self.preset.to_string()),
            ("seed", s.circle.rng_seed.to_string()),
            ("csf.cloth_resolution", c.cloth_resolution.to_string()),
            ("csf.rigidness", c.rigidness.to_string()),
            ("csf.max_iterations", c.max_iterations.to_string()),
            ("csf.steep_slope_fit", c.steep_slope_fit.to_string()),
            ("csf.terrain_threshold", c.terrain_threshold.to_string()),
            ("csf.tree_threshold", c.tree_threshold.to_string()),
            ("dtm.voxel_size", d.voxel_size.to_string()),
            ("dtm.resolution", d.resolution.to_string()),
            ("dtm.k", d.k.to_string()),
            ("dtm.power", d.power.to_string()),
            ("stems.h_min", s.h_min.to_string()),
            ("stems.h_max", s.h_max.to_string()),
            ("stems.voxel_size", s.voxel_size.to_string()),
            ("stems.eps_2d", s.eps_2d.to_string()),
            ("stems.min_pts_2d", s.min_pts_2d.to_string()),
            ("stems.eps_3d", s.eps_3d.to_string()),
            ("stems.min_pts_3d", s.min_pts_3d.to_string()),
            ("stems.min_cluster_points", s.min_cluster_points.to_string()),
            ("stems.min_vertical_extent", s.min_vertical_extent.to_string()),
            ("stems.min_intensity", opt(s.min_intensity)),
            ("stems.min_diameter", s.circle.min_diameter.to_string()),
            ("stems.max_diameter", s.circle.max_diameter.to_string()),
            ("stems.n_layers", s.n_layers.to_string()),
            ("stems.first_layer_height", s.first_layer_height.to_string()),
            ("stems.layer_height", s.layer_height.to_string()),
            ("stems.layer_overlap", s.layer_overlap.to_string()),
            ("stems.min_score", s.circle.min_score.to_string()),
            ("stems.bandwidth", s.circle.bandwidth.to_string()),
            ("stems.min_circle_points", s.circle.min_points.to_string()),
            ("stems.cci_min", opt(s.circle.cci_min)),
            ("stems.n_sample", s.n_sample.to_string()),
            ("stems.max_diameter_std", s.max_diameter_std.to_string()),
            ("stems.max_center_std", opt(s.max_center_std)),
            ("stems.gam_buffer", s.gam_buffer.to_string()),
            ("stems.max_radius_spread", s.max_radius_spread.to_string()),
            ("stems.circle_method", method_name(s.circle.method).to_string()),
            ("stems.ransac_iterations", s.circle.ransac_iterations.to_string()),
            ("stems.refine_circles", s.refine_circles.to_string()),
            ("stems.ellipse_fitting", "false".to_string()),
            ("stems.literal_sqrt_area", s.literal_sqrt_area.to_string()),
            ("stems.pca_min_explained_variance", opt(s.pca_min_explained_variance)),
            ("stems.pca_max_inclination_deg", opt(s.pca_max_inclination_deg)),
            ("crown.voxel_size", r.voxel_size.to_string()),
            ("crown.seed_height", r.seed_height.to_string()),
            ("crown.seed_diameter_factor", r.seed_diameter_factor.to_string()),
            ("crown.min_seed_diameter", r.min_seed_diameter.to_string()),
            ("crown.z_scale", r.z_scale.to_string()),
            ("crown.max_radius", r.max_radius.to_string()),
            ("crown.min_total_ratio", r.min_total_ratio.to_string()),
            ("crown.min_tree_ratio", r.min_tree_ratio.to_string()),
            ("crown.radius_decrease_interval", r.radius_decrease_interval.to_string()),
            ("crown.max_iterations", r.max_iterations.to_string()),
            ("crown.max_terrain_distance", r.max_terrain_distance.to_string()),
        ]
    }

    /// Sets one key. `preset` is not settable here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let (c, d, s, r) = (&mut self.csf, &mut self.dtm, &mut self.stems, &mut self.crown);
        match key {
            "seed" => s.circle.rng_seed = num(key, v)?,
            "csf.cloth_resolution" => c.cloth_resolution = num(key, v)?,
            "csf.rigidness" => c.rigidness = num(key, v)?,
            "csf.max_iterations" => c.max_iterations = num(key, v)?,
            "csf.steep_slope_fit" => c.steep_slope_fit = flag(key, v)?,
            "csf.terrain_threshold" => c.terrain_threshold = num(key, v)?,
            "csf.tree_threshold" => c.tree_threshold = num(key, v)?,
            "dtm.voxel_size" => d.voxel_size = num(key, v)?,
            "dtm.resolution" => d.resolution = num(key, v)?,
            "dtm.k" => d.k = num(key, v)?,
            "dtm.power" => d.power = num(key, v)?,
            "stems.h_min" => s.h_min = num(key, v)?,
            "stems.h_max" => s.h_max = num(key, v)?,
            "stems.voxel_size" => s.voxel_size = num(key, v)?,
            "stems.eps_2d" => s.eps_2d = num(key, v)?,
            "stems.min_pts_2d" => s.min_pts_2d = num(key, v)?,
            "stems.eps_3d" => s.eps_3d = num(key, v)?,
            "stems.min_pts_3d" => s.min_pts_3d = num(key, v)?,
            "stems.min_cluster_points" => s.min_cluster_points = num(key, v)?,
            "stems.min_vertical_extent" => s.min_vertical_extent = num(key, v)?,
            "stems.min_intensity" => s.min_intensity = opt_num(key, v)?,
            "stems.min_diameter" => s.circle.min_diameter = num(key, v)?,
            "stems.max_diameter" => s.circle.max_diameter = num(key, v)?,
            "stems.n_layers" => s.n_layers = num(key, v)?,
            "stems.first_layer_height" => s.first_layer_height = num(key, v)?,
            "stems.layer_height" => s.layer_height = num(key, v)?,
            "stems.layer_overlap" => s.layer_overlap = num(key, v)?,
            "stems.min_score" => s.circle.min_score = num(key, v)?,
            "stems.bandwidth" => s.circle.bandwidth = num(key, v)?,
            "stems.min_circle_points" => s.circle.min_points = num(key, v)?,
            "stems.cci_min" => s.circle.cci_min = opt_num(key, v)?,
            "stems.n_sample" => s.n_sample = num(key, v)?,
            "stems.max_diameter_std" => s.max_diameter_std = num(key, v)?,
            "stems.max_center_std" => s.max_center_std = opt_num(key, v)?,
            "stems.gam_buffer" => s.gam_buffer = num(key, v)?,
            "stems.max_radius_spread" => s.max_radius_spread = num(key, v)?,
            "stems.circle_method" => {
                s.circle.method = match v {
                    "ransac" => FitMethod::Ransac,
                    "gradient" => FitMethod::Gradient,
                    _ => return Err(bad(key, v, "expected ransac or gradient")),
                }
            }
            "stems.ransac_iterations" => s.circle.ransac_iterations = num(key, v)?,
            "stems.refine_circles" => s.refine_circles = flag(key, v)?,
            "stems.ellipse_fitting" => {
                if flag(key, v)? {
                    return Err(bad(key, v, "ellipse fitting is not supported; stems are modeled as circles"));
                }
            }
            "stems.literal_sqrt_area" => s.literal_sqrt_area = flag(key, v)?,
            "stems.pca_min_explained_variance" => s.pca_min_explained_variance = opt_num(key, v)?,
            "stems.pca_max_inclination_deg" => s.pca_max_inclination_deg = opt_num(key, v)?,
            "crown.voxel_size" => r.voxel_size = num(key, v)?,
            "crown.seed_height" => r.seed_height = num(key, v)?,
            "crown.seed_diameter_factor" => r.seed_diameter_factor = num(key, v)?,
            "crown.min_seed_diameter" => r.min_seed_diameter = num(key, v)?,
            "crown.z_scale" => r.z_scale = num(key, v)?,
            "crown.max_radius" => r.max_radius = num(key, v)?,
            "crown.min_total_ratio" => r.min_total_ratio = num(key, v)?,
            "crown.min_tree_ratio" => r.min_tree_ratio = num(key, v)?,
            "crown.radius_decrease_interval" => r.radius_decrease_interval = num(key, v)?,
            "crown.max_iterations" => r.max_iterations = num(key, v)?,
            "crown.max_terrain_distance" => r.max_terrain_distance = num(key, v)?,
            _ => return Err(AppError::validation(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }
}

fn method_name(m: FitMethod) -> &'static str {
    match m {
        FitMethod::Ransac => "ransac",
        FitMethod::Gradient => "gradient",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn bad(key: &str, value: &str, why: &str) -> AppError {
    AppError::validation(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "not a valid number"))
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "expected true or false")),
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line)
            .map_err(|e| AppError::validation(format!("config line {}: {e}", n + 1)))?;
        out.push((k, v));
    }
    Ok(out)
}

/// One `key=value` pair, as given to `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(AppError::validation(format!("expected key = value, found `{s}`"))),
    }
}
