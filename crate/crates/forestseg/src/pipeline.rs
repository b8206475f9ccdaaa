//! End-to-end segmentation and its on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use forestseg_core::crown::{delineate_crowns, InstanceLabeling};
use forestseg_core::stems::{detect_stems, StemDetection};
use forestseg_core::terrain::{csf_classify, rasterize_dtm, RasterDtm, TerrainClassification};
use forestseg_core::{Channel, PointCloud};
use serde::Serialize;

use crate::config::Config;
use crate::error::{AppError, Result};
use crate::io;

/// How input intensities map onto the 16-bit range the thresholds expect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum IntensityScale {
    #[default]
    Native,
    /// Values in `[0, 255]`, multiplied by 257.
    EightBit,
}

impl IntensityScale {
    pub fn apply(self, cloud: &mut PointCloud) -> Result<()> {
        let Some(values) = cloud.intensity() else {
            return Ok(());
        };
        if self == IntensityScale::Native {
            return Ok(());
        }
        if let Some(i) = values.iter().position(|&v| v > 255.0) {
            return Err(AppError::validation(format!(
                "intensity of point {i} is {}, outside the 8-bit range",
                values[i]
            )));
        }
        let scaled = values.iter().map(|v| v * 257.0).collect();
        cloud.set_intensity(scaled)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub terrain: TerrainClassification,
    pub dtm: RasterDtm,
    pub stems: Vec<StemDetection>,
    pub labeling: InstanceLabeling,
    /// Seconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, stage: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((stage, start.elapsed().as_secs_f64()));
    log::info!("{stage}: {:.2} s", start.elapsed().as_secs_f64());
    out
}

/// Ground filtering and terrain raster.
pub fn terrain_model(
    cloud: &PointCloud,
    config: &Config,
    timings: &mut Vec<(&'static str, f64)>,
) -> Result<(TerrainClassification, RasterDtm)> {
    let terrain = timed(timings, "terrain_classification", || csf_classify(cloud, &config.csf))?;
    let ground: Vec<usize> = (0..cloud.len()).filter(|&i| terrain.is_terrain[i]).collect();
    if ground.is_empty() {
        return Err(AppError::validation("no terrain points found; cannot build a terrain model"));
    }
    let dtm = timed(timings, "dtm_construction", || rasterize_dtm(&cloud.select(&ground), &config.dtm))?;
    Ok((terrain, dtm))
}

pub fn segment(cloud: &PointCloud, config: &Config) -> Result<Segmentation> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(AppError::validation("the point cloud is empty"));
    }
    if cloud.intensity().is_none() && config.stems.min_intensity.is_some() {
        log::info!("input has no intensity values; the intensity filter for stem clusters is disabled");
    }
    let mut timings = Vec::new();
    let (terrain, dtm) = terrain_model(cloud, config, &mut timings)?;
    let stems = timed(&mut timings, "stem_detection", || detect_stems(cloud, &dtm, &config.stems))?;
    if stems.is_empty() {
        log::warn!("no stems detected; every point is labeled as non-tree");
    }
    let ground_like = terrain.ground_like(config.csf.tree_threshold);
    let labeling = timed(&mut timings, "crown_delineation", || {
        delineate_crowns(cloud, &dtm, &stems, &ground_like, &config.crown)
    })?;
    Ok(Segmentation {
        terrain,
        dtm,
        stems,
        labeling,
        timings,
    })
}

/// One row per tree instance.
pub fn stem_table(seg: &Segmentation) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| AppError::Internal(format!("stem table: {e}"));
    w.write_record(["tree_id", "x_bh", "y_bh", "dbh_m", "n_layers_used", "diameter_std_m"])
        .map_err(csv_err)?;
    for (tree, &s) in seg.labeling.stem_of_tree.iter().enumerate() {
        let stem = &seg.stems[s];
        w.write_record([
            tree.to_string(),
            format!("{:.4}", stem.position_bh[0]),
            format!("{:.4}", stem.position_bh[1]),
            format!("{:.4}", stem.dbh),
            stem.cluster.best_layers.len().to_string(),
            format!("{:.5}", stem.cluster.diameter_std),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Internal(format!("stem table: {e}")))?;
    String::from_utf8(bytes).map_err(|e| AppError::Internal(e.to_string()))
}

/// Peak resident set size in KiB, where the platform reports it.
pub fn peak_memory_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub input: String,
    pub preset: String,
    pub seed: u64,
    pub intensity_scale: &'static str,
    pub threads: usize,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub points: usize,
    pub terrain_points: usize,
    pub stems_detected: usize,
    pub trees: usize,
    pub stage_seconds: serde_json::Map<String, serde_json::Value>,
    pub total_seconds: f64,
    pub peak_memory_kib: Option<u64>,
    pub outputs: Vec<String>,
}

fn config_echo(config: &Config) -> serde_json::Map<String, serde_json::Value> {
    config
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
        .collect()
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| AppError::Write {
        path: path.to_owned(),
        source,
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| AppError::Write {
        path: dir.to_owned(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stems: usize,
    pub trees: usize,
    pub labeled_cloud: PathBuf,
    pub stem_table: PathBuf,
    pub manifest: PathBuf,
}

/// Segments one file and writes `segmented.{las,txt}`, `stems.csv` and
/// `manifest.json` into `output`.
///
/// The labeled cloud keeps the input format and attributes and gains (or
/// replaces) an integer `instance_id` attribute, `-1` for non-tree points.
pub fn run_segmentation(input: &Path, config: &Config, output: &Path, scale: IntensityScale) -> Result<RunSummary> {
    let start = Instant::now();
    let mut timings = Vec::new();
    let loaded = timed(&mut timings, "read", || io::read_points(input))?;
    let mut working = loaded.cloud.clone();
    scale.apply(&mut working)?;
    let seg = segment(&working, config)?;
    timings.extend(seg.timings.iter().copied());

    create_dir(output)?;
    let labeled_cloud = output.join(format!("segmented.{}", loaded.format.extension()));
    let stem_path = output.join("stems.csv");
    timed(&mut timings, "write", || -> Result<()> {
        let mut labeled = loaded.cloud;
        labeled.set_channel("instance_id", Channel::Int(seg.labeling.labels.clone()))?;
        io::write_points(&labeled_cloud, &labeled, &loaded.format)?;
        write_file(&stem_path, stem_table(&seg)?)
    })?;

    let manifest_path = output.join("manifest.json");
    let manifest = Manifest {
        tool: "forestseg",
        version: env!("CARGO_PKG_VERSION"),
        command: "segment",
        input: input.display().to_string(),
        preset: config.preset.to_string(),
        seed: config.seed(),
        intensity_scale: match scale {
            IntensityScale::Native => "16bit",
            IntensityScale::EightBit => "8bit",
        },
        threads: rayon::current_num_threads(),
        config: config_echo(config),
        points: working.len(),
        terrain_points: seg.terrain.n_terrain(),
        stems_detected: seg.stems.len(),
        trees: seg.labeling.tree_count,
        stage_seconds: timings
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
            .collect(),
        total_seconds: start.elapsed().as_secs_f64(),
        peak_memory_kib: peak_memory_kib(),
        outputs: [&labeled_cloud, &stem_path]
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| AppError::Internal(e.to_string()))?;
    write_file(&manifest_path, json + "\n")?;
    Ok(RunSummary {
        stems: seg.stems.len(),
        trees: seg.labeling.tree_count,
        labeled_cloud,
        stem_table: stem_path,
        manifest: manifest_path,
    })
}

/// ESRI ASCII grid. Raster nodes become cell centres, so the lower-left
/// corner lies half a cell below and left of the first node; rows run from
/// north to south.
pub fn dtm_ascii_grid(dtm: &RasterDtm) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let half = dtm.resolution / 2.0;
    writeln!(out, "ncols {}", dtm.ncols).unwrap();
    writeln!(out, "nrows {}", dtm.nrows).unwrap();
    writeln!(out, "xllcorner {}", dtm.origin[0] - half).unwrap();
    writeln!(out, "yllcorner {}", dtm.origin[1] - half).unwrap();
    writeln!(out, "cellsize {}", dtm.resolution).unwrap();
    writeln!(out, "nodata_value -9999").unwrap();
    for row in (0..dtm.nrows).rev() {
        let line: Vec<String> = (0..dtm.ncols)
            .map(|col| {
                let h = dtm.node(col, row);
                if h.is_finite() {
                    format!("{h:.4}")
                } else {
                    "-9999".to_string()
                }
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Computes the terrain model of one file and writes `dtm.asc` and a
/// manifest.
pub fn run_dtm_export(input: &Path, config: &Config, output: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let mut timings = Vec::new();
    let loaded = timed(&mut timings, "read", || io::read_points(input))?;
    if loaded.cloud.is_empty() {
        return Err(AppError::validation("the point cloud is empty"));
    }
    let (terrain, dtm) = terrain_model(&loaded.cloud, config, &mut timings)?;
    create_dir(output)?;
    let path = output.join("dtm.asc");
    write_file(&path, dtm_ascii_grid(&dtm))?;
    let manifest = serde_json::json!({
        "tool": "forestseg",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "dtm",
        "input": input.display().to_string(),
        "config": config_echo(config),
        "points": loaded.cloud.len(),
        "terrain_points": terrain.n_terrain(),
        "ncols": dtm.ncols,
        "nrows": dtm.nrows,
        "stage_seconds": timings.iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect::<serde_json::Map<_, _>>(),
        "total_seconds": start.elapsed().as_secs_f64(),
        "peak_memory_kib": peak_memory_kib(),
    });
    write_file(
        &output.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_remap() {
        let mut c = PointCloud::from_points(&[[0.0; 3], [1.0; 3]])
            .unwrap()
            .with_intensity(vec![0.0, 255.0])
            .unwrap();
        IntensityScale::EightBit.apply(&mut c).unwrap();
        assert_eq!(c.intensity(), Some(&[0.0, 65535.0][..]));
        assert!(IntensityScale::EightBit.apply(&mut c).is_err());
    }

    #[test]
    fn ascii_grid_layout() {
        let dtm = RasterDtm {
            origin: [10.0, 20.0],
            resolution: 0.5,
            ncols: 2,
            nrows: 2,
            heights: vec![1.0, 2.0, 3.0, 4.0],
        };
        let text = dtm_ascii_grid(&dtm);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "xllcorner 9.75");
        assert_eq!(lines[3], "yllcorner 19.75");
        assert_eq!(lines[6], "3.0000 4.0000");
        assert_eq!(lines[7], "1.0000 2.0000");
    }
}
