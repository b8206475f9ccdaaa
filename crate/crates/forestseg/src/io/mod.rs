//! Point cloud files: LAS and delimited text.

pub mod ascii;
pub mod las;

use std::fs;
use std::path::Path;

use forestseg_core::{Channel, PointCloud};

use crate::error::{AppError, Result};

pub use las::LasInfo;

/// Where a cloud came from; outputs are written in the same format.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceFormat {
    Las(LasInfo),
    Ascii,
}

impl SourceFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            SourceFormat::Las(_) => "las",
            SourceFormat::Ascii => "txt",
        }
    }

    /// LAS for `.las` paths, text otherwise.
    pub fn for_path(path: &Path, cloud: &PointCloud) -> Self {
        if is_las_path(path) {
            SourceFormat::Las(LasInfo::for_cloud(cloud))
        } else {
            SourceFormat::Ascii
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub cloud: PointCloud,
    pub format: SourceFormat,
}

fn is_las_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("las") || e.eq_ignore_ascii_case("laz"))
}

/// Reads LAS (detected by its signature) or delimited text.
pub fn read_points(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|source| AppError::Read {
        path: path.to_owned(),
        source,
    })?;
    if bytes.starts_with(b"LASF") || is_las_path(path) {
        let (cloud, info) = las::parse(&bytes, path)?;
        return Ok(Loaded {
            cloud,
            format: SourceFormat::Las(info),
        });
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| AppError::validation(format!("{}: neither LAS nor UTF-8 text", path.display())))?;
    ascii::parse(&text, path)
}

pub fn write_points(path: &Path, cloud: &PointCloud, format: &SourceFormat) -> Result<()> {
    let bytes = match format {
        SourceFormat::Las(info) => las::format(cloud, info, path)?,
        SourceFormat::Ascii => ascii::format(cloud).into_bytes(),
    };
    fs::write(path, bytes).map_err(|source| AppError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Integer labels of a channel; float channels must hold whole numbers.
pub fn integer_channel(cloud: &PointCloud, name: &str, path: &Path) -> Result<Vec<i64>> {
    match cloud.channel(name) {
        Some(Channel::Int(v)) => Ok(v.clone()),
        Some(Channel::Float(v)) => v
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                if f.fract() == 0.0 && f.abs() < 9.0e15 {
                    Ok(f as i64)
                } else {
                    Err(AppError::validation(format!(
                        "{}: `{name}` of point {i} is not an integer",
                        path.display()
                    )))
                }
            })
            .collect(),
        None => {
            let available: Vec<&str> = cloud.channels().map(|(n, _)| n).collect();
            Err(AppError::validation(format!(
                "{}: no `{name}` attribute (available: {})",
                path.display(),
                if available.is_empty() { "none".to_string() } else { available.join(", ") }
            )))
        }
    }
}
