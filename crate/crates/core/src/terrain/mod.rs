//! Terrain classification and the rasterized terrain model.
//!
//! [`csf_classify`] separates terrain from everything above it with a cloth
//! simulation over the inverted cloud. [`rasterize_dtm`] interpolates the
//! terrain points onto a regular grid with k-nearest-neighbor inverse distance
//! weighting, and [`RasterDtm::height_above_ground`] normalizes arbitrary
//! points against that grid by bilinear interpolation.

mod csf;
mod dtm;

pub use csf::{csf_classify, CsfParams, TerrainClassification};
pub use dtm::{idw_estimate, interpolate_grid, rasterize_dtm, DtmParams, RasterDtm};
