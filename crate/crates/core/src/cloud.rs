//! Columnar point storage.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest intensity value representable in a LAS point record.
pub const MAX_INTENSITY: f64 = 65535.0;

/// A named per-point attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

impl Channel {
    pub fn len(&self) -> usize {
        match self {
            Channel::Int(v) => v.len(),
            Channel::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, indices: &[usize]) -> Channel {
        match self {
            Channel::Int(v) => Channel::Int(indices.iter().map(|&i| v[i]).collect()),
            Channel::Float(v) => Channel::Float(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Point cloud with x/y/z columns, optional intensity and extra channels.
///
/// Every column has exactly [`PointCloud::len`] entries. Clouds built through
/// [`PointCloud::new`] are validated: coordinates are finite and intensity
/// lies in `[0, 65535]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    intensity: Option<Vec<f64>>,
    channels: BTreeMap<String, Channel>,
}

impl PointCloud {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let n = x.len();
        for (what, len) in [("y", y.len()), ("z", z.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        for i in 0..n {
            if !(x[i].is_finite() && y[i].is_finite() && z[i].is_finite()) {
                return Err(Error::InvalidPoint {
                    index: i,
                    reason: "non-finite coordinate",
                });
            }
        }
        Ok(PointCloud {
            x,
            y,
            z,
            intensity: None,
            channels: BTreeMap::new(),
        })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        PointCloud::new(
            points.iter().map(|p| p[0]).collect(),
            points.iter().map(|p| p[1]).collect(),
            points.iter().map(|p| p[2]).collect(),
        )
    }

    pub fn with_intensity(mut self, intensity: Vec<f64>) -> Result<Self> {
        self.set_intensity(intensity)?;
        Ok(self)
    }

    pub fn set_intensity(&mut self, intensity: Vec<f64>) -> Result<()> {
        if intensity.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "intensity",
                expected: self.len(),
                actual: intensity.len(),
            });
        }
        if let Some(index) = intensity
            .iter()
            .position(|v| !(0.0..=MAX_INTENSITY).contains(v))
        {
            return Err(Error::InvalidPoint {
                index,
                reason: "intensity outside [0, 65535]",
            });
        }
        self.intensity = Some(intensity);
        Ok(())
    }

    pub fn set_channel(&mut self, name: impl Into<String>, channel: Channel) -> Result<()> {
        if channel.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "channel",
                expected: self.len(),
                actual: channel.len(),
            });
        }
        self.channels.insert(name.into(), channel);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        self.intensity.as_deref()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.get(name)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &Channel)> {
        self.channels.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn remove_channel(&mut self, name: &str) -> Option<Channel> {
        self.channels.remove(name)
    }

    #[inline]
    pub fn point(&self, i: usize) -> [f64; 3] {
        [self.x[i], self.y[i], self.z[i]]
    }

    #[inline]
    pub fn xy(&self, i: usize) -> [f64; 2] {
        [self.x[i], self.y[i]]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn points_xy(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.xy(i)).collect()
    }

    /// Copies the listed points, in the given order, with all channels.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        PointCloud {
            x: pick(&self.x),
            y: pick(&self.y),
            z: pick(&self.z),
            intensity: self.intensity.as_ref().map(pick),
            channels: self
                .channels
                .iter()
                .map(|(k, c)| (k.clone(), c.select(indices)))
                .collect(),
        }
    }

    /// Axis-aligned bounding box `(min, max)`, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        if self.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..self.len() {
            let p = self.point(i);
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_nan_with_index() {
        let err = PointCloud::new(vec![0.0, 1.0], vec![0.0, f64::NAN], vec![0.0, 0.0]).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidPoint {
                index: 1,
                reason: "non-finite coordinate"
            }
        );
    }

    #[test]
    fn rejects_ragged_columns() {
        assert!(matches!(
            PointCloud::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn intensity_range() {
        let c = PointCloud::from_points(&[[0.0; 3], [1.0; 3]]).unwrap();
        assert!(c.clone().with_intensity(vec![0.0, 65535.0]).is_ok());
        assert!(c.clone().with_intensity(vec![-1.0, 5.0]).is_err());
        assert!(c.with_intensity(vec![70000.0, 5.0]).is_err());
    }

    #[test]
    fn select_carries_channels() {
        let mut c = PointCloud::from_points(&[[0.0; 3], [1.0; 3], [2.0; 3]]).unwrap();
        c.set_channel("id", Channel::Int(vec![7, 8, 9])).unwrap();
        let s = c.select(&[2, 0]);
        assert_eq!(s.x(), &[2.0, 0.0]);
        assert_eq!(s.channel("id"), Some(&Channel::Int(vec![9, 7])));
    }
}
