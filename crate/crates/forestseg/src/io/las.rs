//! Uncompressed LAS 1.0–1.4 reading (point formats 0–10) and LAS 1.4 writing
//! (point format 6).
//!
//! Extra-bytes attributes become cloud channels on read; on write every
//! cloud channel except `classification` is stored as an extra-bytes
//! attribute (`instance_id` as i32, other integers as i64, floats as f64).

use std::path::Path;

use forestseg_core::{Channel, PointCloud};

use crate::error::{AppError, Result};

const SIGNATURE: &[u8; 4] = b"LASF";
const HEADER_SIZE_14: usize = 375;
const VLR_HEADER: usize = 54;
const EXTRA_BYTES_RECORD: u16 = 4;
const EXTRA_BYTES_ENTRY: usize = 192;
const WRITE_FORMAT: u8 = 6;
const WRITE_BASE_LEN: usize = 30;

/// Header properties carried from input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct LasInfo {
    pub version: (u8, u8),
    pub point_format: u8,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

impl LasInfo {
    /// Millimetre quantization anchored at the floor of the cloud minimum.
    pub fn for_cloud(cloud: &PointCloud) -> Self {
        let offset = cloud.bounds().map_or([0.0; 3], |(lo, _)| lo.map(f64::floor));
        LasInfo {
            version: (1, 4),
            point_format: WRITE_FORMAT,
            scale: [0.001; 3],
            offset,
        }
    }
}

fn base_record_len(format: u8) -> Option<usize> {
    Some(match format {
        0 => 20,
        1 => 28,
        2 => 26,
        3 => 34,
        4 => 57,
        5 => 63,
        6 => 30,
        7 => 36,
        8 => 38,
        9 => 59,
        10 => 67,
        _ => return None,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Reader<'_> {
    fn bad(&self, what: impl std::fmt::Display) -> AppError {
        AppError::validation(format!("{}: {what}", self.path.display()))
    }

    fn take<const N: usize>(&self, at: usize) -> Result<[u8; N]> {
        self.bytes
            .get(at..at + N)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| self.bad("truncated LAS file"))
    }

    fn u8(&self, at: usize) -> Result<u8> {
        Ok(self.take::<1>(at)?[0])
    }
    fn u16(&self, at: usize) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(at)?))
    }
    fn u32(&self, at: usize) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(at)?))
    }
    fn u64(&self, at: usize) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(at)?))
    }
    fn f64(&self, at: usize) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(at)?))
    }
    fn i32(&self, at: usize) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(at)?))
    }
}

#[derive(Debug, Clone)]
struct ExtraAttribute {
    name: String,
    data_type: u8,
    offset: usize,
    scale: Option<f64>,
    add: Option<f64>,
}

fn extra_size(data_type: u8, options: u8) -> Option<usize> {
    Some(match data_type {
        0 => options as usize,
        1 | 2 => 1,
        3 | 4 => 2,
        5 | 6 | 9 => 4,
        7 | 8 | 10 => 8,
        _ => return None,
    })
}

fn parse_extra_bytes(r: &Reader, at: usize, len: usize, base: usize) -> Result<Vec<ExtraAttribute>> {
    let mut attrs = Vec::new();
    let mut offset = base;
    for e in 0..len / EXTRA_BYTES_ENTRY {
        let d = at + e * EXTRA_BYTES_ENTRY;
        let data_type = r.u8(d + 2)?;
        let options = r.u8(d + 3)?;
        let raw_name = r.take::<32>(d + 4)?;
        let end = raw_name.iter().position(|&b| b == 0).unwrap_or(32);
        let name = String::from_utf8_lossy(&raw_name[..end]).trim().to_string();
        let size = extra_size(data_type, options)
            .ok_or_else(|| r.bad(format!("unsupported extra-bytes type {data_type} for `{name}`")))?;
        if data_type != 0 {
            attrs.push(ExtraAttribute {
                name,
                data_type,
                offset,
                scale: (options & 0x08 != 0).then(|| r.f64(d + 112)).transpose()?,
                add: (options & 0x10 != 0).then(|| r.f64(d + 136)).transpose()?,
            });
        }
        offset += size;
    }
    Ok(attrs)
}

fn read_extra(rec: &[u8], a: &ExtraAttribute) -> (Option<i64>, f64) {
    let b = &rec[a.offset..];
    let int = match a.data_type {
        1 => Some(b[0] as i64),
        2 => Some(b[0] as i8 as i64),
        3 => Some(u16::from_le_bytes([b[0], b[1]]) as i64),
        4 => Some(i16::from_le_bytes([b[0], b[1]]) as i64),
        5 => Some(u32::from_le_bytes(b[..4].try_into().unwrap()) as i64),
        6 => Some(i32::from_le_bytes(b[..4].try_into().unwrap()) as i64),
        7 => Some(u64::from_le_bytes(b[..8].try_into().unwrap()) as i64),
        8 => Some(i64::from_le_bytes(b[..8].try_into().unwrap())),
        _ => None,
    };
    let float = match a.data_type {
        9 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        10 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        _ => int.unwrap_or_default() as f64,
    };
    (int, float)
}

/// Parses a LAS file. An intensity column that is zero everywhere is
/// treated as absent.
pub fn parse(bytes: &[u8], path: &Path) -> Result<(PointCloud, LasInfo)> {
    let r = Reader { bytes, path };
    if r.take::<4>(0)? != *SIGNATURE {
        return Err(r.bad("not a LAS file"));
    }
    let version = (r.u8(24)?, r.u8(25)?);
    let header_size = r.u16(94)? as usize;
    let data_offset = r.u32(96)? as usize;
    let n_vlrs = r.u32(100)?;
    let raw_format = r.u8(104)?;
    if raw_format & 0xC0 != 0 {
        return Err(r.bad("compressed (LAZ) point data is not supported"));
    }
    let format = raw_format & 0x3F;
    let record_len = r.u16(105)? as usize;
    let base = base_record_len(format).ok_or_else(|| r.bad(format!("unsupported point format {format}")))?;
    if record_len < base {
        return Err(r.bad(format!("record length {record_len} too short for point format {format}")));
    }
    let mut count = r.u32(107)? as u64;
    if version >= (1, 4) && header_size >= HEADER_SIZE_14 {
        let long = r.u64(247)?;
        if long != 0 {
            count = long;
        }
    }
    let scale = [r.f64(131)?, r.f64(139)?, r.f64(147)?];
    let offset = [r.f64(155)?, r.f64(163)?, r.f64(171)?];

    let mut extras = Vec::new();
    let mut at = header_size;
    for _ in 0..n_vlrs {
        let user = r.take::<16>(at + 2)?;
        let id = r.u16(at + 18)?;
        let len = r.u16(at + 20)? as usize;
        if user.starts_with(b"LASF_Spec") && id == EXTRA_BYTES_RECORD {
            extras = parse_extra_bytes(&r, at + VLR_HEADER, len, base)?;
        }
        at += VLR_HEADER + len;
    }
    if let Some(a) = extras.iter().find(|a| a.offset + extra_size(a.data_type, 0).unwrap() > record_len) {
        return Err(r.bad(format!("extra attribute `{}` exceeds the point record", a.name)));
    }

    let n = count as usize;
    let end = data_offset + n * record_len;
    if bytes.len() < end {
        return Err(r.bad(format!("file holds fewer than the {n} points its header declares")));
    }
    let (mut x, mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut intensity = Vec::with_capacity(n);
    let mut classification = Vec::with_capacity(n);
    let mut extra_values: Vec<(Vec<i64>, Vec<f64>)> = vec![Default::default(); extras.len()];
    for i in 0..n {
        let o = data_offset + i * record_len;
        let rec = &bytes[o..o + record_len];
        x.push(r.i32(o)? as f64 * scale[0] + offset[0]);
        y.push(r.i32(o + 4)? as f64 * scale[1] + offset[1]);
        z.push(r.i32(o + 8)? as f64 * scale[2] + offset[2]);
        intensity.push(u16::from_le_bytes([rec[12], rec[13]]) as f64);
        classification.push(if format <= 5 { rec[15] & 0x1F } else { rec[16] } as i64);
        for (a, (ints, floats)) in extras.iter().zip(&mut extra_values) {
            let (int, float) = read_extra(rec, a);
            if let Some(v) = int {
                ints.push(v);
            }
            floats.push(float * a.scale.unwrap_or(1.0) + a.add.unwrap_or(0.0));
        }
    }

    let mut cloud = PointCloud::new(x, y, z).map_err(|e| r.bad(e))?;
    if intensity.iter().any(|&v| v != 0.0) {
        cloud.set_intensity(intensity)?;
    }
    cloud.set_channel("classification", Channel::Int(classification))?;
    for (a, (ints, floats)) in extras.iter().zip(extra_values) {
        let channel = if a.data_type <= 8 && a.scale.is_none() && a.add.is_none() {
            Channel::Int(ints)
        } else {
            Channel::Float(floats)
        };
        cloud.set_channel(a.name.clone(), channel)?;
    }
    let info = LasInfo {
        version,
        point_format: format,
        scale,
        offset,
    };
    Ok((cloud, info))
}

fn put_name(buf: &mut [u8], name: &str) {
    let b = name.as_bytes();
    let n = b.len().min(buf.len());
    buf[..n].copy_from_slice(&b[..n]);
}

/// Extra-bytes data type code and size for a channel.
fn extra_type(name: &str, channel: &Channel) -> (u8, usize) {
    match channel {
        Channel::Int(_) if name == "instance_id" => (6, 4),
        Channel::Int(_) => (8, 8),
        Channel::Float(_) => (10, 8),
    }
}

/// Serializes the cloud as LAS 1.4, point format 6, quantized with the
/// scale and offset of `info`.
pub fn format(cloud: &PointCloud, info: &LasInfo, path: &Path) -> Result<Vec<u8>> {
    let extras: Vec<(&str, &Channel)> = cloud.channels().filter(|(name, _)| *name != "classification").collect();
    if extras.iter().any(|(name, _)| name.len() > 32) {
        return Err(AppError::validation(format!(
            "{}: LAS attribute names are limited to 32 bytes",
            path.display()
        )));
    }
    let classification = match cloud.channel("classification") {
        Some(Channel::Int(v)) => Some(v),
        _ => None,
    };
    let extra_len: usize = extras.iter().map(|(n, c)| extra_type(n, c).1).sum();
    let record_len = WRITE_BASE_LEN + extra_len;
    let vlr_len = if extras.is_empty() { 0 } else { VLR_HEADER + EXTRA_BYTES_ENTRY * extras.len() };
    let data_offset = HEADER_SIZE_14 + vlr_len;
    let n = cloud.len();

    let quantize = |v: f64, axis: usize, i: usize| -> Result<i32> {
        let q = ((v - info.offset[axis]) / info.scale[axis]).round();
        if q.abs() > i32::MAX as f64 {
            return Err(AppError::validation(format!(
                "{}: point {i} does not fit the LAS coordinate range",
                path.display()
            )));
        }
        Ok(q as i32)
    };

    let mut out = vec![0u8; data_offset];
    out[..4].copy_from_slice(SIGNATURE);
    out[24] = 1;
    out[25] = 4;
    put_name(&mut out[26..58], "forestseg");
    put_name(&mut out[58..90], concat!("forestseg ", env!("CARGO_PKG_VERSION")));
    out[94..96].copy_from_slice(&(HEADER_SIZE_14 as u16).to_le_bytes());
    out[96..100].copy_from_slice(&(data_offset as u32).to_le_bytes());
    out[100..104].copy_from_slice(&(u32::from(!extras.is_empty())).to_le_bytes());
    out[104] = WRITE_FORMAT;
    out[105..107].copy_from_slice(&(record_len as u16).to_le_bytes());
    for k in 0..3 {
        out[131 + 8 * k..139 + 8 * k].copy_from_slice(&info.scale[k].to_le_bytes());
        out[155 + 8 * k..163 + 8 * k].copy_from_slice(&info.offset[k].to_le_bytes());
    }
    let (lo, hi) = cloud.bounds().unwrap_or(([0.0; 3], [0.0; 3]));
    for k in 0..3 {
        out[179 + 16 * k..187 + 16 * k].copy_from_slice(&hi[k].to_le_bytes());
        out[187 + 16 * k..195 + 16 * k].copy_from_slice(&lo[k].to_le_bytes());
    }
    out[247..255].copy_from_slice(&(n as u64).to_le_bytes());
    out[255..263].copy_from_slice(&(n as u64).to_le_bytes());

    if !extras.is_empty() {
        let v = HEADER_SIZE_14;
        put_name(&mut out[v + 2..v + 18], "LASF_Spec");
        out[v + 18..v + 20].copy_from_slice(&EXTRA_BYTES_RECORD.to_le_bytes());
        out[v + 20..v + 22].copy_from_slice(&((EXTRA_BYTES_ENTRY * extras.len()) as u16).to_le_bytes());
        put_name(&mut out[v + 22..v + 54], "Extra Bytes Record");
        for (e, (name, channel)) in extras.iter().enumerate() {
            let d = v + VLR_HEADER + e * EXTRA_BYTES_ENTRY;
            out[d + 2] = extra_type(name, channel).0;
            put_name(&mut out[d + 4..d + 36], name);
        }
    }

    out.reserve(n * record_len);
    let intensity = cloud.intensity();
    for i in 0..n {
        let [x, y, z] = cloud.point(i);
        out.extend_from_slice(&quantize(x, 0, i)?.to_le_bytes());
        out.extend_from_slice(&quantize(y, 1, i)?.to_le_bytes());
        out.extend_from_slice(&quantize(z, 2, i)?.to_le_bytes());
        let value = intensity.map_or(0, |v| v[i].round() as u16);
        out.extend_from_slice(&value.to_le_bytes());
        // single return, no flags
        out.extend_from_slice(&[0x11, 0]);
        out.push(classification.map_or(0, |c| c[i].clamp(0, 255) as u8));
        out.extend_from_slice(&[0; 13]);
        for (name, channel) in &extras {
            match (channel, extra_type(name, channel).0) {
                (Channel::Int(v), 6) => {
                    let value = i32::try_from(v[i]).map_err(|_| {
                        AppError::validation(format!("{}: `{name}` of point {i} exceeds i32", path.display()))
                    })?;
                    out.extend_from_slice(&value.to_le_bytes());
                }
                (Channel::Int(v), _) => out.extend_from_slice(&v[i].to_le_bytes()),
                (Channel::Float(v), _) => out.extend_from_slice(&v[i].to_le_bytes()),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        let mut c = PointCloud::from_points(&[[10.001, 20.002, 1.5], [11.0, -3.25, 0.0], [10.5, 0.0, 7.125]])
            .unwrap()
            .with_intensity(vec![0.0, 1234.0, 65535.0])
            .unwrap();
        c.set_channel("instance_id", Channel::Int(vec![-1, 0, 7])).unwrap();
        c.set_channel("classification", Channel::Int(vec![2, 4, 5])).unwrap();
        c.set_channel("weight", Channel::Float(vec![0.5, -1.0, 2.25])).unwrap();
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let info = LasInfo::for_cloud(&c);
        let bytes = format(&c, &info, Path::new("t")).unwrap();
        let (back, back_info) = parse(&bytes, Path::new("t")).unwrap();
        assert_eq!(back_info, info);
        for (a, b) in back.points().iter().zip(c.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9, "{a:?} vs {b:?}");
            }
        }
        assert_eq!(back.intensity(), c.intensity());
        for name in ["instance_id", "classification", "weight"] {
            assert_eq!(back.channel(name), c.channel(name), "{name}");
        }
        assert_eq!(format(&back, &back_info, Path::new("t")).unwrap(), bytes);
    }

    #[test]
    fn legacy_format_with_extra_bytes() {
        // hand-built LAS 1.2, point format 1, one u16 extra attribute
        let record_len = 28 + 2;
        let mut f = vec![0u8; 227 + VLR_HEADER + EXTRA_BYTES_ENTRY];
        f[..4].copy_from_slice(SIGNATURE);
        f[24] = 1;
        f[25] = 2;
        f[94..96].copy_from_slice(&227u16.to_le_bytes());
        f[96..100].copy_from_slice(&((227 + VLR_HEADER + EXTRA_BYTES_ENTRY) as u32).to_le_bytes());
        f[100..104].copy_from_slice(&1u32.to_le_bytes());
        f[104] = 1;
        f[105..107].copy_from_slice(&(record_len as u16).to_le_bytes());
        f[107..111].copy_from_slice(&2u32.to_le_bytes());
        for k in 0..3 {
            f[131 + 8 * k..139 + 8 * k].copy_from_slice(&0.01f64.to_le_bytes());
        }
        f[155..163].copy_from_slice(&100.0f64.to_le_bytes());
        let v = 227;
        f[v + 2..v + 11].copy_from_slice(b"LASF_Spec");
        f[v + 18..v + 20].copy_from_slice(&4u16.to_le_bytes());
        f[v + 20..v + 22].copy_from_slice(&(EXTRA_BYTES_ENTRY as u16).to_le_bytes());
        let d = v + VLR_HEADER;
        f[d + 2] = 3;
        f[d + 4..d + 10].copy_from_slice(b"treeID");
        for (xi, id, class) in [(150i32, 3u16, 0x25u8), (-20, 0, 2)] {
            let mut rec = vec![0u8; record_len];
            rec[..4].copy_from_slice(&xi.to_le_bytes());
            rec[8..12].copy_from_slice(&5i32.to_le_bytes());
            rec[12..14].copy_from_slice(&300u16.to_le_bytes());
            rec[15] = class;
            rec[28..30].copy_from_slice(&id.to_le_bytes());
            f.extend_from_slice(&rec);
        }
        let (c, info) = parse(&f, Path::new("t")).unwrap();
        assert_eq!(info.point_format, 1);
        assert_eq!(c.x(), &[101.5, 99.8]);
        assert_eq!(c.z(), &[0.05, 0.05]);
        assert_eq!(c.intensity(), Some(&[300.0, 300.0][..]));
        assert_eq!(c.channel("classification"), Some(&Channel::Int(vec![5, 2])));
        assert_eq!(c.channel("treeID"), Some(&Channel::Int(vec![3, 0])));
    }

    #[test]
    fn zero_intensity_counts_as_absent() {
        let c = PointCloud::from_points(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        let bytes = format(&c, &LasInfo::for_cloud(&c), Path::new("t")).unwrap();
        let (back, _) = parse(&bytes, Path::new("t")).unwrap();
        assert!(back.intensity().is_none());
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let c = sample();
        let bytes = format(&c, &LasInfo::for_cloud(&c), Path::new("t")).unwrap();
        assert!(parse(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
        assert!(parse(b"PK\x03\x04 not a point file", Path::new("t")).is_err());
        let mut laz = bytes.clone();
        laz[104] |= 0x80;
        assert!(parse(&laz, Path::new("t")).unwrap_err().to_string().contains("LAZ"));
    }
}
