//! Delimited text point files: `x y z [intensity] [...]`, separated by
//! whitespace or commas, with an optional header line naming the columns.

use std::fmt::Write as _;
use std::path::Path;

use forestseg_core::{Channel, PointCloud};

use super::{Loaded, SourceFormat};
use crate::error::{AppError, Result};

fn split(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty())
}

fn is_int(token: &str) -> bool {
    let t = token.strip_prefix('-').unwrap_or(token);
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

pub fn parse(text: &str, path: &Path) -> Result<Loaded> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .peekable();
    let Some(&(_, first)) = lines.peek() else {
        return Err(AppError::validation(format!("{}: no points", path.display())));
    };
    let header: Option<Vec<String>> = if split(first).any(|t| t.parse::<f64>().is_err()) {
        let names = split(first).map(|t| t.to_ascii_lowercase()).collect();
        lines.next();
        Some(names)
    } else {
        None
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut integral: Vec<bool> = Vec::new();
    let mut n = 0usize;
    for (line_no, line) in lines {
        let tokens: Vec<&str> = split(line).collect();
        if columns.is_empty() {
            if tokens.len() < 3 {
                return Err(AppError::validation(format!(
                    "{}:{}: expected at least x y z",
                    path.display(),
                    line_no + 1
                )));
            }
            columns = vec![Vec::new(); tokens.len()];
            integral = vec![true; tokens.len()];
        }
        if tokens.len() != columns.len() {
            return Err(AppError::validation(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                line_no + 1,
                columns.len(),
                tokens.len()
            )));
        }
        for (k, t) in tokens.iter().enumerate() {
            let v: f64 = t.parse().map_err(|_| {
                AppError::validation(format!("{}:{}: not a number: {t}", path.display(), line_no + 1))
            })?;
            integral[k] &= is_int(t);
            columns[k].push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(AppError::validation(format!("{}: no points", path.display())));
    }

    let names: Vec<String> = match header {
        Some(h) if h.len() == columns.len() => h,
        Some(h) => {
            return Err(AppError::validation(format!(
                "{}: header names {} columns, data has {}",
                path.display(),
                h.len(),
                columns.len()
            )))
        }
        None => (0..columns.len())
            .map(|k| match k {
                0 => "x".into(),
                1 => "y".into(),
                2 => "z".into(),
                3 => "intensity".into(),
                _ => format!("col{k}"),
            })
            .collect(),
    };
    let find = |name: &str| names.iter().position(|c| c == name);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(AppError::validation(format!("{}: header lacks x, y or z", path.display())));
    };
    let mut cloud = PointCloud::new(columns[ix].clone(), columns[iy].clone(), columns[iz].clone())
        .map_err(|e| AppError::validation(format!("{}: {e}", path.display())))?;
    for (k, name) in names.iter().enumerate() {
        if k == ix || k == iy || k == iz {
            continue;
        }
        if name == "intensity" {
            cloud
                .set_intensity(columns[k].clone())
                .map_err(|e| AppError::validation(format!("{}: {e}", path.display())))?;
            continue;
        }
        let channel = if integral[k] {
            Channel::Int(columns[k].iter().map(|&v| v as i64).collect())
        } else {
            Channel::Float(columns[k].clone())
        };
        cloud.set_channel(name.clone(), channel)?;
    }
    Ok(Loaded {
        cloud,
        format: SourceFormat::Ascii,
    })
}

fn push_value(out: &mut String, channel: &Channel, i: usize) {
    match channel {
        Channel::Int(v) => write!(out, "{}", v[i]),
        Channel::Float(v) => write!(out, "{}", v[i]),
    }
    .expect("writing to a String cannot fail");
}

/// Text with a header line; coordinates use the shortest exact decimal form.
pub fn format(cloud: &PointCloud) -> String {
    let channels: Vec<(&str, &Channel)> = cloud.channels().collect();
    let mut out = String::from("x y z");
    if cloud.intensity().is_some() {
        out.push_str(" intensity");
    }
    for (name, _) in &channels {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..cloud.len() {
        let [x, y, z] = cloud.point(i);
        write!(out, "{x} {y} {z}").unwrap();
        if let Some(intensity) = cloud.intensity() {
            write!(out, " {}", intensity[i]).unwrap();
        }
        for (_, c) in &channels {
            out.push(' ');
            push_value(&mut out, c, i);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headerless_with_intensity() {
        let l = parse("0 0 0 10\n1,2,3,20\n", Path::new("t")).unwrap();
        assert_eq!(l.cloud.len(), 2);
        assert_eq!(l.cloud.intensity(), Some(&[10.0, 20.0][..]));
        assert_eq!(l.cloud.point(1), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn header_names_channels() {
        let l = parse("X Y Z treeID\n0 0 0 -1\n1 1 1 4\n", Path::new("t")).unwrap();
        assert_eq!(l.cloud.channel("treeid"), Some(&Channel::Int(vec![-1, 4])));
        assert!(l.cloud.intensity().is_none());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse("", Path::new("t")).is_err());
        assert!(parse("0 0\n", Path::new("t")).is_err());
        assert!(parse("0 0 0\n1 1\n", Path::new("t")).is_err());
        let e = parse("0 0 0\nnan 0 0\n", Path::new("t")).unwrap_err();
        assert!(e.to_string().contains("point 1"), "{e}");
    }

    #[test]
    fn round_trip() {
        let mut c = PointCloud::from_points(&[[0.1, 0.2, 0.3], [1e6 + 0.125, -2.0, 3.5]])
            .unwrap()
            .with_intensity(vec![1.0, 65535.0])
            .unwrap();
        c.set_channel("instance_id", Channel::Int(vec![-1, 3])).unwrap();
        let back = parse(&format(&c), Path::new("t")).unwrap();
        assert_eq!(back.cloud.points(), c.points());
        assert_eq!(back.cloud.intensity(), c.intensity());
        assert_eq!(back.cloud.channel("instance_id"), c.channel("instance_id"));
    }
}
