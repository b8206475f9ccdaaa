//! Evaluation of predicted instance labels against a reference labeling.
//!
//! Both clouds are thinned on a 1 cm voxel grid of the reference cloud
//! before matching. The labeled-mask rule is evaluated on the voxel
//! representatives, after thinning.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use forestseg_core::metrics::{
    aggregate, evaluation_subset, match_instances, segmentation_metrics, DetectionMetrics, MatchResult,
    SegmentationMetrics, EVAL_VOXEL_SIZE,
};
use forestseg_core::{Channel, KdTree, PointCloud, NON_TREE};
use rayon::prelude::*;

use crate::error::{AppError, Result};
use crate::io;

/// Coordinates closer than this identify the same point.
pub const ALIGN_TOLERANCE: f64 = 1e-6;

/// Which points count as labeled for the false-positive rule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabeledMask {
    /// Points whose reference label is not the non-tree id.
    #[default]
    Reference,
    /// Every point.
    All,
    /// Points with a non-zero value in this reference attribute.
    Attribute(String),
}

impl std::str::FromStr for LabeledMask {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reference" => LabeledMask::Reference,
            "all" => LabeledMask::All,
            _ => match s.strip_prefix("attribute:") {
                Some(name) if !name.is_empty() => LabeledMask::Attribute(name.to_string()),
                _ => {
                    return Err(AppError::validation(format!(
                        "unknown labeled mask `{s}` (expected reference, all or attribute:NAME)"
                    )))
                }
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub reference_field: String,
    pub predicted_field: String,
    /// Reference id that marks non-tree points, if not `-1`.
    pub reference_non_tree: i64,
    pub labeled_mask: LabeledMask,
    pub voxel_size: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            reference_field: "instance_id".into(),
            predicted_field: "instance_id".into(),
            reference_non_tree: NON_TREE,
            labeled_mask: LabeledMask::Reference,
            voxel_size: EVAL_VOXEL_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FileEvaluation {
    pub name: String,
    pub points: usize,
    pub matching: MatchResult,
    pub segmentation: SegmentationMetrics,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub files: Vec<FileEvaluation>,
    pub detection: DetectionMetrics,
    pub segmentation: SegmentationMetrics,
}

/// For each reference point, the index of the same point in `predicted`.
///
/// Clouds with identical point order align directly; otherwise points are
/// joined on coordinates within [`ALIGN_TOLERANCE`].
pub fn align(reference: &PointCloud, predicted: &PointCloud) -> Result<Vec<usize>> {
    let same = |i: usize, j: usize| {
        let (a, b) = (reference.point(i), predicted.point(j));
        (0..3).all(|k| (a[k] - b[k]).abs() <= ALIGN_TOLERANCE)
    };
    if reference.len() == predicted.len() && (0..reference.len()).all(|i| same(i, i)) {
        return Ok((0..reference.len()).collect());
    }
    let tree = KdTree::new(&predicted.points());
    (0..reference.len())
        .map(|i| {
            let p = reference.point(i);
            match tree.nearest(&p) {
                Some((j, _)) if same(i, j) => Ok(j),
                _ => Err(AppError::validation(format!(
                    "reference point {i} at ({}, {}, {}) has no predicted point within {ALIGN_TOLERANCE}",
                    p[0], p[1], p[2]
                ))),
            }
        })
        .collect()
}

fn labeled_flags(reference: &PointCloud, labels: &[i64], mask: &LabeledMask, path: &Path) -> Result<Vec<bool>> {
    Ok(match mask {
        LabeledMask::Reference => labels.iter().map(|&l| l != NON_TREE).collect(),
        LabeledMask::All => vec![true; labels.len()],
        LabeledMask::Attribute(name) => match reference.channel(name) {
            Some(Channel::Int(v)) => v.iter().map(|&x| x != 0).collect(),
            Some(Channel::Float(v)) => v.iter().map(|&x| x != 0.0).collect(),
            None => {
                return Err(AppError::validation(format!("{}: no `{name}` attribute", path.display())));
            }
        },
    })
}

/// Metrics for one pair of clouds.
pub fn evaluate_clouds(
    name: &str,
    predicted: &PointCloud,
    reference: &PointCloud,
    opts: &EvalOptions,
    paths: (&Path, &Path),
) -> Result<FileEvaluation> {
    let reference_labels: Vec<i64> = io::integer_channel(reference, &opts.reference_field, paths.1)?
        .into_iter()
        .map(|l| if l == opts.reference_non_tree { NON_TREE } else { l })
        .collect();
    let predicted_labels = io::integer_channel(predicted, &opts.predicted_field, paths.0)?;
    let labeled = labeled_flags(reference, &reference_labels, &opts.labeled_mask, paths.1)?;
    let order = align(reference, predicted)?;

    let subset = evaluation_subset(reference, opts.voxel_size)?;
    let r: Vec<i64> = subset.iter().map(|&i| reference_labels[i]).collect();
    let p: Vec<i64> = subset.iter().map(|&i| predicted_labels[order[i]]).collect();
    let m: Vec<bool> = subset.iter().map(|&i| labeled[i]).collect();
    Ok(FileEvaluation {
        name: name.to_string(),
        points: subset.len(),
        matching: match_instances(&r, &p, Some(&m))?,
        segmentation: segmentation_metrics(&r, &p)?,
    })
}

fn point_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let read_err = |source| AppError::Read {
        path: dir.to_owned(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(read_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Pairs predicted and reference files. Directories pair by file name; the
/// pairs are ordered by name.
pub fn pair_inputs(predicted: &Path, reference: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (predicted.is_dir(), reference.is_dir()) {
        (false, false) => {
            let name = reference.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            Ok(vec![(name, predicted.to_owned(), reference.to_owned())])
        }
        (true, true) => {
            let mut pairs = Vec::new();
            for r in point_files(reference)? {
                let name = r.file_name().unwrap().to_string_lossy().into_owned();
                let p = predicted.join(&name);
                if !p.is_file() {
                    return Err(AppError::validation(format!(
                        "no predicted file {} for reference {}",
                        p.display(),
                        r.display()
                    )));
                }
                pairs.push((name, p, r));
            }
            if pairs.is_empty() {
                return Err(AppError::validation(format!("{}: no reference files", reference.display())));
            }
            Ok(pairs)
        }
        _ => Err(AppError::validation("predicted and reference must both be files or both be directories")),
    }
}

/// Evaluates every file pair and aggregates over files in name order.
pub fn evaluate_paths(predicted: &Path, reference: &Path, opts: &EvalOptions) -> Result<Evaluation> {
    let pairs = pair_inputs(predicted, reference)?;
    let files = pairs
        .par_iter()
        .map(|(name, p, r)| {
            let pred = io::read_points(p)?.cloud;
            let refc = io::read_points(r)?.cloud;
            evaluate_clouds(name, &pred, &refc, opts, (p, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(files))
}

pub fn summarize(files: Vec<FileEvaluation>) -> Evaluation {
    let parts: Vec<(MatchResult, SegmentationMetrics)> =
        files.iter().map(|f| (f.matching.clone(), f.segmentation.clone())).collect();
    let (detection, segmentation) = aggregate(&parts);
    Evaluation {
        files,
        detection,
        segmentation,
    }
}

const COLUMNS: [&str; 11] = [
    "file", "points", "tp", "fp", "fn", "precision", "recall", "f1", "miou", "mprecision", "mrecall",
];

fn row(name: &str, points: usize, m: (usize, usize, usize), d: &DetectionMetrics, s: &SegmentationMetrics) -> [String; 11] {
    let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    [
        name.to_string(),
        points.to_string(),
        m.0.to_string(),
        m.1.to_string(),
        m.2.to_string(),
        f(d.precision),
        f(d.recall),
        f(d.f1),
        f(s.miou),
        f(s.mprecision),
        f(s.mrecall),
    ]
}

fn rows(eval: &Evaluation) -> Vec<[String; 11]> {
    let mut out: Vec<[String; 11]> = eval
        .files
        .iter()
        .map(|f| {
            let m = &f.matching;
            row(&f.name, f.points, (m.tp, m.fp, m.fn_), &m.detection(), &f.segmentation)
        })
        .collect();
    let sum = |g: fn(&MatchResult) -> usize| eval.files.iter().map(|f| g(&f.matching)).sum::<usize>();
    out.push(row(
        "ALL",
        eval.files.iter().map(|f| f.points).sum(),
        (sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.fn_)),
        &eval.detection,
        &eval.segmentation,
    ));
    out
}

/// Per-file rows followed by an `ALL` row; undefined metrics are `NA`.
pub fn report_csv(eval: &Evaluation) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| AppError::Internal(format!("metrics report: {e}"));
    w.write_record(COLUMNS).map_err(err)?;
    for r in rows(eval) {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AppError::Internal(e.to_string()))
}

pub fn report_table(eval: &Evaluation) -> String {
    let body = rows(eval);
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|k| body.iter().map(|r| r[k].len()).chain([COLUMNS[k].len()]).max().unwrap())
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (k, c) in cells.iter().enumerate() {
            if k == 0 {
                write!(out, "{c:<w$}", w = widths[k]).unwrap();
            } else {
                write!(out, "  {c:>w$}", w = widths[k]).unwrap();
            }
        }
        out.push('\n');
    };
    line(&mut out, &COLUMNS);
    for r in &body {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(points: &[[f64; 3]], ids: &[i64]) -> PointCloud {
        let mut c = PointCloud::from_points(points).unwrap();
        c.set_channel("instance_id", Channel::Int(ids.to_vec())).unwrap();
        c
    }

    #[test]
    fn shuffled_points_join_on_coordinates() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let reference = labeled(&pts, &[0, 0, 1]);
        let shuffled = labeled(&[pts[2], pts[0], [1.0 + 5e-7, 0.0, 0.0]], &[7, 3, 3]);
        assert_eq!(align(&reference, &shuffled).unwrap(), [1, 2, 0]);
        let e = evaluate_clouds("t", &shuffled, &reference, &EvalOptions::default(), (Path::new("p"), Path::new("r")))
            .unwrap();
        assert_eq!((e.matching.tp, e.matching.fp, e.matching.fn_), (2, 0, 0));
    }

    #[test]
    fn unalignable_names_first_point() {
        let reference = labeled(&[[0.0; 3], [1.0, 1.0, 1.0]], &[0, 0]);
        let predicted = labeled(&[[0.0; 3], [1.0, 1.0, 1.1]], &[0, 0]);
        let e = align(&reference, &predicted).unwrap_err().to_string();
        assert!(e.contains("reference point 1"), "{e}");
    }

    #[test]
    fn mask_parsing() {
        assert_eq!("all".parse::<LabeledMask>().unwrap(), LabeledMask::All);
        assert_eq!(
            "attribute:labeled".parse::<LabeledMask>().unwrap(),
            LabeledMask::Attribute("labeled".into())
        );
        assert!("attribute:".parse::<LabeledMask>().is_err());
    }

    #[test]
    fn partial_labels_suppress_false_positives() {
        // predicted instance 9 lies entirely in the unlabeled region
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let reference = labeled(&pts, &[0, 0, 0, -1, -1, -1, -1, -1, -1, -1]);
        let predicted = labeled(&pts, &[0, 0, 0, 9, 9, 9, 9, -1, -1, -1]);
        let opts = EvalOptions::default();
        let e = evaluate_clouds("t", &predicted, &reference, &opts, (Path::new("p"), Path::new("r"))).unwrap();
        assert_eq!((e.matching.tp, e.matching.fp, e.matching.fn_), (1, 0, 0));
        let all = EvalOptions {
            labeled_mask: LabeledMask::All,
            ..opts
        };
        let e = evaluate_clouds("t", &predicted, &reference, &all, (Path::new("p"), Path::new("r"))).unwrap();
        assert_eq!(e.matching.fp, 1);
    }

    #[test]
    fn reference_non_tree_id_is_remapped() {
        let pts: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let reference = labeled(&pts, &[0, 0, 5, 5]);
        let predicted = labeled(&pts, &[-1, -1, 2, 2]);
        let opts = EvalOptions {
            reference_non_tree: 0,
            ..EvalOptions::default()
        };
        let e = evaluate_clouds("t", &predicted, &reference, &opts, (Path::new("p"), Path::new("r"))).unwrap();
        assert_eq!((e.matching.tp, e.matching.fp, e.matching.fn_), (1, 0, 0));
    }
}
