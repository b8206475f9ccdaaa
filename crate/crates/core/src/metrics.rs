//! Instance detection and segmentation metrics.
//!
//! Labelings are per-point instance ids with [`NON_TREE`] for points outside
//! every instance. Both labelings of a comparison must cover the same points,
//! normally after thinning with [`evaluation_subset`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::voxel::voxel_downsample;
use crate::NON_TREE;

/// Voxel size used to thin clouds before evaluation.
pub const EVAL_VOXEL_SIZE: f64 = 0.01;

/// Indices of the voxel representatives of `cloud` at `voxel_size`, in voxel
/// order. Labels taken at these indices form the thinned labelings.
pub fn evaluation_subset(cloud: &PointCloud, voxel_size: f64) -> Result<Vec<usize>> {
    let (_, map) = voxel_downsample(cloud, voxel_size)?;
    Ok(map.representative_of_voxel)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub reference: i64,
    pub predicted: i64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Pairs with IoU above 0.5, ordered by reference id.
    pub pairs: Vec<MatchedPair>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchResult {
    pub fn detection(&self) -> DetectionMetrics {
        detection_metrics(self.tp, self.fp, self.fn_)
    }
}

/// Precision, recall and F1; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Best predicted partner of one reference instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestMatch {
    pub reference: i64,
    /// `None` when no predicted instance overlaps the reference.
    pub predicted: Option<i64>,
    pub iou: f64,
    /// `|R ∩ P| / |P|`.
    pub precision: f64,
    /// `|R ∩ P| / |R|`.
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMetrics {
    pub miou: Option<f64>,
    pub mprecision: Option<f64>,
    pub mrecall: Option<f64>,
    pub per_reference: Vec<BestMatch>,
}

struct Overlap {
    reference: BTreeMap<i64, usize>,
    predicted: BTreeMap<i64, usize>,
    intersection: BTreeMap<(i64, i64), usize>,
}

fn overlap(reference: &[i64], predicted: &[i64]) -> Result<Overlap> {
    if reference.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            what: "predicted labels",
            expected: reference.len(),
            actual: predicted.len(),
        });
    }
    let mut o = Overlap {
        reference: BTreeMap::new(),
        predicted: BTreeMap::new(),
        intersection: BTreeMap::new(),
    };
    for (&r, &p) in reference.iter().zip(predicted) {
        if r != NON_TREE {
            *o.reference.entry(r).or_default() += 1;
        }
        if p != NON_TREE {
            *o.predicted.entry(p).or_default() += 1;
        }
        if r != NON_TREE && p != NON_TREE {
            *o.intersection.entry((r, p)).or_default() += 1;
        }
    }
    Ok(o)
}

impl Overlap {
    fn iou(&self, r: i64, p: i64, inter: usize) -> f64 {
        let union = self.reference[&r] + self.predicted[&p] - inter;
        inter as f64 / union as f64
    }
}

/// Matches instances whose IoU is strictly above 0.5.
///
/// Unmatched references are false negatives. An unmatched predicted instance
/// is a false positive only if more than half of its points are labeled;
/// without an explicit `labeled` mask a point counts as labeled when its
/// reference id is not [`NON_TREE`].
pub fn match_instances(reference: &[i64], predicted: &[i64], labeled: Option<&[bool]>) -> Result<MatchResult> {
    let o = overlap(reference, predicted)?;
    if let Some(mask) = labeled {
        if mask.len() != reference.len() {
            return Err(Error::LengthMismatch {
                what: "labeled mask",
                expected: reference.len(),
                actual: mask.len(),
            });
        }
    }
    let mut pairs = Vec::new();
    for (&(r, p), &inter) in &o.intersection {
        let iou = o.iou(r, p, inter);
        if iou > 0.5 {
            pairs.push(MatchedPair {
                reference: r,
                predicted: p,
                iou,
            });
        }
    }
    let mut matched_pred: Vec<i64> = pairs.iter().map(|m| m.predicted).collect();
    matched_pred.sort_unstable();
    let before = matched_pred.len();
    matched_pred.dedup();
    assert_eq!(before, matched_pred.len(), "IoU > 0.5 admits one partner per instance");

    let mut labeled_count: BTreeMap<i64, usize> = BTreeMap::new();
    for i in 0..predicted.len() {
        let p = predicted[i];
        if p == NON_TREE {
            continue;
        }
        let is_labeled = match labeled {
            Some(mask) => mask[i],
            None => reference[i] != NON_TREE,
        };
        if is_labeled {
            *labeled_count.entry(p).or_default() += 1;
        }
    }
    let fp = o
        .predicted
        .iter()
        .filter(|(p, _)| matched_pred.binary_search(p).is_err())
        .filter(|(p, &size)| 2 * labeled_count.get(p).copied().unwrap_or(0) > size)
        .count();
    let tp = pairs.len();
    Ok(MatchResult {
        pairs,
        tp,
        fp,
        fn_: o.reference.len() - tp,
    })
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and F1 `2TP/(2TP+FP+FN)`.
pub fn detection_metrics(tp: usize, fp: usize, fn_: usize) -> DetectionMetrics {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    DetectionMetrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
    }
}

fn mean_of(best: &[BestMatch], f: impl Fn(&BestMatch) -> f64) -> Option<f64> {
    (!best.is_empty()).then(|| best.iter().map(f).sum::<f64>() / best.len() as f64)
}

fn summarize(per_reference: Vec<BestMatch>) -> SegmentationMetrics {
    SegmentationMetrics {
        miou: mean_of(&per_reference, |b| b.iou),
        mprecision: mean_of(&per_reference, |b| b.precision),
        mrecall: mean_of(&per_reference, |b| b.recall),
        per_reference,
    }
}

/// Per reference instance, the predicted instance of highest IoU (lowest id
/// on ties) and the means of IoU, precision and recall over references. A
/// reference without any overlapping prediction contributes zeros.
pub fn segmentation_metrics(reference: &[i64], predicted: &[i64]) -> Result<SegmentationMetrics> {
    let o = overlap(reference, predicted)?;
    let mut per_reference: Vec<BestMatch> = o
        .reference
        .keys()
        .map(|&r| BestMatch {
            reference: r,
            predicted: None,
            iou: 0.0,
            precision: 0.0,
            recall: 0.0,
        })
        .collect();
    let index: BTreeMap<i64, usize> = o.reference.keys().enumerate().map(|(i, &r)| (r, i)).collect();
    // intersection keys iterate by (r, p) ascending, so strict > keeps the lowest p
    for (&(r, p), &inter) in &o.intersection {
        let iou = o.iou(r, p, inter);
        let b = &mut per_reference[index[&r]];
        if b.predicted.is_none() || iou > b.iou {
            *b = BestMatch {
                reference: r,
                predicted: Some(p),
                iou,
                precision: inter as f64 / o.predicted[&p] as f64,
                recall: inter as f64 / o.reference[&r] as f64,
            };
        }
    }
    Ok(summarize(per_reference))
}

/// Dataset-level metrics: detection from summed counts, segmentation means
/// over the pooled per-reference best matches of all files.
pub fn aggregate(files: &[(MatchResult, SegmentationMetrics)]) -> (DetectionMetrics, SegmentationMetrics) {
    let (tp, fp, fn_) = files
        .iter()
        .fold((0, 0, 0), |(tp, fp, fn_), (m, _)| (tp + m.tp, fp + m.fp, fn_ + m.fn_));
    let pooled: Vec<BestMatch> = files.iter().flat_map(|(_, s)| s.per_reference.iter().copied()).collect();
    (detection_metrics(tp, fp, fn_), summarize(pooled))
}
