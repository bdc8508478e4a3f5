//! Detection evaluation: non-max suppression, greedy confidence-ordered
//! matching, precision/recall/F1, PR curves, 101-point interpolated AP, and
//! mAP50 / mAP50-95.
//!
//! Conventions follow the COCO protocol: greedy matching by descending
//! confidence with best-IoU ground-truth preference and each ground truth
//! matched at most once; AP uses the monotone precision envelope sampled at
//! 101 recall levels; classes without ground truth are excluded from mAP
//! means. Confidence ties break by stable input order so results are
//! reproducible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamix::Dataset;
use crate::error::{DetlabError, Result};
use crate::geom::{iou, BBox};

/// A predicted box with class id and confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
    pub confidence: f64,
}

/// A ground-truth box with class id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
}

/// Parse one prediction file: `class_id conf cx cy w h` per line,
/// normalized floats, one detection per line (order preserved).
pub fn read_prediction_file(
    path: &std::path::Path,
    image_id: &str,
    n_classes: usize,
) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| DetlabError::io(path, e))?;
    let mut detections = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DetlabError::LabelParse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", tokens.len())));
        }
        let class_id: usize = tokens[0]
            .parse()
            .map_err(|_| err(format!("invalid class id '{}'", tokens[0])))?;
        if class_id >= n_classes {
            return Err(err(format!(
                "class id {class_id} out of range for {n_classes} classes"
            )));
        }
        let mut values = [0.0f64; 5];
        for (i, token) in tokens[1..].iter().enumerate() {
            values[i] = token
                .parse()
                .map_err(|_| err(format!("invalid number '{token}'")))?;
        }
        let [conf, cx, cy, w, h] = values;
        if !(0.0..=1.0).contains(&conf) {
            return Err(err(format!("confidence {conf} outside [0, 1]")));
        }
        for v in [cx, cy, w, h] {
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("coordinate {v} outside [0, 1]")));
            }
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(err("zero-area box".to_string()));
        }
        let bbox = crate::geom::clip_box(&crate::geom::RawBox::from_center(cx, cy, w, h), 0.0)
            .ok_or_else(|| err("box has no area inside the unit square".to_string()))?;
        detections.push(Detection {
            image_id: image_id.to_string(),
            class_id,
            bbox,
            confidence: conf,
        });
    }
    Ok(detections)
}

/// Flatten a dataset's annotations into ground-truth records.
pub fn ground_truths_of(dataset: &Dataset) -> Vec<GroundTruth> {
    dataset
        .samples
        .iter()
        .flat_map(|sample| {
            sample.annotations.iter().map(|ann| GroundTruth {
                image_id: sample.image_id.clone(),
                class_id: ann.class_id,
                bbox: ann.bbox,
            })
        })
        .collect()
}

/// The ten COCO IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

// Detection indices ordered by descending confidence, ties by input order.
fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Non-max suppression over one image's detections.
///
/// Per class independently: repeatedly keep the highest-confidence remaining
/// detection and remove all remaining same-class detections with IoU
/// strictly above `iou_threshold` against it. Output is sorted by
/// descending confidence, ties by input order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let order = confidence_order(dets);
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if suppressed[idx] {
            continue;
        }
        kept.push(dets[idx].clone());
        for &other in &order[pos + 1..] {
            if suppressed[other] || dets[other].class_id != dets[idx].class_id {
                continue;
            }
            if iou(&dets[other].bbox, &dets[idx].bbox) > iou_threshold {
                suppressed[other] = true;
            }
        }
    }
    kept
}

/// One matched detection: TP/FP label in confidence order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDetection {
    pub class_id: usize,
    pub confidence: f64,
    pub is_tp: bool,
}

/// Result of greedy matching at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// Per-detection TP/FP labels, ordered by descending confidence
    /// (ties by input order).
    pub detections: Vec<MatchedDetection>,
    /// Ground-truth count per class id.
    pub gt_per_class: BTreeMap<usize, usize>,
    /// Unmatched ground-truth count per image.
    pub unmatched_gt_per_image: BTreeMap<String, usize>,
}

impl MatchOutcome {
    pub fn total_gt(&self) -> usize {
        self.gt_per_class.values().sum()
    }
}

/// Greedy confidence-ordered matching.
///
/// Per image and class, detections are processed in descending confidence;
/// a detection is a true positive when its best-IoU unmatched ground truth
/// reaches `iou_threshold` (that ground truth then becomes matched),
/// otherwise a false positive. Each ground truth matches at most one
/// detection.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> MatchOutcome {
    let mut gt_groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    let mut gt_per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, gt) in gts.iter().enumerate() {
        gt_groups
            .entry((gt.image_id.as_str(), gt.class_id))
            .or_default()
            .push(i);
        *gt_per_class.entry(gt.class_id).or_default() += 1;
    }

    let mut matched = vec![false; gts.len()];
    let mut labeled = Vec::with_capacity(dets.len());
    for &idx in &confidence_order(dets) {
        let det = &dets[idx];
        let mut best: Option<(usize, f64)> = None;
        if let Some(group) = gt_groups.get(&(det.image_id.as_str(), det.class_id)) {
            for &gi in group {
                if matched[gi] {
                    continue;
                }
                let overlap = iou(&det.bbox, &gts[gi].bbox);
                let better = match best {
                    None => true,
                    Some((_, best_iou)) => overlap > best_iou,
                };
                if better {
                    best = Some((gi, overlap));
                }
            }
        }
        let is_tp = match best {
            Some((gi, overlap)) if overlap >= iou_threshold => {
                matched[gi] = true;
                true
            }
            _ => false,
        };
        labeled.push(MatchedDetection {
            class_id: det.class_id,
            confidence: det.confidence,
            is_tp,
        });
    }

    let mut unmatched: BTreeMap<String, usize> = BTreeMap::new();
    for (gi, gt) in gts.iter().enumerate() {
        if !matched[gi] {
            *unmatched.entry(gt.image_id.clone()).or_default() += 1;
        }
    }

    MatchOutcome {
        detections: labeled,
        gt_per_class,
        unmatched_gt_per_image: unmatched,
    }
}

/// Precision, recall, and F1 over a match outcome, counting only detections
/// with confidence at or above `conf_threshold`.
///
/// Degenerate cases: with zero detections and zero ground truth all three
/// are 1 (vacuous success); with zero detections and ground truth present
/// all three are 0.
pub fn precision_recall_f1(outcome: &MatchOutcome, conf_threshold: f64) -> (f64, f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    for det in &outcome.detections {
        if det.confidence < conf_threshold {
            continue;
        }
        if det.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let total_gt = outcome.total_gt();
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else if total_gt == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if total_gt > 0 {
        tp as f64 / total_gt as f64
    } else if tp + fp == 0 {
        1.0
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// One cumulative precision/recall point at a distinct confidence value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative precision/recall curve for one class at one IoU threshold,
/// ordered by strictly decreasing confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub total_gt: usize,
}

impl PrCurve {
    /// Build a curve from `(confidence, is_tp)` flags already ordered by
    /// descending confidence. Detections sharing a confidence value
    /// collapse into one point carrying the cumulative counts after all of
    /// them, keeping confidences strictly decreasing.
    pub fn from_confidence_flags(flags: &[(f64, bool)], total_gt: usize) -> PrCurve {
        let mut points: Vec<PrPoint> = Vec::new();
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (i, &(confidence, is_tp)) in flags.iter().enumerate() {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_tie = match flags.get(i + 1) {
                Some(&(next_conf, _)) => next_conf != confidence,
                None => true,
            };
            if !last_of_tie {
                continue;
            }
            points.push(PrPoint {
                confidence,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if total_gt > 0 {
                    tp as f64 / total_gt as f64
                } else {
                    0.0
                },
            });
        }
        PrCurve { points, total_gt }
    }
}

/// PR curve for one class out of a match outcome.
///
/// Returns `None` for a class with zero ground truth: its curve is
/// undefined and the class is excluded from mAP means.
pub fn pr_curve(outcome: &MatchOutcome, class_id: usize) -> Option<PrCurve> {
    let total_gt = outcome.gt_per_class.get(&class_id).copied().unwrap_or(0);
    if total_gt == 0 {
        return None;
    }
    let flags: Vec<(f64, bool)> = outcome
        .detections
        .iter()
        .filter(|d| d.class_id == class_id)
        .map(|d| (d.confidence, d.is_tp))
        .collect();
    Some(PrCurve::from_confidence_flags(&flags, total_gt))
}

/// 101-point interpolated average precision: the mean over recall levels
/// `0.00, 0.01, ..., 1.00` of the maximum precision at recall at or above
/// each level (monotone precision envelope).
pub fn average_precision(curve: &PrCurve) -> f64 {
    let mut sum = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let best = curve
            .points
            .iter()
            .filter(|p| p.recall >= r)
            .map(|p| p.precision)
            .fold(0.0f64, f64::max);
        sum += best;
    }
    sum / 101.0
}

// Per-class APs at one IoU threshold; classes without GT are skipped.
fn per_class_ap(outcome: &MatchOutcome) -> BTreeMap<usize, f64> {
    outcome
        .gt_per_class
        .keys()
        .filter_map(|&class_id| {
            pr_curve(outcome, class_id).map(|curve| (class_id, average_precision(&curve)))
        })
        .collect()
}

/// Mean AP over classes with at least one ground truth, at one threshold.
pub fn map_at(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Result<f64> {
    let outcome = match_detections(dets, gts, iou_threshold);
    let aps = per_class_ap(&outcome);
    if aps.is_empty() {
        return Err(DetlabError::Metrics(
            "no class has ground truth; mAP undefined".to_string(),
        ));
    }
    Ok(aps.values().sum::<f64>() / aps.len() as f64)
}

/// mAP averaged over the ten COCO IoU thresholds 0.50:0.05:0.95.
pub fn map_range(dets: &[Detection], gts: &[GroundTruth]) -> Result<f64> {
    let thresholds = iou_thresholds();
    let mut sum = 0.0;
    for t in thresholds {
        sum += map_at(dets, gts, t)?;
    }
    Ok(sum / thresholds.len() as f64)
}

/// Evaluation settings: class count and the confidence threshold for the
/// reported precision/recall/F1 (measured at IoU 0.50).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub n_classes: usize,
    pub reporting_conf: f64,
}

impl EvalConfig {
    pub fn new(n_classes: usize) -> Self {
        EvalConfig {
            n_classes,
            reporting_conf: 0.25,
        }
    }
}

/// Full evaluation report: per-class AP at each IoU threshold, mAP50,
/// mAP50-95, and precision/recall/F1 at the reporting threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Indexed by class id; `None` for classes without ground truth
    /// (excluded from the means). Each entry holds ten APs, one per IoU
    /// threshold 0.50:0.05:0.95. Serialized with `None` as an empty array
    /// (TOML has no null).
    #[serde(with = "per_class_ap_serde", default)]
    pub per_class_ap: Vec<Option<Vec<f64>>>,
    pub map50: f64,
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

mod per_class_ap_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        value: &[Option<Vec<f64>>],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let flat: Vec<Vec<f64>> = value
            .iter()
            .map(|entry| entry.clone().unwrap_or_default())
            .collect();
        flat.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Vec<Option<Vec<f64>>>, D::Error> {
        let flat: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        Ok(flat
            .into_iter()
            .map(|entry| if entry.is_empty() { None } else { Some(entry) })
            .collect())
    }
}

impl EvalReport {
    /// Flat `key=value` rendering, keys sorted, six decimals.
    pub fn to_kv_text(&self) -> String {
        let mut lines: Vec<String> = vec![
            format!("f1={:.6}", self.f1),
            format!("map50={:.6}", self.map50),
            format!("map50_95={:.6}", self.map50_95),
            format!("precision={:.6}", self.precision),
            format!("recall={:.6}", self.recall),
        ];
        for (class_id, aps) in self.per_class_ap.iter().enumerate() {
            if let Some(aps) = aps {
                let mean = aps.iter().sum::<f64>() / aps.len() as f64;
                lines.push(format!("ap50_class{class_id}={:.6}", aps[0]));
                lines.push(format!("ap50_95_class{class_id}={mean:.6}"));
            }
        }
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn csv_header() -> &'static str {
        "map50,map50_95,precision,recall,f1"
    }

    /// CSV row matching [`EvalReport::csv_header`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.map50, self.map50_95, self.precision, self.recall, self.f1
        )
    }
}

/// Assemble the full report.
///
/// The ten IoU thresholds are evaluated in parallel; aggregation reads them
/// back in threshold order, so the result is bit-identical for any worker
/// count.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], config: &EvalConfig) -> Result<EvalReport> {
    use rayon::prelude::*;

    let thresholds = iou_thresholds();
    let per_threshold: Vec<BTreeMap<usize, f64>> = thresholds
        .par_iter()
        .map(|&threshold| per_class_ap(&match_detections(dets, gts, threshold)))
        .collect();

    let mut per_class: Vec<Option<Vec<f64>>> = vec![None; config.n_classes];
    let mut per_threshold_map = [0.0f64; 10];
    for (t_idx, aps) in per_threshold.iter().enumerate() {
        if aps.is_empty() {
            return Err(DetlabError::Metrics(
                "no class has ground truth; mAP undefined".to_string(),
            ));
        }
        per_threshold_map[t_idx] = aps.values().sum::<f64>() / aps.len() as f64;
        for (&class_id, &ap) in aps {
            if class_id >= per_class.len() {
                per_class.resize(class_id + 1, None);
            }
            per_class[class_id]
                .get_or_insert_with(|| vec![0.0; thresholds.len()])[t_idx] = ap;
        }
    }

    let outcome50 = match_detections(dets, gts, 0.50);
    let (precision, recall, f1) = precision_recall_f1(&outcome50, config.reporting_conf);

    Ok(EvalReport {
        per_class_ap: per_class,
        map50: per_threshold_map[0],
        map50_95: per_threshold_map.iter().sum::<f64>() / 10.0,
        precision,
        recall,
        f1,
    })
}
