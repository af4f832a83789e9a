//! Grounding metrics: wrap-aware IoU, greedy-matched mIoU, and all-point
//! average precision over IoU thresholds 0.50 to 0.95.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Box2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ParseError: line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Predictions and ground truth for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub query_id: u64,
    pub predictions: Vec<(Box2D, f64)>,
    pub ground_truth: Vec<Box2D>,
    pub image_width: u32,
}

impl EvalRecord {
    fn validate(&self) -> Result<(), String> {
        if self.image_width == 0 {
            return Err("image_width must be positive".into());
        }
        let w = f64::from(self.image_width);
        for (b, score) in &self.predictions {
            if !(0.0..=1.0).contains(score) {
                return Err(format!("score {score} outside [0, 1]"));
            }
            check_box(b, w)?;
        }
        for b in &self.ground_truth {
            check_box(b, w)?;
        }
        Ok(())
    }
}

fn check_box(b: &Box2D, image_width: f64) -> Result<(), String> {
    let finite = [b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite());
    if !finite || b.w < 0.0 || b.h < 0.0 {
        return Err(format!("invalid box [{}, {}, {}, {}]", b.x, b.y, b.w, b.h));
    }
    if b.wrap && b.w > image_width {
        return Err(format!("wrapped box width {} exceeds image width {image_width}", b.w));
    }
    Ok(())
}

/// Parses one [`EvalRecord`] per non-blank line.
pub fn parse_records(text: &str) -> Result<Vec<EvalRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let record: EvalRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        record.validate().map_err(err)?;
        out.push(record);
    }
    Ok(out)
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Intersection over union. When either box wraps, x-intervals are taken
/// modulo `image_width`.
pub fn iou(a: &Box2D, b: &Box2D, image_width: f64) -> f64 {
    let dy = overlap(a.y, a.y + a.h, b.y, b.y + b.h);
    let dx = if a.wrap || b.wrap {
        let ax = if a.wrap { a.x.rem_euclid(image_width) } else { a.x };
        let bx = if b.wrap { b.x.rem_euclid(image_width) } else { b.x };
        [-image_width, 0.0, image_width]
            .iter()
            .map(|shift| overlap(ax, ax + a.w, bx + shift, bx + b.w + shift))
            .fold(0.0, |acc, v| acc + v)
    } else {
        overlap(a.x, a.x + a.w, b.x, b.x + b.w)
    };
    let inter = dx * dy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy one-to-one matching by descending IoU. Returns the mean IoU over
/// ground-truth boxes (unmatched count as 0) and whether every ground-truth
/// box was matched above 0.5. A record with no ground truth scores 1 when it
/// also has no predictions and 0 otherwise.
pub fn match_and_miou(record: &EvalRecord) -> (f64, bool) {
    let w = f64::from(record.image_width);
    if record.ground_truth.is_empty() {
        return if record.predictions.is_empty() { (1.0, true) } else { (0.0, false) };
    }
    let mut pairs = Vec::new();
    for (g, gt) in record.ground_truth.iter().enumerate() {
        for (p, (pred, _)) in record.predictions.iter().enumerate() {
            let v = iou(gt, pred, w);
            if v > 0.0 {
                pairs.push((v, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_iou = vec![0.0; record.ground_truth.len()];
    let mut gt_used = vec![false; record.ground_truth.len()];
    let mut pred_used = vec![false; record.predictions.len()];
    for (v, g, p) in pairs {
        if !gt_used[g] && !pred_used[p] {
            gt_used[g] = true;
            pred_used[p] = true;
            gt_iou[g] = v;
        }
    }
    let mean = gt_iou.iter().fold(0.0, |acc, v| acc + v) / gt_iou.len() as f64;
    (mean, gt_iou.iter().all(|&v| v > 0.5))
}

/// All-point interpolated AP over predictions pooled across records.
///
/// Predictions are ranked by score descending, ties by record order then
/// prediction order. Each claims the unconsumed ground-truth box of its
/// record with the highest IoU at or above `iou_threshold`. With no ground
/// truth at all, AP is 1 if there are also no predictions and 0 otherwise.
pub fn average_precision(records: &[EvalRecord], iou_threshold: f64) -> f64 {
    let total_gt: usize = records.iter().map(|r| r.ground_truth.len()).sum();
    let mut ranked: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ri, r) in records.iter().enumerate() {
        for (pi, (_, score)) in r.predictions.iter().enumerate() {
            ranked.push((*score, r.query_id, ri, pi));
        }
    }
    if total_gt == 0 {
        return if ranked.is_empty() { 1.0 } else { 0.0 };
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));

    let mut consumed: Vec<Vec<bool>> = records.iter().map(|r| vec![false; r.ground_truth.len()]).collect();
    let mut tp_flags = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (rank, &(_, _, ri, pi)) in ranked.iter().enumerate() {
        let r = &records[ri];
        let pred = &r.predictions[pi].0;
        let w = f64::from(r.image_width);
        let mut best: Option<(f64, usize)> = None;
        for (g, gt) in r.ground_truth.iter().enumerate() {
            if consumed[ri][g] {
                continue;
            }
            let v = iou(pred, gt, w);
            if v + IOU_TOLERANCE >= iou_threshold && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, g));
            }
        }
        let hit = best.is_some();
        if let Some((_, g)) = best {
            consumed[ri][g] = true;
            tp += 1;
        }
        tp_flags.push(hit);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    // Precision envelope: running maximum from the tail.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let area = precision.iter().zip(&tp_flags).filter(|(_, &hit)| hit).fold(0.0, |acc, (p, _)| acc + p);
    area / total_gt as f64
}

/// Slack when comparing an IoU against a threshold, so that e.g. an IoU of
/// exactly 0.6 computed with rounding still passes the 0.60 threshold.
pub const IOU_TOLERANCE: f64 = 1e-12;

/// The ten thresholds 0.50, 0.55, ..., 0.95.
pub fn thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// Per-threshold APs and their mean.
pub fn map_per_threshold(records: &[EvalRecord]) -> ([f64; 10], f64) {
    let aps = thresholds().map(|t| average_precision(records, t));
    (aps, aps.iter().fold(0.0, |acc, v| acc + v) / 10.0)
}

/// mAP@[.50:.95].
pub fn map_metric(records: &[EvalRecord]) -> f64 {
    map_per_threshold(records).1
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_queries: usize,
    pub miou: Option<f64>,
    pub map: Option<f64>,
    pub per_threshold_ap: Option<[f64; 10]>,
}

impl EvalReport {
    pub fn compute(records: &[EvalRecord]) -> Self {
        if records.is_empty() {
            return Self { n_queries: 0, miou: None, map: None, per_threshold_ap: None };
        }
        let miou = records.iter().map(|r| match_and_miou(r).0).fold(0.0, |acc, v| acc + v) / records.len() as f64;
        let (aps, map) = map_per_threshold(records);
        Self { n_queries: records.len(), miou: Some(miou), map: Some(map), per_threshold_ap: Some(aps) }
    }

    /// JSON with metrics printed to six decimal places.
    pub fn to_json(&self) -> String {
        let num = |v: Option<f64>| v.map_or("null".to_owned(), |v| format!("{v:.6}"));
        let aps = self.per_threshold_ap.map_or("null".to_owned(), |aps| {
            format!("[{}]", aps.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "))
        });
        format!(
            "{{\"miou\": {}, \"map\": {}, \"per_threshold_ap\": {aps}, \"n_queries\": {}}}",
            num(self.miou),
            num(self.map),
            self.n_queries
        )
    }

    pub fn to_text(&self) -> String {
        let num = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.6}"));
        let mut out = format!("queries: {}\nmIoU:    {}\nmAP:     {}\n", self.n_queries, num(self.miou), num(self.map));
        if let Some(aps) = self.per_threshold_ap {
            for (t, ap) in thresholds().iter().zip(aps) {
                let _ = writeln!(out, "AP@{t:.2}: {ap:.6}");
            }
        }
        out
    }
}
