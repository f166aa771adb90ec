//! Detection postprocessing: per-class greedy non-maximum suppression and
//! the full tensor → detections path.
//!
//! NMS is class-independent (boxes never suppress across classes) and uses
//! strict inequality: IoU > threshold suppresses, IoU == threshold
//! survives. Within a class, candidates are visited by score descending
//! with ties broken by earlier input index; the final output is sorted by
//! score descending, then class id ascending.

use serde::{Deserialize, Serialize};

use crate::codec::{decode, Detection, TargetTensor};
use crate::geometry::iou_yolo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    pub conf_threshold: f64,
    pub max_detections: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            iou_threshold: 0.45,
            conf_threshold: 0.20,
            max_detections: 100,
        }
    }
}

/// Greedy per-class NMS. See the module docs for the exact tie and
/// suppression rules.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    assert!(dets.iter().all(|d| d.score.is_finite()));
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // score descending, input index ascending on ties (sort is stable)
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept.iter().any(|&k| {
            dets[k].class_id == dets[i].class_id
                && iou_yolo(&dets[k].box_, &dets[i].box_) > iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].class_id.cmp(&dets[b].class_id))
    });
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

/// Full postprocessing: decode at the confidence threshold, suppress, and
/// truncate to `max_detections`.
pub fn detect(pred: &TargetTensor, cfg: &NmsConfig) -> Vec<Detection> {
    let raw = decode(pred, cfg.conf_threshold);
    let mut out = nms(&raw, cfg.iou_threshold);
    out.truncate(cfg.max_detections);
    out
}
