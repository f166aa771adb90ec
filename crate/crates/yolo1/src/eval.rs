//! VOC-style detection metrics: greedy matching against ground truth,
//! per-class average precision (11-point or all-point), and mAP.
//!
//! Matching protocol, per class: all detections across images are sorted
//! by score descending (ties → lower image id, then input order). Each
//! detection matches the still-unmatched, non-difficult ground truth of
//! its class and image with the highest IoU; if that IoU is at least the
//! threshold it is a true positive, otherwise — if its best match among
//! difficult ground truths clears the threshold — it is ignored, else it
//! is a false positive. Each ground truth matches at most once.

use serde::{Deserialize, Serialize};

use crate::codec::Detection;
use crate::dataset::ClassTable;
use crate::geometry::{iou_yolo, BoxYolo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    Elevenpoint,
    Allpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            ap_mode: ApMode::Elevenpoint,
        }
    }
}

/// One ground-truth object: class, box, and the VOC "difficult" flag that
/// excludes it from scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub class_id: usize,
    pub box_: BoxYolo,
    pub difficult: bool,
}

/// Ground truth per image, indexed in step with the detections.
pub type GroundTruthSet = Vec<Vec<GroundTruth>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    Tp,
    Fp,
    /// Matched a difficult ground truth; excluded from the PR curve.
    Ignored,
}

/// A detection tagged with its origin for the global sort.
#[derive(Debug, Clone)]
struct Ranked {
    image: usize,
    order: usize,
    score: f64,
    flag: MatchFlag,
}

/// Per-class greedy matching over all images; returns flags aligned with
/// the input layout: `flags[image][detection index]`.
pub fn match_detections(
    dets: &[Vec<Detection>],
    gts: &GroundTruthSet,
    iou_threshold: f64,
) -> Vec<Vec<MatchFlag>> {
    assert_eq!(dets.len(), gts.len(), "detections/ground-truth image count");
    let mut flags: Vec<Vec<MatchFlag>> = dets
        .iter()
        .map(|d| vec![MatchFlag::Fp; d.len()])
        .collect();
    let classes: std::collections::BTreeSet<usize> = dets
        .iter()
        .flatten()
        .map(|d| d.class_id)
        .chain(gts.iter().flatten().map(|g| g.class_id))
        .collect();
    for class in classes {
        let ranked = rank_class(dets, class);
        let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        for r in ranked {
            let det = &dets[r.image][r.order];
            // best unmatched non-difficult GT of this class and image
            let mut best: Option<(usize, f64)> = None;
            let mut best_difficult = 0.0_f64;
            for (gi, gt) in gts[r.image].iter().enumerate() {
                if gt.class_id != class {
                    continue;
                }
                let v = iou_yolo(&det.box_, &gt.box_);
                if gt.difficult {
                    best_difficult = best_difficult.max(v);
                } else if !matched[r.image][gi] && best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((gi, v));
                }
            }
            flags[r.image][r.order] = match best {
                Some((gi, v)) if v >= iou_threshold => {
                    matched[r.image][gi] = true;
                    MatchFlag::Tp
                }
                _ if best_difficult >= iou_threshold => MatchFlag::Ignored,
                _ => MatchFlag::Fp,
            };
        }
    }
    flags
}

fn rank_class(dets: &[Vec<Detection>], class: usize) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = dets
        .iter()
        .enumerate()
        .flat_map(|(image, per_image)| {
            per_image
                .iter()
                .enumerate()
                .filter(move |(_, d)| d.class_id == class)
                .map(move |(order, d)| {
                    assert!(d.score.is_finite());
                    Ranked {
                        image,
                        order,
                        score: d.score,
                        flag: MatchFlag::Fp,
                    }
                })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.image.cmp(&b.image))
            .then(a.order.cmp(&b.order))
    });
    ranked
}

/// One point of the precision/recall curve, in score-descending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// The cumulative PR curve from flags sorted by score descending; ignored
/// detections contribute no point.
pub fn pr_curve(flags_sorted: &[MatchFlag], n_positive: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::new();
    for f in flags_sorted {
        match f {
            MatchFlag::Tp => tp += 1,
            MatchFlag::Fp => fp += 1,
            MatchFlag::Ignored => continue,
        }
        points.push(PrPoint {
            recall: if n_positive == 0 {
                0.0
            } else {
                tp as f64 / n_positive as f64
            },
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points
}

/// Average precision from score-sorted flags. With no positives present,
/// AP is 0 if any scored detection exists (all false positives) and 1 if
/// there are none (vacuously perfect).
pub fn average_precision(flags_sorted: &[MatchFlag], n_positive: usize, mode: ApMode) -> f64 {
    let scored = flags_sorted
        .iter()
        .filter(|f| **f != MatchFlag::Ignored)
        .count();
    if n_positive == 0 {
        return if scored == 0 { 1.0 } else { 0.0 };
    }
    if scored == 0 {
        return 0.0;
    }
    let curve = pr_curve(flags_sorted, n_positive);
    match mode {
        ApMode::Elevenpoint => {
            let mut sum = 0.0;
            for k in 0..=10 {
                let r = k as f64 / 10.0;
                let p = curve
                    .iter()
                    .filter(|pt| pt.recall >= r - 1e-12)
                    .map(|pt| pt.precision)
                    .fold(0.0_f64, f64::max);
                sum += p;
            }
            sum / 11.0
        }
        ApMode::Allpoint => {
            // area under the precision envelope, stepping at TP recalls
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, pt) in curve.iter().enumerate() {
                if pt.recall > prev_recall {
                    let envelope = curve[i..]
                        .iter()
                        .map(|q| q.precision)
                        .fold(0.0_f64, f64::max);
                    ap += (pt.recall - prev_recall) * envelope;
                    prev_recall = pt.recall;
                }
            }
            ap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// (class id, AP) for every class with at least one non-difficult GT.
    pub per_class: Vec<(usize, f64)>,
    pub map: f64,
}

/// Per-class AP and their unweighted mean over classes that have at least
/// one non-difficult ground truth.
pub fn mean_ap(
    dets: &[Vec<Detection>],
    gts: &GroundTruthSet,
    cfg: &EvalConfig,
    table: &ClassTable,
) -> EvalReport {
    let flags = match_detections(dets, gts, cfg.iou_threshold);
    let mut per_class = Vec::new();
    for class in 0..table.len() {
        let n_positive = gts
            .iter()
            .flatten()
            .filter(|g| g.class_id == class && !g.difficult)
            .count();
        if n_positive == 0 {
            continue;
        }
        let mut ranked = rank_class(dets, class);
        for r in &mut ranked {
            r.flag = flags[r.image][r.order];
        }
        let sorted_flags: Vec<MatchFlag> = ranked.iter().map(|r| r.flag).collect();
        per_class.push((class, average_precision(&sorted_flags, n_positive, cfg.ap_mode)));
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|(_, ap)| ap).sum::<f64>() / per_class.len() as f64
    };
    EvalReport { per_class, map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn det(class_id: usize, score: f64, cx: f64, cy: f64, w: f64, h: f64) -> Detection {
        Detection {
            class_id,
            score,
            box_: BoxYolo::new(class_id, cx, cy, w, h),
        }
    }

    fn gt(class_id: usize, cx: f64, cy: f64, w: f64, h: f64, difficult: bool) -> GroundTruth {
        GroundTruth {
            class_id,
            box_: BoxYolo::new(class_id, cx, cy, w, h),
            difficult,
        }
    }

    #[test]
    fn exact_hit_is_tp() {
        let dets = vec![vec![det(0, 0.9, 0.5, 0.5, 0.2, 0.2)]];
        let gts = vec![vec![gt(0, 0.5, 0.5, 0.2, 0.2, false)]];
        assert_eq!(match_detections(&dets, &gts, 0.5), vec![vec![MatchFlag::Tp]]);
    }

    #[test]
    fn double_detection_is_tp_fp() {
        let dets = vec![vec![
            det(0, 0.9, 0.5, 0.5, 0.2, 0.2),
            det(0, 0.8, 0.5, 0.5, 0.2, 0.2),
        ]];
        let gts = vec![vec![gt(0, 0.5, 0.5, 0.2, 0.2, false)]];
        assert_eq!(
            match_detections(&dets, &gts, 0.5),
            vec![vec![MatchFlag::Tp, MatchFlag::Fp]]
        );
    }

    #[test]
    fn difficult_gt_match_is_ignored() {
        let dets = vec![vec![det(0, 0.9, 0.5, 0.5, 0.2, 0.2)]];
        let gts = vec![vec![gt(0, 0.5, 0.5, 0.2, 0.2, true)]];
        assert_eq!(
            match_detections(&dets, &gts, 0.5),
            vec![vec![MatchFlag::Ignored]]
        );
    }

    #[test]
    fn elevenpoint_worked_example() {
        // [TP, FP, TP] with 2 positives: (6·1 + 5·(2/3)) / 11 = 28/33
        let flags = [MatchFlag::Tp, MatchFlag::Fp, MatchFlag::Tp];
        let ap = average_precision(&flags, 2, ApMode::Elevenpoint);
        assert!((ap - 28.0 / 33.0).abs() < 1e-15, "ap = {ap}");
    }

    #[test]
    fn perfect_detections_are_one_in_both_modes() {
        let flags = [MatchFlag::Tp, MatchFlag::Tp, MatchFlag::Tp];
        assert_eq!(average_precision(&flags, 3, ApMode::Elevenpoint), 1.0);
        assert_eq!(average_precision(&flags, 3, ApMode::Allpoint), 1.0);
    }

    #[test]
    fn no_detections_with_positives_is_zero() {
        assert_eq!(average_precision(&[], 4, ApMode::Elevenpoint), 0.0);
        assert_eq!(average_precision(&[], 4, ApMode::Allpoint), 0.0);
    }

    #[test]
    fn empty_class_conventions() {
        assert_eq!(average_precision(&[], 0, ApMode::Elevenpoint), 1.0);
        assert_eq!(
            average_precision(&[MatchFlag::Fp], 0, ApMode::Elevenpoint),
            0.0
        );
    }

    #[test]
    fn allpoint_worked_example() {
        // [TP, FP, TP], 2 positives: envelope = 1 on recall [0,0.5],
        // 2/3 on (0.5,1] → AP = 0.5 + 0.5·2/3 = 5/6
        let flags = [MatchFlag::Tp, MatchFlag::Fp, MatchFlag::Tp];
        let ap = average_precision(&flags, 2, ApMode::Allpoint);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15, "ap = {ap}");
    }

    #[test]
    fn score_order_invariance() {
        let mut rng = RngStream::new(5);
        for _ in 0..50 {
            let dets: Vec<Vec<Detection>> = (0..3)
                .map(|_| {
                    (0..rng.range_inclusive(0, 4))
                        .map(|_| {
                            det(
                                rng.below(2),
                                rng.uniform(0.05, 0.95),
                                rng.uniform(0.2, 0.8),
                                rng.uniform(0.2, 0.8),
                                0.2,
                                0.2,
                            )
                        })
                        .collect()
                })
                .collect();
            let gts: GroundTruthSet = (0..3)
                .map(|_| {
                    (0..rng.range_inclusive(0, 3))
                        .map(|_| {
                            gt(
                                rng.below(2),
                                rng.uniform(0.2, 0.8),
                                rng.uniform(0.2, 0.8),
                                0.2,
                                0.2,
                                rng.bernoulli(0.2),
                            )
                        })
                        .collect()
                })
                .collect();
            let table = ClassTable::new(vec!["a".into(), "b".into()]).unwrap();
            let base = mean_ap(&dets, &gts, &EvalConfig::default(), &table);
            // strictly increasing score transform: s → s/2 + 0.5
            let transformed: Vec<Vec<Detection>> = dets
                .iter()
                .map(|v| {
                    v.iter()
                        .map(|d| Detection {
                            score: d.score / 2.0 + 0.5,
                            ..d.clone()
                        })
                        .collect()
                })
                .collect();
            let same = mean_ap(&transformed, &gts, &EvalConfig::default(), &table);
            assert_eq!(base, same);
        }
    }

    /// Straight-line reference for the whole pipeline, written separately
    /// from the production code paths.
    fn reference_map(
        dets: &[Vec<Detection>],
        gts: &GroundTruthSet,
        iou_t: f64,
        n_classes: usize,
    ) -> f64 {
        let mut aps = Vec::new();
        for class in 0..n_classes {
            let npos = gts
                .iter()
                .flatten()
                .filter(|g| g.class_id == class && !g.difficult)
                .count();
            if npos == 0 {
                continue;
            }
            // global candidate list: (score, image, order)
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (im, v) in dets.iter().enumerate() {
                for (k, d) in v.iter().enumerate() {
                    if d.class_id == class {
                        cands.push((d.score, im, k));
                    }
                }
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut curve: Vec<(f64, f64)> = Vec::new();
            for (_, im, k) in cands {
                let d = &dets[im][k];
                let mut best_gi = usize::MAX;
                let mut best_v = -1.0;
                let mut diff_v = 0.0_f64;
                for (gi, g) in gts[im].iter().enumerate() {
                    if g.class_id != class {
                        continue;
                    }
                    let v = iou_yolo(&d.box_, &g.box_);
                    if g.difficult {
                        diff_v = diff_v.max(v);
                    } else if !used[im][gi] && v > best_v {
                        best_v = v;
                        best_gi = gi;
                    }
                }
                if best_gi != usize::MAX && best_v >= iou_t {
                    used[im][best_gi] = true;
                    tp += 1;
                } else if diff_v >= iou_t {
                    continue;
                } else {
                    fp += 1;
                }
                curve.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
            }
            if curve.is_empty() {
                aps.push(0.0);
                continue;
            }
            let mut sum = 0.0;
            for k in 0..=10 {
                let r = k as f64 / 10.0;
                sum += curve
                    .iter()
                    .filter(|(rec, _)| *rec >= r - 1e-12)
                    .map(|(_, p)| *p)
                    .fold(0.0_f64, f64::max);
            }
            aps.push(sum / 11.0);
        }
        if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        }
    }

    #[test]
    fn matches_reference_on_random_cases() {
        let mut rng = RngStream::new(77);
        let table = ClassTable::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        for _ in 0..200 {
            let dets: Vec<Vec<Detection>> = (0..5)
                .map(|_| {
                    (0..rng.range_inclusive(0, 5))
                        .map(|_| {
                            det(
                                rng.below(3),
                                rng.uniform(0.01, 0.99),
                                rng.uniform(0.15, 0.85),
                                rng.uniform(0.15, 0.85),
                                rng.uniform(0.1, 0.3),
                                rng.uniform(0.1, 0.3),
                            )
                        })
                        .collect()
                })
                .collect();
            let gts: GroundTruthSet = (0..5)
                .map(|_| {
                    (0..rng.range_inclusive(0, 4))
                        .map(|_| {
                            gt(
                                rng.below(3),
                                rng.uniform(0.15, 0.85),
                                rng.uniform(0.15, 0.85),
                                rng.uniform(0.1, 0.3),
                                rng.uniform(0.1, 0.3),
                                rng.bernoulli(0.15),
                            )
                        })
                        .collect()
                })
                .collect();
            let report = mean_ap(&dets, &gts, &EvalConfig::default(), &table);
            let reference = reference_map(&dets, &gts, 0.5, 3);
            assert!(
                (report.map - reference).abs() < 1e-9,
                "{} vs {reference}",
                report.map
            );
        }
    }

    #[test]
    fn perfect_detections_give_map_one() {
        let gts: GroundTruthSet = vec![
            vec![gt(0, 0.3, 0.3, 0.2, 0.2, false), gt(1, 0.7, 0.7, 0.2, 0.2, false)],
            vec![gt(2, 0.5, 0.5, 0.3, 0.3, false)],
        ];
        let dets: Vec<Vec<Detection>> = gts
            .iter()
            .map(|v| {
                v.iter()
                    .map(|g| Detection {
                        class_id: g.class_id,
                        score: 1.0,
                        box_: g.box_.clone(),
                    })
                    .collect()
            })
            .collect();
        let table = ClassTable::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let report = mean_ap(&dets, &gts, &EvalConfig::default(), &table);
        assert_eq!(report.map, 1.0);
        assert_eq!(report.per_class.len(), 3);
    }

    #[test]
    fn empty_detections_give_map_zero() {
        let gts: GroundTruthSet = vec![vec![gt(0, 0.5, 0.5, 0.2, 0.2, false)]];
        let dets = vec![vec![]];
        let table = ClassTable::new(vec!["a".into()]).unwrap();
        assert_eq!(mean_ap(&dets, &gts, &EvalConfig::default(), &table).map, 0.0);
    }

    #[test]
    fn classes_absent_from_gt_excluded() {
        let gts: GroundTruthSet = vec![vec![gt(0, 0.5, 0.5, 0.2, 0.2, false)]];
        let dets = vec![vec![det(1, 0.9, 0.5, 0.5, 0.2, 0.2)]]; // class 1 has no GT
        let table = ClassTable::new(vec!["a".into(), "b".into()]).unwrap();
        let report = mean_ap(&dets, &gts, &EvalConfig::default(), &table);
        assert_eq!(report.per_class, vec![(0, 0.0)]);
        assert_eq!(report.map, 0.0);
    }
}
