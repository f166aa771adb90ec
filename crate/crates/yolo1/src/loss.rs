//! The YOLO composite detection loss: forward value with per-term
//! breakdown, and the analytic gradient with respect to predictions.
//!
//! Per object cell the responsible slot is the one whose decoded box has
//! the highest IoU with the decoded target box (ties to the lowest index).
//! Terms, summed (not averaged) over one tensor:
//!
//! - coord  = λ_coord · Σ [(x−x̂)² + (y−ŷ)² + (√w−√ŵ)² + (√h−√ĥ)²] over
//!   responsible slots, with negative predicted w/h entering the square
//!   root as 0 (and zero gradient through that clamp);
//! - obj    = Σ (conf_b* − 1)² over responsible slots;
//! - noobj  = λ_noobj · Σ conf² over every slot of empty cells and the
//!   non-responsible slots of object cells;
//! - class  = Σ_c (p_c − p̂_c)² over object cells.
//!
//! Responsibility is treated as a constant under differentiation
//! (sub-gradient at argmax switch points). Batch reduction is the mean
//! over samples.

use thiserror::Error;

use crate::codec::{GridConfig, TargetTensor};
use crate::geometry::iou_corners;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: pred {pred:?} vs target {target:?}")]
    ShapeMismatch { pred: GridConfig, target: GridConfig },
    #[error("invalid target tensor: {0}")]
    InvalidTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub coord: f64,
    pub obj: f64,
    pub noobj: f64,
    pub classification: f64,
    pub total: f64,
}

/// Encoded-target invariants: each cell is either all-zero or an object
/// cell whose B slots share one geometry with x,y ∈ [0,1), w,h ∈ (0,1],
/// the presence flag on slot 0 only, and a one-hot class vector.
fn validate_target(t: &TargetTensor) -> Result<(), LossError> {
    let cfg = t.cfg();
    let bad = |i: usize, j: usize, msg: &str| {
        Err(LossError::InvalidTarget(format!("cell ({i},{j}): {msg}")))
    };
    for i in 0..cfg.s {
        for j in 0..cfg.s {
            let conf0 = t.at(i, j, 4);
            if conf0 == 0.0 {
                for ch in 0..cfg.depth() {
                    if t.at(i, j, ch) != 0.0 {
                        return bad(i, j, "empty cell holds nonzero values");
                    }
                }
            } else if conf0 == 1.0 {
                let (x, y, w, h) = (t.at(i, j, 0), t.at(i, j, 1), t.at(i, j, 2), t.at(i, j, 3));
                if !((0.0..1.0).contains(&x) && (0.0..1.0).contains(&y)) {
                    return bad(i, j, "offsets outside [0,1)");
                }
                if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
                    return bad(i, j, "sizes outside (0,1]");
                }
                for slot in 1..cfg.b {
                    let base = slot * 5;
                    if t.at(i, j, base) != x
                        || t.at(i, j, base + 1) != y
                        || t.at(i, j, base + 2) != w
                        || t.at(i, j, base + 3) != h
                    {
                        return bad(i, j, "slot geometry not replicated");
                    }
                    if t.at(i, j, base + 4) != 0.0 {
                        return bad(i, j, "presence flag outside slot 0");
                    }
                }
                let mut ones = 0;
                for c in 0..cfg.c {
                    match t.at(i, j, cfg.b * 5 + c) {
                        v if v == 1.0 => ones += 1,
                        v if v == 0.0 => {}
                        _ => return bad(i, j, "class vector not 0/1"),
                    }
                }
                if ones != 1 {
                    return bad(i, j, "class vector not one-hot");
                }
            } else {
                return bad(i, j, "confidence not in {0,1}");
            }
        }
    }
    Ok(())
}

fn check_shapes(pred: &TargetTensor, target: &TargetTensor) -> Result<(), LossError> {
    if pred.cfg() != target.cfg() {
        return Err(LossError::ShapeMismatch {
            pred: pred.cfg(),
            target: target.cfg(),
        });
    }
    Ok(())
}

/// Decode a slot to image-relative corners for IoU; negative sizes collapse
/// to zero area.
fn slot_corners(i: usize, j: usize, x: f64, y: f64, w: f64, h: f64, s: usize) -> (f64, f64, f64, f64) {
    let sf = s as f64;
    let cx = (j as f64 + x) / sf;
    let cy = (i as f64 + y) / sf;
    let w = w.max(0.0);
    let h = h.max(0.0);
    (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

/// The responsible slot of an object cell: argmax IoU of the decoded pred
/// slots against the decoded target box, ties to the lowest index.
pub fn responsible_slot(pred: &TargetTensor, target: &TargetTensor, i: usize, j: usize) -> usize {
    let cfg = pred.cfg();
    let tgt = slot_corners(
        i,
        j,
        target.at(i, j, 0),
        target.at(i, j, 1),
        target.at(i, j, 2),
        target.at(i, j, 3),
        cfg.s,
    );
    let mut best = 0usize;
    let mut best_iou = f64::NEG_INFINITY;
    for slot in 0..cfg.b {
        let base = slot * 5;
        let p = slot_corners(
            i,
            j,
            pred.at(i, j, base),
            pred.at(i, j, base + 1),
            pred.at(i, j, base + 2),
            pred.at(i, j, base + 3),
            cfg.s,
        );
        let v = iou_corners(p, tgt);
        if v > best_iou {
            best_iou = v;
            best = slot;
        }
    }
    best
}

/// Composite loss over a single (pred, target) tensor pair.
pub fn yolo_loss(
    pred: &TargetTensor,
    target: &TargetTensor,
    params: &LossParams,
) -> Result<LossBreakdown, LossError> {
    check_shapes(pred, target)?;
    validate_target(target)?;
    let cfg = pred.cfg();
    let (mut coord, mut obj, mut noobj, mut class) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..cfg.s {
        for j in 0..cfg.s {
            if target.at(i, j, 4) == 1.0 {
                let b_star = responsible_slot(pred, target, i, j);
                let base = b_star * 5;
                let (tx, ty, tw, th) = (
                    target.at(i, j, 0),
                    target.at(i, j, 1),
                    target.at(i, j, 2),
                    target.at(i, j, 3),
                );
                let (px, py, pw, ph) = (
                    pred.at(i, j, base),
                    pred.at(i, j, base + 1),
                    pred.at(i, j, base + 2),
                    pred.at(i, j, base + 3),
                );
                coord += params.lambda_coord
                    * ((tx - px).powi(2)
                        + (ty - py).powi(2)
                        + (tw.sqrt() - pw.max(0.0).sqrt()).powi(2)
                        + (th.sqrt() - ph.max(0.0).sqrt()).powi(2));
                obj += (pred.at(i, j, base + 4) - 1.0).powi(2);
                for slot in 0..cfg.b {
                    if slot != b_star {
                        noobj += params.lambda_noobj * pred.at(i, j, slot * 5 + 4).powi(2);
                    }
                }
                for c in 0..cfg.c {
                    let ch = cfg.b * 5 + c;
                    class += (pred.at(i, j, ch) - target.at(i, j, ch)).powi(2);
                }
            } else {
                for slot in 0..cfg.b {
                    noobj += params.lambda_noobj * pred.at(i, j, slot * 5 + 4).powi(2);
                }
            }
        }
    }
    Ok(LossBreakdown {
        coord,
        obj,
        noobj,
        classification: class,
        total: coord + obj + noobj + class,
    })
}

/// Gradient of `yolo_loss(...).total` with respect to every prediction
/// value, with the responsibility assignment held constant.
pub fn yolo_loss_grad(
    pred: &TargetTensor,
    target: &TargetTensor,
    params: &LossParams,
) -> Result<TargetTensor, LossError> {
    check_shapes(pred, target)?;
    validate_target(target)?;
    let cfg = pred.cfg();
    let mut grad = TargetTensor::zeros(cfg);
    for i in 0..cfg.s {
        for j in 0..cfg.s {
            if target.at(i, j, 4) == 1.0 {
                let b_star = responsible_slot(pred, target, i, j);
                let base = b_star * 5;
                let (tx, ty, tw, th) = (
                    target.at(i, j, 0),
                    target.at(i, j, 1),
                    target.at(i, j, 2),
                    target.at(i, j, 3),
                );
                let (px, py, pw, ph) = (
                    pred.at(i, j, base),
                    pred.at(i, j, base + 1),
                    pred.at(i, j, base + 2),
                    pred.at(i, j, base + 3),
                );
                let lc = params.lambda_coord;
                grad.set(i, j, base, 2.0 * lc * (px - tx));
                grad.set(i, j, base + 1, 2.0 * lc * (py - ty));
                // d/dŵ (√w − √ŵ)² = (√ŵ − √w)/√ŵ ; zero through the clamp
                if pw > 0.0 {
                    grad.set(i, j, base + 2, lc * (pw.sqrt() - tw.sqrt()) / pw.sqrt());
                }
                if ph > 0.0 {
                    grad.set(i, j, base + 3, lc * (ph.sqrt() - th.sqrt()) / ph.sqrt());
                }
                grad.set(i, j, base + 4, 2.0 * (pred.at(i, j, base + 4) - 1.0));
                for slot in 0..cfg.b {
                    if slot != b_star {
                        let ch = slot * 5 + 4;
                        grad.set(i, j, ch, 2.0 * params.lambda_noobj * pred.at(i, j, ch));
                    }
                }
                for c in 0..cfg.c {
                    let ch = cfg.b * 5 + c;
                    grad.set(i, j, ch, 2.0 * (pred.at(i, j, ch) - target.at(i, j, ch)));
                }
            } else {
                for slot in 0..cfg.b {
                    let ch = slot * 5 + 4;
                    grad.set(i, j, ch, 2.0 * params.lambda_noobj * pred.at(i, j, ch));
                }
            }
        }
    }
    Ok(grad)
}

/// Mean breakdown over a batch of (pred, target) pairs.
pub fn yolo_loss_batch(
    pairs: &[(&TargetTensor, &TargetTensor)],
    params: &LossParams,
) -> Result<LossBreakdown, LossError> {
    let n = pairs.len().max(1) as f64;
    let mut acc = LossBreakdown {
        coord: 0.0,
        obj: 0.0,
        noobj: 0.0,
        classification: 0.0,
        total: 0.0,
    };
    for (pred, target) in pairs {
        let b = yolo_loss(pred, target, params)?;
        acc.coord += b.coord / n;
        acc.obj += b.obj / n;
        acc.noobj += b.noobj / n;
        acc.classification += b.classification / n;
        acc.total += b.total / n;
    }
    Ok(acc)
}
