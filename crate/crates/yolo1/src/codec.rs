//! Grid-tensor codec: encode label lists into the S×S×(B·5+C) target
//! tensor and decode prediction tensors back to image-relative detections.
//!
//! Cell layout per spec: B blocks of (x, y, w, h, conf) followed by C class
//! scores. Cells are half-open: a center with `cx*S` integral belongs to
//! cell `floor(cx*S)`, and `cx == 1.0` clamps to `S-1`. When two object
//! centers collide in one cell, the larger-area box wins. Box geometry is
//! replicated across all B slots of an object cell; the confidence flag is
//! set on slot 0 only, so a tensor equal to its own target is an exact
//! minimum of the detection loss. Responsibility is resolved inside the
//! loss, not here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clamp_box, BoxYolo};

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("class id {id} out of range (C = {c})")]
    ClassOutOfRange { id: usize, c: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("truncated tensor bytes: expected {expected}, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("bad tensor header")]
    BadHeader,
}

/// Grid geometry: S cells per side, B boxes per cell, C classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub s: usize,
    pub b: usize,
    pub c: usize,
}

impl GridConfig {
    pub const DEFAULT: GridConfig = GridConfig { s: 7, b: 2, c: 20 };

    pub fn new(s: usize, b: usize, c: usize) -> Self {
        assert!(s >= 1 && b >= 1 && c >= 1);
        GridConfig { s, b, c }
    }

    /// Channels per cell: B·5 + C.
    pub fn depth(&self) -> usize {
        self.b * 5 + self.c
    }

    /// Total value count: S·S·depth.
    pub fn len(&self) -> usize {
        self.s * self.s * self.depth()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::DEFAULT
    }
}

/// S×S×(B·5+C) real grid; both the training target and the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTensor {
    cfg: GridConfig,
    values: Vec<f64>,
}

/// Class, score, and image-relative box; the output of decode/NMS and the
/// input to evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    pub box_: BoxYolo,
}

impl TargetTensor {
    pub fn zeros(cfg: GridConfig) -> Self {
        TargetTensor {
            cfg,
            values: vec![0.0; cfg.len()],
        }
    }

    pub fn new(cfg: GridConfig, values: Vec<f64>) -> Result<Self, CodecError> {
        if values.len() != cfg.len() {
            return Err(CodecError::ShapeMismatch(format!(
                "expected {} values for {}x{}x{}, got {}",
                cfg.len(),
                cfg.s,
                cfg.s,
                cfg.depth(),
                values.len()
            )));
        }
        Ok(TargetTensor { cfg, values })
    }

    pub fn cfg(&self) -> GridConfig {
        self.cfg
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.cfg.s + col) * self.cfg.depth() + ch
    }

    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[self.idx(row, col, ch)]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.idx(row, col, ch);
        self.values[i] = v;
    }

    /// Binary form: S, B, C as little-endian u32, then the values as
    /// little-endian IEEE-754 binary64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 8);
        for v in [self.cfg.s, self.cfg.b, self.cfg.c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 12 {
            return Err(CodecError::BadHeader);
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (s, b, c) = (word(0), word(4), word(8));
        if s < 1 || b < 1 || c < 1 {
            return Err(CodecError::BadHeader);
        }
        let cfg = GridConfig { s, b, c };
        let expected = 12 + cfg.len() * 8;
        if bytes.len() < expected {
            return Err(CodecError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let values = bytes[12..expected]
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect();
        Ok(TargetTensor { cfg, values })
    }
}

/// Grid cell owning a normalized center: half-open cells, top coordinate 1.0
/// clamps to the last cell.
pub fn owning_cell(cx: f64, cy: f64, s: usize) -> (usize, usize) {
    let i = ((cy * s as f64).floor() as usize).min(s - 1);
    let j = ((cx * s as f64).floor() as usize).min(s - 1);
    (i, j)
}

/// Encode labels into a target tensor. Within-cell offsets are
/// `x = cx*S - j`, `y = cy*S - i`; w and h stay image-relative. On a cell
/// collision only the larger-area box is kept.
pub fn encode(labels: &[BoxYolo], cfg: GridConfig) -> Result<TargetTensor, CodecError> {
    for b in labels {
        if b.class_id() >= cfg.c {
            return Err(CodecError::ClassOutOfRange {
                id: b.class_id(),
                c: cfg.c,
            });
        }
    }
    // resolve cell collisions first: keep the larger area, earliest on ties
    let mut winners: Vec<Option<&BoxYolo>> = vec![None; cfg.s * cfg.s];
    for b in labels {
        let (i, j) = owning_cell(b.cx(), b.cy(), cfg.s);
        let slot = &mut winners[i * cfg.s + j];
        match slot {
            Some(prev) if prev.area() >= b.area() => {}
            _ => *slot = Some(b),
        }
    }
    let mut t = TargetTensor::zeros(cfg);
    for (cell, b) in winners.iter().enumerate() {
        let Some(b) = b else { continue };
        let (i, j) = (cell / cfg.s, cell % cfg.s);
        let x = b.cx() * cfg.s as f64 - j as f64;
        let y = b.cy() * cfg.s as f64 - i as f64;
        for slot in 0..cfg.b {
            let base = slot * 5;
            t.set(i, j, base, x);
            t.set(i, j, base + 1, y);
            t.set(i, j, base + 2, b.w());
            t.set(i, j, base + 3, b.h());
            t.set(i, j, base + 4, if slot == 0 { 1.0 } else { 0.0 });
        }
        t.set(i, j, cfg.b * 5 + b.class_id(), 1.0);
    }
    Ok(t)
}

/// Decode a prediction tensor into image-relative detections. Per slot:
/// `cx = (j + x)/S`, `cy = (i + y)/S`, score = conf × best class
/// probability, class = argmax (ties to the lowest index). Emitted boxes
/// are clamped; slots bitwise-identical to an earlier slot of the same cell
/// are emitted once. No NMS here.
pub fn decode(pred: &TargetTensor, conf_threshold: f64) -> Vec<Detection> {
    let cfg = pred.cfg;
    let sf = cfg.s as f64;
    let mut out = Vec::new();
    for i in 0..cfg.s {
        for j in 0..cfg.s {
            let (mut best_c, mut best_p) = (0usize, f64::NEG_INFINITY);
            for c in 0..cfg.c {
                let p = pred.at(i, j, cfg.b * 5 + c);
                if p > best_p {
                    best_p = p;
                    best_c = c;
                }
            }
            let mut seen: Vec<[u64; 5]> = Vec::with_capacity(cfg.b);
            for slot in 0..cfg.b {
                let base = slot * 5;
                let raw = [
                    pred.at(i, j, base),
                    pred.at(i, j, base + 1),
                    pred.at(i, j, base + 2),
                    pred.at(i, j, base + 3),
                    pred.at(i, j, base + 4),
                ];
                let bits = raw.map(f64::to_bits);
                if seen.contains(&bits) {
                    continue;
                }
                seen.push(bits);
                let [x, y, w, h, conf] = raw;
                let score = conf * best_p;
                if score < conf_threshold {
                    continue;
                }
                let b = BoxYolo::new(best_c, (j as f64 + x) / sf, (i as f64 + y) / sf, w, h);
                if let Some(clamped) = clamp_box(&b) {
                    out.push(Detection {
                        class_id: best_c,
                        score,
                        box_: clamped,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn empty_labels_zero_tensor() {
        let t = encode(&[], GridConfig::DEFAULT).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_box_encoding() {
        let cfg = GridConfig::new(7, 2, 20);
        let b = BoxYolo::new(0, 0.5, 0.5, 0.2, 0.2);
        let t = encode(&[b.clone()], cfg).unwrap();
        // cx*S = 3.5 -> cell (3,3), offsets 0.5
        for slot in 0..2 {
            let base = slot * 5;
            assert_eq!(t.at(3, 3, base), 0.5);
            assert_eq!(t.at(3, 3, base + 1), 0.5);
            assert_eq!(t.at(3, 3, base + 2), b.w());
            assert_eq!(t.at(3, 3, base + 3), b.h());
        }
        assert_eq!(t.at(3, 3, 4), 1.0); // slot 0 carries the presence flag
        assert_eq!(t.at(3, 3, 9), 0.0);
        assert_eq!(t.at(3, 3, 10), 1.0); // class 0 one-hot
        // 2 slots × (x,y,w,h) + one presence flag + one class bit
        assert_eq!(t.values().iter().filter(|&&v| v != 0.0).count(), 10);
    }

    #[test]
    fn cell_collision_keeps_larger() {
        let cfg = GridConfig::new(7, 2, 20);
        let small = BoxYolo::new(1, 0.5, 0.5, 0.1, 0.1);
        let large = BoxYolo::new(2, 0.52, 0.52, 0.3, 0.3);
        for order in [[small, large], [large, small]] {
            let t = encode(&order, cfg).unwrap();
            assert_eq!(t.at(3, 3, 10 + 2), 1.0);
            assert_eq!(t.at(3, 3, 10 + 1), 0.0);
            assert_eq!(t.at(3, 3, 2), large.w());
        }
    }

    #[test]
    fn boundary_center_clamps_to_last_cell() {
        let cfg = GridConfig::new(7, 1, 1);
        let t = encode(&[BoxYolo::new(0, 1.0, 1.0, 0.05, 0.05)], cfg).unwrap();
        assert_eq!(t.at(6, 6, 4), 1.0);
    }

    #[test]
    fn class_out_of_range() {
        let cfg = GridConfig::new(7, 2, 3);
        let err = encode(&[BoxYolo::new(3, 0.5, 0.5, 0.2, 0.2)], cfg).unwrap_err();
        assert_eq!(err, CodecError::ClassOutOfRange { id: 3, c: 3 });
    }

    #[test]
    fn decode_zero_tensor_empty() {
        let t = TargetTensor::zeros(GridConfig::DEFAULT);
        assert!(decode(&t, 0.1).is_empty());
    }

    #[test]
    fn decode_score_is_product() {
        let cfg = GridConfig::new(1, 1, 2);
        let mut t = TargetTensor::zeros(cfg);
        t.set(0, 0, 0, 0.5);
        t.set(0, 0, 1, 0.5);
        t.set(0, 0, 2, 0.4);
        t.set(0, 0, 3, 0.4);
        t.set(0, 0, 4, 0.6); // conf
        t.set(0, 0, 5, 0.5); // class 0
        t.set(0, 0, 6, 0.2);
        let dets = decode(&t, 0.0);
        assert_eq!(dets.len(), 1);
        assert!((dets[0].score - 0.30).abs() < 1e-12);
        assert_eq!(dets[0].class_id, 0);
        assert!(decode(&t, 0.31).is_empty());
    }

    #[test]
    fn decode_monotone_in_threshold() {
        let mut rng = RngStream::new(17);
        for _ in 0..50 {
            let cfg = GridConfig::new(3, 2, 4);
            let values: Vec<f64> = (0..cfg.len()).map(|_| rng.uniform(-0.5, 1.2)).collect();
            let t = TargetTensor::new(cfg, values).unwrap();
            let lo = decode(&t, 0.2);
            let hi = decode(&t, 0.5);
            assert!(hi.len() <= lo.len());
            for d in &hi {
                assert!(lo.contains(d));
            }
        }
    }

    fn random_labels(rng: &mut RngStream, cfg: GridConfig) -> Vec<BoxYolo> {
        // at most one object per cell, centers well inside their cells
        let n_cells = cfg.s * cfg.s;
        let n = rng.range_inclusive(1, n_cells.min(6));
        let mut cells = Vec::new();
        while cells.len() < n {
            let c = rng.below(n_cells);
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        cells
            .iter()
            .map(|&cell| {
                let (i, j) = (cell / cfg.s, cell % cfg.s);
                let sf = cfg.s as f64;
                let cx = (j as f64 + rng.uniform(0.1, 0.9)) / sf;
                let cy = (i as f64 + rng.uniform(0.1, 0.9)) / sf;
                let w = rng.uniform(0.02, 2.0 * cx.min(1.0 - cx).max(0.011));
                let h = rng.uniform(0.02, 2.0 * cy.min(1.0 - cy).max(0.011));
                BoxYolo::new(rng.below(cfg.c), cx, cy, w, h)
            })
            .collect()
    }

    #[test]
    fn round_trip_randomized() {
        let mut rng = RngStream::new(23);
        for _ in 0..200 {
            let cfg = GridConfig::new(
                rng.range_inclusive(3, 9),
                rng.range_inclusive(1, 3),
                rng.range_inclusive(1, 20),
            );
            let mut labels = random_labels(&mut rng, cfg);
            let t = encode(&labels, cfg).unwrap();
            let mut decoded = decode(&t, 0.5);
            let key = |b: &BoxYolo| (b.class_id(), b.cx().to_bits(), b.cy().to_bits());
            labels.sort_by_key(key);
            decoded.sort_by_key(|d| key(&d.box_));
            assert_eq!(decoded.len(), labels.len());
            for (l, d) in labels.iter().zip(&decoded) {
                assert_eq!(l.class_id(), d.box_.class_id());
                for (a, b) in [
                    (l.cx(), d.box_.cx()),
                    (l.cy(), d.box_.cy()),
                    (l.w(), d.box_.w()),
                    (l.h(), d.box_.h()),
                ] {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bytes_round_trip() {
        let mut rng = RngStream::new(31);
        let cfg = GridConfig::new(4, 2, 5);
        let values: Vec<f64> = (0..cfg.len()).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let t = TargetTensor::new(cfg, values).unwrap();
        let back = TargetTensor::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn truncated_bytes_rejected() {
        let t = TargetTensor::zeros(GridConfig::new(2, 1, 1));
        let bytes = t.to_bytes();
        assert!(matches!(
            TargetTensor::from_bytes(&bytes[..bytes.len() - 4]),
            Err(CodecError::Truncated { .. })
        ));
    }
}
