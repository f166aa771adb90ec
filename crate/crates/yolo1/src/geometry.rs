//! Box representations, coordinate conversions, and IoU — the arithmetic
//! substrate for the rest of the pipeline.
//!
//! All arithmetic is in f64. Normalized coordinates are quantized to a
//! dyadic grid (multiples of 2^-40) when a [`BoxYolo`] is constructed, so
//! that the mirror maps `x -> 1 - x` used by the flip augmentations are
//! exact and flipping twice is a bit-exact involution. The quantization
//! error (< 5e-13) is far below every tolerance in the pipeline.

use thiserror::Error;

const COORD_GRID: f64 = (1u64 << 40) as f64;

/// Minimum surviving normalized area after clamping; smaller boxes are
/// dropped (about 4.5 px squared on a 448-pixel image).
pub const MIN_CLAMPED_AREA: f64 = 1e-4;

/// Snap a normalized coordinate to the dyadic grid.
pub fn snap(x: f64) -> f64 {
    (x * COORD_GRID).round() / COORD_GRID
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box: width or height is not positive after clamping")]
    DegenerateBox,
    #[error("box coordinates must be finite")]
    NotFinite,
    #[error("inverted box: min edge is not below max edge")]
    Inverted,
    #[error("normalized box out of range: {0}")]
    OutOfRange(String),
}

/// Absolute-pixel corner-format box, origin top-left. Edges are treated as
/// continuous coordinates (no +1 pixel adjustment).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxXYXY {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BoxXYXY {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotFinite);
        }
        if xmin >= xmax || ymin >= ymax {
            return Err(GeometryError::Inverted);
        }
        Ok(BoxXYXY { xmin, ymin, xmax, ymax })
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }
}

/// Intersection over union of two corner-format boxes; 0 when disjoint.
pub fn iou(a: &BoxXYXY, b: &BoxXYXY) -> f64 {
    iou_corners(
        (a.xmin, a.ymin, a.xmax, a.ymax),
        (b.xmin, b.ymin, b.xmax, b.ymax),
    )
}

/// IoU on raw corner tuples. Zero-area or inverted operands yield 0.
pub fn iou_corners(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let ix = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let iy = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = ix * iy;
    let area_a = ((a.2 - a.0) * (a.3 - a.1)).max(0.0);
    let area_b = ((b.2 - b.0) * (b.3 - b.1)).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Class id plus normalized center-format box — the label currency of the
/// whole pipeline. Coordinates are snapped to the dyadic grid on
/// construction; values may lie outside [0,1] transiently (mid-augmentation)
/// and are brought back in range by [`clamp_box`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxYolo {
    class_id: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BoxYolo {
    pub fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoxYolo {
            class_id,
            cx: snap(cx),
            cy: snap(cy),
            w: snap(w),
            h: snap(h),
        }
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn with_class(self, class_id: usize) -> Self {
        BoxYolo { class_id, ..self }
    }

    /// Corner extents in normalized units (may exceed [0,1] pre-clamp).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Persisted-label invariants: center in [0,1], extents in [0,1] up to
    /// 1e-6 slack, sizes in (0,1].
    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotFinite);
        }
        let ok_center = (0.0..=1.0).contains(&self.cx) && (0.0..=1.0).contains(&self.cy);
        let ok_size = self.w > 0.0 && self.w <= 1.0 && self.h > 0.0 && self.h <= 1.0;
        let (x0, y0, x1, y1) = self.extent();
        let slack = 1e-6;
        let ok_extent = x0 >= -slack && y0 >= -slack && x1 <= 1.0 + slack && y1 <= 1.0 + slack;
        if ok_center && ok_size && ok_extent {
            Ok(())
        } else {
            Err(GeometryError::OutOfRange(format!(
                "cx={} cy={} w={} h={}",
                self.cx, self.cy, self.w, self.h
            )))
        }
    }
}

/// IoU of two normalized boxes (computed on their corner extents).
pub fn iou_yolo(a: &BoxYolo, b: &BoxYolo) -> f64 {
    iou_corners(a.extent(), b.extent())
}

/// Convert an absolute-pixel box to normalized center format. The box is
/// clamped to the image first (1-pixel slack is tolerated in the input).
pub fn voc_to_yolo(
    b: &BoxXYXY,
    class_id: usize,
    img_w: f64,
    img_h: f64,
) -> Result<BoxYolo, GeometryError> {
    debug_assert!(img_w > 0.0 && img_h > 0.0);
    let xmin = b.xmin.clamp(0.0, img_w);
    let xmax = b.xmax.clamp(0.0, img_w);
    let ymin = b.ymin.clamp(0.0, img_h);
    let ymax = b.ymax.clamp(0.0, img_h);
    if xmax - xmin <= 0.0 || ymax - ymin <= 0.0 {
        return Err(GeometryError::DegenerateBox);
    }
    Ok(BoxYolo::new(
        class_id,
        (xmin + xmax) / (2.0 * img_w),
        (ymin + ymax) / (2.0 * img_h),
        (xmax - xmin) / img_w,
        (ymax - ymin) / img_h,
    ))
}

/// Inverse of [`voc_to_yolo`] up to floating rounding.
pub fn yolo_to_voc(b: &BoxYolo, img_w: f64, img_h: f64) -> BoxXYXY {
    let (x0, y0, x1, y1) = b.extent();
    BoxXYXY {
        xmin: x0 * img_w,
        ymin: y0 * img_h,
        xmax: x1 * img_w,
        ymax: y1 * img_h,
    }
}

/// Intersect a (possibly out-of-range) box with the unit square. In-range
/// boxes are returned unchanged. Returns `None` when the surviving area is
/// below [`MIN_CLAMPED_AREA`].
pub fn clamp_box(b: &BoxYolo) -> Option<BoxYolo> {
    let (x0, y0, x1, y1) = b.extent();
    if x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 {
        return if b.w > 0.0 && b.h > 0.0 { Some(*b) } else { None };
    }
    let nx0 = x0.max(0.0);
    let ny0 = y0.max(0.0);
    let nx1 = x1.min(1.0);
    let ny1 = y1.min(1.0);
    if nx1 <= nx0 || ny1 <= ny0 {
        return None;
    }
    if (nx1 - nx0) * (ny1 - ny0) < MIN_CLAMPED_AREA {
        return None;
    }
    Some(BoxYolo::new(
        b.class_id,
        (nx0 + nx1) / 2.0,
        (ny0 + ny1) / 2.0,
        nx1 - nx0,
        ny1 - ny0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoxXYXY {
        BoxXYXY::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_identity() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        assert_eq!(iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
    }

    #[test]
    fn iou_partial_overlap() {
        // inter 1, union 4 + 4 - 1 = 7
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn iou_properties_randomized() {
        let mut rng = RngStream::new(11);
        for _ in 0..500 {
            let mk = |rng: &mut RngStream| {
                let x0 = rng.uniform(0.0, 50.0);
                let y0 = rng.uniform(0.0, 50.0);
                bx(x0, y0, x0 + rng.uniform(0.1, 30.0), y0 + rng.uniform(0.1, 30.0))
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let v = iou(&a, &b);
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v, iou(&b, &a));
            assert_eq!(iou(&a, &a), 1.0);
            // translation invariance under integer shifts
            let tx = rng.below(20) as f64;
            let ty = rng.below(20) as f64;
            let shift = |b: &BoxXYXY| bx(b.xmin + tx, b.ymin + ty, b.xmax + tx, b.ymax + ty);
            assert!((iou(&shift(&a), &shift(&b)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn voc_to_yolo_full_image() {
        let b = voc_to_yolo(&bx(0.0, 0.0, 100.0, 100.0), 0, 100.0, 100.0).unwrap();
        assert_eq!((b.cx(), b.cy(), b.w(), b.h()), (0.5, 0.5, 1.0, 1.0));
    }

    #[test]
    fn voc_to_yolo_quadrant() {
        let b = voc_to_yolo(&bx(320.0, 240.0, 640.0, 480.0), 3, 640.0, 480.0).unwrap();
        assert_eq!((b.cx(), b.cy(), b.w(), b.h()), (0.75, 0.75, 0.5, 0.5));
        assert_eq!(b.class_id(), 3);
    }

    #[test]
    fn voc_to_yolo_degenerate() {
        let b = BoxXYXY::new(50.0, 50.0, 50.0, 80.0);
        assert_eq!(b.unwrap_err(), GeometryError::Inverted);
        // degenerate after clamping: box entirely outside the image
        let outside = bx(200.0, 10.0, 220.0, 30.0);
        assert_eq!(
            voc_to_yolo(&outside, 0, 100.0, 100.0).unwrap_err(),
            GeometryError::DegenerateBox
        );
    }

    #[test]
    fn yolo_to_voc_examples() {
        let b = BoxYolo::new(0, 0.5, 0.5, 1.0, 1.0);
        let v = yolo_to_voc(&b, 100.0, 100.0);
        assert_eq!((v.xmin, v.ymin, v.xmax, v.ymax), (0.0, 0.0, 100.0, 100.0));
        let b = BoxYolo::new(0, 0.75, 0.75, 0.5, 0.5);
        let v = yolo_to_voc(&b, 640.0, 480.0);
        assert!((v.xmin - 320.0).abs() < 1e-9);
        assert!((v.ymin - 240.0).abs() < 1e-9);
        assert!((v.xmax - 640.0).abs() < 1e-9);
        assert!((v.ymax - 480.0).abs() < 1e-9);
    }

    #[test]
    fn conversion_round_trip_randomized() {
        let mut rng = RngStream::new(5);
        for _ in 0..1000 {
            let img_w = rng.uniform(32.0, 2000.0).floor();
            let img_h = rng.uniform(32.0, 2000.0).floor();
            let x0 = rng.uniform(0.0, img_w - 2.0);
            let y0 = rng.uniform(0.0, img_h - 2.0);
            let b = bx(
                x0,
                y0,
                x0 + rng.uniform(1.0, img_w - x0),
                y0 + rng.uniform(1.0, img_h - y0),
            );
            let y = voc_to_yolo(&b, 0, img_w, img_h).unwrap();
            let back = yolo_to_voc(&y, img_w, img_h);
            for (orig, got) in [
                (b.xmin, back.xmin),
                (b.ymin, back.ymin),
                (b.xmax, back.xmax),
                (b.ymax, back.ymax),
            ] {
                let rel = (orig - got).abs() / orig.abs().max(1.0);
                assert!(rel < 1e-9, "rel err {rel}");
            }
        }
    }

    #[test]
    fn clamp_in_range_unchanged() {
        let b = BoxYolo::new(2, 0.4, 0.6, 0.2, 0.3);
        assert_eq!(clamp_box(&b), Some(b));
    }

    #[test]
    fn clamp_partial() {
        let b = BoxYolo::new(0, 0.0, 0.5, 0.4, 0.4);
        let c = clamp_box(&b).unwrap();
        assert!((c.cx() - 0.1).abs() < 1e-9);
        assert!((c.cy() - 0.5).abs() < 1e-9);
        assert!((c.w() - 0.2).abs() < 1e-9);
        assert!((c.h() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn clamp_fully_outside() {
        let b = BoxYolo::new(0, 1.5, 1.5, 0.2, 0.2);
        assert_eq!(clamp_box(&b), None);
    }

    #[test]
    fn clamp_tiny_survivor_dropped() {
        // sliver after clamping: 0.0002 · 0.2 = 4e-5 < 1e-4
        let b = BoxYolo::new(0, -0.0998, 0.5, 0.2, 0.2);
        assert_eq!(clamp_box(&b), None);
    }

    #[test]
    fn mirror_is_exact_on_grid() {
        // 0.1 is the classic counterexample for 1-(1-x)==x on raw doubles;
        // the construction grid makes reflection exact.
        let b = BoxYolo::new(0, 0.1, 0.3, 0.05, 0.05);
        let flipped = 1.0 - b.cx();
        assert_eq!(1.0 - flipped, b.cx());
    }
}
