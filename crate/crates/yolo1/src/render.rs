//! Per-class colors and box outline drawing for annotated outputs.

use crate::dataset::Raster;
use crate::geometry::BoxYolo;

/// Deterministic flat color per class id: golden-angle hue walk in HSV.
pub fn class_color(class_id: usize) -> [u8; 3] {
    let h = (class_id as f64 * 0.618033988749895).fract();
    hsv_to_rgb8(h, 0.75, 0.95)
}

pub fn hsv_to_rgb8(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Draw a box outline of the given thickness (in pixels), clipped to the
/// image.
pub fn draw_box_outline(img: &mut Raster, b: &BoxYolo, color: [u8; 3], thickness: usize) {
    let w = img.width() as f64;
    let h = img.height() as f64;
    let (x0, y0, x1, y1) = b.extent();
    let px0 = (x0 * w).round() as i64;
    let py0 = (y0 * h).round() as i64;
    let px1 = (x1 * w).round() as i64 - 1;
    let py1 = (y1 * h).round() as i64 - 1;
    let t = thickness as i64;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, color);
        }
    };
    for x in px0..=px1 {
        for d in 0..t {
            put(x, py0 + d);
            put(x, py1 - d);
        }
    }
    for y in py0..=py1 {
        for d in 0..t {
            put(px0 + d, y);
            put(px1 - d, y);
        }
    }
}

/// Filled rectangle over the pixel range [x0, x1) × [y0, y1), clipped.
pub fn fill_rect(img: &mut Raster, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let xa = x0.max(0) as usize;
    let ya = y0.max(0) as usize;
    let xb = (x1.max(0) as usize).min(img.width());
    let yb = (y1.max(0) as usize).min(img.height());
    for y in ya..yb {
        for x in xa..xb {
            img.set(x, y, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_colors_distinct_for_voc() {
        let colors: std::collections::HashSet<[u8; 3]> = (0..20).map(class_color).collect();
        assert_eq!(colors.len(), 20);
    }

    #[test]
    fn outline_clipped_at_border() {
        let mut img = Raster::filled(16, 16, [0, 0, 0]);
        let b = BoxYolo::new(0, 0.0, 0.0, 0.5, 0.5); // extends past the top-left corner
        draw_box_outline(&mut img, &b, [255, 0, 0], 2);
        // does not panic and paints something inside
        assert!(img.data().iter().any(|&v| v == 255));
    }
}
