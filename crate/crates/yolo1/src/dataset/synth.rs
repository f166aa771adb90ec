//! Synthetic desk-scale dataset generation: flat-colored axis-aligned
//! rectangles on a mid-gray background, with labels that exactly describe
//! the drawn rectangles and at most one object center per grid cell.

use super::{ClassTable, Raster, Sample};
use crate::geometry::BoxYolo;
use crate::render::{class_color, fill_rect};
use crate::rng::{derive_seed, RngStream};

pub const BACKGROUND: [u8; 3] = [128, 128, 128];

/// Generate `n_samples` square samples of side `img_size`, deterministic in
/// `seed`. Each sample holds 1–4 rectangles whose centers land in distinct
/// cells of the `grid_s`×`grid_s` grid. `img_size` should be at least
/// `8 * grid_s` so cells have room for a center with margins.
pub fn generate_synthetic(
    seed: u64,
    n_samples: usize,
    table: &ClassTable,
    img_size: usize,
    grid_s: usize,
) -> Vec<Sample> {
    assert!(n_samples >= 1);
    assert!(grid_s >= 1);
    assert!(img_size >= 8 * grid_s, "image too small for the grid");
    (0..n_samples)
        .map(|i| generate_one(derive_seed(seed, i as u64), table, img_size, grid_s))
        .collect()
}

fn generate_one(seed: u64, table: &ClassTable, img_size: usize, grid_s: usize) -> Sample {
    let mut rng = RngStream::new(seed);
    let n = img_size as i64;
    let s = grid_s;
    let mut image = Raster::filled(img_size, img_size, BACKGROUND);
    let n_objects = rng.range_inclusive(1, 4.min(s * s));

    // distinct grid cells for the object centers
    let mut cells: Vec<usize> = Vec::with_capacity(n_objects);
    while cells.len() < n_objects {
        let c = rng.below(s * s);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }

    let mut labels = Vec::with_capacity(n_objects);
    for cell in cells {
        let (ci, cj) = (cell / s, cell % s);
        let class_id = rng.below(table.len());

        // center pixel range: interior 60% of the cell, intersected with a
        // 5px image border margin so the rectangle has room on every side
        let center_range = |c: usize| -> (i64, i64) {
            let lo = (c as f64 * n as f64 / s as f64).ceil() as i64;
            let hi = ((c as f64 + 1.0) * n as f64 / s as f64).floor() as i64 - 1;
            let m = ((hi - lo) as f64 * 0.2).ceil() as i64;
            ((lo + m).max(5), (hi - m).min(n - 5))
        };
        let (ylo, yhi) = center_range(ci);
        let (xlo, xhi) = center_range(cj);
        let cpx = rng.range_inclusive(xlo as usize, xhi.max(xlo) as usize) as i64;
        let cpy = rng.range_inclusive(ylo as usize, yhi.max(ylo) as usize) as i64;

        let max_hw = cpx.min(n - cpx).min(n / 5).max(3);
        let max_hh = cpy.min(n - cpy).min(n / 5).max(3);
        let hw = rng.range_inclusive(3, max_hw as usize) as i64;
        let hh = rng.range_inclusive(3, max_hh as usize) as i64;

        fill_rect(
            &mut image,
            cpx - hw,
            cpy - hh,
            cpx + hw,
            cpy + hh,
            class_color(class_id),
        );
        let nf = n as f64;
        labels.push(BoxYolo::new(
            class_id,
            cpx as f64 / nf,
            cpy as f64 / nf,
            2.0 * hw as f64 / nf,
            2.0 * hh as f64 / nf,
        ));
    }
    Sample { image, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let table = ClassTable::default_voc();
        let a = generate_synthetic(42, 5, &table, 96, 7);
        let b = generate_synthetic(42, 5, &table, 96, 7);
        assert_eq!(a, b);
        let c = generate_synthetic(43, 5, &table, 96, 7);
        assert_ne!(a, c);
    }

    #[test]
    fn labels_valid_and_one_center_per_cell() {
        let table = ClassTable::default_voc();
        for sample in generate_synthetic(9, 50, &table, 112, 7) {
            assert!(!sample.labels.is_empty() && sample.labels.len() <= 4);
            let mut cells = std::collections::HashSet::new();
            for b in &sample.labels {
                b.validate().unwrap();
                assert!(b.class_id() < table.len());
                let i = ((b.cy() * 7.0).floor() as usize).min(6);
                let j = ((b.cx() * 7.0).floor() as usize).min(6);
                assert!(cells.insert((i, j)), "two centers in one cell");
            }
        }
    }

    #[test]
    fn rectangles_match_labels() {
        let table = ClassTable::default_voc();
        for sample in generate_synthetic(3, 10, &table, 96, 7) {
            for b in &sample.labels {
                let n = 96.0;
                let (x0, y0, x1, y1) = b.extent();
                // pixel just inside each corner carries the class color
                let color = class_color(b.class_id());
                let xi = (x0 * n).round() as usize;
                let yi = (y0 * n).round() as usize;
                let xj = (x1 * n).round() as usize - 1;
                let yj = (y1 * n).round() as usize - 1;
                // interiors may be overdrawn by later rectangles; require at
                // least the center pixel or a corner to match
                let center = sample
                    .image
                    .get((b.cx() * n) as usize, (b.cy() * n) as usize);
                let corners = [
                    sample.image.get(xi, yi),
                    sample.image.get(xj, yj),
                ];
                assert!(center == color || corners.contains(&color));
            }
        }
    }
}
