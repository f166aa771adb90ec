//! Deterministic, seedable image augmentations that co-transform bounding
//! boxes.
//!
//! Pixel-only stages (color jitter, blur, grayscale) never touch labels.
//! Geometric stages (flips, rotation, scale) map boxes alongside pixels and
//! drop boxes that no longer survive clamping. All randomness comes from the
//! caller's [`RngStream`], so a pipeline application is a pure function of
//! (seed, pipeline, sample).

use thiserror::Error;

use crate::dataset::{Raster, Sample};
use crate::geometry::{clamp_box, BoxYolo};
use crate::rng::RngStream;

/// Fill color for pixels rotated in from outside the frame; matches the
/// synthetic background.
pub const ROTATION_FILL: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("bad scale factor {0}: must be in [1.0, 1.2]")]
    BadFactor(f64),
    #[error("bad pipeline config line {line}: {msg}")]
    BadConfig { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// pixel-only stages

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Color jitter with concrete draws: multiplicative brightness `b`,
/// contrast `c` about the per-image mean luma, saturation `s` about the
/// per-pixel luma, and a hue rotation of `hue_turns`. Sub-steps at their
/// identity value are skipped so an all-identity call is bit-exact.
pub fn apply_color_jitter(img: &Raster, b: f64, c: f64, s: f64, hue_turns: f64) -> Raster {
    if b == 1.0 && c == 1.0 && s == 1.0 && hue_turns == 0.0 {
        return img.clone();
    }
    let mut buf: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    if b != 1.0 {
        for v in &mut buf {
            *v *= b;
        }
    }
    if c != 1.0 {
        let mut mean = 0.0;
        for px in buf.chunks_exact(3) {
            mean += luma(px[0], px[1], px[2]);
        }
        mean /= (buf.len() / 3) as f64;
        for v in &mut buf {
            *v = mean + c * (*v - mean);
        }
    }
    if s != 1.0 {
        for px in buf.chunks_exact_mut(3) {
            let l = luma(px[0], px[1], px[2]);
            for v in px {
                *v = l + s * (*v - l);
            }
        }
    }
    if hue_turns != 0.0 {
        for px in buf.chunks_exact_mut(3) {
            let r = px[0].clamp(0.0, 255.0) / 255.0;
            let g = px[1].clamp(0.0, 255.0) / 255.0;
            let b_ = px[2].clamp(0.0, 255.0) / 255.0;
            let (h, sat, val) = rgb_to_hsv(r, g, b_);
            let (r2, g2, b2) = hsv_to_rgb(h + hue_turns, sat, val);
            px[0] = r2 * 255.0;
            px[1] = g2 * 255.0;
            px[2] = b2 * 255.0;
        }
    }
    let data = buf
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    Raster::new(img.width(), img.height(), data)
}

/// Random color jitter: draws brightness in [1-β, 1+β], contrast in
/// [1-γ, 1+γ], saturation in [1-σ, 1+σ], hue rotation in [-η, η] turns.
pub fn color_jitter(
    img: &Raster,
    brightness: f64,
    contrast: f64,
    saturation: f64,
    hue: f64,
    rng: &mut RngStream,
) -> Raster {
    let b = rng.uniform(1.0 - brightness, 1.0 + brightness);
    let c = rng.uniform(1.0 - contrast, 1.0 + contrast);
    let s = rng.uniform(1.0 - saturation, 1.0 + saturation);
    let h = rng.uniform(-hue, hue);
    apply_color_jitter(img, b, c, s, h)
}

/// Normalized 1-D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(kernel: usize, sigma: f64) -> Vec<f64> {
    assert!(kernel % 2 == 1 && sigma > 0.0);
    let r = (kernel / 2) as i64;
    let mut w: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable Gaussian blur on one channel plane, clamp-to-edge borders.
/// Kept in f64 so mass-conservation properties are testable before the
/// final 8-bit quantization.
pub fn blur_plane(plane: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, width as i64 - 1) as usize;
                acc += t * plane[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let sy = (y as i64 + k as i64 - r).clamp(0, height as i64 - 1) as usize;
                acc += t * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Separable Gaussian blur; the pipeline applies it with probability p.
pub fn gaussian_blur(img: &Raster, kernel: usize, sigma: f64) -> Raster {
    let taps = gaussian_kernel(kernel, sigma);
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0u8; img.data().len()];
    for ch in 0..3 {
        let plane: Vec<f64> = img.data().iter().skip(ch).step_by(3).map(|&v| v as f64).collect();
        let blurred = blur_plane(&plane, w, h, &taps);
        for (i, v) in blurred.iter().enumerate() {
            out[i * 3 + ch] = v.clamp(0.0, 255.0).round() as u8;
        }
    }
    Raster::new(w, h, out)
}

/// Replace every pixel by its luma in all channels. Idempotent.
pub fn grayscale(img: &Raster) -> Raster {
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| {
            let l = luma(px[0] as f64, px[1] as f64, px[2] as f64)
                .clamp(0.0, 255.0)
                .round() as u8;
            [l, l, l]
        })
        .collect();
    Raster::new(img.width(), img.height(), data)
}

// ---------------------------------------------------------------------------
// geometric stages

/// Horizontal mirror: image columns reversed, each box `cx -> 1 - cx`.
/// An exact involution (labels live on the dyadic coordinate grid).
pub fn hflip(sample: &Sample) -> Sample {
    let (w, h) = (sample.image.width(), sample.image.height());
    let mut img = Raster::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            img.set(w - 1 - x, y, sample.image.get(x, y));
        }
    }
    let labels = sample
        .labels
        .iter()
        .map(|b| BoxYolo::new(b.class_id(), 1.0 - b.cx(), b.cy(), b.w(), b.h()))
        .collect();
    Sample { image: img, labels }
}

/// Vertical mirror: image rows reversed, each box `cy -> 1 - cy`.
pub fn vflip(sample: &Sample) -> Sample {
    let (w, h) = (sample.image.width(), sample.image.height());
    let mut img = Raster::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            img.set(x, h - 1 - y, sample.image.get(x, y));
        }
    }
    let labels = sample
        .labels
        .iter()
        .map(|b| BoxYolo::new(b.class_id(), b.cx(), 1.0 - b.cy(), b.w(), b.h()))
        .collect();
    Sample { image: img, labels }
}

/// Rotate about the image center by `angle_degrees` (|angle| should stay
/// within ±45). Pixels are bilinearly resampled with out-of-frame regions
/// filled mid-gray. Each box is mapped by rotating its four corners in
/// pixel space and taking the axis-aligned hull; boxes that do not survive
/// clamping are dropped.
pub fn rotation_jitter(sample: &Sample, angle_degrees: f64) -> Sample {
    if angle_degrees == 0.0 {
        return sample.clone();
    }
    let (w, h) = (sample.image.width(), sample.image.height());
    let (wf, hf) = (w as f64, h as f64);
    let (cx, cy) = (wf / 2.0, hf / 2.0);
    let theta = angle_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();

    let mut img = Raster::filled(w, h, ROTATION_FILL);
    for y in 0..h {
        for x in 0..w {
            // inverse map: output pixel center back into the source frame
            let px = x as f64 + 0.5 - cx;
            let py = y as f64 + 0.5 - cy;
            let sx = cx + cos * px + sin * py;
            let sy = cy - sin * px + cos * py;
            let rgb = sample.image.bilinear(sx - 0.5, sy - 0.5, Some(ROTATION_FILL));
            img.set(
                x,
                y,
                [
                    rgb[0].clamp(0.0, 255.0).round() as u8,
                    rgb[1].clamp(0.0, 255.0).round() as u8,
                    rgb[2].clamp(0.0, 255.0).round() as u8,
                ],
            );
        }
    }

    let labels = sample
        .labels
        .iter()
        .filter_map(|b| {
            let (x0, y0, x1, y1) = b.extent();
            let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
            let mut hull = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (u, v) in corners {
                let px = u * wf - cx;
                let py = v * hf - cy;
                // forward map, matching the pixel resampling direction
                let rx = cx + cos * px - sin * py;
                let ry = cy + sin * px + cos * py;
                let (nu, nv) = (rx / wf, ry / hf);
                hull.0 = hull.0.min(nu);
                hull.1 = hull.1.min(nv);
                hull.2 = hull.2.max(nu);
                hull.3 = hull.3.max(nv);
            }
            let hull_box = BoxYolo::new(
                b.class_id(),
                (hull.0 + hull.2) / 2.0,
                (hull.1 + hull.3) / 2.0,
                hull.2 - hull.0,
                hull.3 - hull.1,
            );
            clamp_box(&hull_box)
        })
        .collect();
    Sample { image: img, labels }
}

/// Upscale by `factor` (bilinear) and center-crop back to the original
/// size, realized as a single inverse mapping. Boxes are rescaled about the
/// image center and clamped; non-survivors are dropped.
pub fn scale_jitter(sample: &Sample, factor: f64) -> Result<Sample, AugmentError> {
    if !(1.0..=1.2 + 1e-12).contains(&factor) {
        return Err(AugmentError::BadFactor(factor));
    }
    if factor == 1.0 {
        return Ok(sample.clone());
    }
    let (w, h) = (sample.image.width(), sample.image.height());
    let (wf, hf) = (w as f64, h as f64);
    let mut img = Raster::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let sx = wf / 2.0 + (x as f64 + 0.5 - wf / 2.0) / factor;
            let sy = hf / 2.0 + (y as f64 + 0.5 - hf / 2.0) / factor;
            let rgb = sample.image.bilinear(sx - 0.5, sy - 0.5, None);
            img.set(
                x,
                y,
                [
                    rgb[0].clamp(0.0, 255.0).round() as u8,
                    rgb[1].clamp(0.0, 255.0).round() as u8,
                    rgb[2].clamp(0.0, 255.0).round() as u8,
                ],
            );
        }
    }
    let labels = sample
        .labels
        .iter()
        .filter_map(|b| {
            let scaled = BoxYolo::new(
                b.class_id(),
                0.5 + (b.cx() - 0.5) * factor,
                0.5 + (b.cy() - 0.5) * factor,
                b.w() * factor,
                b.h() * factor,
            );
            clamp_box(&scaled)
        })
        .collect();
    Ok(Sample { image: img, labels })
}

// ---------------------------------------------------------------------------
// pipeline

/// Ordered augmentation stages with their parameters. Defaults follow the
/// training pipeline this library reproduces:
/// ColorJitter(0.2, 0.5, 0.7, 0.07), blur(3×3, sigma in [0.1, 2], p=0.1),
/// grayscale(p=0.1), hflip(p=0.5), vflip(p=0.05),
/// rotation jitter(p=0.5, ±10°), and optional scale jitter(≤1.2, p=0).
/// Hue is in turns (0.07 ≈ 25°).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPipeline {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    pub blur_p: f64,
    pub blur_kernel: usize,
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub grayscale_p: f64,
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub rotation_p: f64,
    pub rotation_max_degrees: f64,
    pub scale_p: f64,
    pub scale_max: f64,
}

impl Default for AugmentPipeline {
    fn default() -> Self {
        AugmentPipeline {
            brightness: 0.2,
            contrast: 0.5,
            saturation: 0.7,
            hue: 0.07,
            blur_p: 0.1,
            blur_kernel: 3,
            blur_sigma_min: 0.1,
            blur_sigma_max: 2.0,
            grayscale_p: 0.1,
            hflip_p: 0.5,
            vflip_p: 0.05,
            rotation_p: 0.5,
            rotation_max_degrees: 10.0,
            scale_p: 0.0,
            scale_max: 0.20,
        }
    }
}

impl AugmentPipeline {
    /// All factors and probabilities zero: applying it is the identity.
    pub fn identity() -> Self {
        AugmentPipeline {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            blur_p: 0.0,
            blur_kernel: 3,
            blur_sigma_min: 0.1,
            blur_sigma_max: 2.0,
            grayscale_p: 0.0,
            hflip_p: 0.0,
            vflip_p: 0.0,
            rotation_p: 0.0,
            rotation_max_degrees: 10.0,
            scale_p: 0.0,
            scale_max: 0.20,
        }
    }

    /// Parse the flat key-value config format: one `key = value` per line,
    /// `#` comments and blank lines ignored. Unknown keys are errors.
    /// Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut p = AugmentPipeline::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(AugmentError::BadConfig {
                line: line_no,
                msg: "expected key = value".into(),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| AugmentError::BadConfig {
                line: line_no,
                msg: format!("bad number {:?}", value.trim()),
            })?;
            match key {
                "brightness" => p.brightness = value,
                "contrast" => p.contrast = value,
                "saturation" => p.saturation = value,
                "hue" => p.hue = value,
                "blur_p" => p.blur_p = value,
                "blur_kernel" => p.blur_kernel = value as usize,
                "blur_sigma_min" => p.blur_sigma_min = value,
                "blur_sigma_max" => p.blur_sigma_max = value,
                "grayscale_p" => p.grayscale_p = value,
                "hflip_p" => p.hflip_p = value,
                "vflip_p" => p.vflip_p = value,
                "rotation_p" => p.rotation_p = value,
                "rotation_max_degrees" => p.rotation_max_degrees = value,
                "scale_p" => p.scale_p = value,
                "scale_max" => p.scale_max = value,
                _ => {
                    return Err(AugmentError::BadConfig {
                        line: line_no,
                        msg: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        for prob in [p.blur_p, p.grayscale_p, p.hflip_p, p.vflip_p, p.rotation_p, p.scale_p] {
            if !(0.0..=1.0).contains(&prob) {
                return Err(AugmentError::BadConfig {
                    line: 0,
                    msg: format!("probability {prob} outside [0,1]"),
                });
            }
        }
        Ok(p)
    }

    /// Apply all stages in order, each fired per its probability from `rng`.
    pub fn apply(&self, sample: &Sample, rng: &mut RngStream) -> Result<Sample, AugmentError> {
        let image = color_jitter(
            &sample.image,
            self.brightness,
            self.contrast,
            self.saturation,
            self.hue,
            rng,
        );
        let mut out = Sample {
            image,
            labels: sample.labels.clone(),
        };
        if rng.bernoulli(self.blur_p) {
            let sigma = rng.uniform(self.blur_sigma_min, self.blur_sigma_max);
            out.image = gaussian_blur(&out.image, self.blur_kernel, sigma);
        }
        if rng.bernoulli(self.grayscale_p) {
            out.image = grayscale(&out.image);
        }
        if rng.bernoulli(self.hflip_p) {
            out = hflip(&out);
        }
        if rng.bernoulli(self.vflip_p) {
            out = vflip(&out);
        }
        if rng.bernoulli(self.rotation_p) {
            let angle = rng.uniform(-self.rotation_max_degrees, self.rotation_max_degrees);
            out = rotation_jitter(&out, angle);
        }
        if rng.bernoulli(self.scale_p) {
            let factor = rng.uniform(1.0, 1.0 + self.scale_max);
            out = scale_jitter(&out, factor)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, ClassTable};

    fn test_sample(seed: u64) -> Sample {
        let table = ClassTable::default_voc();
        generate_synthetic(seed, 1, &table, 64, 7).pop().unwrap()
    }

    #[test]
    fn color_jitter_all_zero_identity() {
        let s = test_sample(1);
        let mut rng = RngStream::new(0);
        let out = color_jitter(&s.image, 0.0, 0.0, 0.0, 0.0, &mut rng);
        assert_eq!(out, s.image);
    }

    #[test]
    fn brightness_doubles_pixel() {
        let img = Raster::filled(2, 2, [100, 100, 100]);
        let out = apply_color_jitter(&img, 2.0, 1.0, 1.0, 0.0);
        assert_eq!(out.get(0, 0), [200, 200, 200]);
    }

    #[test]
    fn color_jitter_output_in_range_boxes_untouched() {
        let s = test_sample(2);
        let mut rng = RngStream::new(3);
        for _ in 0..20 {
            let out = color_jitter(&s.image, 0.9, 0.9, 0.9, 0.4, &mut rng);
            assert_eq!(out.width(), s.image.width());
            // u8 storage already bounds values; spot-check determinism shape
            assert_eq!(out.data().len(), s.image.data().len());
        }
    }

    #[test]
    fn blur_constant_image_unchanged() {
        let img = Raster::filled(9, 9, [77, 13, 200]);
        for sigma in [0.1, 0.5, 2.0] {
            assert_eq!(gaussian_blur(&img, 3, sigma), img);
        }
    }

    #[test]
    fn kernel_closed_form() {
        // sigma = 0.5: weights proportional to exp(0), exp(-1/(2*0.25))
        let taps = gaussian_kernel(3, 0.5);
        let side = (-2.0f64).exp();
        let sum = 1.0 + 2.0 * side;
        assert!((taps[1] - 1.0 / sum).abs() < 1e-12);
        assert!((taps[0] - side / sum).abs() < 1e-12);
        assert_eq!(taps[0], taps[2]);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_conserves_mass_for_interior_support() {
        // zero border ring: with clamp-to-edge every unit of input mass is
        // redistributed but none is created or lost
        let mut rng = RngStream::new(4);
        let (w, h) = (12, 10);
        let mut plane = vec![0.0; w * h];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                plane[y * w + x] = rng.uniform(0.0, 255.0);
            }
        }
        let taps = gaussian_kernel(3, 0.8);
        let out = blur_plane(&plane, w, h, &taps);
        let before: f64 = plane.iter().sum();
        let after: f64 = out.iter().sum();
        assert!((before - after).abs() < 1e-9 * before.max(1.0));
    }

    #[test]
    fn grayscale_examples() {
        let img = Raster::filled(1, 1, [255, 0, 0]);
        assert_eq!(grayscale(&img).get(0, 0), [76, 76, 76]);
        let g = grayscale(&test_sample(5).image);
        assert_eq!(grayscale(&g), g);
    }

    #[test]
    fn flips_are_exact_involutions() {
        for seed in 0..5 {
            let s = test_sample(seed);
            assert_eq!(hflip(&hflip(&s)), s);
            assert_eq!(vflip(&vflip(&s)), s);
        }
        // awkward coordinate: 0.1 is not exactly reflectable on raw doubles
        let mut s = test_sample(9);
        s.labels = vec![BoxYolo::new(0, 0.1, 0.3, 0.05, 0.05)];
        assert_eq!(hflip(&hflip(&s)), s);
    }

    #[test]
    fn hflip_reflects_center() {
        let mut s = test_sample(1);
        s.labels = vec![BoxYolo::new(2, 0.3, 0.4, 0.1, 0.1)];
        let f = hflip(&s);
        assert_eq!(f.labels[0].cx(), 1.0 - s.labels[0].cx());
        assert_eq!(f.labels[0].cy(), s.labels[0].cy());
        assert_eq!(f.labels.len(), s.labels.len());
        assert_eq!(f.labels[0].class_id(), 2);
    }

    #[test]
    fn rotation_zero_is_identity() {
        let s = test_sample(3);
        let out = rotation_jitter(&s, 0.0);
        assert_eq!(out, s);
    }

    #[test]
    fn rotation_45_centered_square_hull() {
        let mut s = Sample {
            image: Raster::filled(64, 64, [0, 0, 0]),
            labels: vec![BoxYolo::new(0, 0.5, 0.5, 0.2, 0.2)],
        };
        s.image.set(0, 0, [1, 2, 3]);
        let out = rotation_jitter(&s, 45.0);
        let b = &out.labels[0];
        let expect = 0.2 * std::f64::consts::SQRT_2;
        assert!((b.cx() - 0.5).abs() < 1e-9);
        assert!((b.cy() - 0.5).abs() < 1e-9);
        assert!((b.w() - expect).abs() < 1e-9);
        assert!((b.h() - expect).abs() < 1e-9);
    }

    #[test]
    fn rotation_approximate_inverse() {
        let mut s = test_sample(6);
        // interior box on a square image
        s.labels = vec![BoxYolo::new(1, 0.5, 0.45, 0.2, 0.15)];
        for angle in [5.0, 10.0, 30.0] {
            let back = rotation_jitter(&rotation_jitter(&s, angle), -angle);
            assert_eq!(back.labels.len(), 1);
            assert!((back.labels[0].cx() - 0.5).abs() < 0.02);
            assert!((back.labels[0].cy() - 0.45).abs() < 0.02);
        }
    }

    #[test]
    fn scale_identity_and_example() {
        let s = test_sample(7);
        assert_eq!(scale_jitter(&s, 1.0).unwrap(), s);
        let mut s2 = s.clone();
        s2.labels = vec![BoxYolo::new(0, 0.5, 0.5, 0.5, 0.5)];
        let out = scale_jitter(&s2, 1.2).unwrap();
        assert!((out.labels[0].w() - 0.6).abs() < 1e-9);
        assert!((out.labels[0].h() - 0.6).abs() < 1e-9);
        assert!((out.labels[0].cx() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn scale_bad_factor() {
        let s = test_sample(7);
        assert_eq!(scale_jitter(&s, 0.9).unwrap_err(), AugmentError::BadFactor(0.9));
        assert_eq!(scale_jitter(&s, 1.3).unwrap_err(), AugmentError::BadFactor(1.3));
    }

    #[test]
    fn scale_border_boxes_survive_or_drop_validly() {
        let mut s = test_sample(8);
        s.labels = vec![
            BoxYolo::new(0, 0.05, 0.05, 0.09, 0.09),
            BoxYolo::new(1, 0.5, 0.5, 0.2, 0.2),
        ];
        let out = scale_jitter(&s, 1.2).unwrap();
        for b in &out.labels {
            b.validate().unwrap();
        }
    }

    #[test]
    fn pipeline_identity() {
        let s = test_sample(10);
        let mut rng = RngStream::new(99);
        let out = AugmentPipeline::identity().apply(&s, &mut rng).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn pipeline_deterministic() {
        let s = test_sample(11);
        let p = AugmentPipeline::default();
        let a = p.apply(&s, &mut RngStream::new(7)).unwrap();
        let b = p.apply(&s, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pipeline_outputs_valid_labels() {
        let s = test_sample(12);
        let p = AugmentPipeline::default();
        for seed in 0..200 {
            let out = p.apply(&s, &mut RngStream::new(seed)).unwrap();
            for b in &out.labels {
                b.validate().unwrap();
            }
        }
    }

    #[test]
    fn config_parsing() {
        let p = AugmentPipeline::parse("hflip_p = 1.0\n# comment\nrotation_p = 0\n").unwrap();
        assert_eq!(p.hflip_p, 1.0);
        assert_eq!(p.rotation_p, 0.0);
        assert_eq!(p.brightness, 0.2); // untouched default
        assert!(AugmentPipeline::parse("bogus = 1\n").is_err());
        assert!(AugmentPipeline::parse("hflip_p = 2.0\n").is_err());
    }
}
