//! Forward-only inference: direct convolution, pooling, fully connected
//! layers, and bilinear input resizing. Weights are stored in binary32 but
//! all arithmetic runs in binary64.
//!
//! The stride-1 convolution path copies each input plane into an
//! explicitly zero-padded buffer and accumulates into an output scratch
//! plane that shares the padded row stride, so each kernel tap is a single
//! contiguous multiply-accumulate over the whole plane — the loop overhead
//! no longer scales with the row count, which matters for the deep layers
//! whose rows are only 14 columns wide. Strided convolutions fall back to
//! a tap-at-a-time walk with the valid column range computed analytically.
//! Both hot loops auto-vectorize under the workspace `target-cpu=native`
//! setting.

use super::{
    weights::expected_shapes, Activation, ArchitectureDef, LayerSpec, NetworkError, Shape,
    WeightStore,
};
use crate::codec::TargetTensor;
use crate::dataset::Raster;

/// Bilinear resize with pixel centers at integer coordinates and
/// clamp-to-edge sampling; a same-size resize is the identity.
pub fn resize_bilinear(img: &Raster, out_w: usize, out_h: usize) -> Raster {
    assert!(out_w >= 1 && out_h >= 1);
    let sx = img.width() as f64 / out_w as f64;
    let sy = img.height() as f64 / out_h as f64;
    let mut out = Raster::filled(out_w, out_h, [0, 0, 0]);
    for y in 0..out_h {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..out_w {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let p = img.bilinear(fx, fy, None);
            out.set(
                x,
                y,
                [
                    p[0].round().clamp(0.0, 255.0) as u8,
                    p[1].round().clamp(0.0, 255.0) as u8,
                    p[2].round().clamp(0.0, 255.0) as u8,
                ],
            );
        }
    }
    out
}

/// Direct 2-D convolution over a CHW buffer; weights laid out
/// [out_c][in_c][k][k], zero padding, bias added once per output plane.
/// Returns the output buffer and its (channels, height, width). Public so
/// the kernel can be checked against reference implementations in
/// isolation.
pub fn conv2d(
    input: &[f64],
    (in_c, in_h, in_w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    out_c: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Vec<f64>, (usize, usize, usize)) {
    let out_h = (in_h + 2 * padding - kernel) / stride + 1;
    let out_w = (in_w + 2 * padding - kernel) / stride + 1;
    let mut out = vec![0.0; out_c * out_h * out_w];
    if stride == 1 {
        conv2d_stride1(
            input,
            (in_c, in_h, in_w),
            weight,
            bias,
            out_c,
            kernel,
            padding,
            &mut out,
            out_h,
            out_w,
        );
        return (out, (out_c, out_h, out_w));
    }
    for oc in 0..out_c {
        let plane = &mut out[oc * out_h * out_w..(oc + 1) * out_h * out_w];
        let b = bias[oc] as f64;
        for v in plane.iter_mut() {
            *v = b;
        }
        for ic in 0..in_c {
            let in_plane = &input[ic * in_h * in_w..(ic + 1) * in_h * in_w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let wv = weight[((oc * in_c + ic) * kernel + ky) * kernel + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    // valid output columns: 0 ≤ ox·stride + kx − padding < in_w
                    let kxp = kx as i64 - padding as i64;
                    let ox_lo = if kxp >= 0 {
                        0
                    } else {
                        ((-kxp) as usize + stride - 1) / stride
                    };
                    let ox_hi = if (in_w as i64 - 1 - kxp) < 0 {
                        0
                    } else {
                        (((in_w as i64 - 1 - kxp) as usize) / stride + 1).min(out_w)
                    };
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let kyp = ky as i64 - padding as i64;
                    for oy in 0..out_h {
                        let iy = oy as i64 * stride as i64 + kyp;
                        if iy < 0 || iy >= in_h as i64 {
                            continue;
                        }
                        let in_row = &in_plane[iy as usize * in_w..(iy as usize + 1) * in_w];
                        let out_row = &mut plane[oy * out_w..(oy + 1) * out_w];
                        if stride == 1 {
                            let ix0 = (ox_lo as i64 + kxp) as usize;
                            let n = ox_hi - ox_lo;
                            let src = &in_row[ix0..ix0 + n];
                            let dst = &mut out_row[ox_lo..ox_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = (ox * stride) as i64 + kxp;
                                out_row[ox] += wv * in_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, (out_c, out_h, out_w))
}

/// Stride-1 convolution over an explicitly zero-padded input. The output
/// accumulates in a scratch plane whose row stride equals the padded input
/// width, so every kernel tap is one contiguous axpy of length
/// `(out_h − 1)·pw + out_w`; the pad columns of the scratch plane collect
/// row-wrap garbage and are stripped when the plane is compacted into the
/// real output. Per-element accumulation order (ic, then ky, then kx)
/// matches the naive reference.
#[allow(clippy::too_many_arguments)]
fn conv2d_stride1(
    input: &[f64],
    (in_c, in_h, in_w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    out_c: usize,
    kernel: usize,
    padding: usize,
    out: &mut [f64],
    out_h: usize,
    out_w: usize,
) {
    let pw = in_w + 2 * padding;
    let ph = in_h + 2 * padding;
    let mut padded = vec![0.0; in_c * ph * pw];
    for ic in 0..in_c {
        for y in 0..in_h {
            let src = &input[(ic * in_h + y) * in_w..(ic * in_h + y + 1) * in_w];
            let dst = ic * ph * pw + (y + padding) * pw + padding;
            padded[dst..dst + in_w].copy_from_slice(src);
        }
    }
    let n = (out_h - 1) * pw + out_w;
    let mut scratch = vec![0.0; n];
    let taps = kernel * kernel;
    let mut tap_list: Vec<(usize, f64)> = Vec::with_capacity(taps);
    for oc in 0..out_c {
        let b = bias[oc] as f64;
        for v in scratch.iter_mut() {
            *v = b;
        }
        for ic in 0..in_c {
            let in_plane = &padded[ic * ph * pw..(ic + 1) * ph * pw];
            let wbase = (oc * in_c + ic) * taps;
            tap_list.clear();
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let wv = weight[wbase + ky * kernel + kx] as f64;
                    if wv != 0.0 {
                        tap_list.push((ky * pw + kx, wv));
                    }
                }
            }
            // Block the plane so the destination stays in registers/L1
            // across all taps; fixed-size array chunks keep the inner
            // loops free of bounds checks.
            const BLK: usize = 64;
            let mut c = 0;
            while c + BLK <= n {
                let dst: &mut [f64; BLK] = (&mut scratch[c..c + BLK]).try_into().unwrap();
                for &(off, wv) in &tap_list {
                    let s: &[f64; BLK] = (&in_plane[off + c..off + c + BLK]).try_into().unwrap();
                    for j in 0..BLK {
                        dst[j] += wv * s[j];
                    }
                }
                c += BLK;
            }
            for &(off, wv) in &tap_list {
                let src = &in_plane[off + c..off + n];
                for (d, s) in scratch[c..n].iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        }
        let plane = &mut out[oc * out_h * out_w..(oc + 1) * out_h * out_w];
        for oy in 0..out_h {
            plane[oy * out_w..(oy + 1) * out_w]
                .copy_from_slice(&scratch[oy * pw..oy * pw + out_w]);
        }
    }
}

fn maxpool(
    input: &[f64],
    (c, in_h, in_w): (usize, usize, usize),
    kernel: usize,
    stride: usize,
) -> (Vec<f64>, (usize, usize, usize)) {
    let out_h = (in_h - kernel) / stride + 1;
    let out_w = (in_w - kernel) / stride + 1;
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        let plane = &input[ch * in_h * in_w..(ch + 1) * in_h * in_w];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..kernel {
                    let row = &plane[(oy * stride + ky) * in_w..];
                    for kx in 0..kernel {
                        m = m.max(row[ox * stride + kx]);
                    }
                }
                out[(ch * out_h + oy) * out_w + ox] = m;
            }
        }
    }
    (out, (c, out_h, out_w))
}

/// Adaptive average pooling: output cell (i,j) averages the input window
/// [⌊i·h/oh⌋, ⌈(i+1)·h/oh⌉) × [⌊j·w/ow⌋, ⌈(j+1)·w/ow⌉).
fn adaptive_avg_pool(
    input: &[f64],
    (c, in_h, in_w): (usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> (Vec<f64>, (usize, usize, usize)) {
    let mut out = vec![0.0; c * out_h * out_w];
    let edge = |i: usize, inp: usize, outp: usize| -> (usize, usize) {
        (i * inp / outp, ((i + 1) * inp + outp - 1) / outp)
    };
    for ch in 0..c {
        let plane = &input[ch * in_h * in_w..(ch + 1) * in_h * in_w];
        for oy in 0..out_h {
            let (y0, y1) = edge(oy, in_h, out_h);
            for ox in 0..out_w {
                let (x0, x1) = edge(ox, in_w, out_w);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += plane[y * in_w + x];
                    }
                }
                out[(ch * out_h + oy) * out_w + ox] = sum / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    (out, (c, out_h, out_w))
}

fn fully_connected(input: &[f64], weight: &[f32], bias: &[f32], out_features: usize) -> Vec<f64> {
    let in_features = input.len();
    let mut out = Vec::with_capacity(out_features);
    for o in 0..out_features {
        let row = &weight[o * in_features..(o + 1) * in_features];
        let mut acc = bias[o] as f64;
        for (w, x) in row.iter().zip(input) {
            acc += *w as f64 * x;
        }
        out.push(acc);
    }
    out
}

fn activate(buf: &mut [f64], act: Activation) {
    if act == Activation::Linear {
        return;
    }
    for v in buf.iter_mut() {
        *v = act.apply(*v);
    }
}

/// Run the network on an image already resized to the architecture input;
/// pixels are scaled to [0,1]. Dropout is the identity at inference.
pub fn forward(
    arch: &ArchitectureDef,
    weights: &WeightStore,
    img: &Raster,
) -> Result<TargetTensor, NetworkError> {
    weights.validate(arch)?;
    if img.width() != arch.input_w || img.height() != arch.input_h {
        return Err(NetworkError::InputMismatch {
            got_w: img.width(),
            got_h: img.height(),
            want_w: arch.input_w,
            want_h: arch.input_h,
        });
    }
    debug_assert_eq!(arch.input_c, 3, "rasters are RGB");
    let (h, w) = (img.height(), img.width());
    let mut buf = vec![0.0f64; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let p = img.get(x, y);
            for ch in 0..3 {
                buf[(ch * h + y) * w + x] = p[ch] as f64 / 255.0;
            }
        }
    }
    let mut shape = Shape::Spatial { c: 3, h, w };
    // recompute shapes up front so underflow errors carry layer indices
    let _ = super::shape_inference(arch, h, w)?;
    let mut param_idx = 0usize;
    let n_params = expected_shapes(arch)?.len();
    debug_assert_eq!(n_params, weights.layers.len());
    for layer in &arch.layers {
        match (*layer, shape) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    activation,
                },
                Shape::Spatial { c, h, w },
            ) => {
                let (wa, ba) = &weights.layers[param_idx];
                param_idx += 1;
                let (next, dims) = conv2d(
                    &buf,
                    (c, h, w),
                    &wa.data,
                    &ba.data,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                );
                buf = next;
                activate(&mut buf, activation);
                shape = Shape::Spatial {
                    c: dims.0,
                    h: dims.1,
                    w: dims.2,
                };
            }
            (LayerSpec::Maxpool { kernel, stride }, Shape::Spatial { c, h, w }) => {
                let (next, dims) = maxpool(&buf, (c, h, w), kernel, stride);
                buf = next;
                shape = Shape::Spatial {
                    c: dims.0,
                    h: dims.1,
                    w: dims.2,
                };
            }
            (LayerSpec::AdaptiveAvgPool { out_h, out_w }, Shape::Spatial { c, h, w }) => {
                let (next, dims) = adaptive_avg_pool(&buf, (c, h, w), out_h, out_w);
                buf = next;
                shape = Shape::Spatial {
                    c: dims.0,
                    h: dims.1,
                    w: dims.2,
                };
            }
            (LayerSpec::Flatten, s @ Shape::Spatial { .. }) => {
                shape = Shape::Flat(s.len());
            }
            (
                LayerSpec::FullyConnected {
                    out_features,
                    activation,
                },
                Shape::Flat(_),
            ) => {
                let (wa, ba) = &weights.layers[param_idx];
                param_idx += 1;
                buf = fully_connected(&buf, &wa.data, &ba.data, out_features);
                activate(&mut buf, activation);
                shape = Shape::Flat(out_features);
            }
            (LayerSpec::Dropout { .. }, _) => {}
            _ => {
                return Err(NetworkError::InvalidArchitecture(
                    "layer cannot consume the preceding shape".into(),
                ))
            }
        }
    }
    let want = arch.grid.len();
    if shape.len() != want {
        return Err(NetworkError::OutputMismatch {
            got: shape.len(),
            want,
        });
    }
    TargetTensor::new(arch.grid, buf)
        .map_err(|e| NetworkError::InvalidArchitecture(format!("output reshape: {e}")))
}
