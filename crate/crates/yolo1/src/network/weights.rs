//! Weight storage and the "YWT1" file format.
//!
//! Layout: magic `YWT1`, u32 architecture-name length + UTF-8 name, u32
//! layer count, then per parameterized layer two arrays (weights, bias),
//! each encoded as u32 dimension count, u32 dimensions, and IEEE-754
//! binary32 little-endian values. Loading validates every dimension
//! against the architecture; round trips are bit-exact.

use super::{ArchitectureDef, LayerSpec, NetworkError, Shape};
use crate::rng::RngStream;

/// One parameter array: dimensions plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamArray {
    fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        ParamArray {
            dims,
            data: vec![0.0; n],
        }
    }
}

/// Weights and biases for every parameterized layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub layers: Vec<(ParamArray, ParamArray)>,
}

/// Expected (weight dims, bias dims) per parameterized layer: conv is
/// [out_c, in_c, k, k] / [out_c]; fully connected is [out, in] / [out].
pub fn expected_shapes(arch: &ArchitectureDef) -> Result<Vec<(Vec<usize>, Vec<usize>)>, NetworkError> {
    let shapes = super::shape_inference(arch, arch.input_h, arch.input_w)?;
    let mut out = Vec::new();
    let mut in_shape = Shape::Spatial {
        c: arch.input_c,
        h: arch.input_h,
        w: arch.input_w,
    };
    for (layer, out_shape) in arch.layers.iter().zip(&shapes) {
        match (layer, in_shape) {
            (
                LayerSpec::Conv {
                    out_channels, kernel, ..
                },
                Shape::Spatial { c, .. },
            ) => out.push((vec![*out_channels, c, *kernel, *kernel], vec![*out_channels])),
            (LayerSpec::FullyConnected { out_features, .. }, Shape::Flat(inp)) => {
                out.push((vec![*out_features, inp], vec![*out_features]))
            }
            _ => {}
        }
        in_shape = *out_shape;
    }
    Ok(out)
}

impl WeightStore {
    pub fn zeros(arch: &ArchitectureDef) -> Result<Self, NetworkError> {
        Ok(WeightStore {
            layers: expected_shapes(arch)?
                .into_iter()
                .map(|(w, b)| (ParamArray::zeros(w), ParamArray::zeros(b)))
                .collect(),
        })
    }

    /// Uniform init in ±1/√fan_in per layer, deterministic in the seed.
    pub fn random(arch: &ArchitectureDef, seed: u64) -> Result<Self, NetworkError> {
        let mut rng = RngStream::new(seed);
        let mut layers = Vec::new();
        for (wdims, bdims) in expected_shapes(arch)? {
            let fan_in: usize = wdims[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut fill = |dims: Vec<usize>| {
                let n = dims.iter().product();
                ParamArray {
                    dims,
                    data: (0..n).map(|_| rng.uniform(-bound, bound) as f32).collect(),
                }
            };
            let w = fill(wdims);
            let b = fill(bdims);
            layers.push((w, b));
        }
        Ok(WeightStore { layers })
    }

    /// Check this store against the architecture's expected shapes.
    pub fn validate(&self, arch: &ArchitectureDef) -> Result<(), NetworkError> {
        let expected = expected_shapes(arch)?;
        if expected.len() != self.layers.len() {
            return Err(NetworkError::WeightMismatch(format!(
                "{} parameterized layers, architecture has {}",
                self.layers.len(),
                expected.len()
            )));
        }
        for (i, ((wdims, bdims), (w, b))) in expected.iter().zip(&self.layers).enumerate() {
            if &w.dims != wdims || &b.dims != bdims {
                return Err(NetworkError::WeightMismatch(format!(
                    "layer {i}: got {:?}/{:?}, expected {wdims:?}/{bdims:?}",
                    w.dims, b.dims
                )));
            }
            if w.data.len() != wdims.iter().product::<usize>()
                || b.data.len() != bdims.iter().product::<usize>()
            {
                return Err(NetworkError::WeightMismatch(format!(
                    "layer {i}: array length disagrees with dimensions"
                )));
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"YWT1";

pub fn save_weights(arch: &ArchitectureDef, weights: &WeightStore) -> Result<Vec<u8>, NetworkError> {
    weights.validate(arch)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(arch.name.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.name.as_bytes());
    out.extend_from_slice(&(weights.layers.len() as u32).to_le_bytes());
    let put_array = |a: &ParamArray, out: &mut Vec<u8>| {
        out.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
        for &d in &a.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &a.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (w, b) in &weights.layers {
        put_array(w, &mut out);
        put_array(b, &mut out);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetworkError::Truncated {
                expected: self.pos + n - self.bytes.len(),
                got: self.bytes.len() - self.pos,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_weights(arch: &ArchitectureDef, bytes: &[u8]) -> Result<WeightStore, NetworkError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetworkError::BadMagic);
    }
    let name_len = r.u32()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| NetworkError::BadMagic)?;
    if name != arch.name {
        return Err(NetworkError::DimensionMismatch(format!(
            "file holds weights for '{name}', architecture is '{}'",
            arch.name
        )));
    }
    let expected = expected_shapes(arch)?;
    let n_layers = r.u32()? as usize;
    if n_layers != expected.len() {
        return Err(NetworkError::DimensionMismatch(format!(
            "file holds {n_layers} layers, architecture has {}",
            expected.len()
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (i, (wdims, bdims)) in expected.iter().enumerate() {
        let read_array = |r: &mut Reader, want: &[usize], what: &str| -> Result<ParamArray, NetworkError> {
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32()? as usize);
            }
            if dims != want {
                return Err(NetworkError::DimensionMismatch(format!(
                    "layer {i} {what}: file {dims:?}, architecture {want:?}"
                )));
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(ParamArray { dims, data })
        };
        let w = read_array(&mut r, wdims, "weights")?;
        let b = read_array(&mut r, bdims, "bias")?;
        layers.push((w, b));
    }
    Ok(WeightStore { layers })
}
