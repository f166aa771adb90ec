//! Declarative network architectures, shape and parameter arithmetic, and
//! a forward-only CPU inference engine with a portable weight format.
//!
//! Three builtins: `full24` (the classic 24-conv detector), `tiny9` (nine
//! 3×3 convs, FC 2048), and `ms6` (six 5×5 convs, ReLU×3 then SiLU×3,
//! adaptive average pooling to 7×7, FC 1920 with dropout 0.25). All three
//! map a 448×448×3 image to the 7×7×30 grid tensor.

mod forward;
mod weights;

pub use forward::{conv2d, forward, resize_bilinear};
pub use weights::{load_weights, save_weights, WeightStore};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::GridConfig;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown architecture: {0}")]
    UnknownArchitecture(String),
    #[error("layer {layer} produces non-positive spatial dims")]
    ShapeUnderflow { layer: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("weights do not match architecture: {0}")]
    WeightMismatch(String),
    #[error("input is {got_w}x{got_h}, architecture expects {want_w}x{want_h}")]
    InputMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("final layer emits {got} values, grid tensor needs {want}")]
    OutputMismatch { got: usize, want: usize },
    #[error("bad weight-file magic")]
    BadMagic,
    #[error("weight dimensions do not match architecture: {0}")]
    DimensionMismatch(String),
    #[error("weight file truncated: expected {expected} more bytes, got {got}")]
    Truncated { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Slope 0.1 on the negative side.
    LeakyRelu,
    Silu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.1 * x
                }
            }
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    Maxpool {
        kernel: usize,
        stride: usize,
    },
    AdaptiveAvgPool {
        out_h: usize,
        out_w: usize,
    },
    Flatten,
    FullyConnected {
        out_features: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDef {
    pub name: String,
    pub input_h: usize,
    pub input_w: usize,
    pub input_c: usize,
    pub layers: Vec<LayerSpec>,
    pub grid: GridConfig,
}

/// Per-layer output shape during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ArchitectureDef {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::InvalidArchitecture(msg));
        if self.input_h == 0 || self.input_w == 0 || self.input_c == 0 {
            return bad("input dimensions must be positive".into());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { out_channels, kernel, stride, .. } => {
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                        return bad(format!("layer {i}: conv dims must be positive"));
                    }
                }
                LayerSpec::Maxpool { kernel, stride } => {
                    if *kernel == 0 || *stride == 0 {
                        return bad(format!("layer {i}: maxpool dims must be positive"));
                    }
                }
                LayerSpec::AdaptiveAvgPool { out_h, out_w } => {
                    if *out_h == 0 || *out_w == 0 {
                        return bad(format!("layer {i}: pool output must be positive"));
                    }
                }
                LayerSpec::Flatten => {}
                LayerSpec::FullyConnected { out_features, .. } => {
                    if *out_features == 0 {
                        return bad(format!("layer {i}: fc width must be positive"));
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(*rate >= 0.0 && *rate < 1.0) {
                        return bad(format!("layer {i}: dropout rate outside [0,1)"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel,
        stride,
        padding,
        activation,
    }
}

fn maxpool2() -> LayerSpec {
    LayerSpec::Maxpool { kernel: 2, stride: 2 }
}

fn fc(out_features: usize, activation: Activation) -> LayerSpec {
    LayerSpec::FullyConnected {
        out_features,
        activation,
    }
}

/// The pinned layer lists of the three builtin variants.
pub fn builtin_architecture(name: &str) -> Result<ArchitectureDef, NetworkError> {
    use Activation::{LeakyRelu, Linear, Relu, Silu};
    let layers = match name {
        "full24" => {
            let mut l = vec![conv(64, 7, 2, 3, LeakyRelu), maxpool2()];
            l.push(conv(192, 3, 1, 1, LeakyRelu));
            l.push(maxpool2());
            l.extend([
                conv(128, 1, 1, 0, LeakyRelu),
                conv(256, 3, 1, 1, LeakyRelu),
                conv(256, 1, 1, 0, LeakyRelu),
                conv(512, 3, 1, 1, LeakyRelu),
                maxpool2(),
            ]);
            for _ in 0..4 {
                l.push(conv(256, 1, 1, 0, LeakyRelu));
                l.push(conv(512, 3, 1, 1, LeakyRelu));
            }
            l.extend([
                conv(512, 1, 1, 0, LeakyRelu),
                conv(1024, 3, 1, 1, LeakyRelu),
                maxpool2(),
            ]);
            for _ in 0..2 {
                l.push(conv(512, 1, 1, 0, LeakyRelu));
                l.push(conv(1024, 3, 1, 1, LeakyRelu));
            }
            l.extend([
                conv(1024, 3, 1, 1, LeakyRelu),
                conv(1024, 3, 2, 1, LeakyRelu),
                conv(1024, 3, 1, 1, LeakyRelu),
                conv(1024, 3, 1, 1, LeakyRelu),
                LayerSpec::Flatten,
                fc(4096, LeakyRelu),
                fc(1470, Linear),
            ]);
            l
        }
        "tiny9" => {
            let mut l = Vec::new();
            for width in [16, 32, 64, 128, 256, 512] {
                l.push(conv(width, 3, 1, 1, LeakyRelu));
                l.push(maxpool2());
            }
            for _ in 0..3 {
                l.push(conv(1024, 3, 1, 1, LeakyRelu));
            }
            l.extend([LayerSpec::Flatten, fc(2048, LeakyRelu), fc(1470, Linear)]);
            l
        }
        "ms6" => {
            let widths = [32, 64, 128, 256, 512, 1024];
            let acts = [Relu, Relu, Relu, Silu, Silu, Silu];
            let mut l = Vec::new();
            for (i, (&width, &act)) in widths.iter().zip(&acts).enumerate() {
                l.push(conv(width, 5, 1, 2, act));
                if i < 5 {
                    l.push(maxpool2());
                }
            }
            l.extend([
                LayerSpec::AdaptiveAvgPool { out_h: 7, out_w: 7 },
                LayerSpec::Flatten,
                fc(1920, Silu),
                LayerSpec::Dropout { rate: 0.25 },
                fc(1470, Linear),
            ]);
            l
        }
        other => return Err(NetworkError::UnknownArchitecture(other.into())),
    };
    Ok(ArchitectureDef {
        name: name.into(),
        input_h: 448,
        input_w: 448,
        input_c: 3,
        layers,
        grid: GridConfig::DEFAULT,
    })
}

/// Per-layer output shapes for the given input size; standard
/// floor((in + 2p − k)/s) + 1 arithmetic for conv and pooling.
pub fn shape_inference(
    arch: &ArchitectureDef,
    input_h: usize,
    input_w: usize,
) -> Result<Vec<Shape>, NetworkError> {
    arch.validate()?;
    let mut shape = Shape::Spatial {
        c: arch.input_c,
        h: input_h,
        w: input_w,
    };
    let out_dim = |inp: usize, k: usize, s: usize, p: usize| -> Option<usize> {
        let num = (inp + 2 * p).checked_sub(k)?;
        Some(num / s + 1)
    };
    let mut shapes = Vec::with_capacity(arch.layers.len());
    for (i, layer) in arch.layers.iter().enumerate() {
        let underflow = || NetworkError::ShapeUnderflow { layer: i };
        shape = match (*layer, shape) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                Shape::Spatial { h, w, .. },
            ) => Shape::Spatial {
                c: out_channels,
                h: out_dim(h, kernel, stride, padding).ok_or_else(underflow)?,
                w: out_dim(w, kernel, stride, padding).ok_or_else(underflow)?,
            },
            (LayerSpec::Maxpool { kernel, stride }, Shape::Spatial { c, h, w }) => Shape::Spatial {
                c,
                h: out_dim(h, kernel, stride, 0).ok_or_else(underflow)?,
                w: out_dim(w, kernel, stride, 0).ok_or_else(underflow)?,
            },
            (LayerSpec::AdaptiveAvgPool { out_h, out_w }, Shape::Spatial { c, .. }) => {
                Shape::Spatial { c, h: out_h, w: out_w }
            }
            (LayerSpec::Flatten, s @ Shape::Spatial { .. }) => Shape::Flat(s.len()),
            (LayerSpec::FullyConnected { out_features, .. }, Shape::Flat(_)) => {
                Shape::Flat(out_features)
            }
            (LayerSpec::Dropout { .. }, s) => s,
            _ => {
                return Err(NetworkError::InvalidArchitecture(format!(
                    "layer {i} cannot consume the preceding shape"
                )))
            }
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

/// Total and per-layer parameter counts: conv = (k²·in_c + 1)·out_c,
/// fully connected = (in + 1)·out, everything else 0.
pub fn param_count(arch: &ArchitectureDef) -> Result<(usize, Vec<usize>), NetworkError> {
    let shapes = shape_inference(arch, arch.input_h, arch.input_w)?;
    let mut per_layer = Vec::with_capacity(arch.layers.len());
    let mut in_shape = Shape::Spatial {
        c: arch.input_c,
        h: arch.input_h,
        w: arch.input_w,
    };
    for (layer, out_shape) in arch.layers.iter().zip(&shapes) {
        let n = match (layer, in_shape) {
            (
                LayerSpec::Conv {
                    out_channels, kernel, ..
                },
                Shape::Spatial { c, .. },
            ) => (kernel * kernel * c + 1) * out_channels,
            (LayerSpec::FullyConnected { out_features, .. }, Shape::Flat(inp)) => {
                (inp + 1) * out_features
            }
            _ => 0,
        };
        per_layer.push(n);
        in_shape = *out_shape;
    }
    Ok((per_layer.iter().sum(), per_layer))
}
