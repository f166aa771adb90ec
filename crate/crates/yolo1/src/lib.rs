//! A complete YOLOv1 single-shot detection pipeline at desk scale:
//! VOC label conversion, the S×S×(B·5+C) grid-tensor codec, box-aware
//! augmentation, the composite detection loss with analytic gradients,
//! forward-only network inference for three architecture variants,
//! greedy NMS, and VOC-style mAP evaluation.

pub mod augment;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod network;
pub mod postprocess;
pub mod render;
pub mod rng;
pub mod schedule;

pub use codec::{Detection, GridConfig, TargetTensor};
pub use dataset::{ClassTable, Raster, Sample};
pub use geometry::{BoxXYXY, BoxYolo};
