//! Dataset I/O: VOC XML annotations, YOLO label files, P6 PPM rasters, and
//! synthetic desk-scale dataset generation.
//!
//! On-disk dataset layout: `images/NAME.ppm` + `labels/NAME.txt`, paired by
//! stem.

mod labels;
mod ppm;
mod synth;
mod voc;

pub use labels::{read_yolo_labels, write_yolo_labels, LabelError};
pub use ppm::{read_ppm, write_ppm, PpmError};
pub use synth::generate_synthetic;
pub use voc::{parse_voc_xml, VocAnnotation, VocError, VocObject};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::BoxYolo;

/// The canonical 20-class PASCAL VOC table.
pub const VOC_CLASSES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

#[derive(Debug, Error)]
pub enum ClassTableError {
    #[error("duplicate class name: {0}")]
    Duplicate(String),
    #[error("empty class name")]
    EmptyName,
    #[error("empty class table")]
    Empty,
}

/// Ordered list of class names; the index is the numeric class id.
#[derive(Debug, Clone)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self, ClassTableError> {
        if names.is_empty() {
            return Err(ClassTableError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(ClassTableError::EmptyName);
            }
            if !seen.insert(n.clone()) {
                return Err(ClassTableError::Duplicate(n.clone()));
            }
        }
        Ok(ClassTable { names })
    }

    pub fn default_voc() -> Self {
        ClassTable {
            names: VOC_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Parse a table from text, one class name per line.
    pub fn from_text(text: &str) -> Result<Self, ClassTableError> {
        ClassTable::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// 8-bit RGB raster, row-major interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "raster data length");
        Raster { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Raster { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer positions). Coordinates are clamped to the image unless a
    /// fill color is given, in which case samples falling fully outside
    /// return the fill and border samples blend with it.
    pub fn bilinear(&self, fx: f64, fy: f64, fill: Option<[u8; 3]>) -> [f64; 3] {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let dx = fx - x0;
        let dy = fy - y0;
        let fetch = |xi: i64, yi: i64| -> [f64; 3] {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                match fill {
                    Some(c) => [c[0] as f64, c[1] as f64, c[2] as f64],
                    None => {
                        let cx = xi.clamp(0, self.width as i64 - 1) as usize;
                        let cy = yi.clamp(0, self.height as i64 - 1) as usize;
                        let p = self.get(cx, cy);
                        [p[0] as f64, p[1] as f64, p[2] as f64]
                    }
                }
            } else {
                let p = self.get(xi as usize, yi as usize);
                [p[0] as f64, p[1] as f64, p[2] as f64]
            }
        };
        let (xi, yi) = (x0 as i64, y0 as i64);
        let p00 = fetch(xi, yi);
        let p10 = fetch(xi + 1, yi);
        let p01 = fetch(xi, yi + 1);
        let p11 = fetch(xi + 1, yi + 1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (1.0 - dy) * ((1.0 - dx) * p00[c] + dx * p10[c])
                + dy * ((1.0 - dx) * p01[c] + dx * p11[c]);
        }
        out
    }
}

/// A raster image with its normalized labels — the unit of dataset iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Raster,
    pub labels: Vec<BoxYolo>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image {0}: {1}")]
    Ppm(PathBuf, PpmError),
    #[error("labels {0}: {1}")]
    Labels(PathBuf, LabelError),
    #[error("image without matching label file: {0}")]
    MissingLabels(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `samples` under `dir` in the `images/` + `labels/` layout with
/// zero-padded stems. Files are written atomically (temp + rename).
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<Vec<String>, DatasetError> {
    let images = dir.join("images");
    let labels = dir.join("labels");
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    std::fs::create_dir_all(&labels).map_err(io_err(&labels))?;
    let mut stems = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let stem = format!("sample_{i:05}");
        let img_path = images.join(format!("{stem}.ppm"));
        write_atomic(&img_path, &write_ppm(&s.image))?;
        let lbl_path = labels.join(format!("{stem}.txt"));
        write_atomic(&lbl_path, write_yolo_labels(&s.labels).as_bytes())?;
        stems.push(stem);
    }
    Ok(stems)
}

/// Atomic file write: write to a sibling temp file, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(path))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

/// Read a dataset directory back into memory, sorted by stem.
pub fn read_dataset(dir: &Path, table: &ClassTable) -> Result<Vec<(String, Sample)>, DatasetError> {
    let images = dir.join("images");
    let labels = dir.join("labels");
    let mut stems: Vec<String> = std::fs::read_dir(&images)
        .map_err(io_err(&images))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "ppm").unwrap_or(false))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let img_path = images.join(format!("{stem}.ppm"));
        let lbl_path = labels.join(format!("{stem}.txt"));
        if !lbl_path.exists() {
            return Err(DatasetError::MissingLabels(img_path));
        }
        let bytes = std::fs::read(&img_path).map_err(io_err(&img_path))?;
        let image = read_ppm(&bytes).map_err(|e| DatasetError::Ppm(img_path.clone(), e))?;
        let text = std::fs::read_to_string(&lbl_path).map_err(io_err(&lbl_path))?;
        let labels =
            read_yolo_labels(&text, table).map_err(|e| DatasetError::Labels(lbl_path.clone(), e))?;
        out.push((stem, Sample { image, labels }));
    }
    Ok(out)
}
