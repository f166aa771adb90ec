//! YOLO label file format: one line per box, `class_id cx cy w h` with
//! 6-decimal fixed-point fields and LF terminators. Six decimals keep
//! sub-pixel precision at 448² while staying diff-stable.

use thiserror::Error;

use super::ClassTable;
use crate::geometry::BoxYolo;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("bad label line {0}")]
    BadLabelLine(usize),
    #[error("unknown class id {id} (table has {table_len} classes)")]
    UnknownClass { id: usize, table_len: usize },
    #[error("invalid label for writing: {0}")]
    InvalidLabel(String),
}

pub fn write_yolo_labels(labels: &[BoxYolo]) -> String {
    let mut out = String::new();
    for b in labels {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            b.class_id(),
            b.cx(),
            b.cy(),
            b.w(),
            b.h()
        ));
    }
    out
}

pub fn read_yolo_labels(text: &str, table: &ClassTable) -> Result<Vec<BoxYolo>, LabelError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(LabelError::BadLabelLine(line_no));
        }
        let id: usize = tokens[0].parse().map_err(|_| LabelError::BadLabelLine(line_no))?;
        if id >= table.len() {
            return Err(LabelError::UnknownClass { id, table_len: table.len() });
        }
        let mut vals = [0.0f64; 4];
        for (v, t) in vals.iter_mut().zip(&tokens[1..]) {
            *v = t.parse().map_err(|_| LabelError::BadLabelLine(line_no))?;
        }
        let b = BoxYolo::new(id, vals[0], vals[1], vals[2], vals[3]);
        b.validate().map_err(|_| LabelError::BadLabelLine(line_no))?;
        out.push(b);
    }
    Ok(out)
}
