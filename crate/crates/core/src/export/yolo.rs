use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, ExportError};
use crate::annotate::ShapeKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoloIssue {
    pub image: String,
    /// Position of the shape within its frame.
    pub index: usize,
    pub label: String,
    pub kind: ShapeKind,
}

/// Shapes that could not be written verbatim.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct YoloReport {
    /// Polygons and polylines written as their bounding box.
    pub degraded_to_extent: Vec<YoloIssue>,
    /// Boxes clamped to the image bounds.
    pub clamped: Vec<YoloIssue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct YoloExport {
    /// `classes.txt`: one label per line in class-id order.
    pub classes: String,
    /// `(image stem, label document)` per frame.
    pub documents: Vec<(String, String)>,
    pub report: YoloReport,
}

/// One label line; corners in pixels, normalized by the image size.
pub fn yolo_line(class_id: usize, min: [f64; 2], max: [f64; 2], width: u32, height: u32) -> String {
    let (w, h) = (width as f64, height as f64);
    // `+ 0.0` turns a negative zero into a positive one before formatting.
    let cx = (min[0] + max[0]) / 2.0 / w + 0.0;
    let cy = (min[1] + max[1]) / 2.0 / h + 0.0;
    let bw = (max[0] - min[0]) / w + 0.0;
    let bh = (max[1] - min[1]) / h + 0.0;
    format!("{class_id} {cx:.6} {cy:.6} {bw:.6} {bh:.6}\n")
}

pub fn export_yolo(ds: &Dataset) -> Result<YoloExport, ExportError> {
    if ds.labels.is_empty() {
        return Err(ExportError::EmptyLabelCatalog);
    }
    ds.validate()?;
    let mut report = YoloReport::default();
    let mut documents = Vec::with_capacity(ds.frames.len());
    for frame in &ds.frames {
        let mut doc = String::new();
        for (index, shape) in frame.annotations.iter().enumerate() {
            let issue = || YoloIssue {
                image: frame.image.clone(),
                index,
                label: shape.label.clone(),
                kind: shape.kind,
            };
            if shape.kind != ShapeKind::Bbox {
                report.degraded_to_extent.push(issue());
            }
            let mut min = [f64::INFINITY; 2];
            let mut max = [f64::NEG_INFINITY; 2];
            for p in &shape.points {
                for k in 0..2 {
                    min[k] = min[k].min(p[k]);
                    max[k] = max[k].max(p[k]);
                }
            }
            let limit = [frame.width as f64, frame.height as f64];
            let mut clamped = false;
            for k in 0..2 {
                let (lo, hi) = (min[k].clamp(0.0, limit[k]), max[k].clamp(0.0, limit[k]));
                clamped |= lo != min[k] || hi != max[k];
                min[k] = lo;
                max[k] = hi;
            }
            if clamped {
                report.clamped.push(issue());
            }
            let id = ds.class_id(&shape.label).expect("validated");
            doc.push_str(&yolo_line(id, min, max, frame.width, frame.height));
        }
        let stem = Path::new(&frame.image)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&frame.image)
            .to_string();
        documents.push((stem, doc));
    }
    let classes = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    Ok(YoloExport {
        classes,
        documents,
        report,
    })
}
