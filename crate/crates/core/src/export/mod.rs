//! Dataset serialization: YOLO label files, CVAT "annotations 1.1" XML and a
//! plain JSON document.

mod cvat;
mod yolo;

pub use cvat::{export_cvat_xml, import_cvat_xml};
pub use yolo::{export_yolo, yolo_line, YoloExport, YoloIssue, YoloReport};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, ShapeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("label catalog is empty")]
    EmptyLabelCatalog,
    #[error("label `{0}` is not in the catalog")]
    UnknownLabel(String),
    #[error("label `{0}` appears twice in the catalog")]
    DuplicateLabel(String),
    #[error("invalid shape in `{image}`: {message}")]
    InvalidShape { image: String, message: String },
    #[error("line {line}, element <{element}>: {message}")]
    Parse {
        line: usize,
        element: String,
        message: String,
    },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ExportError {
    fn from(e: std::io::Error) -> Self {
        ExportError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledShape {
    pub label: String,
    pub kind: ShapeKind,
    /// Pixel coordinates; boxes hold `[min, max]`.
    pub points: Vec<[f64; 2]>,
}

impl From<&Annotation> for LabeledShape {
    fn from(a: &Annotation) -> Self {
        Self {
            label: a.label.clone(),
            kind: a.kind,
            points: a.points.iter().map(|p| [p.u, p.v]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFrame {
    /// Image file name relative to the dataset root.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<LabeledShape>,
}

/// Label catalog plus annotated frames. Class ids are catalog positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(default)]
    pub name: String,
    pub labels: Vec<String>,
    pub frames: Vec<DatasetFrame>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            labels,
            frames: Vec::new(),
        }
    }

    pub fn class_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<(), ExportError> {
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(ExportError::DuplicateLabel(l.clone()));
            }
        }
        for f in &self.frames {
            for a in &f.annotations {
                if self.class_id(&a.label).is_none() {
                    return Err(ExportError::UnknownLabel(a.label.clone()));
                }
                let ok = match a.kind {
                    ShapeKind::Bbox => a.points.len() == 2,
                    ShapeKind::Polygon => a.points.len() >= 3,
                    ShapeKind::Polyline => a.points.len() >= 2,
                };
                if !ok || a.points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(ExportError::InvalidShape {
                        image: f.image.clone(),
                        message: format!("{} with {} points", a.kind, a.points.len()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, ExportError> {
        let ds: Dataset = serde_json::from_str(s).map_err(|e| ExportError::Parse {
            line: e.line(),
            element: "dataset".into(),
            message: e.to_string(),
        })?;
        ds.validate()?;
        Ok(ds)
    }
}

/// JSON document `{labels, frames: [{image, width, height, annotations}]}`.
pub fn export_json(ds: &Dataset) -> Result<String, ExportError> {
    ds.validate()?;
    Ok(ds.to_json())
}

/// Supported on-disk layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Yolo,
    Cvat,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yolo" => Ok(ExportFormat::Yolo),
            "cvat" => Ok(ExportFormat::Cvat),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

/// Files of an export as `(relative path, contents)`, in a fixed order.
pub fn export_files(ds: &Dataset, format: ExportFormat) -> Result<Vec<(String, Vec<u8>)>, ExportError> {
    match format {
        ExportFormat::Yolo => {
            let y = export_yolo(ds)?;
            let mut files = vec![("classes.txt".to_string(), y.classes.into_bytes())];
            for (stem, doc) in y.documents {
                files.push((format!("labels/{stem}.txt"), doc.into_bytes()));
            }
            let report = serde_json::to_string_pretty(&y.report).expect("report serializes") + "\n";
            files.push(("yolo_report.json".to_string(), report.into_bytes()));
            Ok(files)
        }
        ExportFormat::Cvat => Ok(vec![("annotations.xml".to_string(), export_cvat_xml(ds)?.into_bytes())]),
        ExportFormat::Json => Ok(vec![("dataset.json".to_string(), export_json(ds)?.into_bytes())]),
    }
}

/// Writes the export files under `dir`.
pub fn write_export(ds: &Dataset, format: ExportFormat, dir: &Path) -> Result<Vec<String>, ExportError> {
    let files = export_files(ds, format)?;
    for (rel, bytes) in &files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
