use std::fmt::Write as _;

use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{Dataset, DatasetFrame, ExportError, LabeledShape};
use crate::annotate::ShapeKind;

/// Two-decimal coordinate; rounding first keeps `-0.001` from printing as
/// `-0.00`, which would not survive a parse/print cycle.
fn coord(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0 + 0.0;
    format!("{r:.2}")
}

fn points_attr(points: &[[f64; 2]]) -> String {
    points
        .iter()
        .map(|p| format!("{},{}", coord(p[0]), coord(p[1])))
        .collect::<Vec<_>>()
        .join(";")
}

/// CVAT "annotations 1.1" image dump. Formatting is fixed so that
/// export → import → export reproduces the document byte for byte.
pub fn export_cvat_xml(ds: &Dataset) -> Result<String, ExportError> {
    ds.validate()?;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str("<annotations>\n");
    out.push_str("  <version>1.1</version>\n");
    out.push_str("  <meta>\n    <task>\n");
    let _ = writeln!(out, "      <name>{}</name>", escape(ds.name.as_str()));
    let _ = writeln!(out, "      <size>{}</size>", ds.frames.len());
    out.push_str("      <labels>\n");
    for label in &ds.labels {
        let _ = writeln!(
            out,
            "        <label>\n          <name>{}</name>\n        </label>",
            escape(label.as_str())
        );
    }
    out.push_str("      </labels>\n    </task>\n  </meta>\n");
    for (id, frame) in ds.frames.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <image id=\"{id}\" name=\"{}\" width=\"{}\" height=\"{}\">",
            escape(frame.image.as_str()),
            frame.width,
            frame.height
        );
        for shape in &frame.annotations {
            let label = escape(shape.label.as_str());
            match shape.kind {
                ShapeKind::Bbox => {
                    let _ = writeln!(
                        out,
                        "    <box label=\"{label}\" occluded=\"0\" source=\"manual\" xtl=\"{}\" ytl=\"{}\" xbr=\"{}\" ybr=\"{}\" z_order=\"0\"/>",
                        coord(shape.points[0][0]),
                        coord(shape.points[0][1]),
                        coord(shape.points[1][0]),
                        coord(shape.points[1][1])
                    );
                }
                ShapeKind::Polygon | ShapeKind::Polyline => {
                    let _ = writeln!(
                        out,
                        "    <{} label=\"{label}\" occluded=\"0\" source=\"manual\" points=\"{}\" z_order=\"0\"/>",
                        shape.kind,
                        points_attr(&shape.points)
                    );
                }
            }
        }
        out.push_str("  </image>\n");
    }
    out.push_str("</annotations>\n");
    Ok(out)
}

struct Ctx<'a> {
    doc: &'a str,
}

impl Ctx<'_> {
    fn line_at(&self, pos: u64) -> usize {
        let end = (pos as usize).min(self.doc.len());
        self.doc.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn error(&self, pos: u64, element: &str, message: impl Into<String>) -> ExportError {
        ExportError::Parse {
            line: self.line_at(pos),
            element: element.to_string(),
            message: message.into(),
        }
    }
}

fn attr(ctx: &Ctx, pos: u64, e: &BytesStart, name: &str) -> Result<String, ExportError> {
    let element = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    for a in e.attributes() {
        let a = a.map_err(|err| ctx.error(pos, &element, err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            return a
                .unescape_value()
                .map(|v| v.into_owned())
                .map_err(|err| ctx.error(pos, &element, err.to_string()));
        }
    }
    Err(ctx.error(pos, &element, format!("missing attribute `{name}`")))
}

fn number<T: std::str::FromStr>(ctx: &Ctx, pos: u64, e: &BytesStart, name: &str) -> Result<T, ExportError> {
    let raw = attr(ctx, pos, e, name)?;
    raw.trim().parse().map_err(|_| {
        ctx.error(
            pos,
            &String::from_utf8_lossy(e.name().as_ref()),
            format!("attribute `{name}` is not a number: `{raw}`"),
        )
    })
}

fn parse_points(ctx: &Ctx, pos: u64, element: &str, raw: &str) -> Result<Vec<[f64; 2]>, ExportError> {
    raw.split(';')
        .map(|pair| {
            let mut it = pair.split(',');
            match (it.next(), it.next(), it.next()) {
                (Some(x), Some(y), None) => match (x.trim().parse(), y.trim().parse()) {
                    (Ok(x), Ok(y)) => Ok([x, y]),
                    _ => Err(ctx.error(pos, element, format!("bad point `{pair}`"))),
                },
                _ => Err(ctx.error(pos, element, format!("bad point `{pair}`"))),
            }
        })
        .collect()
}

fn shape(ctx: &Ctx, pos: u64, e: &BytesStart, frame: &mut DatasetFrame) -> Result<(), ExportError> {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let label = attr(ctx, pos, e, "label")?;
    let (kind, points) = match name.as_str() {
        "box" => (
            ShapeKind::Bbox,
            vec![
                [number(ctx, pos, e, "xtl")?, number(ctx, pos, e, "ytl")?],
                [number(ctx, pos, e, "xbr")?, number(ctx, pos, e, "ybr")?],
            ],
        ),
        "polygon" => (
            ShapeKind::Polygon,
            parse_points(ctx, pos, &name, &attr(ctx, pos, e, "points")?)?,
        ),
        "polyline" => (
            ShapeKind::Polyline,
            parse_points(ctx, pos, &name, &attr(ctx, pos, e, "points")?)?,
        ),
        "points" | "mask" | "ellipse" | "cuboid" | "skeleton" => {
            return Err(ctx.error(pos, &name, "unsupported shape type"));
        }
        _ => return Ok(()),
    };
    frame.annotations.push(LabeledShape { label, kind, points });
    Ok(())
}

/// Parses a CVAT "annotations 1.1" image dump. Elements other than the task
/// name, labels, images and box/polygon/polyline shapes are skipped.
pub fn import_cvat_xml(doc: &str) -> Result<Dataset, ExportError> {
    let ctx = Ctx { doc };
    let mut reader = Reader::from_str(doc);
    let mut stack: Vec<String> = Vec::new();
    let mut ds = Dataset::default();
    let mut frame: Option<DatasetFrame> = None;
    let mut text = String::new();
    let mut seen_root = false;

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| {
            let element = stack.last().cloned().unwrap_or_else(|| "document".into());
            ctx.error(reader.error_position(), &element, e.to_string())
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if stack.is_empty() {
                    if name != "annotations" {
                        return Err(ctx.error(pos, &name, "root element must be <annotations>"));
                    }
                    seen_root = true;
                }
                if name == "image" && stack.len() == 1 {
                    frame = Some(DatasetFrame {
                        image: attr(&ctx, pos, e, "name")?,
                        width: number(&ctx, pos, e, "width")?,
                        height: number(&ctx, pos, e, "height")?,
                        annotations: Vec::new(),
                    });
                    let _: u64 = number(&ctx, pos, e, "id")?;
                } else if stack.last().map(|s| s == "image").unwrap_or(false) {
                    if let Some(f) = frame.as_mut() {
                        shape(&ctx, pos, e, f)?;
                    }
                }
                text.clear();
                if empty {
                    if name == "image" {
                        if let Some(f) = frame.take() {
                            ds.frames.push(f);
                        }
                    }
                } else {
                    stack.push(name);
                }
            }
            Event::Text(t) => {
                let s = t.decode().map_err(|e| {
                    ctx.error(
                        pos,
                        stack.last().map(String::as_str).unwrap_or("document"),
                        e.to_string(),
                    )
                })?;
                text.push_str(&s);
            }
            Event::GeneralRef(r) => {
                let element = stack.last().cloned().unwrap_or_else(|| "document".into());
                if let Some(c) = r
                    .resolve_char_ref()
                    .map_err(|e| ctx.error(pos, &element, e.to_string()))?
                {
                    text.push(c);
                } else {
                    let name = r.decode().map_err(|e| ctx.error(pos, &element, e.to_string()))?;
                    let value = resolve_predefined_entity(&name)
                        .ok_or_else(|| ctx.error(pos, &element, format!("unknown entity `&{name};`")))?;
                    text.push_str(value);
                }
            }
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                let parent = stack.last().map(String::as_str);
                match (name.as_str(), parent) {
                    ("name", Some("task")) => ds.name = text.clone(),
                    ("name", Some("label")) => ds.labels.push(text.clone()),
                    ("version", Some("annotations")) if text != "1.1" => {
                        return Err(ctx.error(pos, "version", format!("unsupported version `{text}`")));
                    }
                    ("image", _) => {
                        if let Some(f) = frame.take() {
                            ds.frames.push(f);
                        }
                    }
                    _ => {}
                }
                text.clear();
            }
            Event::Eof => {
                if let Some(open) = stack.last() {
                    return Err(ctx.error(pos, open, "unexpected end of document"));
                }
                if !seen_root {
                    return Err(ctx.error(pos, "document", "no <annotations> element"));
                }
                break;
            }
            _ => {}
        }
    }
    ds.validate().map_err(|e| match e {
        ExportError::Parse { .. } => e,
        other => ctx.error(doc.len() as u64, "annotations", other.to_string()),
    })?;
    Ok(ds)
}
