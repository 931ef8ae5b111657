//! Tracker sample CSV: `timestamp,r11,r12,r13,r21,r22,r23,r31,r32,r33,tx,ty,tz,valid`.
//! A header line is allowed; `valid` is `1`/`0` or `true`/`false`.

use std::io::{Read, Write};

use anyhow::{bail, Context};
use nalgebra::{Matrix3, Vector3};

use insitu_core::sample::TrackedSample;

pub const HEADER: [&str; 14] = [
    "timestamp",
    "r11",
    "r12",
    "r13",
    "r21",
    "r22",
    "r23",
    "r31",
    "r32",
    "r33",
    "tx",
    "ty",
    "tz",
    "valid",
];

fn parse_bool(s: &str) -> anyhow::Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => bail!("`{other}` is not a validity flag"),
    }
}

pub fn read_samples(input: impl Read) -> anyhow::Result<Vec<TrackedSample<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != HEADER.len() {
            bail!("line {line}: expected {} fields, found {}", HEADER.len(), record.len());
        }
        let num = |k: usize| -> anyhow::Result<f64> {
            record[k]
                .parse::<f64>()
                .with_context(|| format!("line {line}: `{}` is not a number ({})", &record[k], HEADER[k]))
        };
        let v: Vec<f64> = (0..13).map(num).collect::<anyhow::Result<_>>()?;
        out.push(TrackedSample {
            timestamp: v[0],
            rotation: Matrix3::from_row_slice(&v[1..10]),
            translation: Vector3::new(v[10], v[11], v[12]),
            valid: parse_bool(&record[13]).with_context(|| format!("line {line}"))?,
        });
    }
    Ok(out)
}

pub fn write_samples(output: impl Write, samples: &[TrackedSample<f64>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(HEADER)?;
    for s in samples {
        let mut row: Vec<String> = vec![s.timestamp.to_string()];
        for r in 0..3 {
            for c in 0..3 {
                row.push(s.rotation[(r, c)].to_string());
            }
        }
        row.extend(s.translation.iter().map(|v| v.to_string()));
        row.push(if s.valid { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
