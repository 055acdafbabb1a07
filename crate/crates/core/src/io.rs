//! Flat-file formats: tab-separated datasets with a TOML metadata sidecar,
//! JSON result documents and plot-ready tables.
//!
//! A dataset file starts with a header naming the columns: the scan axes in
//! column units, then either `p_<outcome>` probabilities or `k_<outcome>`
//! counts followed by `shots`. Numbers are written in shortest round-trip
//! form, so reading a written dataset reproduces it exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scan::{DataPoint, Metadata, PointData, SpectrumDataset};

/// `<path>.meta.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

pub fn format_dataset(ds: &SpectrumDataset) -> String {
    let sampled = ds.is_sampled();
    let mut header: Vec<String> = ds.axes.clone();
    let prefix = if sampled { "k_" } else { "p_" };
    header.extend(ds.outcomes.iter().map(|o| format!("{prefix}{o}")));
    if sampled {
        header.push("shots".into());
    }
    let mut out = header.join("\t");
    out.push('\n');
    for p in &ds.points {
        let mut cells: Vec<String> = p.coords.iter().map(|c| format!("{c:?}")).collect();
        match &p.data {
            PointData::Probabilities(v) => cells.extend(v.iter().map(|x| format!("{x:?}"))),
            PointData::Counts { counts, shots } => {
                cells.extend(counts.iter().map(u64::to_string));
                cells.push(shots.to_string());
            }
        }
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    out
}

pub fn parse_dataset(text: &str, metadata: Metadata) -> Result<SpectrumDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let first = cols
        .iter()
        .position(|c| c.starts_with("p_") || c.starts_with("k_"))
        .ok_or_else(|| Error::Dataset("no p_* or k_* outcome columns in header".into()))?;
    let sampled = cols[first].starts_with("k_");
    let prefix = if sampled { "k_" } else { "p_" };
    let axes: Vec<String> = cols[..first].iter().map(|s| s.to_string()).collect();
    let mut outcomes = Vec::new();
    let mut idx = first;
    while idx < cols.len() && cols[idx].starts_with(prefix) {
        outcomes.push(cols[idx][2..].to_string());
        idx += 1;
    }
    if sampled {
        if cols.get(idx) != Some(&"shots") {
            return Err(Error::Dataset("counts file has no shots column".into()));
        }
        idx += 1;
    }
    if idx != cols.len() {
        return Err(Error::Dataset(format!("unexpected column {:?}", cols[idx])));
    }

    let mut points = Vec::new();
    for (n, line) in lines {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Dataset(format!(
                "line {}: {} columns, header has {}",
                n + 1,
                cells.len(),
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Dataset(format!("line {}: invalid number {s:?}", n + 1)))
        };
        let int = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Dataset(format!("line {}: invalid count {s:?}", n + 1)))
        };
        let coords = cells[..first]
            .iter()
            .map(|s| num(s))
            .collect::<Result<_>>()?;
        let body = &cells[first..first + outcomes.len()];
        let data = if sampled {
            PointData::Counts {
                counts: body.iter().map(|s| int(s)).collect::<Result<_>>()?,
                shots: int(cells[first + outcomes.len()])?,
            }
        } else {
            PointData::Probabilities(body.iter().map(|s| num(s)).collect::<Result<_>>()?)
        };
        points.push(DataPoint { coords, data });
    }
    let ds = SpectrumDataset {
        axes,
        outcomes,
        points,
        metadata,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset(ds: &SpectrumDataset, path: &Path) -> Result<()> {
    fs::write(path, format_dataset(ds))?;
    let meta =
        toml::to_string(&ds.metadata).map_err(|e| Error::Dataset(format!("metadata: {e}")))?;
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

/// Reads a dataset and its sidecar. A missing sidecar yields empty metadata.
pub fn read_dataset(path: &Path) -> Result<SpectrumDataset> {
    let text = fs::read_to_string(path)?;
    let side = sidecar_path(path);
    let metadata = if side.exists() {
        toml::from_str(&fs::read_to_string(&side)?)
            .map_err(|e| Error::Dataset(format!("{}: {e}", side.display())))?
    } else {
        warn!("{} has no metadata sidecar", path.display());
        Metadata::default()
    };
    parse_dataset(&text, metadata)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Dataset(format!("json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Tab-separated table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
