use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{check_times, Coords, GroundTruth, Meta, ObservationSet, SENTINEL};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// A grid file is either fully dense or has gaps.
#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Complete(GroundTruth),
    Sparse(ObservationSet),
}

impl GridData {
    /// The sensed instance: dense files become fully observed sets.
    pub fn into_observations(self) -> ObservationSet {
        match self {
            GridData::Complete(gt) => gt.fully_observed(),
            GridData::Sparse(obs) => obs,
        }
    }
}

fn format_err(row: usize, msg: impl Into<String>) -> Error {
    Error::Format { row, msg: msg.into() }
}

/// Reads `time,<area ids…>` rows, one per timestamp, empty field = missing.
/// Rows are numbered from 1 for the header.
pub fn load_grid_csv(path: &Path, coords_path: Option<&Path>) -> Result<GridData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| format_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 || header.get(0) != Some("time") {
        return Err(format_err(1, "header must be `time,<area ids…>`"));
    }
    let area_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = area_ids.len();

    let mut times = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| format_err(row, e.to_string()))?;
        if record.len() != n + 1 {
            return Err(format_err(
                row,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        let t: f64 = record[0]
            .parse()
            .map_err(|_| format_err(row, format!("bad time '{}'", &record[0])))?;
        if !t.is_finite() {
            return Err(format_err(row, "time is not finite"));
        }
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(format_err(row, format!("time {t} does not increase past {prev}")));
            }
        }
        let mut values = Vec::with_capacity(n);
        for field in record.iter().skip(1) {
            if field.is_empty() {
                values.push(None);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| format_err(row, format!("bad value '{field}'")))?;
                if !v.is_finite() {
                    return Err(format_err(row, "value is not finite"));
                }
                values.push(Some(v));
            }
        }
        times.push(t);
        cells.push(values);
    }
    if times.is_empty() {
        return Err(format_err(2, "no data rows"));
    }
    check_times(&times)?;

    let m = times.len();
    let mut values = DenseMatrix::zeros(n, m);
    let mut mask = DenseMatrix::zeros(n, m);
    let mut complete = true;
    for (j, row) in cells.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            match cell {
                Some(v) => {
                    values[(i, j)] = *v;
                    mask[(i, j)] = 1.0;
                }
                None => {
                    values[(i, j)] = SENTINEL;
                    complete = false;
                }
            }
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta = Meta {
        name,
        units: String::new(),
        area_ids,
    };
    let coords = match coords_path {
        Some(p) => Some(load_coords(p, &meta.area_ids)?),
        None => None,
    };

    if complete {
        let mut gt = GroundTruth::new(values, times, meta)?;
        gt.coords = coords;
        Ok(GridData::Complete(gt))
    } else {
        let mut obs = ObservationSet::new(values, mask, times, meta)?;
        obs.coords = coords;
        Ok(GridData::Sparse(obs))
    }
}

/// Reads `area_id,x,y` and orders the points like `area_ids`.
fn load_coords(path: &Path, area_ids: &[String]) -> Result<Coords> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| format_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["area_id", "x", "y"] {
        return Err(format_err(1, "coordinates header must be `area_id,x,y`"));
    }
    let mut by_id = HashMap::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| format_err(row, e.to_string()))?;
        let x: f64 = record[1]
            .parse()
            .map_err(|_| format_err(row, format!("bad x '{}'", &record[1])))?;
        let y: f64 = record[2]
            .parse()
            .map_err(|_| format_err(row, format!("bad y '{}'", &record[2])))?;
        by_id.insert(record[0].to_string(), [x, y]);
    }
    area_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Input(format!("no coordinates for area '{id}'")))
        })
        .collect()
}

fn write_rows(
    path: &Path,
    area_ids: &[String],
    times: &[f64],
    values: &DenseMatrix,
    mask: Option<&DenseMatrix>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("time");
    for id in area_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (j, t) in times.iter().enumerate() {
        out.push_str(&t.to_string());
        for i in 0..values.rows() {
            out.push(',');
            if mask.is_none_or(|m| m[(i, j)] != 0.0) {
                out.push_str(&values[(i, j)].to_string());
            }
        }
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes a dense grid. `f64` display is shortest round-trip, so loading the
/// file back reproduces every value bit for bit.
pub fn write_grid_csv(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_rows(path, &gt.meta.area_ids, &gt.times, &gt.values, None)
}

/// Writes an observation set with empty fields at mask-zero cells.
pub fn write_observation_csv(path: &Path, obs: &ObservationSet) -> Result<()> {
    write_rows(path, &obs.meta.area_ids, &obs.times, &obs.values, Some(&obs.mask))
}
