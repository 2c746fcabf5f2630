//! 2-d snapshot slices as CSV or 8-bit PGM, with a min/max sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Equation;
use crate::dataset::{read_checked, read_manifest, DatasetManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Pgm,
}

impl ExportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Pgm => "pgm",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "pgm" => Ok(ExportFormat::Pgm),
            _ => Err(Error::InvalidParameter(format!(
                "unknown export format {s:?} (csv or pgm)"
            ))),
        }
    }
}

/// A row-major `rows × cols` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2d {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Slice2d {
    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// One line per row, values with 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 17);
        for row in self.values.chunks(self.cols) {
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{:.8e}", *v as f64).expect("write to String");
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5), linearly mapped from [min, max] to [0, 255]. A
    /// constant slice maps to 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = self.min_max();
        let span = (hi - lo) as f64;
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if span > 0.0 {
                (255.0 * (v - lo) as f64 / span).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
        out
    }
}

/// Parses CSV written by [`Slice2d::to_csv`].
pub fn parse_csv(text: &str) -> Result<Slice2d> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let row: Vec<f32> = line
            .split(',')
            .map(|s| s.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bad CSV value: {e}")))?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::InvalidParameter("ragged CSV".into()));
        }
        values.extend(row);
        rows += 1;
    }
    Ok(Slice2d {
        rows,
        cols: cols.unwrap_or(0),
        values,
    })
}

#[derive(Debug, Clone, Serialize)]
struct Sidecar<'a> {
    field: &'a str,
    trajectory: u64,
    time: f64,
    snapshot: usize,
    z_plane: Option<usize>,
    rows: usize,
    cols: usize,
    min: f64,
    max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportRequest {
    pub trajectory: u64,
    pub times: Vec<f64>,
    pub format: ExportFormat,
    /// Defaults to `u` (Φ⁴₂) or `phi` (Φ⁴₃).
    pub field: Option<String>,
    /// Plane index along the first axis of a 3-d field.
    pub z_plane: usize,
}

/// Index of `t` among the saved times (absolute tolerance `1e-9·T`).
pub fn snapshot_index(manifest: &DatasetManifest, t: f64) -> Result<usize> {
    let scale = manifest.times.last().copied().unwrap_or(1.0).abs().max(1.0);
    manifest
        .times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * scale)
        .ok_or_else(|| Error::InvalidParameter(format!("time {t} is not a saved time (saved: {:?})", manifest.times)))
}

/// The 2-d slice of one field of one trajectory at snapshot `snap`.
pub fn load_slice(
    source: &Path,
    manifest: &DatasetManifest,
    trajectory: u64,
    field: &str,
    snap: usize,
    z_plane: usize,
) -> Result<Slice2d> {
    if !manifest.field_names().contains(&field) {
        return Err(Error::InvalidParameter(format!(
            "field {field:?} is not stored (available: {:?})",
            manifest.field_names()
        )));
    }
    let path = format!("trajectories/{trajectory:06}/{field}.wcf");
    let entry = manifest
        .files
        .iter()
        .find(|e| e.path == path)
        .ok_or_else(|| Error::InvalidParameter(format!("trajectory {trajectory} is not in the dataset")))?;
    let tensor = read_checked(source, entry)?;
    let shape = tensor.shape();
    let values = tensor.to_f64();
    let n = shape[1];
    let plane = n * n;
    let offset = match manifest.equation {
        Equation::Phi42 => snap * plane,
        Equation::Phi43 => {
            if z_plane >= n {
                return Err(Error::InvalidParameter(format!("z-plane {z_plane} outside 0..{n}")));
            }
            (snap * n + z_plane) * plane
        }
    };
    Ok(Slice2d {
        rows: n,
        cols: n,
        values: values[offset..offset + plane].iter().map(|&v| v as f32).collect(),
    })
}

/// Writes one slice file plus a `.range.toml` sidecar per requested time;
/// returns the slice paths.
pub fn export_snapshots(source: &Path, request: &ExportRequest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(source)?;
    let field = request
        .field
        .clone()
        .unwrap_or_else(|| manifest.field_names()[0].to_string());
    if request.times.is_empty() {
        return Err(Error::InvalidParameter("no times requested".into()));
    }
    let snaps: Vec<usize> = request
        .times
        .iter()
        .map(|&t| snapshot_index(&manifest, t))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for snap in snaps {
        let slice = load_slice(source, &manifest, request.trajectory, &field, snap, request.z_plane)?;
        let time = manifest.times[snap];
        let stem = format!("traj{:06}_{field}_t{snap:03}", request.trajectory);
        let path = out_dir.join(format!("{stem}.{}", request.format.extension()));
        let bytes = match request.format {
            ExportFormat::Csv => slice.to_csv().into_bytes(),
            ExportFormat::Pgm => slice.to_pgm(),
        };
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let (min, max) = slice.min_max();
        let sidecar = Sidecar {
            field: &field,
            trajectory: request.trajectory,
            time,
            snapshot: snap,
            z_plane: (manifest.equation == Equation::Phi43).then_some(request.z_plane),
            rows: slice.rows,
            cols: slice.cols,
            min: min as f64,
            max: max as f64,
        };
        let side = out_dir.join(format!("{stem}.range.toml"));
        let text = toml::to_string(&sidecar).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
        written.push(path);
    }
    Ok(written)
}
