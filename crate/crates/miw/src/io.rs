//! File formats: positions (CSV or JSON), density samples and sweep tables.
//!
//! CSV floats carry 17 significant digits, JSON floats use the shortest
//! representation that round-trips. Both read back bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use miw_core::density::StepDensity;
use miw_core::model::{target_density, ConfigError, SolveMeta, WorldConfiguration};
use serde::{Deserialize, Serialize};

use crate::harness::{ConvergenceRecord, SweepEntry};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: cannot infer format from extension (expected .csv or .json)")]
    UnknownFormat { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_owned(),
        source,
    }
}

fn flush<W: Write>(mut w: W, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PositionsDocument {
    n_worlds: usize,
    positions: Vec<f64>,
    boundary_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solve_meta: Option<SolveMeta>,
}

/// Writes `n,x_n` rows or a JSON document.
pub fn write_positions(path: &Path, cfg: &WorldConfiguration, format: Format) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv_writer(path)?;
            let err = csv_err(path);
            w.write_record(["n", "x_n"]).map_err(&err)?;
            for (i, x) in cfg.positions().iter().enumerate() {
                w.write_record([(i + 1).to_string(), fmt_f64(*x)]).map_err(&err)?;
            }
            w.flush().map_err(|source| IoError::File {
                path: path.to_owned(),
                source,
            })
        }
        Format::Json => {
            let doc = PositionsDocument {
                n_worlds: cfg.n_worlds(),
                positions: cfg.positions().to_vec(),
                boundary_residual: cfg.boundary_residual(),
                solve_meta: cfg.solve_meta().copied(),
            };
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|source| IoError::Json {
                path: path.to_owned(),
                source,
            })?;
            writeln!(w).map_err(|source| IoError::File {
                path: path.to_owned(),
                source,
            })?;
            flush(w, path)
        }
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.to_owned(),
        reason: reason.into(),
    }
}

fn config_err(path: &Path) -> impl Fn(ConfigError) -> IoError + '_ {
    move |e| malformed(path, e.to_string())
}

/// Reads a positions file, choosing the format from its extension.
pub fn read_positions(path: &Path) -> Result<WorldConfiguration, IoError> {
    let format = Format::from_path(path).ok_or_else(|| IoError::UnknownFormat { path: path.to_owned() })?;
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })?;
    match format {
        Format::Csv => {
            let mut r = csv::Reader::from_reader(BufReader::new(file));
            let mut positions = Vec::new();
            for (row, record) in r.records().enumerate() {
                let record = record.map_err(csv_err(path))?;
                let field = |i: usize| {
                    record
                        .get(i)
                        .ok_or_else(|| malformed(path, format!("row {}: missing column {i}", row + 1)))
                };
                let index = usize::from_str(field(0)?.trim())
                    .map_err(|e| malformed(path, format!("row {}: bad index: {e}", row + 1)))?;
                if index != row + 1 {
                    return Err(malformed(
                        path,
                        format!("row {}: index {index} out of sequence", row + 1),
                    ));
                }
                let x = f64::from_str(field(1)?.trim())
                    .map_err(|e| malformed(path, format!("row {}: bad position: {e}", row + 1)))?;
                positions.push(x);
            }
            WorldConfiguration::from_positions(positions).map_err(config_err(path))
        }
        Format::Json => {
            let doc: PositionsDocument =
                serde_json::from_reader(BufReader::new(file)).map_err(|source| IoError::Json {
                    path: path.to_owned(),
                    source,
                })?;
            if doc.n_worlds != doc.positions.len() {
                return Err(malformed(
                    path,
                    format!("n_worlds = {} but {} positions", doc.n_worlds, doc.positions.len()),
                ));
            }
            let cfg = WorldConfiguration::from_positions(doc.positions).map_err(config_err(path))?;
            Ok(match doc.solve_meta {
                Some(meta) => cfg.with_meta(meta),
                None => cfg,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub x: f64,
    pub p_empirical: f64,
    pub p_target: f64,
}

/// Sample points for plotting a step density: each breakpoint twice (once
/// per adjacent step, so jumps render vertically) merged with a uniform
/// grid over `[0, 1.2 x_1]`. Mirrored onto `x < 0` when `full_line`.
pub fn density_samples(step: &StepDensity, grid_points: usize, full_line: bool) -> Vec<DensitySample> {
    let bp = step.breakpoints();
    let v = step.values();
    let upper = 1.2 * bp[0];
    let sample = |x: f64, p: f64| DensitySample {
        x,
        p_empirical: p,
        p_target: target_density(x),
    };
    // (sample, rank): rank 0 is the value left of x, rank 1 the value right.
    let mut rows: Vec<(DensitySample, u8)> = Vec::with_capacity(2 * bp.len() + grid_points);
    for (k, &b) in bp.iter().enumerate() {
        // b = x_{k+1} is the lower end of step k; beyond x_1 the density is 0.
        let left = v.get(k).copied().unwrap_or(0.0);
        let right = if k == 0 { 0.0 } else { v[k - 1] };
        if !(full_line && b == 0.0) {
            rows.push((sample(b, left), 0));
        }
        rows.push((sample(b, right), 1));
    }
    if grid_points >= 2 {
        for i in 0..grid_points {
            let x = upper * i as f64 / (grid_points - 1) as f64;
            if !bp.contains(&x) {
                rows.push((sample(x, step.evaluate(x)), 0));
            }
        }
    }
    rows.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.1.cmp(&b.1)));
    let half: Vec<DensitySample> = rows.into_iter().map(|(s, _)| s).collect();
    if !full_line {
        return half;
    }
    let mut full: Vec<DensitySample> = half
        .iter()
        .rev()
        .filter(|s| s.x > 0.0)
        .map(|s| DensitySample { x: -s.x, ..*s })
        .collect();
    full.extend(half);
    full
}

pub fn write_density(path: &Path, samples: &[DensitySample], format: Format) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv_writer(path)?;
            let err = csv_err(path);
            w.write_record(["x", "p_empirical", "p_target"]).map_err(&err)?;
            for s in samples {
                w.write_record([fmt_f64(s.x), fmt_f64(s.p_empirical), fmt_f64(s.p_target)])
                    .map_err(&err)?;
            }
            w.flush().map_err(|source| IoError::File {
                path: path.to_owned(),
                source,
            })
        }
        Format::Json => write_json(path, &samples),
    }
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "n_worlds",
    "x1",
    "x_n",
    "mass_no_boundary",
    "mass_with_boundary",
    "integral",
    "mass_deficit",
    "h_n",
    "u_n",
    "v_n",
    "condition2_residual",
    "boundary_residual",
    "wall_time",
    "error",
];

fn record_fields(r: &ConvergenceRecord) -> [String; 13] {
    [
        r.n_worlds.to_string(),
        fmt_f64(r.x1),
        fmt_f64(r.x_n),
        fmt_f64(r.mass_no_boundary),
        fmt_f64(r.mass_with_boundary),
        fmt_f64(r.integral),
        fmt_f64(r.mass_deficit),
        fmt_f64(r.h_n),
        fmt_f64(r.u_n),
        fmt_f64(r.v_n),
        fmt_f64(r.condition2_residual),
        fmt_f64(r.boundary_residual),
        fmt_f64(r.wall_time),
    ]
}

/// A sweep row read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_worlds: usize,
    pub record: Option<ConvergenceRecord>,
    pub error: Option<String>,
}

/// JSON shape of a row: the record's fields plus `error`, or only
/// `n_worlds` and `error` for a failed solve.
fn sweep_row_json(e: &SweepEntry) -> serde_json::Value {
    let mut value = match &e.outcome {
        Ok(r) => serde_json::to_value(r).unwrap_or_default(),
        Err(_) => serde_json::json!({ "n_worlds": e.n_worlds }),
    };
    let error = e.outcome.as_ref().err().map(|x| x.to_string());
    value["error"] = serde_json::to_value(error).unwrap_or_default();
    value
}

/// One row per entry; failed rows carry only `n_worlds` and `error`.
pub fn write_sweep(path: &Path, entries: &[SweepEntry], format: Format) -> Result<(), IoError> {
    match format {
        Format::Csv => {
            let mut w = csv_writer(path)?;
            let err = csv_err(path);
            w.write_record(SWEEP_COLUMNS).map_err(&err)?;
            for e in entries {
                let mut row: Vec<String> = match &e.outcome {
                    Ok(r) => record_fields(r).to_vec(),
                    Err(_) => {
                        let mut v = vec![String::new(); 13];
                        v[0] = e.n_worlds.to_string();
                        v
                    }
                };
                row.push(e.outcome.as_ref().err().map(|x| x.to_string()).unwrap_or_default());
                w.write_record(&row).map_err(&err)?;
            }
            w.flush().map_err(|source| IoError::File {
                path: path.to_owned(),
                source,
            })
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = entries.iter().map(sweep_row_json).collect();
            write_json(path, &rows)
        }
    }
}

/// Reads a sweep table written by [`write_sweep`].
pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>, IoError> {
    let format = Format::from_path(path).ok_or_else(|| IoError::UnknownFormat { path: path.to_owned() })?;
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })?;
    match format {
        Format::Json => {
            let json_err = |source| IoError::Json {
                path: path.to_owned(),
                source,
            };
            let values: Vec<serde_json::Value> = serde_json::from_reader(BufReader::new(file)).map_err(json_err)?;
            values
                .into_iter()
                .enumerate()
                .map(|(i, mut v)| {
                    let n_worlds = v["n_worlds"]
                        .as_u64()
                        .ok_or_else(|| malformed(path, format!("row {}: missing n_worlds", i + 1)))?
                        as usize;
                    match v.get_mut("error").map(serde_json::Value::take) {
                        Some(serde_json::Value::String(error)) => Ok(SweepRow {
                            n_worlds,
                            record: None,
                            error: Some(error),
                        }),
                        _ => {
                            let record: ConvergenceRecord = serde_json::from_value(v).map_err(json_err)?;
                            Ok(SweepRow {
                                n_worlds,
                                record: Some(record),
                                error: None,
                            })
                        }
                    }
                })
                .collect()
        }
        Format::Csv => {
            let mut r = csv::Reader::from_reader(BufReader::new(file));
            let mut rows = Vec::new();
            for (i, record) in r.records().enumerate() {
                let record = record.map_err(csv_err(path))?;
                if record.len() != SWEEP_COLUMNS.len() {
                    return Err(malformed(
                        path,
                        format!("row {}: expected {} columns", i + 1, SWEEP_COLUMNS.len()),
                    ));
                }
                let bad = |what: &str| malformed(path, format!("row {}: bad {what}", i + 1));
                let n_worlds: usize = record[0].parse().map_err(|_| bad("n_worlds"))?;
                let error = &record[13];
                if !error.is_empty() {
                    rows.push(SweepRow {
                        n_worlds,
                        record: None,
                        error: Some(error.to_owned()),
                    });
                    continue;
                }
                let mut vals = [0.0f64; 12];
                for (k, v) in vals.iter_mut().enumerate() {
                    *v = record[k + 1].parse().map_err(|_| bad(SWEEP_COLUMNS[k + 1]))?;
                }
                rows.push(SweepRow {
                    n_worlds,
                    record: Some(ConvergenceRecord {
                        n_worlds,
                        x1: vals[0],
                        x_n: vals[1],
                        mass_no_boundary: vals[2],
                        mass_with_boundary: vals[3],
                        integral: vals[4],
                        mass_deficit: vals[5],
                        h_n: vals[6],
                        u_n: vals[7],
                        v_n: vals[8],
                        condition2_residual: vals[9],
                        boundary_residual: vals[10],
                        wall_time: vals[11],
                    }),
                    error: None,
                });
            }
            Ok(rows)
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })?;
    writeln!(w).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })?;
    flush(w, path)
}
