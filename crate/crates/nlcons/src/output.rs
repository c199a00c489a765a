//! CSV exports and the run report.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nlcons_core::analysis::{ConvergenceReport, LimitSetKind, ScenarioClass};
use nlcons_core::integrator::{Event, Trajectory};
use nlcons_core::lyapunov::LyapunovTrace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: malformed row {row}: {message}", path.display())]
    Malformed { path: PathBuf, row: usize, message: String },
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `dir/stem_3.ext` when `count > 1`, else `dir/stem.ext`.
pub fn indexed_path(path: &Path, index: usize, count: usize) -> PathBuf {
    if count <= 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{index}"),
    };
    path.with_file_name(name)
}

/// `traj.csv` → `traj_events.csv`.
pub fn default_events_path(trajectory: &Path) -> PathBuf {
    let stem = trajectory
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    trajectory.with_file_name(format!("{stem}_events.csv"))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let file = File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), OutputError> {
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Header `t,x0..x{n-1},nu0..nu{n-1}`.
pub fn trajectory_to_csv<W: Write>(traj: &Trajectory, out: &mut csv::Writer<W>) -> Result<(), csv::Error> {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("nu{i}")));
    out.write_record(&header)?;
    for ((t, x), sel) in traj.times.iter().zip(&traj.states).zip(&traj.selections) {
        let mut row = Vec::with_capacity(2 * n + 1);
        row.push(format_float(*t));
        row.extend(x.iter().map(|&v| format_float(v)));
        row.extend(sel.nu.iter().map(|&v| format_float(v)));
        out.write_record(&row)?;
    }
    Ok(())
}

/// Header `t,coordinate,point,kind`.
pub fn events_to_csv<W: Write>(events: &[Event], out: &mut csv::Writer<W>) -> Result<(), csv::Error> {
    out.write_record(["t", "coordinate", "point", "kind"])?;
    for e in events {
        out.write_record([
            format_float(e.time),
            e.coordinate.to_string(),
            format_float(e.point),
            e.label().to_string(),
        ])?;
    }
    Ok(())
}

/// Header `t,V,W,V1`; `V1` is empty when no weight vector was used.
pub fn lyapunov_to_csv<W: Write>(trace: &LyapunovTrace, out: &mut csv::Writer<W>) -> Result<(), csv::Error> {
    out.write_record(["t", "V", "W", "V1"])?;
    for k in 0..trace.times.len() {
        let v1 = trace.v1.as_ref().map_or(String::new(), |s| format_float(s[k]));
        out.write_record([
            format_float(trace.times[k]),
            format_float(trace.v_max[k]),
            format_float(trace.w_neg_min[k]),
            v1,
        ])?;
    }
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), OutputError> {
    let mut w = create(path)?;
    trajectory_to_csv(traj, &mut w).map_err(csv_err(path))?;
    finish(w, path)
}

pub fn write_events_csv(path: &Path, events: &[Event]) -> Result<(), OutputError> {
    let mut w = create(path)?;
    events_to_csv(events, &mut w).map_err(csv_err(path))?;
    finish(w, path)
}

pub fn write_lyapunov_csv(path: &Path, trace: &LyapunovTrace) -> Result<(), OutputError> {
    let mut w = create(path)?;
    lyapunov_to_csv(trace, &mut w).map_err(csv_err(path))?;
    finish(w, path)
}

/// Rows of a trajectory CSV read back as `(t, x, nu)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable, OutputError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| OutputError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let width = reader.headers().map_err(csv_err(path))?.len();
    if width == 0 || width % 2 == 0 {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            row: 0,
            message: format!("header has {width} columns"),
        });
    }
    let n = (width - 1) / 2;
    let mut table = TrajectoryTable::default();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let vals = rec
            .iter()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| OutputError::Malformed {
                path: path.to_path_buf(),
                row: row + 1,
                message: e.to_string(),
            })?;
        table.times.push(vals[0]);
        table.states.push(vals[1..=n].to_vec());
        table.nu.push(vals[n + 1..].to_vec());
    }
    Ok(table)
}

/// Per-initial-condition entry of the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub index: usize,
    pub initial_state: Vec<f64>,
    pub steps: usize,
    pub events: usize,
    pub passed: bool,
    pub verdict: ConvergenceReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_class: ScenarioClass,
    pub limit_set_kind: LimitSetKind,
    pub asserted: bool,
    pub nodes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub chatter_slack_max: f64,
    pub passed: bool,
    pub trajectories: Vec<TrajectoryReport>,
}
