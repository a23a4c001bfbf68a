//! File formats and output-directory hygiene.
//!
//! * ledger: CSV `t,bulk,surface_c,total,theta,work_cum`, floats in
//!   shortest round-trip form,
//! * trajectory: JSON lines, a header record followed by one record per
//!   knot,
//! * checkpoint: one JSON document carrying `format_version`,
//! * snapshot: legacy VTK (ASCII) with bonds as line cells.
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crack::CrackSet;
use crate::error::{Error, Result};
use crate::evolution::{Checkpoint, Knot, LedgerRow, Trajectory, CHECKPOINT_VERSION};
use crate::harness::{RateRow, StudyRow};
use crate::mesh::{BondKind, Mesh};

pub const TRAJECTORY_VERSION: u32 = 1;
pub const LEDGER_HEADER: [&str; 6] = ["t", "bulk", "surface_c", "total", "theta", "work_cum"];
pub const THREADS_ENV: &str = "FRACTURE_QS_THREADS";

/// Writes `contents` to `path` via a temporary file and a rename.
pub fn atomic_write(path: &Path, contents: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        contents(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn write_csv<T: Serialize>(w: &mut dyn Write, rows: &[T]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    for r in rows {
        c.serialize(r).map_err(csv_error)?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    atomic_write(path, |w| {
        if rows.is_empty() {
            writeln!(w, "{}", LEDGER_HEADER.join(","))?;
            return Ok(());
        }
        write_csv(w, rows)
    })
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?;
    if header.iter().ne(LEDGER_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", LEDGER_HEADER.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[derive(Serialize)]
struct StudyRecord {
    level: u32,
    dt: f64,
    probe_time: f64,
    bulk: f64,
    surface_c: f64,
    total: f64,
    residual: f64,
}

pub fn write_study(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let recs: Vec<StudyRecord> = rows
        .iter()
        .map(|r| StudyRecord {
            level: r.level,
            dt: r.dt,
            probe_time: r.probe,
            bulk: r.bulk,
            surface_c: r.surface_c,
            total: r.total,
            residual: r.residual,
        })
        .collect();
    atomic_write(path, |w| write_csv(w, &recs))
}

#[derive(Serialize)]
struct RateRecord {
    level: u32,
    dt: f64,
    residual: f64,
    rate: Option<f64>,
}

pub fn write_rates(path: &Path, rows: &[RateRow]) -> Result<()> {
    let recs: Vec<RateRecord> = rows
        .iter()
        .map(|r| RateRecord {
            level: r.level,
            dt: r.dt,
            residual: r.residual,
            rate: r.rate,
        })
        .collect();
    atomic_write(path, |w| write_csv(w, &recs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format_version: u32,
    pub nodes: usize,
    pub bonds: usize,
    pub components: usize,
}

/// Header line, then one knot per line.
pub fn write_trajectory(path: &Path, mesh: &Mesh, knots: &[Knot]) -> Result<()> {
    let header = TrajectoryHeader {
        format_version: TRAJECTORY_VERSION,
        nodes: mesh.node_count(),
        bonds: mesh.bond_count(),
        components: knots.first().map_or(1, |k| k.u.components),
    };
    atomic_write(path, |w| {
        serde_json::to_writer(&mut *w, &header).map_err(json_error(1))?;
        writeln!(w)?;
        for k in knots {
            serde_json::to_writer(&mut *w, k).map_err(json_error(0))?;
            writeln!(w)?;
        }
        Ok(())
    })
}

fn json_error(line: usize) -> impl Fn(serde_json::Error) -> Error {
    move |e| {
        if e.is_io() {
            return Error::Io(e.into());
        }
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

pub fn read_trajectory(path: &Path) -> Result<(TrajectoryHeader, Vec<Knot>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut knots = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let v: serde_json::Value = serde_json::from_str(&line).map_err(json_error(n))?;
            let found = v.get("format_version").and_then(|x| x.as_u64());
            match found {
                Some(f) if f == TRAJECTORY_VERSION as u64 => {}
                Some(f) => {
                    return Err(Error::Version {
                        found: f as u32,
                        expected: TRAJECTORY_VERSION,
                    })
                }
                None => {
                    return Err(Error::Parse {
                        line: n,
                        message: "missing format_version header".into(),
                    })
                }
            }
            header = Some(serde_json::from_value(v).map_err(json_error(n))?);
            continue;
        }
        knots.push(serde_json::from_str(&line).map_err(json_error(n))?);
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        message: "empty trajectory file".into(),
    })?;
    Ok((header, knots))
}

pub fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer(&mut *w, cp).map_err(json_error(1))?;
        Ok(())
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    match v.get("format_version").and_then(|x| x.as_u64()) {
        Some(f) if f == CHECKPOINT_VERSION as u64 => {}
        Some(f) => {
            return Err(Error::Version {
                found: f as u32,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing format_version".into(),
            })
        }
    }
    serde_json::from_value(v).map_err(json_error(1))
}

/// Legacy VTK: nodes as points, unbroken interior bonds as lines, the
/// displacement as point data and the broken flag of every interior bond
/// as cell data.
pub fn write_vtk(path: &Path, mesh: &Mesh, knot: &Knot) -> Result<()> {
    let gamma = CrackSet::from_bonds(mesh, knot.broken.iter().copied())?;
    atomic_write(path, |w| {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "fracture-qs t={}", knot.t)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", mesh.node_count())?;
        for p in mesh.positions() {
            writeln!(w, "{} {} 0", p[0], p[1])?;
        }
        let lines: Vec<(usize, usize, bool)> = mesh
            .interior_bonds()
            .map(|(id, b)| match b.kind {
                BondKind::Interior { a, b, .. } => (a, b, gamma.contains(id)),
                _ => unreachable!(),
            })
            .collect();
        writeln!(w, "CELLS {} {}", lines.len(), 3 * lines.len())?;
        for (a, b, _) in &lines {
            writeln!(w, "2 {a} {b}")?;
        }
        writeln!(w, "CELL_TYPES {}", lines.len())?;
        for _ in &lines {
            writeln!(w, "3")?;
        }
        writeln!(w, "CELL_DATA {}", lines.len())?;
        writeln!(w, "SCALARS broken int 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for (_, _, broken) in &lines {
            writeln!(w, "{}", u8::from(*broken))?;
        }
        writeln!(w, "POINT_DATA {}", mesh.node_count())?;
        for c in 0..knot.u.components {
            writeln!(w, "SCALARS u{c} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for n in 0..mesh.node_count() {
                writeln!(w, "{}", knot.u.at(n, c))?;
            }
        }
        Ok(())
    })
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Worker cap from `FRACTURE_QS_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(THREADS_ENV, format!("`{v}` is not a positive integer"))),
        },
    }
}

/// Sizes the global worker pool from `FRACTURE_QS_THREADS`.
pub fn install_thread_cap() -> Result<()> {
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

/// Rebuilds a trajectory from its two files.
pub fn load_run(traj: &Path, ledger: &Path) -> Result<(TrajectoryHeader, Trajectory)> {
    let (header, knots) = read_trajectory(traj)?;
    let ledger = read_ledger(ledger)?;
    Ok((header, Trajectory { knots, ledger }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NodalField;

    fn rows() -> Vec<LedgerRow> {
        vec![
            LedgerRow {
                t: 0.0,
                bulk: 0.0,
                surface_c: 0.0,
                total: 0.0,
                theta: 0.0,
                work_cum: 0.0,
            },
            LedgerRow {
                t: 0.1,
                bulk: 0.1 * 0.1,
                surface_c: 1.0 / 3.0,
                total: 0.01 + 1.0 / 3.0,
                theta: 2e-17,
                work_cum: 123456.789,
            },
        ]
    }

    #[test]
    fn ledger_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ledger.csv");
        write_ledger(&p, &rows()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,bulk,surface_c,total,theta,work_cum\n"));
        assert_eq!(read_ledger(&p).unwrap(), rows());
    }

    #[test]
    fn ledger_header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "t,bulk\n0,0\n").unwrap();
        assert!(matches!(read_ledger(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn trajectory_parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::build_bar(1.0, 3, 1.0).unwrap();
        let knot = Knot {
            t: 0.5,
            broken: vec![1],
            u: NodalField {
                components: 1,
                values: vec![0.0, 0.1, 0.5],
            },
        };
        let p = dir.path().join("traj.jsonl");
        write_trajectory(&p, &mesh, &[knot.clone(), knot.clone()]).unwrap();
        let (h, k) = read_trajectory(&p).unwrap();
        assert_eq!(h.nodes, 3);
        assert_eq!(k, vec![knot.clone(), knot]);
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("{\"t\": oops}\n");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_trajectory(&p), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn vtk_has_sections() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::build_bar(1.0, 3, 1.0).unwrap();
        let knot = Knot {
            t: 1.0,
            broken: vec![0],
            u: NodalField::zeros(3, 1),
        };
        let p = dir.path().join("s.vtk");
        write_vtk(&p, &mesh, &knot).unwrap();
        let text = fs::read_to_string(p).unwrap();
        for s in ["POINTS 3 double", "CELLS 2 6", "CELL_DATA 2", "POINT_DATA 3"] {
            assert!(text.contains(s), "{s}");
        }
    }
}
