//! Trajectory CSV and metrics files.
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a trajectory read from disk is bit-identical to the one
//! that was written.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::metrics::{self, Metrics};
use crate::sim::run::{column_names, Trajectory, CONVERTER_COLUMNS};

pub const TRAJECTORY_SUFFIX: &str = ".csv";
pub const METRICS_SUFFIX: &str = ".metrics.toml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            trajectory: dir.join(format!("{stem}{TRAJECTORY_SUFFIX}")),
            metrics: dir.join(format!("{stem}{METRICS_SUFFIX}")),
        }
    }
}

pub fn write_csv<W: Write>(traj: &Trajectory, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&traj.columns)?;
    let mut buf = Vec::with_capacity(traj.width());
    for row in traj.rows() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&buf)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a trajectory and checks its header against the column schema.
/// `origin` only labels errors.
pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Trajectory> {
    let fail = |message: String| Error::Format { path: origin.to_path_buf(), message };
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(|e| fail(e.to_string()))?.iter().map(String::from).collect();
    let per = CONVERTER_COLUMNS.len();
    if header.len() < 4 || (header.len() - 4) % per != 0 {
        return Err(fail(format!("unexpected column count {}", header.len())));
    }
    let expected = column_names((header.len() - 4) / per);
    if let Some(i) = (0..header.len()).find(|&i| header[i] != expected[i]) {
        return Err(fail(format!("column {} is `{}`, expected `{}`", i + 1, header[i], expected[i])));
    }
    let mut traj = Trajectory { columns: expected, data: Vec::new() };
    let mut row = Vec::with_capacity(header.len());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        row.clear();
        for (j, field) in rec.iter().enumerate() {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| fail(format!("row {}, column `{}`: `{field}` is not a number", n + 2, header[j])))?;
            row.push(v);
        }
        traj.push(&row);
    }
    Ok(traj)
}

fn create(path: &Path, overwrite: bool) -> Result<File> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    opts.open(path).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.metrics.toml` into `dir`, creating it if
/// needed. Existing files are replaced only when `overwrite` is set.
pub fn write_outputs(dir: &Path, stem: &str, traj: &Trajectory, m: &Metrics, overwrite: bool) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths::new(dir, stem);
    if !overwrite {
        for p in [&paths.trajectory, &paths.metrics] {
            if p.exists() {
                return Err(Error::io(p, std::io::ErrorKind::AlreadyExists.into()));
            }
        }
    }
    let file = create(&paths.trajectory, overwrite)?;
    write_csv(traj, BufWriter::new(file)).map_err(|e| Error::Format {
        path: paths.trajectory.clone(),
        message: e.to_string(),
    })?;
    write_metrics(&paths.metrics, m, overwrite)?;
    Ok(paths)
}

pub fn write_metrics(path: &Path, m: &Metrics, overwrite: bool) -> Result<()> {
    let mut f = create(path, overwrite)?;
    f.write_all(metrics::to_toml(m).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f), path)
}

pub fn load_metrics(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    metrics::from_toml(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(2);
        let w = t.width();
        for k in 0..5 {
            let row: Vec<f64> = (0..w).map(|j| (k * w + j) as f64 * 0.1 + 1.0 / 3.0).collect();
            t.push(&row);
        }
        t
    }

    #[test]
    fn header_matches_schema() {
        let mut buf = Vec::new();
        write_csv(&Trajectory::new(1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.trim_end(),
            "t_s,vpcc_a_0,vpcc_b_0,vpcc_c_0,ic_a_0,ic_b_0,ic_c_0,p_0,q_0,freq_hz_0,vv_0,fault_flag_0,\
             id_pos_ref_0,iq_pos_ref_0,id_neg_ref_0,iq_neg_ref_0,limiter_gamma_0,ig_a,ig_b,ig_c"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn foreign_header_rejected() {
        let text = "t_s,x\n0,1\n";
        let err = read_csv(text.as_bytes(), Path::new("x.csv")).unwrap_err().to_string();
        assert!(err.contains("x.csv"), "{err}");
        let mut buf = Vec::new();
        write_csv(&Trajectory::new(1), &mut buf).unwrap();
        let renamed = String::from_utf8(buf).unwrap().replace("p_0", "pp_0");
        let err = read_csv(renamed.as_bytes(), Path::new("y.csv")).unwrap_err().to_string();
        assert!(err.contains("pp_0"), "{err}");
    }

    #[test]
    fn refuses_to_clobber() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Metrics::new();
        m.insert("c0_vuf".into(), 0.25);
        let t = sample();
        let paths = write_outputs(&dir.path().join("nested/out"), "case", &t, &m, false).unwrap();
        assert_eq!(load_trajectory(&paths.trajectory).unwrap(), t);
        assert_eq!(load_metrics(&paths.metrics).unwrap(), m);
        let err = write_outputs(&dir.path().join("nested/out"), "case", &t, &m, false).unwrap_err();
        assert!(err.to_string().contains("case.csv"), "{err}");
        write_outputs(&dir.path().join("nested/out"), "case", &t, &m, true).unwrap();
    }
}
