//! Plain-text artifacts: CSV tables, JSON reports and run manifests.
//!
//! Floats are written with 17 significant digits so that a CSV round-trip
//! reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::path::{DiscretizedPath, Parameterization};

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // csv readers and f64::from_str both accept these spellings
        format!("{v}")
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes a header row and numeric rows.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for (k, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Precondition(format!(
                "row {k} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Table> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: row {}, column `{}`: not a number: {s:?}", path.display(), k + 1, header[j]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// `t|s, x1..xd[, lambda1..lambdad][, t]`; the trailing `t` column carries
/// reconstructed physical time for arclength paths.
pub fn write_path_csv<P: AsRef<Path>>(path: P, p: &DiscretizedPath) -> Result<()> {
    let d = p.dim();
    let arclength = p.parameterization == Parameterization::Arclength;
    let mut header = vec![if arclength { "s".to_string() } else { "t".to_string() }];
    header.extend((1..=d).map(|i| format!("x{i}")));
    if p.momenta.is_some() {
        header.extend((1..=d).map(|i| format!("lambda{i}")));
    }
    let times = if arclength { p.times.as_ref() } else { None };
    if times.is_some() {
        header.push("t".into());
    }
    let rows: Vec<Vec<f64>> = (0..p.len())
        .map(|k| {
            let mut row = vec![p.grid[k]];
            row.extend(&p.nodes[k]);
            if let Some(m) = &p.momenta {
                row.extend(&m[k]);
            }
            if let Some(t) = times {
                row.push(t[k]);
            }
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &h, &rows)
}

pub fn read_path_csv<P: AsRef<Path>>(path: P) -> Result<DiscretizedPath> {
    let path = path.as_ref();
    let t = read_csv(path)?;
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    let parameterization = match t.header.first().map(String::as_str) {
        Some("t") => Parameterization::Time,
        Some("s") => Parameterization::Arclength,
        _ => return Err(bad("first column must be `t` or `s`")),
    };
    let count = |prefix: &str| (1..).take_while(|i| t.header.iter().any(|h| *h == format!("{prefix}{i}"))).count();
    let d = count("x");
    if d == 0 {
        return Err(bad("no x1 column"));
    }
    let nl = count("lambda");
    if nl != 0 && nl != d {
        return Err(bad("lambda columns must match x columns"));
    }
    let col = |name: String| t.header.iter().position(|h| *h == name).unwrap();
    let xs: Vec<usize> = (1..=d).map(|i| col(format!("x{i}"))).collect();
    let ls: Vec<usize> = (1..=nl).map(|i| col(format!("lambda{i}"))).collect();
    let trailing_t = parameterization == Parameterization::Arclength && t.header.last().map(String::as_str) == Some("t");
    if t.rows.len() < 2 {
        return Err(bad("a path needs at least two rows"));
    }
    Ok(DiscretizedPath {
        parameterization,
        grid: t.rows.iter().map(|r| r[0]).collect(),
        nodes: t.rows.iter().map(|r| xs.iter().map(|&j| r[j]).collect()).collect(),
        momenta: (nl > 0).then(|| t.rows.iter().map(|r| ls.iter().map(|&j| r[j]).collect()).collect()),
        times: trailing_t.then(|| t.rows.iter().map(|r| r[r.len() - 1]).collect()),
    })
}

pub fn write_json<P: AsRef<Path>, T: Serialize + ?Sized>(path: P, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn sha256_file<P: AsRef<Path>>(path: P) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What was run and what it produced.
///
/// Everything except `wall_time_s` is a function of the inputs, so two
/// single-worker runs with the same manifest produce the same digests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub wall_time_s: f64,
    /// File name relative to the output directory, and its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, workers: usize) -> Self {
        Self {
            command: command.to_string(),
            params: BTreeMap::new(),
            seed,
            workers,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: BTreeMap::new(),
        }
    }

    /// Hashes each output file under `dir`.
    pub fn record_outputs(&mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let name = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
            self.outputs.insert(name, sha256_file(f)?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        let rows = vec![
            vec![0.1, 1.0 / 3.0, -2.5e-300],
            vec![f64::MAX, f64::MIN_POSITIVE, std::f64::consts::PI],
        ];
        write_csv(&f, &["a", "b", "c"], &rows).unwrap();
        let t = read_csv(&f).unwrap();
        assert_eq!(t.header, ["a", "b", "c"]);
        for (r, s) in rows.iter().zip(&t.rows) {
            for (a, b) in r.iter().zip(s) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn path_round_trip_with_times() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        let p = DiscretizedPath {
            parameterization: Parameterization::Arclength,
            grid: vec![0.0, 0.5, 1.0],
            nodes: vec![vec![0.0, 1.0], vec![0.5, 0.7], vec![1.0, 0.2]],
            momenta: Some(vec![vec![0.0; 2], vec![0.1, -0.2], vec![0.0; 2]]),
            times: Some(vec![-3.0, 0.0, 3.0]),
        };
        write_path_csv(&f, &p).unwrap();
        let head = fs::read_to_string(&f).unwrap();
        assert!(head.starts_with("s,x1,x2,lambda1,lambda2,t\n"));
        let q = read_path_csv(&f).unwrap();
        assert_eq!(q.grid, p.grid);
        assert_eq!(q.nodes, p.nodes);
        assert_eq!(q.momenta, p.momenta);
        assert_eq!(q.times, p.times);
        assert_eq!(q.parameterization, Parameterization::Arclength);
    }

    #[test]
    fn path_without_momenta() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        fs::write(&f, "t,x1\n0,0\n1,0.5\n").unwrap();
        let p = read_path_csv(&f).unwrap();
        assert!(p.momenta.is_none());
        assert_eq!(p.nodes[1], vec![0.5]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        fs::write(&f, "t,x1\n0,0\n1,abc\n").unwrap();
        let e = read_csv(&f).unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("`x1`"), "{e}");
    }

    #[test]
    fn digests_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        write_csv(&f, &["x"], &[vec![1.0]]).unwrap();
        let mut a = RunManifest::new("t", 1, 1);
        a.record_outputs(dir.path(), &[f.clone()]).unwrap();
        write_csv(&f, &["x"], &[vec![1.0]]).unwrap();
        let mut b = RunManifest::new("t", 1, 1);
        b.record_outputs(dir.path(), &[f]).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.outputs["a.csv"].len(), 64);
    }
}
