//! Run artifacts: `diagnostics.csv`, `snapshots.json`, `plot.dat`.
//!
//! Every number is written with 17 significant digits so that binary64
//! values survive a text round trip bit for bit.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{DiagnosticsRecord, CSV_COLUMNS};
use crate::sphere_grid::{Grid, GridMode};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// JSON formatter writing floats with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_num(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let text = to_json_string(value).map_err(|source| OutputError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn csv_string(records: &[DiagnosticsRecord]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.csv_values().iter().map(|&x| fmt_num(x)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub mode: GridMode,
    pub n: usize,
    pub m: usize,
    pub nodes: Vec<f64>,
}

impl From<&Grid> for GridInfo {
    fn from(g: &Grid) -> Self {
        GridInfo {
            mode: g.mode,
            n: g.n,
            m: g.m,
            nodes: g.nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshots {
    pub grid: GridInfo,
    pub snapshots: Vec<Snapshot>,
}

pub fn read_snapshots(path: &Path) -> Result<Snapshots, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| OutputError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Gnuplot-style two-column data: `tau` and `osc(u / Theta)`.
pub fn plot_string(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::from("# tau osc_u_tilde\n");
    for r in records {
        s.push_str(&format!("{} {}\n", fmt_num(r.tau), fmt_num(r.osc_u_tilde)));
    }
    s
}

/// Writes the three run artifacts into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    grid: &Grid,
    snapshots: Vec<Snapshot>,
    records: &[DiagnosticsRecord],
) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join("diagnostics.csv");
    fs::write(&csv, csv_string(records)).map_err(io_err(&csv))?;
    let snaps = Snapshots {
        grid: grid.into(),
        snapshots,
    };
    write_json(&dir.join("snapshots.json"), &snaps)?;
    let plot = dir.join("plot.dat");
    fs::write(&plot, plot_string(records)).map_err(io_err(&plot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_num(f64::NAN), "nan");
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(
            csv_string(&[]),
            "t,tau,u_min,u_max,pinch_ratio,horoconvex_margin,pinching_T,osc_F_tilde,f_sigma_max,A2_minus_nF2_max,rho_minus,rho_plus,duality_err,w_min,w_max\n"
        );
    }

    #[test]
    fn json_uses_full_precision() {
        let s = to_json_string(&vec![0.1, f64::NAN]).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,null]");
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![Some(0.1), None]);
    }
}
