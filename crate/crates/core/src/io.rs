//! Matrix CSV files, JSON sidecars and plot scripts.
//!
//! A matrix file starts with two header rows carrying the axes in nm (six
//! decimals): the column axis first, then the row axis. Each following line
//! is one matrix row. Complex cells are written as `re+imj`, which Python's
//! `complex()` parses directly.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::instrument::MeasuredJsd;
use crate::jsa::JsaMatrix;
use crate::schmidt::SchmidtSpectrum;

fn axis_row(out: &mut impl Write, label: &str, nm: &[f64]) -> io::Result<()> {
    write!(out, "{label}")?;
    for v in nm {
        write!(out, ",{v:.6}")?;
    }
    writeln!(out)
}

fn write_matrix<T>(
    path: &Path,
    col_label: &str,
    cols: &[f64],
    row_label: &str,
    rows: &[f64],
    m: &DMatrix<T>,
    cell: impl Fn(&T) -> String,
) -> io::Result<()>
where
    T: nalgebra::Scalar,
{
    let mut out = BufWriter::new(fs::File::create(path)?);
    axis_row(&mut out, col_label, cols)?;
    axis_row(&mut out, row_label, rows)?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| cell(&m[(i, j)])).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

pub fn format_complex(z: &Complex64) -> String {
    format!("{:.10e}{:+.10e}j", z.re, z.im)
}

pub fn write_jsa_csv(path: &Path, jsa: &JsaMatrix) -> io::Result<()> {
    write_matrix(
        path,
        "idler_nm",
        &jsa.idler.nm,
        "signal_nm",
        &jsa.signal.nm,
        &jsa.amplitude,
        format_complex,
    )
}

pub fn write_density_csv(path: &Path, col_label: &str, cols: &[f64], row_label: &str, rows: &[f64], m: &DMatrix<f64>) -> io::Result<()> {
    write_matrix(path, col_label, cols, row_label, rows, m, |v| format!("{v:.10e}"))
}

pub fn write_measured_csv(path: &Path, m: &MeasuredJsd) -> io::Result<()> {
    write_density_csv(path, "idler_nm", &m.idler_nm, "seed_nm", &m.seed_nm, &m.counts)
}

/// Pretty JSON with a top-level `generated_at` timestamp added to objects.
pub fn write_sidecar(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut v = serde_json::to_value(value).map_err(io::Error::other)?;
    if let Value::Object(map) = &mut v {
        map.insert("generated_at".into(), Value::String(chrono::Utc::now().to_rfc3339()));
    }
    let mut text = serde_json::to_string_pretty(&v).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// Schmidt summary with coefficients truncated at cumulative weight
/// `1 − 1e-6`.
pub fn schmidt_summary(s: &SchmidtSpectrum, jsa: Option<&JsaMatrix>) -> Value {
    let mut acc = 0.0;
    let mut kept = Vec::new();
    for &c in &s.coefficients {
        kept.push(c);
        acc += c;
        if acc >= 1.0 - 1e-6 {
            break;
        }
    }
    let grid = jsa.map(|j| {
        json!({
            "signal_points": j.signal.len(),
            "idler_points": j.idler.len(),
            "signal_nm": [j.signal.nm[0], j.signal.nm[j.signal.len() - 1]],
            "idler_nm": [j.idler.nm[0], j.idler.nm[j.idler.len() - 1]],
            "d_omega_signal": j.signal.d_omega,
            "d_omega_idler": j.idler.d_omega,
        })
    });
    json!({
        "k": s.k,
        "coefficients": kept,
        "total_coefficients": s.coefficients.len(),
        "grid": grid,
    })
}

/// Matplotlib script for a matrix file written by this module.
pub fn plot_script(csv_name: &str, title: &str, complex: bool) -> String {
    let cell = if complex {
        "np.abs(np.array([[complex(c) for c in r] for r in rows])) ** 2"
    } else {
        "np.array([[float(c) for c in r] for r in rows])"
    };
    format!(
        r#"#!/usr/bin/env python3
# Generated by ringjsa. Usage: python3 {script} [output.png]
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

with open("{csv_name}") as f:
    lines = list(csv.reader(f))
cols = np.array([float(v) for v in lines[0][1:]])
rows_axis = np.array([float(v) for v in lines[1][1:]])
rows = lines[2:]
z = {cell}

fig, ax = plt.subplots(figsize=(5, 4.5))
mesh = ax.pcolormesh(cols, rows_axis, z / z.max(), shading="auto", cmap="viridis")
ax.set_xlabel("{col_label} wavelength (nm)")
ax.set_ylabel("{row_label} wavelength (nm)")
ax.set_title("{title}")
fig.colorbar(mesh, ax=ax, label="normalized density")
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1], dpi=150)
else:
    plt.show()
"#,
        script = csv_name.replace(".csv", ".py"),
        col_label = "idler",
        row_label = if csv_name.starts_with("measured") { "seed" } else { "signal" },
    )
}

pub fn write_plot_script(path: &Path, csv_name: &str, title: &str, complex: bool) -> io::Result<()> {
    fs::write(path, plot_script(csv_name, title, complex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsa::Axis;

    #[test]
    fn complex_cells_parse_back() {
        for z in [Complex64::new(1.5e-3, -2.25e-7), Complex64::new(-0.0, 0.0), Complex64::new(-3.0, 4.0)] {
            let s = format_complex(&z);
            let s = s.trim_end_matches('j');
            let e = s.find('e').unwrap();
            let split = e + 2 + s[e + 2..].find(['+', '-']).unwrap();
            let (re, im) = s.split_at(split);
            let back = Complex64::new(re.parse().unwrap(), im.parse().unwrap());
            assert!((back - z).norm() <= 1e-9 * z.norm().max(1e-300));
        }
    }

    #[test]
    fn matrix_layout() {
        let dir = tempfile::tempdir().unwrap();
        let ax = Axis::uniform(1200.0, 0.1, 3);
        let m = DMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64, j as f64));
        let jsa = JsaMatrix::new(ax.clone(), ax, m).unwrap();
        let p = dir.path().join("jsa.csv");
        write_jsa_csv(&p, &jsa).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("idler_nm,"));
        assert!(lines[1].starts_with("signal_nm,"));
        assert_eq!(lines[0].split(',').nth(1).unwrap().split('.').nth(1).unwrap().len(), 6);
        assert_eq!(lines[2].split(',').count(), 3);
    }

    #[test]
    fn sidecar_has_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("meta.json");
        write_sidecar(&p, &json!({"k": 1.0})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v["generated_at"].is_string());
        assert_eq!(v["k"], 1.0);
    }
}
