//! Field CSV files and the JSON run summary.
//!
//! Fields are written one vertex per row, `x,y[,z],value`, every number with
//! 17 significant digits so a write/read round trip is lossless.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{GridFunction, Mesh};
use crate::optimizer::{SolveReport, SolverConfig, SweepRow};
use crate::verify::CheckReport;

pub fn csv_header(dim: usize) -> &'static str {
    if dim == 2 {
        "x,y,value"
    } else {
        "x,y,z,value"
    }
}

pub fn write_field_csv<W: Write>(mesh: &Mesh, u: &GridFunction, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(mesh.dim()))?;
    for (v, value) in u.values().iter().enumerate() {
        for x in mesh.vertex(v) {
            write!(out, "{x:.16e},")?;
        }
        writeln!(out, "{value:.16e}")?;
    }
    Ok(())
}

/// Read a field written by [`write_field_csv`], checking it against `mesh`.
pub fn read_field_csv<R: BufRead>(mesh: &Mesh, input: R) -> Result<GridFunction> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Precondition(format!("unreadable field file: {e}")))?
        .ok_or_else(|| Error::Precondition("empty field file".into()))?;
    if header.trim() != csv_header(mesh.dim()) {
        return Err(Error::Precondition(format!(
            "expected header `{}`, found `{}`",
            csv_header(mesh.dim()),
            header.trim()
        )));
    }
    let mut values = Vec::with_capacity(mesh.n_vertices());
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Precondition(format!("unreadable field file: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let numbers = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Precondition(format!("row {}: {e}", row + 1)))?;
        if numbers.len() != mesh.dim() + 1 {
            return Err(Error::Precondition(format!(
                "row {}: expected {} columns, found {}",
                row + 1,
                mesh.dim() + 1,
                numbers.len()
            )));
        }
        if values.len() < mesh.n_vertices() {
            let expected = mesh.vertex(values.len());
            if expected.iter().zip(&numbers).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::Precondition(format!(
                    "row {}: coordinates do not match the configured mesh",
                    row + 1
                )));
            }
        }
        values.push(numbers[mesh.dim()]);
    }
    mesh.field(values)
}

/// Contents of `triple.json`.
#[derive(Debug, Serialize)]
pub struct TripleSummary<'a> {
    pub config: &'a SolverConfig,
    pub threshold: f64,
    pub reports: Vec<&'a SolveReport>,
    pub checks: &'a [CheckReport],
    pub all_checks_passed: bool,
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Precondition(format!("serialization failed: {e}")))?;
    writeln!(out).map_err(|e| Error::Precondition(format!("write failed: {e}")))
}

pub const SWEEP_HEADER: &str = "lambda,t_lambda,c1,c2,c3,threshold1,threshold2,threshold3";

fn csv_number(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => "nan".to_string(),
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for row in rows {
        let mut fields = vec![csv_number(Some(row.lambda)), csv_number(Some(row.t_lambda))];
        fields.extend(row.energies.iter().map(|&e| csv_number(e)));
        fields.extend(row.below_threshold.iter().map(|b| match b {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => "nan".to_string(),
        }));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn rejects_mismatched_files() {
        let mesh = build_mesh(2, 3).unwrap();
        let other = build_mesh(2, 4).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&other, &other.zeros(), &mut buf).unwrap();
        assert!(matches!(read_field_csv(&mesh, buf.as_slice()), Err(Error::Precondition(_))));
        let bad_header = b"a,b,c\n".to_vec();
        assert!(read_field_csv(&mesh, bad_header.as_slice()).is_err());
        let three_d = build_mesh(3, 3).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mesh, &mesh.zeros(), &mut buf).unwrap();
        assert!(read_field_csv(&three_d, buf.as_slice()).is_err());
    }

    #[test]
    fn short_file_is_a_dimension_error() {
        let mesh = build_mesh(2, 3).unwrap();
        let text = "x,y,value\n0,0,0\n";
        assert!(matches!(
            read_field_csv(&mesh, text.as_bytes()),
            Err(Error::Dimension { expected: 16, found: 1 })
        ));
    }

    #[test]
    fn sweep_rows_render_nan_for_failures() {
        let row = SweepRow {
            lambda: 2.0,
            t_lambda: f64::NAN,
            bracket: f64::NAN,
            energies: [Some(0.5), None, Some(1.0)],
            below_threshold: [Some(true), None, Some(false)],
            errors: vec![],
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(
            lines[1],
            "2.0000000000000000e0,nan,5.0000000000000000e-1,nan,1.0000000000000000e0,1,nan,0"
        );
    }
}
