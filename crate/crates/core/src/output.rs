//! Diagnostics CSV, legacy-VTK snapshots and study tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{ConvergenceTable, SweepRow};
use crate::field::full_field;
use crate::grid::Grid;
use crate::scheme::{DiagRecord, State};

pub const DIAG_HEADER: &str =
    "step,time,E_bulk,E_surf,E_total,E_modified,mass_bulk,mass_surf,solver_iters,solver_residual";

pub fn format_diag_csv(records: &[DiagRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Empty("diagnostics series"));
    }
    let mut out = String::with_capacity(200 * (records.len() + 1));
    out.push_str(DIAG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.step,
            r.time,
            r.e_bulk,
            r.e_surf,
            r.e_total,
            r.e_modified,
            r.mass_bulk,
            r.mass_surf,
            r.solver_iters,
            r.solver_residual
        );
    }
    Ok(out)
}

pub fn write_diag_csv(records: &[DiagRecord], path: &Path) -> Result<()> {
    let text = format_diag_csv(records)?;
    fs::write(path, text)?;
    Ok(())
}

fn field<T: std::str::FromStr>(s: Option<&str>, name: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = s.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column {name}"),
    })?;
    s.parse().map_err(|e| Error::Parse {
        line,
        message: format!("{name}: cannot read `{s}`: {e}"),
    })
}

/// Parses text written by [`format_diag_csv`].
pub fn parse_diag_csv(text: &str) -> Result<Vec<DiagRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == DIAG_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let mut cols = line.split(',');
        let rec = DiagRecord {
            step: field(cols.next(), "step", line_no)?,
            time: field(cols.next(), "time", line_no)?,
            e_bulk: field(cols.next(), "E_bulk", line_no)?,
            e_surf: field(cols.next(), "E_surf", line_no)?,
            e_total: field(cols.next(), "E_total", line_no)?,
            e_modified: field(cols.next(), "E_modified", line_no)?,
            mass_bulk: field(cols.next(), "mass_bulk", line_no)?,
            mass_surf: field(cols.next(), "mass_surf", line_no)?,
            solver_iters: field(cols.next(), "solver_iters", line_no)?,
            solver_residual: field(cols.next(), "solver_residual", line_no)?,
        };
        if cols.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: "too many columns".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_diag_csv(path: &Path) -> Result<Vec<DiagRecord>> {
    parse_diag_csv(&fs::read_to_string(path)?)
}

/// Legacy ASCII VTK of `phi` on all `(n+1)^2` vertices, perimeter values from `psi`.
pub fn format_vtk(state: &State, grid: &Grid) -> Result<String> {
    let values = full_field(&state.phi, &state.psi, grid)?;
    let n1 = grid.n() + 1;
    let h = grid.h();
    let mut out = String::with_capacity(26 * values.len() + 256);
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "phi at step {} t={:.16e}", state.step, state.t);
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {n1} {n1} 1");
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(out, "SPACING {h:.16e} {h:.16e} 1");
    let _ = writeln!(out, "POINT_DATA {}", values.len());
    let _ = writeln!(out, "SCALARS phi double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v:.16e}");
    }
    Ok(out)
}

/// Boundary trace as `arc_length,psi`, starting at the origin and running
/// counterclockwise.
pub fn format_trace(state: &State, grid: &Grid) -> Result<String> {
    state.psi.check(grid)?;
    let mut out = String::from("arc_length,psi\n");
    for (k, v) in state.psi.iter().enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e}", k as f64 * grid.h(), v);
    }
    Ok(out)
}

/// Path of the trace CSV written next to a snapshot.
pub fn trace_path(vtk_path: &Path) -> PathBuf {
    vtk_path.with_extension("trace.csv")
}

/// Writes the VTK snapshot and its boundary trace; returns the trace path.
pub fn write_vtk_snapshot(state: &State, grid: &Grid, path: &Path) -> Result<PathBuf> {
    fs::write(path, format_vtk(state, grid)?)?;
    let trace = trace_path(path);
    fs::write(&trace, format_trace(state, grid)?)?;
    Ok(trace)
}

pub fn format_convergence_table(table: &ConvergenceTable) -> String {
    let mut out = String::from("tau,steps,err_phi,err_psi\n");
    for r in &table.rows {
        let _ = writeln!(out, "{:.16e},{},{:.16e},{:.16e}", r.tau, r.steps, r.err_phi, r.err_psi);
    }
    out
}

pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,probe,step,E_modified,E_total,mass_bulk,mass_surf\n");
    for r in rows {
        let d = &r.record;
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.beta, r.probe, d.step, d.e_modified, d.e_total, d.mass_bulk, d.mass_surf
        );
    }
    out
}
