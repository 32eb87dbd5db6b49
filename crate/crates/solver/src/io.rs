//! Deterministic output writers. Every float is printed with 17 significant
//! digits so values round-trip exactly and repeated runs produce
//! byte-identical files; nothing time- or host-dependent is written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::energy::Diagnostics;
use crate::minimize::{SolveReport, SweepRow};
use crate::torus::{Field, TorusGrid};
use crate::Result;

/// 17 significant digits, scientific; round-trips any f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| fmt_float(*x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Flat CSV: a `n1,n2,L1,L2` header, the shape row, then one sample per line
/// in row-major order.
pub fn write_field_csv(path: &Path, grid: &TorusGrid, field: &Field) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "n1,n2,L1,L2")?;
    writeln!(
        out,
        "{},{},{},{}",
        grid.n1(),
        grid.n2(),
        fmt_float(grid.l1()),
        fmt_float(grid.l2())
    )?;
    for v in field.values() {
        writeln!(out, "{}", fmt_float(*v))?;
    }
    out.flush()?;
    Ok(())
}

/// Raw binary: a little-endian u64 item count followed by the samples as
/// little-endian f64, row-major.
pub fn write_field_bin(path: &Path, field: &Field) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(field.values().len() as u64).to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Diagnostics JSON with a fixed key set and order. When a solve report is
/// supplied its deterministic summary fields are appended (wall time is
/// deliberately excluded).
pub fn write_diagnostics_json(
    path: &Path,
    diag: &Diagnostics,
    report: Option<&SolveReport>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{{")?;
    writeln!(out, "  \"lambda\": {},", fmt_float(diag.lambda))?;
    writeln!(out, "  \"lambda0\": {},", fmt_float(diag.lambda0))?;
    writeln!(out, "  \"Q\": {},", fmt_list(&diag.q))?;
    writeln!(out, "  \"Q_target\": {},", fmt_list(&diag.q_target))?;
    writeln!(out, "  \"D\": {},", fmt_list(&diag.d))?;
    writeln!(out, "  \"translation_bounds_ok\": {},", diag.translation_bounds_ok)?;
    write!(out, "  \"residual\": {}", fmt_list(&diag.residual))?;
    if let Some(r) = report {
        writeln!(out, ",")?;
        writeln!(out, "  \"converged\": {},", r.converged)?;
        writeln!(out, "  \"iterations\": {},", r.iterations)?;
        writeln!(out, "  \"func_evals\": {},", r.func_evals)?;
        writeln!(out, "  \"J\": {},", fmt_float(r.j))?;
        writeln!(out, "  \"grad_norm\": {},", fmt_float(r.grad_norm))?;
        writeln!(out, "  \"margins\": {},", fmt_list(&r.margins))?;
        writeln!(out, "  \"j_monotone\": {},", r.j_monotone)?;
        writeln!(out, "  \"translation_bounds_all_iterates\": {},", r.translation_bounds_all_iterates)?;
        match &r.failure {
            Some(f) => write!(out, "  \"failure\": \"{f}\"")?,
            None => write!(out, "  \"failure\": null")?,
        }
        writeln!(out)?;
    } else {
        writeln!(out)?;
    }
    writeln!(out, "}}")?;
    out.flush()?;
    Ok(())
}

/// Sweep table: one row per coupling with convergence flag, energy, gradient
/// norm, worst residual, and the per-component vacuum distances, flux
/// integrals, and flux targets. Failed rows carry nan in the value columns.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], n: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::from("lambda,converged,J,grad_norm,residual_max");
    for i in 1..=n {
        header.push_str(&format!(",D_{i}"));
    }
    for i in 1..=n {
        header.push_str(&format!(",Q_{i}"));
    }
    for i in 1..=n {
        header.push_str(&format!(",Q_target_{i}"));
    }
    writeln!(out, "{header}")?;
    for row in rows {
        match &row.outcome {
            Ok((_, report)) => {
                let d = &report.diagnostics;
                let res_max = d.residual.iter().cloned().fold(0.0, f64::max);
                let mut line = format!(
                    "{},{},{},{},{}",
                    fmt_float(row.lambda),
                    report.converged,
                    fmt_float(report.j),
                    fmt_float(report.grad_norm),
                    fmt_float(res_max)
                );
                for v in d.d.iter().chain(&d.q).chain(&d.q_target) {
                    line.push_str(&format!(",{}", fmt_float(*v)));
                }
                writeln!(out, "{line}")?;
            }
            Err(_) => {
                let mut line = format!("{},false,nan,nan,nan", fmt_float(row.lambda));
                for _ in 0..3 * n {
                    line.push_str(",nan");
                }
                writeln!(out, "{line}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
