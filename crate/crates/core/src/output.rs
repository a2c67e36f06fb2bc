//! Versioned CSV emission. Every file starts with [`CSV_HEADER`]; reals use
//! 17 significant digits so reruns are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::evolution::Trajectory;
use crate::kpp::KppOutcome;
use crate::spectrum::SpectrumReport;

pub const CSV_HEADER: &str = "# perispec-csv v1";

/// Round-trip exact decimal form of a real.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Header line, column names, then rows.
pub fn write_rows<W: Write>(out: W, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_HEADER}")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_rows(BufWriter::new(File::create(path)?), columns, rows)
}

/// Long format `t, node, value`.
pub fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .flat_map(|(t, u)| {
            u.iter()
                .enumerate()
                .map(move |(j, v)| vec![fmt_real(*t), j.to_string(), fmt_real(*v)])
        })
        .collect()
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_csv(path, &["t", "node", "value"], &trajectory_rows(traj))
}

pub fn write_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|(l, m)| vec![fmt_real(*l), fmt_real(*m)])
        .collect();
    write_csv(path, &["lambda", "mu"], &rows)
}

pub const SPECTRUM_COLUMNS: [&str; 9] = [
    "lambda",
    "mu_n",
    "h_hat_min",
    "h_hat_max",
    "gap",
    "residual",
    "lyapunov_mu",
    "localization_width",
    "is_principal_eigenvalue",
];

pub fn spectrum_row(r: &SpectrumReport) -> Vec<String> {
    vec![
        fmt_real(r.lambda),
        fmt_real(r.mu_n),
        fmt_real(r.h_hat_min),
        fmt_real(r.h_hat_max),
        fmt_real(r.gap()),
        fmt_real(r.residual),
        fmt_opt(r.lyapunov_mu),
        fmt_real(r.localization_width),
        r.is_principal_eigenvalue.to_string(),
    ]
}

pub fn write_spectrum(path: &Path, reports: &[SpectrumReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports.iter().map(spectrum_row).collect();
    write_csv(path, &SPECTRUM_COLUMNS, &rows)
}

/// One row per scanned λ.
pub fn write_kpp_scan(path: &Path, rows: &[KppOutcome]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|o| {
            vec![
                fmt_real(o.lambda),
                o.verdict.to_string(),
                fmt_real(o.poincare_residual),
                o.periods_used.to_string(),
                fmt_opt(o.min_of_u_star),
                fmt_real(o.final_norm),
                fmt_opt(o.second_start_distance),
            ]
        })
        .collect();
    write_csv(
        path,
        &[
            "lambda",
            "verdict",
            "poincare_residual",
            "periods_used",
            "min_u_star",
            "final_norm",
            "second_start_distance",
        ],
        &rows,
    )
}
