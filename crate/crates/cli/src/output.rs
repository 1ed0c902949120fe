//! Atomic file writes and the CSV layouts.

use std::io::Write;
use std::path::Path;

use twocycles_core::dynamics::Trajectory;
use twocycles_core::equilibria::continuation::Branch;
use twocycles_core::equilibria::EquilibriumRecord;
use twocycles_core::factorization::{SignTable, ORBIT_LABELS};
use twocycles_core::geometry::Attachment;
use twocycles_core::linearization::Eigenvalue;

use crate::CliError;

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory csv writer")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn label(class: impl serde::Serialize) -> String {
    serde_json::to_value(class)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// `re+imi` pairs joined by spaces.
pub fn format_spectrum(e: &[Eigenvalue]) -> String {
    e.iter()
        .map(|l| format!("{}{:+}i", l.re, l.im))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Columns `t, x1, y1, ..., x4, y4, e1..e5`.
pub fn trajectory_csv(tr: &Trajectory) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4", "e1", "e2", "e3", "e4", "e5"])
        .map_err(csv_err)?;
    for ((t, f), e) in tr.times.iter().zip(&tr.states).zip(&tr.errors) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(f.to_array())
            .chain(e.0)
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(finish(w))
}

const CHART_COLUMNS: [&str; 5] = ["x21", "x22", "x41", "x42", "ell3"];

/// One row per (branch, mu).
pub fn bifurcation_csv(branches: &[&Branch]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["branch", "mu", "leading_re", "class", "stability", "e1", "e5"];
    header.extend(CHART_COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for b in branches {
        for p in &b.points {
            let r = &p.record;
            let mut row = vec![
                b.label.clone(),
                p.mu.to_string(),
                r.leading_real().to_string(),
                label(r.class),
                label(r.stability),
                r.errors.0[0].to_string(),
                r.errors.0[4].to_string(),
            ];
            row.extend(r.chart.to_array().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    Ok(finish(w))
}

pub fn equilibria_csv(records: &[EquilibriumRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index", "class", "stability", "leading_re", "residual", "e1", "e2", "e3", "e4", "e5"];
    header.extend(CHART_COLUMNS);
    header.push("eigenvalues");
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            label(r.class),
            label(r.stability),
            r.leading_real().to_string(),
            r.residual.to_string(),
        ];
        row.extend(r.errors.0.map(|v| v.to_string()));
        row.extend(r.chart.to_array().map(|v| v.to_string()));
        row.push(format_spectrum(&r.spectrum.eigenvalues));
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(finish(w))
}

pub fn sign_table_csv(t: &SignTable) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["element", "p", "sign"]).map_err(csv_err)?;
    for k in 0..4 {
        w.write_record([ORBIT_LABELS[k].to_string(), t.p[k].to_string(), t.signs[k].to_string()])
            .map_err(csv_err)?;
    }
    Ok(finish(w))
}

pub fn charts_csv(a: &Attachment) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index"];
    header.extend(CHART_COLUMNS);
    header.extend(["origin_in_hull", "aligned"]);
    w.write_record(&header).map_err(csv_err)?;
    for (i, c) in a.charts.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(c.to_array().map(|v| v.to_string()));
        row.push(c.origin_in_hull().to_string());
        row.push(c.is_aligned(twocycles_core::geometry::PARALLEL_TOL).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(finish(w))
}
