//! Trajectory CSV: `t, norm, frac_norm_<δ>…, eta, probe_<x>…`, one row per
//! forward node, every number printed with 17 significant digits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::integrator::Trajectory;
use crate::scalar::Scalar;
use crate::spectral::SpectralOperator;

/// Columns requested beyond `t`, `norm` and `eta`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvColumns {
    pub deltas: Vec<f64>,
    pub probes: Vec<f64>,
}

pub fn csv_header(cols: &CsvColumns) -> String {
    let mut out = String::from("t,norm");
    for d in &cols.deltas {
        let _ = write!(out, ",frac_norm_{d}");
    }
    out.push_str(",eta");
    for x in &cols.probes {
        let _ = write!(out, ",probe_{x}");
    }
    out
}

fn push_num(out: &mut String, x: f64) {
    let _ = write!(out, ",{x:.16e}");
}

pub fn write_csv<T: Scalar, W: Write>(
    traj: &Trajectory<T>,
    op: &SpectralOperator<T>,
    cols: &CsvColumns,
    mut w: W,
) -> Result<()> {
    writeln!(w, "{}", csv_header(cols))?;
    let deltas: Vec<T> = cols.deltas.iter().map(|&d| T::lit(d)).collect();
    let probes: Vec<T> = cols.probes.iter().map(|&x| T::lit(x)).collect();
    let mut row = String::new();
    for ((t, u), eta) in traj.forward_times().iter().zip(traj.forward_states()).zip(traj.delays()) {
        row.clear();
        let _ = write!(row, "{:.16e}", t.as_f64());
        push_num(&mut row, u.norm().as_f64());
        for &d in &deltas {
            push_num(&mut row, op.frac_power_norm(d, u)?.as_f64());
        }
        push_num(&mut row, eta.as_f64());
        for &x in &probes {
            push_num(&mut row, op.eval_point(u, x).as_f64());
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<T: Scalar>(traj: &Trajectory<T>, op: &SpectralOperator<T>, cols: &CsvColumns) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(traj, op, cols, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
}

pub fn write_csv_file<T: Scalar>(
    traj: &Trajectory<T>,
    op: &SpectralOperator<T>,
    cols: &CsvColumns,
    path: &Path,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(traj, op, cols, file)
}
