//! Convergence table output.

use std::io::{self, Write};

use cordes_fem::adaptivity::ConvergenceRecord;

pub const HEADER: &str = "level,ndof,h_max,err_h2,err_grad,err_l2,eta,efficiency";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Writes the header and one row per record; absent values stay empty.
pub fn emit_csv<W: Write>(records: &[ConvergenceRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.level,
            r.ndof,
            cell(Some(r.h_max)),
            cell(r.err_h2),
            cell(r.err_grad),
            cell(r.err_l2),
            cell(Some(r.eta)),
            cell(r.efficiency)
        )?;
    }
    w.flush()
}
