//! Long-form result rows and their CSV/JSON encodings.

use std::io::{self, Write};

use serde::Serialize;

/// One measured value. A run emits one row per (trial, sweep point, metric),
/// so downstream plotting never has to unpivot columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    /// Content hash of the generating spec.
    pub spec_hash: String,
    pub trial: usize,
    /// The trial's reported seed (`seed_base + trial`).
    pub seed: u64,
    /// Position on the sweep axis (penalty level, cardinality, or sample
    /// count, depending on the experiment kind).
    pub sweep: f64,
    pub metric: String,
    pub value: f64,
    /// Solver iterations behind this row; 0 for closed-form rows.
    pub iterations: usize,
    /// Wall-clock milliseconds, only when timing was requested. Left out of
    /// default output so byte-identical reruns stay byte-identical.
    pub wall_ms: Option<f64>,
}

pub const CSV_HEADER: &str = "spec_hash,trial,seed,sweep,metric,value,iterations,wall_ms";

/// Writes records as CSV with a header row. Floats use shortest round-trip
/// formatting; a missing wall time is an empty field.
pub fn write_csv<W: Write + ?Sized>(w: &mut W, records: &[ResultRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let wall = r.wall_ms.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.spec_hash, r.trial, r.seed, r.sweep, r.metric, r.value, r.iterations, wall
        )?;
    }
    Ok(())
}

/// Writes the same rows as a JSON array (missing wall time becomes null).
pub fn write_json<W: Write + ?Sized>(w: &mut W, records: &[ResultRecord]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, records).map_err(io::Error::other)?;
    writeln!(w)
}
