//! CSV and manifest writing.
//!
//! Rows are written in a fixed order with the default shortest-roundtrip
//! float formatting and `.` decimal separator, newline-terminated, so a
//! repeated run with the same configuration and seed produces byte-identical
//! files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::RawConfig;

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 48 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    fs::write(path, out)
}

/// Writes the run manifest: resolved configuration plus provenance comments.
/// The manifest is itself a readable configuration file, so a run can be
/// reproduced directly from it.
pub fn write_manifest(
    path: &Path,
    raw: &RawConfig,
    command: &str,
    wall_seconds: f64,
) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# mollify-markets v{}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "# command: {command}")?;
    writeln!(f, "# wall_time_s: {wall_seconds:.3}")?;
    for (k, v) in raw.entries() {
        writeln!(f, "{k} = {v}")?;
    }
    Ok(())
}

/// Formats a float with the default shortest-roundtrip representation.
pub fn num(x: f64) -> String {
    format!("{x}")
}
