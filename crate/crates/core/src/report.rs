//! Number formatting and serialization helpers for data files.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// Version of the CSV and JSON layouts written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Full-precision rendering: 17 significant digits in scientific notation,
/// which round-trips every `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
