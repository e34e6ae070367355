//! JSON and CSV artifacts. Every artifact carries the resolved
//! configuration and the crate version; CSV files get a `.meta.json` sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resolved configuration block embedded in every artifact.
pub fn metadata(res: &Resolved, command: &str) -> Value {
    json!({
        "code_version": VERSION,
        "command": command,
        "config": res.config,
        "resolved": {
            "unit_system": res.units.label(),
            "sphere_internal": res.sphere,
            "beam_internal": res.beam,
            "mean_photons": res.n_photons,
            "mean_photons_from_power": res.n_photons_from_power,
            "mode": res.mode.describe(),
            "path": res.path,
        },
    })
}

/// Pretty JSON with a trailing newline. Key order follows the value.
pub fn write_json<T: Serialize>(path: &Path, meta: &Value, result: &T) -> Result<()> {
    let doc = json!({ "meta": meta, "result": result });
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    csv_path.with_file_name(name)
}

/// CSV with a mandatory header row; floats use the shortest
/// round-trip representation so output is reproducible byte for byte.
pub fn write_csv(path: &Path, meta: &Value, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), meta, &json!({ "columns": header, "rows": rows.len() }))
}
