//! Persistence: JSON checkpoints, CSV tables and run configuration.
//!
//! Every file written here goes through [`write_atomic`], so a failed write
//! never leaves a partial file at the destination.

mod checkpoint;
mod config;
mod table;

pub use checkpoint::{Generator, GeneratorCheckpoint, Kind, FORMAT_VERSION};
pub use config::{RunConfig, SEED_ENV};
pub use table::{
    format_float, load_dataset, read_numeric_csv, read_table, save_dataset, write_csv_rows, write_numeric_csv,
    CategoryMap, Dataset, DatasetSpec, Table, Target,
};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
