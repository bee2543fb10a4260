//! File formats, dataset manifests, the synthetic dataset generator and
//! report serialisation. Every write goes through [`atomic_write`].

mod manifest;
mod pgm;
mod raster;
mod report;
mod synth;

use std::io::Write;
use std::path::Path;

pub use manifest::{load_case, load_dataset, Case, CaseEntry, Dataset, Manifest, Split};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use raster::{decode_raster, read_mask_raster, read_raster, write_raster, RasterFile, SSEG_HEADER_LEN, SSEG_MAGIC};
pub use report::{
    aggregate_sweeps, format4, read_ged_csv, read_summary_csv, read_sweep_csv, write_report, CaseEvaluation,
    EvalReport, GedCsvRow, GedSummary, ReportFiles, SummaryRow, SweepCsvRow, UNDEFINED,
};
pub use synth::{generate_synthetic, synthesize_case, ShapeFamily, SynthCase, SynthConfig, SynthSummary};

use crate::error::{Error, Result};

/// Write `bytes` to a temporary file beside `path`, then rename it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".softseg-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.into(), source: e })
}
