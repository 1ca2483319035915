//! Trace and estimate files.
//!
//! Binary trace layout (little endian):
//!
//! ```text
//! b"QNETTRC1" | u32 records | u32 samples | f64 sample_rate_hz | f64 × records·samples
//! ```
//!
//! Records are shot-major, channel-minor. The channel labels and full
//! settings go into a JSON sidecar at `<path>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::settings::McSettings;
use super::traces::{ChannelLabel, ShotMatrix, TraceBatch};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 8] = b"QNETTRC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    shots: usize,
    channels: usize,
    samples: usize,
    labels: Vec<ChannelLabel>,
    settings: McSettings,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the records of `batch` (not its calibration) and the sidecar.
pub fn write_trace_batch(batch: &TraceBatch, path: &Path) -> Result<()> {
    let records = batch.shots * batch.channels();
    let too_big =
        |what: &str, v: usize| Error::TraceFormat(format!("{what} = {v} does not fit in u32"));
    let n_rec = u32::try_from(records).map_err(|_| too_big("records", records))?;
    let n_samp = u32::try_from(batch.samples).map_err(|_| too_big("samples", batch.samples))?;
    if batch.data.len() != records * batch.samples {
        return Err(Error::Dimension {
            expected: records * batch.samples,
            got: batch.data.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&n_rec.to_le_bytes())?;
    w.write_all(&n_samp.to_le_bytes())?;
    w.write_all(&batch.settings.sample_rate_hz.to_le_bytes())?;
    for v in &batch.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let sidecar = Sidecar {
        shots: batch.shots,
        channels: batch.channels(),
        samples: batch.samples,
        labels: batch.labels.clone(),
        settings: batch.settings.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::TraceFormat(format!("truncated file: {e}")))?;
    Ok(buf)
}

/// Reads a batch written by [`write_trace_batch`]. The result carries no
/// calibration.
pub fn read_trace_batch(path: &Path) -> Result<TraceBatch> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut r = BufReader::new(File::open(path)?);
    if &read_exact::<8>(&mut r)? != TRACE_MAGIC {
        return Err(Error::TraceFormat("bad magic".into()));
    }
    let records = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let samples = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let rate = f64::from_le_bytes(read_exact(&mut r)?);
    if records != sidecar.shots * sidecar.channels || samples != sidecar.samples {
        return Err(Error::TraceFormat(format!(
            "header says {records} records × {samples} samples, sidecar {} × {} × {}",
            sidecar.shots, sidecar.channels, sidecar.samples
        )));
    }
    if rate != sidecar.settings.sample_rate_hz {
        return Err(Error::TraceFormat(format!(
            "sample rate {rate} differs from sidecar {}",
            sidecar.settings.sample_rate_hz
        )));
    }
    let mut data = Vec::with_capacity(records * samples);
    for _ in 0..records * samples {
        data.push(f64::from_le_bytes(read_exact(&mut r)?));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::TraceFormat("trailing bytes after data".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::TraceFormat("non-finite sample".into()));
    }
    Ok(TraceBatch {
        settings: sidecar.settings,
        labels: sidecar.labels,
        shots: sidecar.shots,
        samples,
        data,
        calibration: None,
    })
}

/// CSV of per-shot estimates: `shot,<label>,<label>,…`.
pub fn write_estimates_csv<W: Write>(
    writer: W,
    labels: &[ChannelLabel],
    values: &ShotMatrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["shot".to_string()];
    header.extend(labels.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for s in 0..values.shots() {
        let mut rec = vec![s.to_string()];
        rec.extend(values.row(s).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
