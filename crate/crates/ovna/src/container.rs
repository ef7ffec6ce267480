//! Binary waveform container plus its TOML sidecar.
//!
//! Layout (little-endian):
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `OVNA` |
//! | 4 | format version (u32) |
//! | 4 | channel count (u32, always 4) |
//! | 8 | sample rate (f64, S/s) |
//! | 8 | samples per channel (u64) |
//! | 4·n per channel | f32 samples, channels in the order X, Y, AUX, TRK |
//!
//! The sidecar (`<name>.toml`) holds the ADC resolution and the sweep plan.

use std::fs;
use std::path::{Path, PathBuf};

use ovna_core::sweep::{SweepPlan, WaveformRecord};
use serde::{Deserialize, Serialize};

use crate::Error;

pub const MAGIC: [u8; 4] = *b"OVNA";
pub const VERSION: u32 = 1;
pub const CHANNELS: [&str; 4] = ["X", "Y", "AUX", "TRK"];
const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub channels: Vec<String>,
    pub bits: u32,
    pub sample_rate: f64,
    pub samples: u64,
    pub sweep: SweepPlan,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

pub fn encode(record: &WaveformRecord) -> Vec<u8> {
    let n = record.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * n);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(CHANNELS.len() as u32).to_le_bytes());
    out.extend_from_slice(&record.sample_rate.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for ch in [&record.x, &record.y, &record.aux, &record.trk] {
        for v in ch.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn format_error(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Decodes the binary part; returns sample rate and the four channels.
pub fn decode(bytes: &[u8]) -> Result<(f64, [Vec<f32>; 4]), Error> {
    if bytes.len() < HEADER_LEN {
        return Err(format_error("container shorter than its header"));
    }
    if bytes[..4] != MAGIC {
        return Err(format_error("not an OVNA container (bad magic)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(format_error(format!(
            "unsupported container version {version}"
        )));
    }
    let channels = u32_at(8) as usize;
    if channels != CHANNELS.len() {
        return Err(format_error(format!(
            "expected 4 channels, found {channels}"
        )));
    }
    let fs = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(4 * channels)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| format_error("sample count overflows"))?;
    if bytes.len() != expected {
        return Err(format_error(format!(
            "container holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut data: [Vec<f32>; 4] = Default::default();
    for (c, ch) in data.iter_mut().enumerate() {
        let start = HEADER_LEN + c * 4 * n;
        *ch = bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
    }
    Ok((fs, data))
}

pub fn write_record(path: &Path, record: &WaveformRecord) -> Result<(), Error> {
    fs::write(path, encode(record))?;
    let sidecar = Sidecar {
        format_version: VERSION,
        channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        bits: record.bits,
        sample_rate: record.sample_rate,
        samples: record.len() as u64,
        sweep: record.sweep.clone(),
    };
    fs::write(sidecar_path(path), toml::to_string(&sidecar)?)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<WaveformRecord, Error> {
    let (fs, [x, y, aux, trk]) = decode(&fs::read(path)?)?;
    let sidecar: Sidecar = toml::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.samples as usize != x.len() || sidecar.sample_rate != fs {
        return Err(format_error("sidecar does not match the container header"));
    }
    if sidecar.channels != CHANNELS {
        return Err(format_error("sidecar channel order is not X, Y, AUX, TRK"));
    }
    let record = WaveformRecord {
        sample_rate: fs,
        bits: sidecar.bits,
        x,
        y,
        aux,
        trk,
        sweep: sidecar.sweep,
    };
    record.validate()?;
    Ok(record)
}
