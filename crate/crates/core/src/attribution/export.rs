use std::io::Write;
use std::path::Path;

use super::{LamConfig, LamResult};
use crate::data::write_png16;
use crate::error::{Error, Result};

/// 16-bit grayscale of `|attribution| / max |attribution|`; all black for a
/// zero map.
pub fn write_heatmap(path: &Path, r: &LamResult) -> Result<()> {
    let peak = r.attribution.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm: Vec<f64> = r.attribution.iter().map(|v| if peak > 0.0 { v.abs() / peak } else { 0.0 }).collect();
    write_png16(path, r.height, r.width, &norm)
}

/// `u32` height, `u32` width, then row-major `f32` values, little-endian.
pub fn write_raw_map(path: &Path, r: &LamResult) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * r.attribution.len());
    bytes.extend((r.height as u32).to_le_bytes());
    bytes.extend((r.width as u32).to_le_bytes());
    for v in &r.attribution {
        bytes.extend((*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw_map(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 8 {
        return Err(Error::data(format!("{}: truncated map header", path.display())));
    }
    let (h, w) = (word(0), word(4));
    if bytes.len() != 8 + 4 * h * w {
        return Err(Error::data(format!("{}: {} bytes for a {h}x{w} map", path.display(), bytes.len())));
    }
    let values = bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((h, w, values))
}

/// One `key=value` per line.
pub fn write_metrics(path: &Path, r: &LamResult, cfg: &LamConfig, detector: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let lines = [
        ("gini", r.gini.to_string()),
        ("di", r.di.to_string()),
        ("completeness_residual", r.completeness_residual.to_string()),
        ("target_delta", r.target_delta.to_string()),
        ("zero_map", r.all_zero.to_string()),
        ("sigma", cfg.sigma.to_string()),
        ("steps", cfg.steps.to_string()),
        ("x", cfg.patch.x.to_string()),
        ("y", cfg.patch.y.to_string()),
        ("l", cfg.patch.l.to_string()),
        ("detector", detector.to_string()),
    ];
    for (k, v) in lines {
        writeln!(f, "{k}={v}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
