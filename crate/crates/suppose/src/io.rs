//! File formats: CSV signals and positions, 16-bit binary PGM images with
//! JSON sidecars, and JSON manifests.
//!
//! All floats are written in shortest round-trip form, so re-reading
//! reproduces values bit-exactly. 2-D images use PGM `P5` with 16-bit
//! samples in little-endian byte order plus a `.json` sidecar carrying the
//! physical pixel pitch and origin.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PixelGrid, Point, SampledSignal};

/// Writes a 1-D signal as two-column CSV `coordinate,counts`.
pub fn write_signal_csv(path: &Path, signal: &SampledSignal) -> Result<()> {
    if signal.grid.dim() != 1 {
        return Err(Error::InvalidInput("CSV signals are 1-D; use PGM for images".into()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "coordinate,counts")?;
    for (x, v) in signal.grid.centers().zip(&signal.values) {
        writeln!(w, "{},{}", x[0], v)?;
    }
    Ok(())
}

/// Reads a two-column CSV signal; the grid is reconstructed from the
/// coordinate column (uniform spacing required).
pub fn read_signal_csv(path: &Path) -> Result<SampledSignal> {
    let text = fs::read_to_string(path)?;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or("");
        let b = parts.next().unwrap_or("");
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(x), Ok(v)) => {
                coords.push(x);
                values.push(v);
            }
            _ => continue, // header or comment
        }
    }
    if coords.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let pitch = coords[1] - coords[0];
    if !(pitch > 0.0) {
        return Err(Error::InvalidInput("coordinates must increase".into()));
    }
    for w in coords.windows(2) {
        if ((w[1] - w[0]) - pitch).abs() > 1e-6 * pitch {
            return Err(Error::InvalidInput("non-uniform coordinate spacing".into()));
        }
    }
    let grid = PixelGrid::new_1d(coords.len(), pitch, coords[0])?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SampledSignal::new(grid, values, label)
}

/// Sidecar metadata stored next to a PGM image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub pitch: [f64; 2],
    pub origin: [f64; 2],
    pub label: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes a 2-D signal as 16-bit little-endian binary PGM plus a JSON
/// sidecar with the physical geometry. Values are rounded and clamped to
/// the 16-bit range.
pub fn write_image_pgm(path: &Path, signal: &SampledSignal) -> Result<()> {
    if signal.grid.dim() != 2 {
        return Err(Error::InvalidInput("PGM images are 2-D".into()));
    }
    let [nx, ny] = signal.grid.extents();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    for v in &signal.values {
        let q = v.round().clamp(0.0, 65535.0) as u16;
        w.write_all(&q.to_le_bytes())?;
    }
    let sidecar = ImageSidecar {
        pitch: signal.grid.pitch(),
        origin: signal.grid.origin(),
        label: signal.label.clone(),
    };
    save_json(&sidecar_path(path), &sidecar)?;
    Ok(())
}

/// Reads a 16-bit little-endian PGM image; geometry comes from the JSON
/// sidecar when present, unit pixels otherwise.
pub fn read_image_pgm(path: &Path) -> Result<SampledSignal> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = || Error::InvalidInput(format!("{}: not a binary 16-bit PGM", path.display()));

    // Parse "P5 <wsp> nx <wsp> ny <wsp> maxval <single wsp>".
    fn token(bytes: &[u8], pos: usize) -> Option<(usize, String)> {
        let mut i = pos;
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        Some((i, String::from_utf8_lossy(&bytes[start..i]).into_owned()))
    }
    let (pos, magic) = token(&bytes, 0).ok_or_else(header_err)?;
    if magic != "P5" {
        return Err(header_err());
    }
    let (pos, nx) = token(&bytes, pos).ok_or_else(header_err)?;
    let (pos, ny) = token(&bytes, pos).ok_or_else(header_err)?;
    let (pos, maxval) = token(&bytes, pos).ok_or_else(header_err)?;
    let pos = pos + 1; // single whitespace after maxval
    let nx: usize = nx.parse().map_err(|_| header_err())?;
    let ny: usize = ny.parse().map_err(|_| header_err())?;
    let maxval: u32 = maxval.parse().map_err(|_| header_err())?;
    if maxval != 65535 {
        return Err(Error::InvalidInput(format!(
            "{}: expected 16-bit PGM (maxval 65535), got {maxval}",
            path.display()
        )));
    }
    let need = nx * ny * 2;
    if bytes.len() < pos + need {
        return Err(header_err());
    }
    let mut values = Vec::with_capacity(nx * ny);
    for k in 0..nx * ny {
        let lo = bytes[pos + 2 * k];
        let hi = bytes[pos + 2 * k + 1];
        values.push(u16::from_le_bytes([lo, hi]) as f64);
    }
    let sidecar: Option<ImageSidecar> = load_json(&sidecar_path(path)).ok();
    let (pitch, origin, label) = match sidecar {
        Some(s) => (s.pitch, s.origin, s.label),
        None => (
            [1.0, 1.0],
            [0.0, 0.0],
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        ),
    };
    let grid = PixelGrid::new_2d(nx, ny, pitch, origin)?;
    SampledSignal::new(grid, values, label)
}

/// Writes source positions as CSV, one row per source, `x` or `x,y`.
pub fn write_positions_csv(path: &Path, positions: &[Point], dim: usize) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if dim == 1 {
        writeln!(w, "x")?;
        for p in positions {
            writeln!(w, "{}", p[0])?;
        }
    } else {
        writeln!(w, "x,y")?;
        for p in positions {
            writeln!(w, "{},{}", p[0], p[1])?;
        }
    }
    Ok(())
}

pub fn read_positions_csv(path: &Path) -> Result<Vec<Point>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or("").trim();
        let b = parts.next().unwrap_or("0").trim();
        if let Ok(x) = a.parse::<f64>() {
            let y = b.parse::<f64>().unwrap_or(0.0);
            out.push([x, y]);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no positions found",
            path.display()
        )));
    }
    Ok(out)
}

/// Writes a grid-sampled function (residual, autocorrelation) as CSV:
/// `lag,value` for 1-D, `x,y,value` for 2-D.
pub fn write_grid_csv(path: &Path, signal: &SampledSignal) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if signal.grid.dim() == 1 {
        writeln!(w, "lag,value")?;
        for (x, v) in signal.grid.centers().zip(&signal.values) {
            writeln!(w, "{},{}", x[0], v)?;
        }
    } else {
        writeln!(w, "x,y,value")?;
        for (x, v) in signal.grid.centers().zip(&signal.values) {
            writeln!(w, "{},{},{}", x[0], x[1], v)?;
        }
    }
    Ok(())
}

/// Writes the per-generation best-misfit trace.
pub fn write_chi2_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "generation,best_chi2")?;
    for (g, c) in trace.iter().enumerate() {
        writeln!(w, "{g},{c}")?;
    }
    Ok(())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// FNV-1a digest of a file, for provenance records in run manifests.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    Ok(format!("fnv1a:{hash:016x}"))
}
