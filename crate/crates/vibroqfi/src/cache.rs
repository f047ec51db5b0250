//! Binary on-disk cache for temporal density matrices.
//!
//! Building a TDM is by far the most expensive step of a sweep point, so
//! finished matrices are persisted to disk keyed by the SHA-256 fingerprint
//! of everything they depend on (pulse, emitter, bath, grid). A second,
//! human-readable sidecar file stores the finished CSV row of a sweep
//! point, so that re-running an identical sweep reproduces its output
//! byte for byte without recomputing anything.
//!
//! # File format
//!
//! `<fingerprint>.tdm` is a little-endian binary file:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 4     | magic `VQF1`                             |
//! | 4     | format version (u32)                     |
//! | 4     | grid size N (u32)                        |
//! | 8     | τ₀ (f64)                                 |
//! | 8     | τ_{N−1} (f64)                            |
//! | 8     | p_loss (f64)                             |
//! | 32    | params fingerprint (SHA-256)             |
//! | 16·N² | row-major (Re, Im) f64 pairs of ϱ(τᵢ,τⱼ) |
//!
//! The same serialization code path produces and consumes the entries, so
//! a cache hit is bit-identical to a fresh build. A corrupt or stale file
//! (wrong magic, version, or fingerprint) is reported as [`Lookup::Stale`]
//! and the caller recomputes.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scatter::{TemporalDensityMatrix, TimeGrid};

/// Magic bytes at the start of every cache entry.
pub const MAGIC: &[u8; 4] = b"VQF1";

/// Current format version.
pub const VERSION: u32 = 1;

/// Environment variable that overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "VIBROQFI_CACHE_DIR";

/// Outcome of a cache lookup.
#[derive(Debug)]
pub enum Lookup {
    /// A valid entry was found.
    Hit(TemporalDensityMatrix),
    /// No entry exists for this fingerprint.
    Miss,
    /// An entry exists but failed validation; the message says why.
    /// Callers should recompute and overwrite.
    Stale(String),
}

/// Resolve the cache directory: the [`CACHE_DIR_ENV`] environment variable
/// wins, then an explicit configured path, then `vibroqfi-cache` under the
/// system temporary directory.
pub fn resolve_cache_dir(configured: Option<&Path>) -> PathBuf {
    if let Ok(dir) = std::env::var(CACHE_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    match configured {
        Some(p) => p.to_path_buf(),
        None => std::env::temp_dir().join("vibroqfi-cache"),
    }
}

fn hex(fingerprint: &[u8; 32]) -> String {
    fingerprint.iter().map(|b| format!("{b:02x}")).collect()
}

/// Path of the binary TDM entry for a fingerprint.
pub fn entry_path(dir: &Path, fingerprint: &[u8; 32]) -> PathBuf {
    dir.join(format!("{}.tdm", hex(fingerprint)))
}

/// Path of the sidecar file holding a finished sweep-point CSV row.
/// `param` distinguishes estimation targets sharing the same TDM.
pub fn row_path(dir: &Path, fingerprint: &[u8; 32], param: &str) -> PathBuf {
    dir.join(format!("{}.{param}.row", hex(fingerprint)))
}

/// Serialize a TDM into the cache directory (created if needed).
pub fn store_tdm(dir: &Path, tdm: &TemporalDensityMatrix) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = entry_path(dir, &tdm.fingerprint);
    let n = tdm.grid.n;
    let mut buf: Vec<u8> = Vec::with_capacity(68 + 16 * n * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&tdm.grid.tau0.to_le_bytes());
    buf.extend_from_slice(&tdm.grid.tau_end.to_le_bytes());
    buf.extend_from_slice(&tdm.p_loss.to_le_bytes());
    buf.extend_from_slice(&tdm.fingerprint);
    for z in tdm.rho.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    // Write to a temporary name first so readers never see a half-written
    // entry, then rename into place (atomic on the same filesystem).
    let tmp = path.with_extension("tdm.partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Look up a TDM by fingerprint and validate the entry header.
pub fn load_tdm(dir: &Path, fingerprint: &[u8; 32]) -> Result<Lookup> {
    let path = entry_path(dir, fingerprint);
    let file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Lookup::Miss),
        Err(e) => return Err(e.into()),
    };
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    if r.read_exact(&mut magic).is_err() || &magic != MAGIC {
        return Ok(Lookup::Stale(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Ok(Lookup::Stale(format!(
            "{}: format version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let tau0 = read_f64(&mut r)?;
    let tau_end = read_f64(&mut r)?;
    let p_loss = read_f64(&mut r)?;
    let mut stored_fp = [0u8; 32];
    r.read_exact(&mut stored_fp)?;
    if &stored_fp != fingerprint {
        return Ok(Lookup::Stale(format!(
            "{}: fingerprint mismatch (parameters changed)",
            path.display()
        )));
    }

    let mut raw = vec![0u8; 16 * n * n];
    if r.read_exact(&mut raw).is_err() {
        return Ok(Lookup::Stale(format!("{}: truncated entry", path.display())));
    }
    let mut data = Vec::with_capacity(n * n);
    for chunk in raw.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        data.push(Complex64::new(re, im));
    }
    let rho = Array2::from_shape_vec((n, n), data)
        .map_err(|e| Error::Numerical(format!("cache entry shape: {e}")))?;
    let grid = TimeGrid::new(tau0, tau_end, n)?;
    Ok(Lookup::Hit(TemporalDensityMatrix {
        grid,
        rho,
        p_loss,
        fingerprint: *fingerprint,
        warnings: Vec::new(),
    }))
}

/// Store the finished CSV row of a sweep point.
pub fn store_row(dir: &Path, fingerprint: &[u8; 32], param: &str, row: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(row_path(dir, fingerprint, param), row)?;
    Ok(())
}

/// Load a previously finished CSV row, if any.
pub fn load_row(dir: &Path, fingerprint: &[u8; 32], param: &str) -> Option<String> {
    fs::read_to_string(row_path(dir, fingerprint, param)).ok()
}
