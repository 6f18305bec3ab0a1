//! File formats: edge lists, numeric CSV, label and split files, the KGRF
//! binary matrix container, result bundles, and model checkpoints.
//!
//! Every parser here consumes untrusted input and must return an error
//! rather than panic on any byte sequence; the fuzz targets under fuzz/
//! drive each of them.

use crate::dmd::DmdResult;
use crate::error::{Error, Result};
use crate::kernels::Matrix;
use crate::model::{Activation, Arch, DenseLayer, DmdGnnModel};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Hard cap on matrix entries accepted from files (256 MB of f64).
const MAX_ENTRIES: u64 = 32 * 1024 * 1024;

// ---------------------------------------------------------------- edge list

/// Parse an edge-list file: one `src<TAB>dst[<TAB>weight]` per line,
/// 0-based ids, `#` comments and blank lines ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let src = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing source id", lineno + 1)))?;
        let dst = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing destination id", lineno + 1)))?;
        let weight = parts.next();
        if parts.next().is_some() {
            return Err(Error::Parse(format!("line {}: too many fields", lineno + 1)));
        }
        let src: usize = src
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad source id: {e}", lineno + 1)))?;
        let dst: usize = dst
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad destination id: {e}", lineno + 1)))?;
        let w: f64 = match weight {
            Some(w) => w
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad weight: {e}", lineno + 1)))?,
            None => 1.0,
        };
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::Parse(format!("line {}: weight must be finite and > 0", lineno + 1)));
        }
        edges.push((src, dst, w));
    }
    Ok(edges)
}

pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_edge_list(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- CSV matrix

/// Parse a numeric CSV into a matrix: one row per line, comma-separated
/// f64 entries, all rows the same width, all values finite.
pub fn parse_csv_matrix(text: &str) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut width = 0usize;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad number: {e}", lineno + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {}: non-finite entry {v}", lineno + 1)));
            }
            data.push(v);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse(format!(
                    "line {}: {width} fields, expected {c}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty csv".into()))?;
    Matrix::checked(rows, cols, data)
}

pub fn load_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_csv_matrix(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------- labels

/// One non-negative integer per line; `#` comments ignored.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: bad label: {e}", lineno + 1)))?,
        );
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_labels(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Split index sets, stored as JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitFile {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn load_splits(path: &Path) -> Result<SplitFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- KGRF binary

const KGRF_MAGIC: &[u8; 4] = b"KGRF";

/// Encode a matrix as KGRF: magic, u32 LE rows, u32 LE cols, then
/// row-major little-endian f64 entries.
pub fn encode_kgrf(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * m.data().len());
    out.extend_from_slice(KGRF_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a KGRF matrix. Rejects bad magic, size mismatches, oversize
/// headers, and non-finite payload entries, without panicking.
pub fn decode_kgrf(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 12 {
        return Err(Error::Parse(format!("kgrf header truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != KGRF_MAGIC {
        return Err(Error::Parse("bad kgrf magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as u64;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let entries = rows * cols;
    if entries > MAX_ENTRIES {
        return Err(Error::Parse(format!("kgrf dimensions {rows}x{cols} exceed the size cap")));
    }
    let expected = 12 + 8 * entries as usize;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "kgrf payload is {} bytes, expected {expected} for {rows}x{cols}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(entries as usize);
    for chunk in bytes[12..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Matrix::checked(rows as usize, cols as usize, data)
}

pub fn write_kgrf(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, encode_kgrf(m)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_kgrf(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_kgrf(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- DMD bundle

#[derive(Debug, Serialize, Deserialize)]
pub struct DmdBundleManifest {
    pub rank: usize,
    pub mode_kind: crate::dmd::ModeKind,
    pub energy_captured: f64,
    /// Eigenvalues as [re, im] pairs, ordered by descending magnitude.
    pub eigenvalues: Vec<[f64; 2]>,
    pub sing_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Write a fit as manifest.json + psi.kgrf + k_reduced.kgrf under `dir`.
pub fn write_dmd_bundle(dir: &Path, fit: &DmdResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = DmdBundleManifest {
        rank: fit.rank,
        mode_kind: fit.mode_kind,
        energy_captured: fit.energy_captured,
        eigenvalues: fit.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
        sing_values: fit.sing_values.clone(),
        warnings: fit.warnings.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_kgrf(&dir.join("psi.kgrf"), &fit.modes)?;
    write_kgrf(&dir.join("k_reduced.kgrf"), &fit.k_reduced)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------- checkpoint

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub arch: Arch,
    pub rank: usize,
    pub n_nodes: usize,
    pub dropout_p: f64,
    pub layer_dims: Vec<[usize; 2]>,
    pub activations: Vec<Activation>,
}

/// Model checkpoint: manifest.json plus one KGRF tensor per parameter.
/// Reloading reproduces eval-mode logits bitwise (KGRF stores exact f64
/// bytes).
pub fn write_checkpoint(dir: &Path, model: &DmdGnnModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = CheckpointManifest {
        arch: model.arch,
        rank: model.modes.cols(),
        n_nodes: model.modes.rows(),
        dropout_p: model.dropout_p,
        layer_dims: model.dense.iter().map(|l| [l.w.rows(), l.w.cols()]).collect(),
        activations: model.dense.iter().map(|l| l.act).collect(),
    };
    write_json(&dir.join("model.json"), &manifest)?;
    write_kgrf(&dir.join("modes.kgrf"), &model.modes)?;
    write_kgrf(&dir.join("theta.kgrf"), &Matrix::from_vec(1, model.theta.len(), model.theta.clone()))?;
    for (i, layer) in model.dense.iter().enumerate() {
        write_kgrf(&dir.join(format!("dense{i}_w.kgrf")), &layer.w)?;
        write_kgrf(&dir.join(format!("dense{i}_b.kgrf")), &Matrix::from_vec(1, layer.b.len(), layer.b.clone()))?;
    }
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<DmdGnnModel> {
    let manifest_path = dir.join("model.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("model.json: {e}")))?;
    let modes = read_kgrf(&dir.join("modes.kgrf"))?;
    if modes.rows() != manifest.n_nodes || modes.cols() != manifest.rank {
        return Err(Error::Parse("checkpoint modes do not match manifest dims".into()));
    }
    let theta = read_kgrf(&dir.join("theta.kgrf"))?.data().to_vec();
    if theta.len() != manifest.rank {
        return Err(Error::Parse("checkpoint theta does not match manifest rank".into()));
    }
    let mut dense = Vec::new();
    for (i, (dims, act)) in manifest.layer_dims.iter().zip(&manifest.activations).enumerate() {
        let w = read_kgrf(&dir.join(format!("dense{i}_w.kgrf")))?;
        if w.rows() != dims[0] || w.cols() != dims[1] {
            return Err(Error::Parse(format!("checkpoint dense{i}_w dims mismatch")));
        }
        let b = read_kgrf(&dir.join(format!("dense{i}_b.kgrf")))?.data().to_vec();
        if b.len() != dims[1] {
            return Err(Error::Parse(format!("checkpoint dense{i}_b length mismatch")));
        }
        dense.push(DenseLayer { w, b, act: *act });
    }
    if !(0.0..1.0).contains(&manifest.dropout_p) {
        return Err(Error::Parse("checkpoint dropout out of range".into()));
    }
    Ok(DmdGnnModel {
        arch: manifest.arch,
        modes,
        theta,
        dense,
        dropout_p: manifest.dropout_p,
    })
}

// ---------------------------------------------------------------- JSONL log

/// Line-buffered JSONL writer for the per-epoch metrics stream.
pub struct JsonlWriter {
    file: std::fs::File,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(JsonlWriter { file })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Parse(format!("serialize jsonl record: {e}")))?;
        writeln!(self.file, "{line}").map_err(|e| Error::io("<jsonl>", e))
    }
}
