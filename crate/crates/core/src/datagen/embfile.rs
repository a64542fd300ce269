//! Precomputed feature files.
//!
//! EMB1 layout (all little-endian): the 4 ASCII bytes `EMB1`, `u32` N,
//! `u32` D, `N·D` `f32` features row-major, `N` `i32` labels.
//!
//! CSV layout: header `label,f0,...,f{D-1}`, then one sample per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Loads an EMB1 or CSV file, chosen by the leading magic bytes. Features
/// are returned exactly as stored.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".into());
    if bytes.starts_with(EMB_MAGIC) {
        parse_emb1(path, &bytes, name)
    } else if bytes.starts_with(b"label") {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_csv(path, &text, name)
    } else {
        let shown = bytes.iter().take(4).map(|b| format!("{b:02x}")).collect::<String>();
        Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "\"EMB1\" or a `label,f0,...` CSV header".into(),
            found: shown,
        })
    }
}

/// Writes `dataset` in EMB1 format. Features are narrowed to `f32`.
pub fn save_embeddings(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let (n, d) = (dataset.len(), dataset.dim());
    let mut buf = Vec::with_capacity(12 + 4 * n * (d + 1));
    buf.extend_from_slice(EMB_MAGIC);
    buf.extend((n as u32).to_le_bytes());
    buf.extend((d as u32).to_le_bytes());
    for &v in dataset.features().data() {
        buf.extend((v as f32).to_le_bytes());
    }
    for &l in dataset.labels() {
        buf.extend(l.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
    writeln!(out, "label,{}", header.join(","))?;
    for i in 0..dataset.len() {
        let row: Vec<String> = dataset.features().row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", dataset.labels()[i], row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_emb1(path: &Path, bytes: &[u8], name: String) -> Result<Dataset> {
    if bytes.len() < 12 {
        return Err(Error::ShapeHeaderMismatch(format!(
            "{}: header needs 12 bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let le = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let (n, d) = (le(4) as usize, le(8) as usize);
    let expected = 12 + 4 * n * d + 4 * n;
    if bytes.len() != expected || n == 0 || d == 0 {
        return Err(Error::ShapeHeaderMismatch(format!(
            "{}: N={n}, D={d} needs {expected} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut features = Vec::with_capacity(n * d);
    for (k, chunk) in bytes[12..12 + 4 * n * d].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: k / d,
                col: k % d,
            });
        }
        features.push(v as f64);
    }
    let labels = bytes[12 + 4 * n * d..]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Dataset::new(name, Tensor::matrix(n, d, features)?, labels)
}

fn parse_csv(path: &Path, text: &str, name: String) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        location: format!("{}:{line}", path.display()),
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len() - 1;
    let header_ok = cols[0] == "label"
        && d > 0
        && cols[1..].iter().enumerate().all(|(j, c)| *c == format!("f{j}"));
    if !header_ok {
        return Err(Error::ShapeHeaderMismatch(format!(
            "{}: header must be label,f0,...,f{{D-1}}",
            path.display()
        )));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(Error::ShapeHeaderMismatch(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                d + 1,
                fields.len()
            )));
        }
        let label: i32 = fields[0]
            .parse()
            .map_err(|e| parse_err(lineno + 1, format!("label: {e}")))?;
        for (j, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|e| parse_err(lineno + 1, format!("f{j}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: labels.len(),
                    col: j,
                });
            }
            features.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_err(2, "no samples".into()));
    }
    Dataset::new(name, Tensor::matrix(labels.len(), d, features)?, labels)
}
