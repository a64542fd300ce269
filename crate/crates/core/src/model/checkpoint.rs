//! Checkpoint container, little-endian throughout:
//!
//! ```text
//! "MLCK"                       magic
//! u32  descriptor byte length
//! ...  architecture descriptor (UTF-8 JSON)
//! u32  tensor count
//! per tensor: u32 ndim, ndim × u32 dims, prod(dims) × f64
//! ```

use std::fs;
use std::path::Path;

use super::{Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const MAGIC: &[u8; 4] = b"MLCK";

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    arch: &Architecture,
    params: &ModelParams,
) -> Result<()> {
    let descriptor = serde_json::to_vec(arch).map_err(|e| Error::Validation(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend((descriptor.len() as u32).to_le_bytes());
    buf.extend(&descriptor);
    buf.extend((params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        buf.extend((t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend((d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend(v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Architecture, ModelParams)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "\"MLCK\"".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let dlen = r.u32()? as usize;
    let arch: Architecture =
        serde_json::from_slice(r.take(dlen)?).map_err(|e| Error::Parse {
            location: format!("{} descriptor", path.display()),
            message: e.to_string(),
        })?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::ShapeHeaderMismatch(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - r.pos
        )));
    }
    Ok((arch, ModelParams { tensors }))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedFile {
                path: self.path.to_path_buf(),
                detail: format!("need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
