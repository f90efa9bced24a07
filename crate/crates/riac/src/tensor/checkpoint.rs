//! Flat checkpoint archive: a text header listing (name, shape, byte
//! offset) per entry, then little-endian f64 payloads.

use super::Tensor;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &str = "RIAC-CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

pub fn write_checkpoint(path: &Path, entries: &[NamedTensor]) -> Result<()> {
    let mut header = String::new();
    header.push_str(&format!("{MAGIC} {VERSION}\n{}\n", entries.len()));
    let mut offset = 0usize;
    for e in entries {
        if e.name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("tensor name {:?} contains whitespace", e.name)));
        }
        let dims: Vec<String> = e.tensor.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("{} {} {} {}\n", e.name, dims.len(), dims.join(" "), offset));
        offset += e.tensor.numel() * 8;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for e in entries {
        for v in e.tensor.data() {
            file.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    // Header is everything up to the end of the entry table; parse line by line.
    let mut pos = 0usize;
    let mut next_line = |bytes: &[u8]| -> Result<String> {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let line = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(line)
    };

    let magic_line = next_line(&bytes)?;
    let mut it = magic_line.split_whitespace();
    if it.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version: u32 = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint("missing version".into()))?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count: usize = next_line(&bytes)?
        .trim()
        .parse()
        .map_err(|_| Error::Checkpoint("bad entry count".into()))?;

    struct Entry {
        name: String,
        shape: Vec<usize>,
        offset: usize,
    }
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line(&bytes)?;
        let mut tok = line.split_whitespace();
        let name = tok.next().ok_or_else(|| Error::Checkpoint("missing name".into()))?.to_string();
        let ndim: usize = tok
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing ndim".into()))?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(
                tok.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("missing dim".into()))?,
            );
        }
        let offset: usize = tok
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing offset".into()))?;
        table.push(Entry { name, shape, offset });
    }

    let payload = &bytes[pos..];
    let mut out = Vec::with_capacity(count);
    for e in table {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * 8;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!("payload truncated for {}", e.name)));
        }
        let data: Vec<f64> = payload[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name: e.name, tensor: Tensor::new(e.shape, data)? });
    }
    Ok(out)
}
