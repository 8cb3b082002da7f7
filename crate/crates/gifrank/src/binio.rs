//! Shared little-endian binary format for model artifacts.
//!
//! Every artifact starts with a fixed header: magic bytes, an artifact
//! kind tag, a format version, and the configuration hash of the run
//! that produced it. Payloads store matrices row-major as IEEE-754
//! doubles, so `f32` models round-trip exactly through the same files.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::num::{Matrix, Scalar};

pub const MAGIC: [u8; 4] = *b"GFRK";

/// Upper bound on any serialized length field; guards against reading
/// garbage counts from corrupted files.
const MAX_LEN: u64 = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Encoder,
    Gbdt,
    FeatureModels,
    FeatureMatrix,
}

impl ArtifactKind {
    fn code(self) -> u32 {
        match self {
            ArtifactKind::Encoder => 1,
            ArtifactKind::Gbdt => 2,
            ArtifactKind::FeatureModels => 3,
            ArtifactKind::FeatureMatrix => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Encoder => "encoder model",
            ArtifactKind::Gbdt => "reranker model",
            ArtifactKind::FeatureModels => "feature models",
            ArtifactKind::FeatureMatrix => "feature matrix",
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ArtifactKind::Encoder),
            2 => Some(ArtifactKind::Gbdt),
            3 => Some(ArtifactKind::FeatureModels),
            4 => Some(ArtifactKind::FeatureMatrix),
            _ => None,
        }
    }
}

pub fn write_header(
    mut w: impl Write,
    kind: ArtifactKind,
    version: u32,
    config_hash: u64,
) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(kind.code())?;
    w.write_u32::<LittleEndian>(version)?;
    w.write_u64::<LittleEndian>(config_hash)?;
    Ok(())
}

/// Validate magic, kind and version; return the stored config hash.
pub fn read_header(mut r: impl Read, kind: ArtifactKind, supported: u32) -> Result<u64> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let code = r.read_u32::<LittleEndian>()?;
    match ArtifactKind::from_code(code) {
        Some(found) if found == kind => {}
        Some(found) => {
            return Err(Error::invalid(format!(
                "expected a {} file, found a {} file",
                kind.name(),
                found.name()
            )))
        }
        None => {
            return Err(Error::invalid(format!(
                "expected a {} file, found unknown artifact tag {code}",
                kind.name()
            )))
        }
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != supported {
        return Err(Error::UnsupportedVersion {
            what: kind.name(),
            found: version,
            supported,
        });
    }
    Ok(r.read_u64::<LittleEndian>()?)
}

pub fn write_usize(mut w: impl Write, x: usize) -> Result<()> {
    w.write_u64::<LittleEndian>(x as u64)?;
    Ok(())
}

pub fn read_usize(mut r: impl Read) -> Result<usize> {
    let x = r.read_u64::<LittleEndian>()?;
    if x > MAX_LEN {
        return Err(Error::invalid(format!("implausible length field {x}")));
    }
    Ok(x as usize)
}

pub fn write_f64(mut w: impl Write, x: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(x)?;
    Ok(())
}

pub fn read_f64(mut r: impl Read) -> Result<f64> {
    Ok(r.read_f64::<LittleEndian>()?)
}

pub fn write_u64(mut w: impl Write, x: u64) -> Result<()> {
    w.write_u64::<LittleEndian>(x)?;
    Ok(())
}

pub fn read_u64(mut r: impl Read) -> Result<u64> {
    Ok(r.read_u64::<LittleEndian>()?)
}

pub fn write_slice<S: Scalar>(mut w: impl Write, v: &[S]) -> Result<()> {
    write_usize(&mut w, v.len())?;
    for x in v {
        w.write_f64::<LittleEndian>(Scalar::to_f64(*x))?;
    }
    Ok(())
}

pub fn read_vec<S: Scalar>(mut r: impl Read) -> Result<Vec<S>> {
    let len = read_usize(&mut r)?;
    let mut v = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        v.push(S::from_f64(r.read_f64::<LittleEndian>()?));
    }
    Ok(v)
}

pub fn write_matrix<S: Scalar>(mut w: impl Write, m: &Matrix<S>) -> Result<()> {
    write_usize(&mut w, m.rows())?;
    write_usize(&mut w, m.cols())?;
    for x in m.data() {
        w.write_f64::<LittleEndian>(Scalar::to_f64(*x))?;
    }
    Ok(())
}

pub fn read_matrix<S: Scalar>(mut r: impl Read) -> Result<Matrix<S>> {
    let rows = read_usize(&mut r)?;
    let cols = read_usize(&mut r)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::invalid("matrix dimensions overflow"))?;
    if len as u64 > MAX_LEN {
        return Err(Error::invalid(format!(
            "implausible matrix size {rows}x{cols}"
        )));
    }
    let mut data = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        data.push(S::from_f64(r.read_f64::<LittleEndian>()?));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn write_string(mut w: impl Write, s: &str) -> Result<()> {
    write_usize(&mut w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_string(mut r: impl Read) -> Result<String> {
    let len = read_usize(&mut r)?;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::invalid("invalid UTF-8 in serialized string"))
}

pub fn write_strings(mut w: impl Write, strings: &[String]) -> Result<()> {
    write_usize(&mut w, strings.len())?;
    for s in strings {
        write_string(&mut w, s)?;
    }
    Ok(())
}

pub fn read_strings(mut r: impl Read) -> Result<Vec<String>> {
    let len = read_usize(&mut r)?;
    let mut out = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        out.push(read_string(&mut r)?);
    }
    Ok(out)
}
