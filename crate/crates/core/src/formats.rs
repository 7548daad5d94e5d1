//! Binary containers: SRNF feature matrices and the atomic-write helper
//! shared by every writer.
//!
//! SRNF layout (little-endian): magic `SRNF`, u32 version = 1, u32 rows,
//! u32 cols, then `rows * cols` f32 values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const SRNF_MAGIC: [u8; 4] = *b"SRNF";
pub const SRNF_VERSION: u32 = 1;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u16(r: &mut impl Read) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, data: impl IntoIterator<Item = f64>) {
    for v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Appends one SRNF block.
pub fn encode_srnf(out: &mut Vec<u8>, m: &Array2<f64>) {
    out.extend_from_slice(&SRNF_MAGIC);
    out.extend_from_slice(&SRNF_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    push_f32s(out, m.iter().copied());
}

pub fn decode_srnf(r: &mut impl Read, path: &Path) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "truncated SRNF header"))?;
    if magic != SRNF_MAGIC {
        return Err(Error::format(path, "bad SRNF magic"));
    }
    let version = read_u32(r)?;
    if version != SRNF_VERSION {
        return Err(Error::format(path, format!("unsupported SRNF version {version}")));
    }
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let data = read_f32s(r, rows * cols).map_err(|_| Error::format(path, "truncated SRNF data"))?;
    Ok(Array2::from_shape_vec((rows, cols), data.into_iter().map(f64::from).collect())
        .expect("shape matches length"))
}

pub fn write_srnf(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 4 * m.len());
    encode_srnf(&mut out, m);
    write_atomic(path, &out)
}

pub fn read_srnf(path: &Path) -> Result<Array2<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    decode_srnf(&mut bytes.as_slice(), path)
}

/// Rounds every entry through f32, the precision stored on disk.
pub fn round_f32(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v as f32 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = Vec::new();
        encode_srnf(&mut out, &m);
        assert_eq!(&out[..4], &[0x53, 0x52, 0x4E, 0x46]);
        assert_eq!(&out[4..8], &1u32.to_le_bytes());
        assert_eq!(&out[8..12], &2u32.to_le_bytes());
        assert_eq!(&out[12..16], &3u32.to_le_bytes());
        assert_eq!(&out[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&out[36..40], &6.0f32.to_le_bytes());
        assert_eq!(out.len(), 16 + 24);
    }

    #[test]
    fn rejects_bad_magic() {
        let bytes = b"XXXX\x01\x00\x00\x00";
        assert!(decode_srnf(&mut &bytes[..], Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                ((seed.wrapping_mul(31 + i as u64 * 7 + j as u64)) % 10_000) as f64 / 37.0 - 100.0
            });
            let mut out = Vec::new();
            encode_srnf(&mut out, &m);
            let back = decode_srnf(&mut out.as_slice(), Path::new("x")).unwrap();
            prop_assert_eq!(back, round_f32(&m));
        }
    }
}
