//! The C2PF feature-matrix file: `C2PF`, u32 version, u32 rows, u32 cols,
//! then `rows * cols` little-endian f32 values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use c2p_core::window::RecordingFeatures;

use crate::error::{DataError, DataResult};

pub const MAGIC: &[u8; 4] = b"C2PF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// A matrix read from a C2PF file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

pub fn encode(rows: usize, cols: usize, data: &[f32]) -> Vec<u8> {
    assert_eq!(rows * cols, data.len(), "matrix payload does not match its shape");
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> DataResult<FeatureMatrix> {
    let err = |offset: usize, message: String| DataError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    if cols == 0 {
        return Err(err(12, "feature dimension is 0".into()));
    }
    let values = rows
        .checked_mul(cols)
        .ok_or_else(|| err(8, format!("{rows}x{cols} overflows")))?;
    let expected = values
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| err(8, format!("{rows}x{cols} overflows")))?;
    if bytes.len() < expected {
        return Err(err(
            bytes.len(),
            format!("truncated: {rows}x{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(err(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let mut data = Vec::with_capacity(values);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(err(
                HEADER_LEN + 4 * i,
                format!("non-finite value {v} at row {}, col {}", i / cols, i % cols),
            ));
        }
        data.push(v);
    }
    Ok(FeatureMatrix { rows, cols, data })
}

pub fn read(path: &Path) -> DataResult<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode(path, &bytes)
}

pub fn write(path: &Path, rows: usize, cols: usize, data: &[f32]) -> DataResult<()> {
    let mut file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    file.write_all(&encode(rows, cols, data))
        .map_err(|e| DataError::io(path, e))
}

/// Reads a feature file as one recording.
pub fn load_features(path: &Path, recording_id: &str) -> DataResult<RecordingFeatures> {
    let m = read(path)?;
    RecordingFeatures::new(recording_id, m.rows, m.cols, m.data).map_err(|e| DataError::core(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("x.c2pf")
    }

    #[test]
    fn round_trip() {
        let data = [1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0];
        let m = decode(p(), &encode(3, 2, &data)).unwrap();
        assert_eq!((m.rows, m.cols), (3, 2));
        assert_eq!(m.data, data);
    }

    #[test]
    fn zero_rows_is_empty() {
        let m = decode(p(), &encode(0, 4, &[])).unwrap();
        assert_eq!((m.rows, m.cols, m.data.len()), (0, 4, 0));
    }

    #[test]
    fn one_float_short_is_truncation() {
        let mut bytes = encode(2, 2, &[1.0; 4]);
        bytes.truncate(bytes.len() - 4);
        let e = decode(p(), &bytes).unwrap_err();
        assert!(matches!(e, DataError::Format { offset: 28, .. }), "{e}");
        assert!(e.to_string().contains("x.c2pf"));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(1, 1, &[1.0]);
        bytes[0] = b'X';
        assert!(matches!(decode(p(), &bytes), Err(DataError::Format { offset: 0, .. })));
        let mut bytes = encode(1, 1, &[1.0]);
        bytes[4] = 2;
        assert!(matches!(decode(p(), &bytes), Err(DataError::Format { offset: 4, .. })));
    }

    #[test]
    fn nan_is_located() {
        let bytes = encode(2, 2, &[0.0, 1.0, f32::NAN, 2.0]);
        assert!(matches!(decode(p(), &bytes), Err(DataError::Format { offset: 24, .. })));
    }
}
