//! `SOP1` tensor files: 4-byte magic, `u8` dtype (0 = f32, 1 = f64),
//! `u32` rank, `rank × u32` dims, then the row-major payload. All integers
//! and values are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"SOP1";
const HEADER_FIXED: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// A rank-2 (`d × N`) or rank-3 (`d × H × W`) tensor. Values are held as
/// `f64`; `f32` files are widened on read and narrowed on write, which is
/// lossless for values that came from an `f32` file.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    dtype: DType,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TensorFile {
    pub fn new(dtype: DType, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::Validation(format!("tensor rank must be 2 or 3, got {}", dims.len())));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Validation("tensor dimension exceeds u32".into()));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Validation(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(TensorFile { dtype, dims, data })
    }

    pub fn from_matrix(m: &Matrix, dtype: DType) -> Self {
        TensorFile {
            dtype,
            dims: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Flattens every axis after the first: `d × H × W` becomes
    /// `d × (H·W)` with column index `h·W + w`.
    pub fn to_matrix(&self) -> Matrix {
        let rows = self.dims[0];
        let cols = self.dims[1..].iter().product();
        Matrix::from_vec(rows, cols, self.data.clone()).expect("length checked on construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_FIXED + 4 * self.dims.len() + self.data.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.push(self.dtype.code());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match self.dtype {
            DType::F32 => self.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            DType::F64 => self.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset: usize, msg: String| Error::Parse { offset, msg };
        if bytes.len() < 4 {
            return Err(parse(bytes.len(), "truncated magic".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(parse(0, format!("bad magic {:?}, expected \"SOP1\"", &bytes[..4])));
        }
        let code = *bytes.get(4).ok_or_else(|| parse(4, "missing dtype byte".into()))?;
        let dtype = DType::from_code(code).ok_or_else(|| parse(4, format!("unknown dtype {code}")))?;
        let read_u32 = |offset: usize| -> Result<u32> {
            bytes
                .get(offset..offset + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| parse(offset, "truncated header".into()))
        };
        let rank = read_u32(5)? as usize;
        if !(2..=3).contains(&rank) {
            return Err(parse(5, format!("rank must be 2 or 3, got {rank}")));
        }
        let dims = (0..rank)
            .map(|i| read_u32(HEADER_FIXED + 4 * i).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let start = HEADER_FIXED + 4 * rank;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| parse(HEADER_FIXED, "dims overflow".into()))?;
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| parse(HEADER_FIXED, "dims overflow".into()))?;
        let payload = &bytes[start.min(bytes.len())..];
        if payload.len() != payload_len {
            let offset = if payload.len() < payload_len { bytes.len() } else { start + payload_len };
            return Err(parse(
                offset,
                format!("payload is {} bytes, dims {dims:?} need {payload_len}", payload.len()),
            ));
        }
        let data = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        Ok(TensorFile { dtype, dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        TensorFile::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dtype: DType) -> TensorFile {
        TensorFile::new(dtype, vec![2, 3], vec![1.0, -2.5, 0.125, 3.0, 0.0, 7.75]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample(DType::F64).to_bytes();
        assert_eq!(&bytes[..4], b"SOP1");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &[2, 0, 0, 0]);
        assert_eq!(&bytes[9..13], &[2, 0, 0, 0]);
        assert_eq!(&bytes[13..17], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 17 + 6 * 8);
        assert_eq!(&bytes[17..25], &1.0f64.to_le_bytes());
        assert_eq!(sample(DType::F32).to_bytes().len(), 17 + 6 * 4);
    }

    #[test]
    fn round_trip() {
        for dtype in [DType::F32, DType::F64] {
            let t = sample(dtype);
            let bytes = t.to_bytes();
            let back = TensorFile::from_bytes(&bytes).unwrap();
            assert_eq!(back, t);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let good = sample(DType::F64).to_bytes();
        let offset = |b: &[u8]| match TensorFile::from_bytes(b) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected parse error, got {other:?}"),
        };
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(offset(&bad), 0);
        let mut bad = good.clone();
        bad[4] = 7;
        assert_eq!(offset(&bad), 4);
        let mut bad = good.clone();
        bad[5] = 4;
        assert_eq!(offset(&bad), 5);
        assert_eq!(offset(&good[..good.len() - 3]), good.len() - 3);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(offset(&long), good.len());
        assert_eq!(offset(&good[..11]), 9);
    }

    #[test]
    fn rank_three_flattens() {
        let t = TensorFile::new(DType::F64, vec![2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let m = t.to_matrix();
        assert_eq!(m.shape(), (2, 6));
        assert_eq!(m[(1, 4)], 10.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(TensorFile::new(DType::F64, vec![4], vec![0.0; 4]).is_err());
        assert!(TensorFile::new(DType::F64, vec![2, 2], vec![0.0; 3]).is_err());
    }
}
