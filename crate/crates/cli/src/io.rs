//! The SATK v1 tensor interchange format.
//!
//! Layout: 8-byte magic `SATK0001`, four 32-bit little-endian unsigned dims
//! `(n, c, h, w)`, then `n*c*h*w` 32-bit little-endian IEEE-754 floats in
//! NCHW row-major order. Readers reject bad magic, zero or overflowing dims,
//! truncated payloads, and trailing bytes.

use std::fs;
use std::path::Path;

use satk_core::{Shape, Tensor4};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"SATK0001";

pub fn encode_tensor(t: &Tensor4) -> Vec<u8> {
    let (n, c, h, w) = t.dims();
    let mut out = Vec::with_capacity(8 + 16 + t.numel() * 4);
    out.extend_from_slice(MAGIC);
    for d in [n, c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor4, CliError> {
    if bytes.len() < 24 {
        return Err(CliError::Format(format!(
            "file too short for a SATK header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CliError::Format(String::from("bad magic, expected SATK0001")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 8 + 4 * i;
        *d = u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as usize;
    }
    let [n, c, h, w] = dims;
    let numel = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| CliError::Format(format!("dim overflow: {n}x{c}x{h}x{w}")))?;
    let payload = &bytes[24..];
    if payload.len() != numel {
        return Err(CliError::Format(format!(
            "payload is {} bytes, header implies {numel}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Tensor4::new(Shape::new(n, c, h, w), data)
        .map_err(|e| CliError::Format(format!("invalid tensor: {e}")))
}

pub fn write_tensor(path: &Path, t: &Tensor4) -> Result<(), CliError> {
    fs::write(path, encode_tensor(t))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_tensor(path: &Path) -> Result<Tensor4, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode_tensor(&bytes)
}

/// FNV-1a over the little-endian payload bytes; stable across platforms.
pub fn checksum(t: &Tensor4) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &v in t.data() {
        for b in v.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use satk_core::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(3);
        let t = Tensor4::uniform(Shape::new(2, 3, 4, 5), -2.0, 2.0, &mut rng).unwrap();
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_magic() {
        let t = Tensor4::zeros(Shape::new(1, 1, 1, 1)).unwrap();
        let mut bytes = encode_tensor(&t);
        bytes[0] = b'X';
        assert!(matches!(decode_tensor(&bytes), Err(CliError::Format(_))));
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let t = Tensor4::zeros(Shape::new(1, 2, 2, 2)).unwrap();
        let bytes = encode_tensor(&t);
        assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(decode_tensor(&extended).is_err());
    }

    #[test]
    fn rejects_zero_dims() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        for d in [1u32, 0, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        assert!(decode_tensor(&bytes).is_err());
    }

    #[test]
    fn rejects_dim_overflow() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        for d in [u32::MAX, u32::MAX, u32::MAX, u32::MAX] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        let err = decode_tensor(&bytes).unwrap_err();
        assert!(err.to_string().contains("overflow") || err.to_string().contains("payload"));
    }
}
