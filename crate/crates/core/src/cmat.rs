//! `.cmat` matrix interchange.
//!
//! Layout: an ASCII header line `CMAT1 <rows> <cols>\n`, then `rows*cols`
//! little-endian f64 values of the real plane (row-major), then the same
//! count for the imaginary plane.

use std::fs;
use std::path::Path;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

const MAGIC: &str = "CMAT1";

pub fn encode(m: &ComplexMatrix) -> Result<Vec<u8>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::EmptyMatrix {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let header = format!("{MAGIC} {} {}\n", m.rows(), m.cols());
    let mut out = Vec::with_capacity(header.len() + 16 * m.re().len());
    out.extend_from_slice(header.as_bytes());
    for v in m.re().iter().chain(m.im()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ComplexMatrix> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::MalformedHeader("header is not valid UTF-8".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(Error::MalformedHeader(format!(
            "expected magic {MAGIC}, got {header:?}"
        )));
    }
    let mut dim = |name: &str| -> Result<usize> {
        fields
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {name}")))?
            .parse::<usize>()
            .map_err(|e| Error::MalformedHeader(format!("bad {name}: {e}")))
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    if fields.next().is_some() {
        return Err(Error::MalformedHeader(format!(
            "trailing fields in {header:?}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(2))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[newline + 1..];
    let expected = count * 8;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry(i));
        }
        values.push(v);
    }
    let im = values.split_off(rows * cols);
    ComplexMatrix::from_planes(rows, cols, values, im)
}

pub fn write_cmat(path: impl AsRef<Path>, m: &ComplexMatrix) -> Result<()> {
    fs::write(path, encode(m)?)?;
    Ok(())
}

pub fn read_cmat(path: impl AsRef<Path>) -> Result<ComplexMatrix> {
    decode(&fs::read(path)?)
}

/// Reads an N×1 real-valued `.cmat` (e.g. exported activity priors).
pub fn read_real_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = read_cmat(path)?;
    if m.cols() != 1 {
        return Err(Error::MalformedHeader(format!(
            "expected a column vector, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.im().iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidParameter(
            "vector has a nonzero imaginary part".into(),
        ));
    }
    Ok(m.re().to_vec())
}

pub fn write_real_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let m = ComplexMatrix::from_planes(values.len(), 1, values.to_vec(), vec![0.0; values.len()])?;
    write_cmat(path, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gaussian_pilots, seeded_rng};

    #[test]
    fn header_is_text_then_planes() {
        let m = ComplexMatrix::from_planes(1, 2, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let bytes = encode(&m).unwrap();
        assert!(bytes.starts_with(b"CMAT1 1 2\n"));
        assert_eq!(bytes.len(), 10 + 32);
        assert_eq!(&bytes[10..18], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[34..42], &4.0f64.to_le_bytes());
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = gaussian_pilots(5, 7, false, &mut seeded_rng(1));
        let back = decode(&encode(&m).unwrap()).unwrap();
        assert!(m
            .re()
            .iter()
            .zip(back.re())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(m
            .im()
            .iter()
            .zip(back.im())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let m = gaussian_pilots(2, 3, false, &mut seeded_rng(2));
        let bytes = encode(&m).unwrap();
        match decode(&bytes[..bytes.len() - 5]) {
            Err(Error::Truncated { expected, found }) => {
                assert_eq!(expected, 96);
                assert_eq!(found, 91);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_malformed_headers_are_distinct_errors() {
        assert!(matches!(
            decode(b"CMAT1 0 0\n"),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(matches!(
            decode(b"CMAT2 1 1\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode(b"CMAT1 x 1\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode(b"no newline"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = b"CMAT1 1 1\n".to_vec();
        bytes.extend_from_slice(&f64::INFINITY.to_le_bytes());
        bytes.extend_from_slice(&0f64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::NonFiniteEntry(0))));
    }
}
