//! Binary and CSV persistence for [`CsiMatrix`].
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "CSI1" | u32 m | u32 n | u8 direction (0 = UL, 1 = DL) | f64 snr_db (NaN = absent)
//! m*n entries in column-major order, each f64 re then f64 im
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{CsiMatrix, Direction};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CSI1";
const HEADER_LEN: usize = 4 + 4 + 4 + 1 + 8;

pub fn write_csi_file(csi: &CsiMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_header(csi))?;
    for z in csi.data().iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn encode_header(csi: &CsiMatrix) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(&MAGIC);
    h.extend_from_slice(&(csi.m() as u32).to_le_bytes());
    h.extend_from_slice(&(csi.n() as u32).to_le_bytes());
    h.push(csi.direction().to_byte());
    h.extend_from_slice(&csi.snr_db().unwrap_or(f64::NAN).to_le_bytes());
    h
}

pub fn read_csi_file(path: impl AsRef<Path>) -> Result<CsiMatrix> {
    decode(&fs::read(path)?)
}

fn decode(bytes: &[u8]) -> Result<CsiMatrix> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedHeader);
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedHeader);
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as u64;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let direction = Direction::from_byte(bytes[12])
        .ok_or_else(|| Error::Config(format!("unknown direction byte {}", bytes[12])))?;
    let snr = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let snr_db = if snr.is_nan() { None } else { Some(snr) };

    let payload = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(16))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or(Error::DimensionOverflow { m, n })?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::TruncatedPayload {
            expected: payload,
            found: body.len(),
        });
    }
    let (m, n) = (m as usize, n as usize);
    let mut values = body[..payload]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let entries: Vec<Complex64> = (0..m * n)
        .map(|_| {
            let re = values.next().unwrap();
            let im = values.next().unwrap();
            Complex64::new(re, im)
        })
        .collect();
    CsiMatrix::new(DMatrix::from_vec(m, n, entries), direction, snr_db)
}

/// Reads a measurement export with header `re_1,im_1,...,re_N,im_N` and one
/// row per snapshot. Direction defaults to uplink.
pub fn read_csi_csv(path: impl AsRef<Path>) -> Result<CsiMatrix> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() || headers.len() % 2 != 0 {
        return Err(Error::Csv(format!(
            "expected an even number of re/im columns, got {}",
            headers.len()
        )));
    }
    for (i, h) in headers.iter().enumerate() {
        let expected = if i % 2 == 0 {
            format!("re_{}", i / 2 + 1)
        } else {
            format!("im_{}", i / 2 + 1)
        };
        if h.trim() != expected {
            return Err(Error::Csv(format!(
                "column {i}: expected {expected}, found {h}"
            )));
        }
    }
    let n = headers.len() / 2;
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let vals: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv(format!("row {}: {e}", line + 1)))?;
        if vals.len() != 2 * n {
            return Err(Error::Csv(format!(
                "row {} has {} fields",
                line + 1,
                vals.len()
            )));
        }
        rows.push(
            vals.chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        );
    }
    if rows.is_empty() {
        return Err(Error::Csv("no snapshot rows".into()));
    }
    let m = rows.len();
    CsiMatrix::new(
        DMatrix::from_fn(m, n, |r, c| rows[r][c]),
        Direction::Uplink,
        None,
    )
}
