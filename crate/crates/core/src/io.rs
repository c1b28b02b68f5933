//! Binary container for nodal paths and cell controls.
//!
//! Layout (little endian): 8-byte magic, `u64` kind, `u64` n, `u64` m,
//! `f64` T, then the values row by row.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::skeleton::{Control, SpaceTimePath};

pub const MAGIC: [u8; 8] = *b"CHLDPv01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Kind {
    Path = 0,
    Control = 1,
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("i/o: {e}"))
}

fn write_block(w: &mut impl Write, kind: Kind, n: usize, m: usize, horizon: f64, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(40 + 8 * values.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(kind as u64).to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    buf.extend_from_slice(&horizon.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

fn read_block(r: &mut impl Read, kind: Kind) -> Result<(usize, usize, f64, Vec<f64>)> {
    let mut head = [0u8; 40];
    r.read_exact(&mut head).map_err(io_err)?;
    if head[..8] != MAGIC {
        return Err(Error::InvalidArgument("not a chldp container".into()));
    }
    let word = |i: usize| u64::from_le_bytes(head[8 * i..8 * i + 8].try_into().unwrap());
    if word(1) != kind as u64 {
        return Err(Error::InvalidArgument(format!("container holds kind {}, expected {}", word(1), kind as u64)));
    }
    let n = word(2) as usize;
    let m = word(3) as usize;
    let horizon = f64::from_le_bytes(head[32..40].try_into().unwrap());
    let rows = match kind {
        Kind::Path => m + 1,
        Kind::Control => m,
    };
    let count = n
        .checked_mul(rows)
        .filter(|c| *c <= usize::MAX / 8 && (*c as u64) <= 1 << 32)
        .ok_or_else(|| Error::InvalidArgument("container dimensions too large".into()))?;
    let mut body = vec![0u8; 8 * count];
    r.read_exact(&mut body).map_err(io_err)?;
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, m, horizon, values))
}

pub fn write_path(w: &mut impl Write, p: &SpaceTimePath) -> Result<()> {
    write_block(w, Kind::Path, p.n, p.m, p.horizon, &p.values)
}

pub fn read_path(r: &mut impl Read) -> Result<SpaceTimePath> {
    let (n, m, t, v) = read_block(r, Kind::Path)?;
    SpaceTimePath::new(n, m, t, v)
}

pub fn write_control(w: &mut impl Write, h: &Control) -> Result<()> {
    write_block(w, Kind::Control, h.n, h.m, h.horizon, &h.values)
}

pub fn read_control(r: &mut impl Read) -> Result<Control> {
    let (n, m, t, v) = read_block(r, Kind::Control)?;
    Control::new(n, m, t, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let p = SpaceTimePath::from_fn(3, 4, 0.5, |t, x| t * x - 1.0 / 3.0).unwrap();
        let mut buf = Vec::new();
        write_path(&mut buf, &p).unwrap();
        assert_eq!(buf.len(), 40 + 8 * 15);
        assert_eq!(read_path(&mut buf.as_slice()).unwrap(), p);
        let h = Control::from_fn(3, 4, 0.5, |t, x| (t + x).sin()).unwrap();
        let mut buf = Vec::new();
        write_control(&mut buf, &h).unwrap();
        let back = read_control(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values, h.values);
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let h = Control::zeros(2, 2, 1.0).unwrap();
        let mut buf = Vec::new();
        write_control(&mut buf, &h).unwrap();
        assert!(read_path(&mut buf.as_slice()).is_err());
        buf.pop();
        assert!(read_control(&mut buf.as_slice()).is_err());
        assert!(read_control(&mut &b"garbage-garbage-garbage-garbage-garbage-"[..]).is_err());
    }
}
