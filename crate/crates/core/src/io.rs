//! Binary field dumps and CSV helpers.
//!
//! Dump layout (little endian):
//! `b"HMF1"`, u32 dim, u32 n0, u32 n1 (1 when dim = 1), u32 components,
//! f64 t, f64 period[2], f64 lifts[components][2], then the values as f64,
//! component by component, each component row-major (axis 0 slowest).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 4] = b"HMF1";

pub fn encode_field(f: &Field) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(48 + 16 * f.components() + 8 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.size(0) as u32).to_le_bytes());
    let n1 = if g.dim() == 2 { g.size(1) } else { 1 };
    out.extend_from_slice(&(n1 as u32).to_le_bytes());
    out.extend_from_slice(&(f.components() as u32).to_le_bytes());
    out.extend_from_slice(&f.time.to_le_bytes());
    let p1 = if g.dim() == 2 { g.period(1) } else { 0.0 };
    out.extend_from_slice(&g.period(0).to_le_bytes());
    out.extend_from_slice(&p1.to_le_bytes());
    for l in f.lifts() {
        out.extend_from_slice(&l[0].to_le_bytes());
        out.extend_from_slice(&l[1].to_le_bytes());
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::InvalidInput("field dump is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_field(buf: &[u8]) -> Result<Field> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::InvalidInput("not a field dump (bad magic)".into()));
    }
    let dim = r.u32()? as usize;
    let n0 = r.u32()? as usize;
    let n1 = r.u32()? as usize;
    let comps = r.u32()? as usize;
    let t = r.f64()?;
    let period = [r.f64()?, r.f64()?];
    let sizes = match dim {
        1 => vec![n0],
        2 => vec![n0, n1],
        _ => return Err(Error::InvalidInput(format!("unsupported dimension {dim} in dump"))),
    };
    let grid = Grid::new(&sizes, &period[..dim])?;
    let mut lifts = Vec::with_capacity(comps);
    for _ in 0..comps {
        lifts.push([r.f64()?, r.f64()?]);
    }
    let n = grid.len() * comps;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(r.f64()?);
    }
    if r.pos != buf.len() {
        return Err(Error::InvalidInput("trailing bytes after field dump".into()));
    }
    let mut f = Field::from_values(grid, comps, values)?.with_time(t);
    f.set_lifts(lifts);
    Ok(f)
}

pub fn write_field(path: &Path, f: &Field) -> Result<()> {
    fs::write(path, encode_field(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    decode_field(&fs::read(path)?)
}

/// Round-trip float formatting for CSV cells.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV bytes with a header row; every value is formatted with [`fmt_f64`].
pub fn csv_bytes(header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, csv_bytes(header, rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_is_exact() {
        let grid = Grid::torus2(8, 12).unwrap();
        let mut f = Field::zeros(grid, 2).with_time(0.123456789);
        for (i, v) in f.values_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() / 3.0;
        }
        let f = f.with_lift(1, 0, std::f64::consts::TAU);
        let back = decode_field(&encode_field(&f)).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.lifts(), f.lifts());
        assert_eq!(back.time.to_bits(), f.time.to_bits());
        assert_eq!(back.grid(), f.grid());
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_field(b"nope").is_err());
        let grid = Grid::torus1(8).unwrap();
        let mut bytes = encode_field(&Field::zeros(grid, 1));
        bytes.pop();
        assert!(decode_field(&bytes).is_err());
    }

    #[test]
    fn csv_floats_round_trip() {
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
