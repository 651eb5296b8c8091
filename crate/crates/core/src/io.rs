//! Field snapshots and CSV export.
//!
//! A snapshot is one text line
//!
//! ```text
//! CHEMOSNAP1 <nx> <ny> <lx> <ly> <time>
//! ```
//!
//! followed by `nx·ny` little-endian `f64` values, row-major (`j` outer,
//! `i` inner). Floats in the header use shortest round-trip formatting.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

pub const SNAPSHOT_MAGIC: &str = "CHEMOSNAP1";

/// Longest header accepted when reading.
const MAX_HEADER: usize = 512;

pub fn write_snapshot<W: Write>(mut w: W, field: &ScalarField, time: f64) -> Result<()> {
    let g = field.grid;
    writeln!(w, "{SNAPSHOT_MAGIC} {} {} {:?} {:?} {:?}", g.nx, g.ny, g.lx, g.ly, time)?;
    let mut buf = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a snapshot, returning the field and its time stamp.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(ScalarField, f64)> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Snapshot("truncated header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > MAX_HEADER {
            return Err(Error::Snapshot("header line too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Snapshot("header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot(format!("bad header {header:?}")));
    }
    let bad = |what: &str| Error::Snapshot(format!("cannot parse {what} in header {header:?}"));
    let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
    let lx: f64 = parts[3].parse().map_err(|_| bad("lx"))?;
    let ly: f64 = parts[4].parse().map_err(|_| bad("ly"))?;
    let time: f64 = parts[5].parse().map_err(|_| bad("time"))?;
    let grid = Grid::new(lx, ly, nx, ny)?;
    let mut raw = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Snapshot(format!("expected {} values", grid.len())))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Snapshot("trailing bytes after values".into()));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField { grid, values }, time))
}

pub fn save_snapshot(path: &Path, field: &ScalarField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, field, time)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(ScalarField, f64)> {
    read_snapshot(BufReader::new(File::open(path)?))
}

/// CSV with columns `i,j,x,y,value`.
pub fn write_field_csv<W: Write>(mut w: W, field: &ScalarField) -> std::io::Result<()> {
    let g = field.grid;
    writeln!(w, "i,j,x,y,value")?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.center(i, j);
            writeln!(w, "{i},{j},{x:?},{y:?},{:?}", field.at(i, j))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(0.3, 1.7, 5, 7).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (x * 13.1).sin() / (y + 0.1));
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.1 + 0.2).unwrap();
        let (back, t) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(t, 0.1 + 0.2);
        assert_eq!(back.grid, g);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_snapshot(&b"NOPE 4 4 1 1 0\n"[..]).is_err());
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &ScalarField::zeros(g), 0.0).unwrap();
        assert!(read_snapshot(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_snapshot(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &ScalarField::constant(g, 2.0)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,j,x,y,value");
        assert_eq!(lines[1], "0,0,0.125,0.125,2.0");
        assert_eq!(lines.len(), 17);
    }
}
