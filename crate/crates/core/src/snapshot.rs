//! Binary snapshot container and CSV export for grid fields.
//!
//! Layout: a 64-byte little-endian header followed by `n * n * components` f64 values in
//! row-major node order.
//!
//! | offset | type | content            |
//! |--------|------|--------------------|
//! | 0      | [u8;4] | magic `CWM1`     |
//! | 4      | u32  | n                  |
//! | 8      | f64  | h                  |
//! | 16     | u32  | target dimension m |
//! | 20     | u32  | field kind tag     |
//! | 24     | f64  | κ                  |
//! | 32     | f64  | wave time t        |
//! | 40     | u64  | components per node|
//! | 48     | f64  | heat time s        |
//! | 56     | 8 bytes | reserved (zero) |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid2D};

pub const MAGIC: &[u8; 4] = b"CWM1";
pub const HEADER_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub m: u32,
    pub kappa: f64,
    pub t: f64,
    pub s: f64,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let f = &self.field;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * f.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(f.grid.n as u32).to_le_bytes());
        out.extend_from_slice(&f.grid.h.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&f.kind.tag().to_le_bytes());
        out.extend_from_slice(&self.kappa.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(f.width as u64).to_le_bytes());
        out.extend_from_slice(&self.s.to_le_bytes());
        out.extend_from_slice(&[0u8; 8]);
        debug_assert_eq!(out.len(), HEADER_LEN);
        for v in &f.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
            return Err(Error::Parse("not a CWM1 snapshot".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let n = u32_at(4) as usize;
        let h = f64_at(8);
        let m = u32_at(16);
        let kind = FieldKind::from_tag(u32_at(20))?;
        let kappa = f64_at(24);
        let t = f64_at(32);
        let width = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
        let s = f64_at(48);
        let grid = Grid2D::new(n, h).map_err(|e| Error::Parse(e.to_string()))?;
        let expected = HEADER_LEN + 8 * grid.len() * width;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "snapshot has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Snapshot {
            field: Field::from_data(grid, kind, width, data)?,
            m,
            kappa,
            t,
            s,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Snapshot::from_bytes(&bytes)
    }
}

/// One node per row: `i,j,x,y,c0,c1,...`.
pub fn write_csv(field: &Field, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "i,j,x,y")?;
    for c in 0..field.width {
        write!(w, ",c{c}")?;
    }
    writeln!(w)?;
    let g = field.grid;
    for i in 0..g.n {
        for j in 0..g.n {
            let (x, y) = g.position(i, j);
            write!(w, "{i},{j},{x:e},{y:e}")?;
            for v in field.at(g.idx(i, j)) {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
