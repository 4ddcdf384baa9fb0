//! Solution files.
//!
//! CSV: header `t,x,component,value`, one row per (time node, interior
//! node, component) with components numbered from 0.
//!
//! Binary snapshot, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `FDSOLN01` |
//! | 8 | `K` (u64) |
//! | 8 | `M` (u64), number of steps; `M+1` time levels follow |
//! | 8 | `n_interior` (u64) |
//! | 8 | method tag (u64: 0 picard, 1 l1, 2 laplace) |
//! | 16 | interval end points `a`, `b` (f64) |
//! | 8K | orders `α_k` (f64) |
//! | 8(M+1) | time nodes including `t_0 = 0` (f64) |
//! | 8K(M+1)n | values, row-major `[k][j][x]` (f64) |

use std::io::{Read, Write};
use std::path::Path;

use super::{Method, Solution, TimeGrid};
use crate::error::{Error, Result};
use crate::spectral::Grid1D;

const MAGIC: &[u8; 8] = b"FDSOLN01";

pub fn write_csv<W: Write>(sol: &Solution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "component", "value"])?;
    let xs = sol.grid.nodes();
    for (j, t) in sol.tgrid.nodes().iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            for k in 0..sol.k {
                w.write_record(&[
                    format!("{t:e}"),
                    format!("{x:e}"),
                    k.to_string(),
                    format!("{:e}", sol.at(k, j)[i]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn write_binary(sol: &Solution, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_binary(sol))?;
    Ok(())
}

/// Snapshot bytes in the layout above.
pub fn encode_binary(sol: &Solution) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 8 * sol.values().len());
    buf.extend_from_slice(MAGIC);
    put_u64(&mut buf, sol.k as u64);
    put_u64(&mut buf, sol.tgrid.m() as u64);
    put_u64(&mut buf, sol.grid.n_interior as u64);
    put_u64(
        &mut buf,
        match sol.method {
            Method::Picard => 0,
            Method::L1 => 1,
            Method::Laplace => 2,
        },
    );
    put_f64(&mut buf, sol.grid.a_end);
    put_f64(&mut buf, sol.grid.b_end);
    for a in &sol.alphas {
        put_f64(&mut buf, *a);
    }
    for t in sol.tgrid.nodes() {
        put_f64(&mut buf, *t);
    }
    for v in sol.values() {
        put_f64(&mut buf, *v);
    }
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let s = self
            .data
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::invalid("binary snapshot is truncated"))?;
        self.pos += 8;
        Ok(s.try_into().expect("slice of length 8"))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_binary(path: &Path) -> Result<Solution> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if &c.take8()? != MAGIC {
        return Err(Error::invalid("not a solution snapshot (bad magic)"));
    }
    let k = c.u64()? as usize;
    let m = c.u64()? as usize;
    let n = c.u64()? as usize;
    let method = match c.u64()? {
        0 => Method::Picard,
        1 => Method::L1,
        2 => Method::Laplace,
        other => return Err(Error::invalid(format!("unknown method tag {other}"))),
    };
    let expected = 40 + 16 + 8 * (k + (m + 1) + k * (m + 1) * n);
    if data.len() != expected {
        return Err(Error::invalid(format!(
            "snapshot has {} bytes, header implies {expected}",
            data.len()
        )));
    }
    let a = c.f64()?;
    let b = c.f64()?;
    let alphas = c.f64s(k)?;
    let times = c.f64s(m + 1)?;
    let values = c.f64s(k * (m + 1) * n)?;
    let grid = Grid1D::new(a, b, n)?;
    let tgrid = TimeGrid::from_nodes(times)?;
    Solution::from_values(grid, tgrid, alphas, method, values)
}
