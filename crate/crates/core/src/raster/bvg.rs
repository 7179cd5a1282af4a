//! `BVG1` occupancy grid files.
//!
//! | offset | size | field                                              |
//! |--------|------|----------------------------------------------------|
//! | 0      | 4    | magic `BVG1`                                       |
//! | 4      | 4    | format version, u32 LE (= 1)                       |
//! | 8      | 8    | number of occupancy words, u64 LE                  |
//! | 16     | 48   | L, W, V, ΔL, ΔW, ΔV as f64 LE                      |
//! | 64     | 8    | number of sweeps T, u64 LE                         |
//! | 72     | 8·n  | occupancy words, u64 LE                            |

use std::io::{Read, Write};

use super::{BevGrid, GridConfig};
use crate::error::{Error, Result};

pub const BVG_MAGIC: &[u8; 4] = b"BVG1";
pub const BVG_VERSION: u32 = 1;
pub const BVG_HEADER_LEN: usize = 16 + 7 * 8;

/// Exact file size for a grid of the given configuration.
pub fn bvg_byte_len(config: &GridConfig) -> Result<usize> {
    let (r, c, ch) = super::grid_shape(config)?;
    Ok(BVG_HEADER_LEN + 8 * (r * c * ch).div_ceil(64))
}

pub fn write_bvg<W: Write>(grid: &BevGrid, mut w: W) -> std::io::Result<()> {
    let cfg = &grid.config;
    let mut header = Vec::with_capacity(BVG_HEADER_LEN);
    header.extend_from_slice(BVG_MAGIC);
    header.extend_from_slice(&BVG_VERSION.to_le_bytes());
    header.extend_from_slice(&(grid.words().len() as u64).to_le_bytes());
    for v in [cfg.length_m, cfg.width_m, cfg.height_m, cfg.dl, cfg.dw, cfg.dv] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&(cfg.num_sweeps as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * 4096);
    for chunk in grid.words().chunks(4096) {
        buf.clear();
        for word in chunk {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("BVG1", format!("truncated {what}: {e}")))
}

pub fn read_bvg<R: Read>(mut r: R) -> Result<BevGrid> {
    let mut header = [0u8; BVG_HEADER_LEN];
    read_exact(&mut r, &mut header, "header")?;
    if &header[0..4] != BVG_MAGIC {
        return Err(Error::format("BVG1", "bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != BVG_VERSION {
        return Err(Error::format("BVG1", format!("unsupported version {version}")));
    }
    let n_words = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let f = |i: usize| f64::from_le_bytes(header[16 + 8 * i..24 + 8 * i].try_into().unwrap());
    let num_sweeps = u64::from_le_bytes(header[64..72].try_into().unwrap());
    let config = GridConfig {
        length_m: f(0),
        width_m: f(1),
        height_m: f(2),
        dl: f(3),
        dw: f(4),
        dv: f(5),
        num_sweeps: usize::try_from(num_sweeps).map_err(|_| Error::format("BVG1", "sweep count too large"))?,
    };
    let expected = (bvg_byte_len(&config)? - BVG_HEADER_LEN) / 8;
    if n_words != expected as u64 {
        return Err(Error::format(
            "BVG1",
            format!("word count {n_words} does not match configuration ({expected})"),
        ));
    }
    let mut bytes = vec![0u8; expected * 8];
    read_exact(&mut r, &mut bytes, "occupancy words")?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::format("BVG1", e.to_string()))? != 0 {
        return Err(Error::format("BVG1", "trailing bytes after occupancy words"));
    }
    let words = bytes
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    BevGrid::from_words(config, words)
}
