//! Z-order-curve mapping of the address space onto a 2^64 x 2^64 grid and
//! heatmap rendering of prefix hitlists.
//!
//! Counting address bits from 1 at the most significant end, the X
//! coordinate of an address is the concatenation of its even-numbered bits
//! and the Y coordinate the concatenation of its odd-numbered bits. The grid
//! origin is the top-left corner; X grows to the right, Y grows downward.
//! Under this mapping every CIDR prefix occupies an axis-aligned rectangle:
//! squares for even prefix lengths, twice-as-wide-as-tall rectangles for odd
//! lengths, because fixing one more (odd-numbered) bit halves the vertical
//! extent first.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::addr::{Address128, Prefix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ZorderError {
    #[error("cell length {cell} must be greater than the viewport length {viewport}")]
    InvalidCellLength { cell: u8, viewport: u8 },
    #[error("cell length {cell} exceeds 128")]
    CellLengthOutOfRange { cell: u8 },
    #[error("{0} cells per side exceed the supported resolution (viewport+26)")]
    TooManyCells(u8),
    #[error("hitlist entry {entry} is less specific than the cell length {cell}")]
    EntryTooShort { entry: Prefix, cell: u8 },
}

/// A point on the 2^64 x 2^64 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub x: u64,
    pub y: u64,
}

/// An axis-aligned rectangle on the grid. Width and height can reach 2^64,
/// hence the wider integer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapRect {
    pub x0: u64,
    pub y0: u64,
    pub width: u128,
    pub height: u128,
}

/// De-interleave an address into grid coordinates.
pub fn address_to_xy(a: Address128) -> GridPoint {
    let v = a.value();
    let mut x = 0u64;
    let mut y = 0u64;
    for i in 0..64 {
        let pair = (v >> (126 - 2 * i)) & 0b11;
        y = (y << 1) | (pair >> 1) as u64;
        x = (x << 1) | (pair & 1) as u64;
    }
    GridPoint { x, y }
}

/// Exact inverse of [`address_to_xy`].
pub fn xy_to_address(p: GridPoint) -> Address128 {
    let mut v = 0u128;
    for i in 0..64 {
        let ybit = (p.y >> (63 - i)) & 1;
        let xbit = (p.x >> (63 - i)) & 1;
        v = (v << 2) | ((ybit as u128) << 1) | xbit as u128;
    }
    Address128::new(v)
}

/// The rectangle containing exactly the grid points of the addresses in `p`.
/// Its top-left corner is the first address of the prefix and its
/// bottom-right corner the last.
pub fn prefix_to_rect(p: Prefix) -> MapRect {
    let top_left = address_to_xy(p.first_address());
    let len = p.length() as u32;
    // free bit positions len+1..=128: even-numbered ones widen X, so an odd
    // length leaves one more X bit free than Y
    let free = 128 - len;
    let free_x = free / 2 + len % 2;
    let free_y = free - free_x;
    MapRect {
        x0: top_left.x,
        y0: top_left.y,
        width: 1u128 << free_x,
        height: 1u128 << free_y,
    }
}

/// Per-cell entry counts over a viewport prefix, cells being the sub-prefixes
/// of length `cell_length`, laid out by the same parity split as
/// [`address_to_xy`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub viewport: Prefix,
    pub cell_length: u8,
    pub log_scale: bool,
    /// Cells per row.
    pub width: u32,
    /// Number of rows.
    pub height: u32,
    /// Row-major counts, `height * width` entries.
    pub counts: Vec<u64>,
    /// Entries that fell outside the viewport and were ignored.
    pub ignored: u64,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn count_at(&self, x: u32, y: u32) -> u64 {
        self.counts[y as usize * self.width as usize + x as usize]
    }
}

/// Geometry of the cell grid: how many even/odd-numbered bit positions fall
/// in `(viewport_len, cell_len]`.
fn cell_grid_dims(viewport_len: u8, cell_len: u8) -> (u32, u32) {
    let mut xbits = 0u32;
    let mut ybits = 0u32;
    for pos in viewport_len as u32 + 1..=cell_len as u32 {
        if pos % 2 == 0 {
            xbits += 1;
        } else {
            ybits += 1;
        }
    }
    (xbits, ybits)
}

/// Count hitlist entries per cell. Entries must be at least as specific as
/// the cells; entries outside the viewport are counted as ignored.
pub fn build_heatmap(
    entries: &[Prefix],
    viewport: Prefix,
    cell_length: u8,
    log_scale: bool,
) -> Result<Heatmap, ZorderError> {
    if cell_length > 128 {
        return Err(ZorderError::CellLengthOutOfRange { cell: cell_length });
    }
    if cell_length <= viewport.length() {
        return Err(ZorderError::InvalidCellLength {
            cell: cell_length,
            viewport: viewport.length(),
        });
    }
    if cell_length - viewport.length() > 26 {
        return Err(ZorderError::TooManyCells(cell_length));
    }
    let (xbits, ybits) = cell_grid_dims(viewport.length(), cell_length);
    let width = 1u32 << xbits;
    let height = 1u32 << ybits;
    let mut counts = vec![0u64; (width as usize) * (height as usize)];
    let mut ignored = 0u64;

    for entry in entries {
        if entry.length() < cell_length {
            return Err(ZorderError::EntryTooShort {
                entry: *entry,
                cell: cell_length,
            });
        }
        if !viewport.contains(entry.address()) {
            ignored += 1;
            continue;
        }
        // walk the bit positions between viewport and cell, steering by parity
        let mut cx = 0u32;
        let mut cy = 0u32;
        let v = entry.address().value();
        for pos in viewport.length() as u32 + 1..=cell_length as u32 {
            let bit = ((v >> (128 - pos)) & 1) as u32;
            if pos % 2 == 0 {
                cx = (cx << 1) | bit;
            } else {
                cy = (cy << 1) | bit;
            }
        }
        counts[cy as usize * width as usize + cx as usize] += 1;
    }

    Ok(Heatmap {
        viewport,
        cell_length,
        log_scale,
        width,
        height,
        counts,
        ignored,
    })
}

/// Map counts to 0..=255 pixel intensities. Zero stays 0; any nonzero count
/// renders at least 1 so sparse cells remain visible; the maximum maps to
/// 255. Log mode scales by log2(count+1).
pub fn heatmap_pixels(h: &Heatmap) -> Vec<u8> {
    let max = h.max_count();
    let scale = |count: u64| -> u8 {
        if count == 0 || max == 0 {
            return 0;
        }
        let (value, top) = if h.log_scale {
            (((count + 1) as f64).log2(), ((max + 1) as f64).log2())
        } else {
            (count as f64, max as f64)
        };
        let v = (value / top * 255.0).round() as u8;
        v.max(1)
    };
    h.counts.iter().map(|&c| scale(c)).collect()
}

/// Write the heatmap as a binary portable graymap (PGM, `P5`).
pub fn render_heatmap(h: &Heatmap, path: &Path) -> io::Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_pgm(h, &mut w)
}

pub fn write_pgm<W: Write>(h: &Heatmap, out: &mut W) -> io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", h.width, h.height)?;
    out.write_all(&heatmap_pixels(h))?;
    out.flush()
}

/// Write `x,y,count` rows for every nonzero cell.
pub fn write_heatmap_csv<W: Write>(h: &Heatmap, out: &mut W) -> io::Result<()> {
    writeln!(out, "x,y,count")?;
    for y in 0..h.height {
        for x in 0..h.width {
            let c = h.count_at(x, y);
            if c != 0 {
                writeln!(out, "{x},{y},{c}")?;
            }
        }
    }
    out.flush()
}
