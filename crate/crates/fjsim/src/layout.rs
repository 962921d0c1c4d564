//! Data-layout transforms and block-to-socket placement policies.
//!
//! Arrays can be indexed row-major, in pure Z-Morton order, or in a blocked
//! Z-Morton order where square blocks are contiguous and row-major inside
//! while the blocks themselves follow the Z curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{BlockId, Place, Topology};

/// Supported coordinate width for Morton interleaving: 16 bits per axis.
pub const MORTON_MAX_COORD: u32 = 1 << 16;

/// Interleave the bits of (x, y) into a Z-order index.
///
/// x occupies the even bit positions (bit 0 of x lands at bit 0 of z), y the
/// odd ones. The convention is arbitrary but fixed.
pub fn morton_encode(x: u32, y: u32) -> Result<u64> {
    if x >= MORTON_MAX_COORD || y >= MORTON_MAX_COORD {
        return Err(Error::Config(format!(
            "morton coordinate ({x}, {y}) exceeds {MORTON_MAX_COORD}"
        )));
    }
    Ok(spread_bits(x) | (spread_bits(y) << 1))
}

/// Invert [`morton_encode`].
pub fn morton_decode(z: u64) -> (u32, u32) {
    (compact_bits(z), compact_bits(z >> 1))
}

fn spread_bits(v: u32) -> u64 {
    let mut v = v as u64;
    v = (v | (v << 16)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v << 8)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    v = (v | (v << 1)) & 0x5555_5555_5555_5555;
    v
}

fn compact_bits(v: u64) -> u32 {
    let mut v = v & 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v >> 4)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v >> 8)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v >> 16)) & 0x0000_0000_FFFF_FFFF;
    v as u32
}

/// An n x n matrix split into b x b blocks: elements are row-major within a
/// block, and blocks are ordered by the Morton code of their coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedLayout {
    pub n: usize,
    pub block: usize,
}

impl BlockedLayout {
    pub fn new(n: usize, block: usize) -> Result<Self> {
        if block == 0 || !block.is_power_of_two() {
            return Err(Error::Config(format!(
                "block size {block} must be a power of two"
            )));
        }
        if n == 0 || n % block != 0 {
            return Err(Error::Config(format!(
                "matrix dim {n} must be a positive multiple of block size {block}"
            )));
        }
        Ok(BlockedLayout { n, block })
    }

    /// Linear offset of element (row, col): Morton block order outside,
    /// row-major inside.
    pub fn index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.n || col >= self.n {
            return Err(Error::Config(format!(
                "({row}, {col}) out of range for {}x{} matrix",
                self.n, self.n
            )));
        }
        let b = self.block;
        let z = morton_encode((col / b) as u32, (row / b) as u32)?;
        Ok(z as usize * b * b + (row % b) * b + (col % b))
    }
}

/// How data blocks get assigned to socket DRAMs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementPolicy {
    /// Each block lands on the socket of the worker that first touches it.
    FirstTouch,
    /// Block i lands on socket i mod socket_count.
    Interleave,
    /// Explicit block-range map; unmapped blocks fall back to first-touch.
    Partitioned(Vec<(std::ops::Range<u32>, Place)>),
}

/// Resolve the DRAM owner for each of `block_count` blocks.
///
/// `None` entries mean "first touch decides during execution".
pub fn assign_places(
    block_count: usize,
    policy: &PlacementPolicy,
    topo: &Topology,
) -> Result<Vec<Option<u32>>> {
    match policy {
        PlacementPolicy::FirstTouch => Ok(vec![None; block_count]),
        PlacementPolicy::Interleave => Ok((0..block_count)
            .map(|b| Some((b % topo.socket_count) as u32))
            .collect()),
        PlacementPolicy::Partitioned(ranges) => {
            let mut owners = vec![None; block_count];
            for (range, place) in ranges {
                let socket = match place {
                    Place::Any => continue, // explicit ANY keeps first-touch
                    Place::Socket(s) => {
                        topo.validate_place(*place)?;
                        *s
                    }
                };
                for b in range.clone() {
                    if (b as usize) < block_count {
                        owners[b as usize] = Some(socket);
                    }
                }
            }
            Ok(owners)
        }
    }
}

/// Split `block_count` blocks into `parts` contiguous ranges mapped onto the
/// given places, in order. Used by the quarter-partitioned benchmarks.
pub fn contiguous_partitions(block_count: u32, places: &[Place]) -> PlacementPolicy {
    let parts = places.len() as u32;
    let per = block_count.div_ceil(parts.max(1));
    let ranges = places
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let lo = (i as u32) * per;
            let hi = ((i as u32 + 1) * per).min(block_count);
            (lo..hi, p)
        })
        .collect();
    PlacementPolicy::Partitioned(ranges)
}

/// Block ids touched by the b x b tile at tile coordinates (ti, tj) of an
/// n x n matrix, under the given element layout, where one block is one
/// aligned run of b*b elements.
///
/// Blocked and Morton layouts make a tile exactly one block; row-major
/// scatters it over the blocks its rows land in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayLayout {
    RowMajor,
    Morton,
    Blocked,
}

impl std::str::FromStr for ArrayLayout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row-major" | "rowmajor" => Ok(ArrayLayout::RowMajor),
            "morton" => Ok(ArrayLayout::Morton),
            "blocked" => Ok(ArrayLayout::Blocked),
            other => Err(Error::Config(format!("unknown layout '{other}'"))),
        }
    }
}

pub fn tile_blocks(
    layout: ArrayLayout,
    n: usize,
    b: usize,
    ti: usize,
    tj: usize,
    base_block: u32,
) -> Vec<BlockId> {
    match layout {
        ArrayLayout::Blocked | ArrayLayout::Morton => {
            // One tile, one block. Morton's block numbering follows the curve;
            // blocked uses the same block order (row-major interiors do not
            // change which block a tile is).
            let z = morton_encode(tj as u32, ti as u32).expect("tile coords in range") as u32;
            vec![base_block + z]
        }
        ArrayLayout::RowMajor => {
            // Tile rows are strided; each lands in the block covering its
            // span of b*b consecutive elements.
            let block_elems = b * b;
            let mut out: Vec<BlockId> = Vec::new();
            for r in 0..b {
                let offset = (ti * b + r) * n + tj * b;
                let blk = base_block + (offset / block_elems) as u32;
                if out.last() != Some(&blk) {
                    out.push(blk);
                }
            }
            out.dedup();
            out
        }
    }
}
