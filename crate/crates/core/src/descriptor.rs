//! Overlapping block grid and per-block DCT descriptor extraction.
//!
//! Each block yields a 12-vector: the four lowest 2D DCT-II coefficients in
//! zig-zag order `(0,0), (0,1), (1,0), (2,0)` per colour channel,
//! concatenated `[r, g, b]`. The transform is orthonormal, so the leading
//! coefficient is `(1/N) * sum(pixels)` and reflects average intensity while
//! the other three capture the coarsest horizontal/vertical structure.

use rayon::prelude::*;
use thiserror::Error;

use crate::imaging::FrameRgb;

/// Descriptor dimensionality: 4 coefficients x 3 channels.
pub const DESCRIPTOR_DIM: usize = 12;
/// Retained coefficients per channel.
pub const COEFFS_PER_CHANNEL: usize = 4;

pub type Descriptor = [f64; DESCRIPTOR_DIM];

#[derive(Debug, Error)]
pub enum GridError {
    #[error("block size {block_size} exceeds frame dimensions {width}x{height}")]
    BlockTooLarge {
        block_size: usize,
        width: usize,
        height: usize,
    },
    #[error("advance {advance} outside 1..={block_size}")]
    BadAdvance { advance: usize, block_size: usize },
}

/// Block anchors for a frame geometry. Anchors are `(i, j)` top-left corners
/// with `i` the row and `j` the column, enumerated row-major. An extra anchor
/// is injected at the far edge of each axis when the stride does not land
/// there exactly, so every pixel is covered by at least one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGrid {
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    pub advance: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub anchors: Vec<(usize, usize)>,
}

fn axis_anchors(extent: usize, block_size: usize, advance: usize) -> Vec<usize> {
    let last = extent - block_size;
    let mut out: Vec<usize> = (0..=last).step_by(advance).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

pub fn make_grid(
    width: usize,
    height: usize,
    block_size: usize,
    advance: usize,
) -> Result<BlockGrid, GridError> {
    if block_size == 0 || block_size > width || block_size > height {
        return Err(GridError::BlockTooLarge {
            block_size,
            width,
            height,
        });
    }
    if advance == 0 || advance > block_size {
        return Err(GridError::BadAdvance {
            advance,
            block_size,
        });
    }
    let rows = axis_anchors(height, block_size, advance);
    let cols = axis_anchors(width, block_size, advance);
    let mut anchors = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            anchors.push((i, j));
        }
    }
    Ok(BlockGrid {
        width,
        height,
        block_size,
        advance,
        rows,
        cols,
        anchors,
    })
}

/// Precomputed cosine basis rows for the three retained AC frequencies.
#[derive(Debug, Clone)]
pub struct DctBasis {
    n: usize,
    alpha0: f64,
    alpha_ac: f64,
    cos1: Vec<f64>,
    cos2: Vec<f64>,
}

impl DctBasis {
    pub fn new(block_size: usize) -> Self {
        let n = block_size;
        let nf = n as f64;
        let freq =
            |k: f64, x: usize| ((2 * x + 1) as f64 * k * std::f64::consts::PI / (2.0 * nf)).cos();
        Self {
            n,
            alpha0: (1.0 / nf).sqrt(),
            alpha_ac: (2.0 / nf).sqrt(),
            cos1: (0..n).map(|x| freq(1.0, x)).collect(),
            cos2: (0..n).map(|x| freq(2.0, x)).collect(),
        }
    }

    /// The four lowest zig-zag coefficients — (0,0), (0,1), (1,0), (2,0) —
    /// of one colour channel of the block anchored at `(i, j)`: a row pass
    /// accumulating the two horizontal projections, then the column
    /// combination for the retained vertical frequencies.
    fn channel_coeffs(
        &self,
        frame: &FrameRgb,
        i: usize,
        j: usize,
        ch: usize,
    ) -> [f64; COEFFS_PER_CHANNEL] {
        let n = self.n;
        let mut t0 = 0.0; // block sum
        let mut t1 = 0.0; // cos1-weighted column projection, summed over rows
        let mut s1 = 0.0; // cos1(y)-weighted row sums
        let mut s2 = 0.0; // cos2(y)-weighted row sums
        for dy in 0..n {
            let base = ((i + dy) * frame.width + j) * 3 + ch;
            let mut r0 = 0.0;
            let mut r1 = 0.0;
            for dx in 0..n {
                let v = frame.data[base + dx * 3] as f64;
                r0 += v;
                r1 += self.cos1[dx] * v;
            }
            t0 += r0;
            t1 += r1;
            s1 += self.cos1[dy] * r0;
            s2 += self.cos2[dy] * r0;
        }
        let a0 = self.alpha0;
        let a1 = self.alpha_ac;
        [a0 * a0 * t0, a0 * a1 * t1, a1 * a0 * s1, a1 * a0 * s2]
    }
}

/// Descriptor of the block anchored at `(i, j)`; the block must lie fully
/// inside the frame.
pub fn dct_block(frame: &FrameRgb, anchor: (usize, usize), basis: &DctBasis) -> Descriptor {
    let (i, j) = anchor;
    debug_assert!(i + basis.n <= frame.height && j + basis.n <= frame.width);
    let mut d = [0.0; DESCRIPTOR_DIM];
    for (ch, out) in d.chunks_exact_mut(COEFFS_PER_CHANNEL).enumerate() {
        out.copy_from_slice(&basis.channel_coeffs(frame, i, j, ch));
    }
    d
}

/// Below this much per-frame block work (total pixels across blocks), thread
/// fan-out costs more than it saves and the sequential path is used.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 18;

impl BlockGrid {
    /// Whether per-anchor work on this grid is worth fanning out.
    pub fn parallel_worthwhile(&self) -> bool {
        self.anchors.len() * self.block_size * self.block_size >= PARALLEL_WORK_THRESHOLD
    }
}

/// Descriptors for every anchor, in anchor order. Extraction per anchor is
/// independent, so large grids fan out to the rayon pool; output ordering
/// and values do not depend on pool size.
pub fn describe_frame(frame: &FrameRgb, grid: &BlockGrid, basis: &DctBasis) -> Vec<Descriptor> {
    if grid.parallel_worthwhile() {
        grid.anchors
            .par_iter()
            .map(|&anchor| dct_block(frame, anchor, basis))
            .collect()
    } else {
        grid.anchors
            .iter()
            .map(|&anchor| dct_block(frame, anchor, basis))
            .collect()
    }
}
