//! Pixel-level mask integration. Every pixel is covered by one or more
//! blocks; the fraction of covering blocks labelled foreground is the
//! foreground probability, thresholded (default 0.90) into a binary mask.
//! Misclassified individual blocks are voted down by their neighbours, so no
//! morphological cleanup is applied anywhere downstream.

use crate::cascade::BlockLabel;
use crate::descriptor::BlockGrid;
use crate::imaging::MaskGray;

/// Per-pixel vote counters for one frame geometry.
#[derive(Debug, Clone)]
pub struct VoteGrid {
    pub width: usize,
    pub height: usize,
    pub fg_votes: Vec<u32>,
    pub total_votes: Vec<u32>,
}

/// Number of blocks covering each pixel. Depends only on geometry, so it is
/// computed once and reused for every frame.
pub fn precompute_totals(grid: &BlockGrid) -> Vec<u32> {
    let mut totals = vec![0u32; grid.width * grid.height];
    let n = grid.block_size;
    for &(i, j) in &grid.anchors {
        for y in i..i + n {
            let row = y * grid.width;
            for x in j..j + n {
                totals[row + x] += 1;
            }
        }
    }
    debug_assert!(totals.iter().all(|&t| t >= 1), "grid covers every pixel");
    totals
}

/// Accumulates foreground votes for one frame's labels.
pub fn accumulate_votes(labels: &[BlockLabel], grid: &BlockGrid, totals: &[u32]) -> VoteGrid {
    assert_eq!(labels.len(), grid.anchors.len(), "one label per anchor");
    let mut fg = vec![0u32; grid.width * grid.height];
    let n = grid.block_size;
    for (&(i, j), label) in grid.anchors.iter().zip(labels) {
        if label.is_foreground() {
            for y in i..i + n {
                let row = y * grid.width;
                for x in j..j + n {
                    fg[row + x] += 1;
                }
            }
        }
    }
    VoteGrid {
        width: grid.width,
        height: grid.height,
        fg_votes: fg,
        total_votes: totals.to_vec(),
    }
}

/// Thresholds a vote grid into a binary mask: foreground iff the vote
/// fraction reaches `vote_threshold`. Border pixels use their true (smaller)
/// denominator rather than a padded constant.
pub fn threshold_votes(votes: &VoteGrid, vote_threshold: f64) -> MaskGray {
    let data = votes
        .fg_votes
        .iter()
        .zip(&votes.total_votes)
        .map(|(&fg, &total)| {
            if fg as f64 / total as f64 >= vote_threshold {
                255
            } else {
                0
            }
        })
        .collect();
    MaskGray {
        width: votes.width,
        height: votes.height,
        data,
    }
}

/// Full integration: labels -> votes -> binary mask.
pub fn integrate(
    labels: &[BlockLabel],
    grid: &BlockGrid,
    totals: &[u32],
    vote_threshold: f64,
) -> MaskGray {
    threshold_votes(&accumulate_votes(labels, grid, totals), vote_threshold)
}
