//! Evaluation: mask similarity (precision / recall / F-measure) and tracking
//! quality (MOTP / MOTA) with optimal truth-to-hypothesis assignment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::imaging::MaskGray;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("track file line {line}: {detail}")]
    BadTrackLine { line: usize, detail: String },
    #[error("track file line {line}: duplicate id {id:?} in frame {frame}")]
    DuplicateId { line: usize, id: String, frame: u64 },
    #[error("track i/o: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Mask scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl MaskScore {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

/// Pixel-level comparison of a predicted mask against ground truth. Any
/// nonzero pixel counts as foreground on either side.
pub fn score_mask(predicted: &MaskGray, truth: &MaskGray) -> Result<MaskScore, MetricsError> {
    if predicted.width != truth.width || predicted.height != truth.height {
        return Err(MetricsError::DimensionMismatch(
            predicted.width,
            predicted.height,
            truth.width,
            truth.height,
        ));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &t) in predicted.data.iter().zip(&truth.data) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(MaskScore::from_counts(tp, fp, fn_))
}

// ---------------------------------------------------------------------------
// Optimal assignment (Munkres / Hungarian, shortest-augmenting-path form)
// ---------------------------------------------------------------------------

/// Minimum-cost assignment on an `n x m` cost matrix with `n <= m`; returns
/// `row -> column`. O(n^2 m).
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based potentials; p[j] = row assigned to column j (0 = none).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

pub type Point = (f64, f64);

fn euclid(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Optimal one-to-one matching of truth points to hypothesis points by total
/// Euclidean distance; matches farther than `gate` are then discarded,
/// leaving both endpoints unmatched. Returns `(truth_idx, hyp_idx)` pairs.
pub fn assign(truth: &[Point], hyps: &[Point], gate: f64) -> Vec<(usize, usize)> {
    if truth.is_empty() || hyps.is_empty() {
        return Vec::new();
    }
    let flipped = truth.len() > hyps.len();
    let (rows, cols): (&[Point], &[Point]) = if flipped {
        (hyps, truth)
    } else {
        (truth, hyps)
    };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| euclid(r, c)).collect())
        .collect();
    let row_to_col = hungarian(&cost);
    let mut pairs = Vec::new();
    for (r, &c) in row_to_col.iter().enumerate() {
        if c == usize::MAX {
            continue;
        }
        let (t, h) = if flipped { (c, r) } else { (r, c) };
        if euclid(truth[t], hyps[h]) <= gate {
            pairs.push((t, h));
        }
    }
    pairs.sort_unstable();
    pairs
}

// ---------------------------------------------------------------------------
// Track sets and CLEAR-MOT scoring
// ---------------------------------------------------------------------------

/// Object positions per frame, for ground truth or hypotheses. Ids are
/// opaque tokens, unique within a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    pub frames: BTreeMap<u64, Vec<(String, Point)>>,
}

impl TrackSet {
    pub fn insert(&mut self, frame: u64, id: impl Into<String>, point: Point) {
        self.frames
            .entry(frame)
            .or_default()
            .push((id.into(), point));
    }

    pub fn frame(&self, frame: u64) -> &[(String, Point)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    /// Parses the `frame,id,x,y` text format; `#` lines are comments.
    pub fn from_text(text: &str) -> Result<Self, MetricsError> {
        let mut set = TrackSet::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(MetricsError::BadTrackLine {
                    line,
                    detail: format!("expected frame,id,x,y: {trimmed:?}"),
                });
            }
            let parse_err = |what: &str| MetricsError::BadTrackLine {
                line,
                detail: format!("bad {what}: {trimmed:?}"),
            };
            let frame: u64 = parts[0].parse().map_err(|_| parse_err("frame index"))?;
            let id = parts[1].to_string();
            let x: f64 = parts[2].parse().map_err(|_| parse_err("x"))?;
            let y: f64 = parts[3].parse().map_err(|_| parse_err("y"))?;
            if set.frame(frame).iter().any(|(other, _)| *other == id) {
                return Err(MetricsError::DuplicateId { line, id, frame });
            }
            set.insert(frame, id, (x, y));
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# frame,object_id,x,y\n");
        for (&frame, entries) in &self.frames {
            for (id, (x, y)) in entries {
                let _ = writeln!(out, "{frame},{id},{x},{y}");
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Per-frame CLEAR-MOT error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub matches: u64,
    pub misses: u64,
    pub false_positives: u64,
    pub mismatches: u64,
    pub ground_truth: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotScore {
    /// Mean matched-pair distance in pixels; 0 when flagged undefined.
    pub motp: f64,
    /// 1 minus the normalised error total; can go negative.
    pub mota: f64,
    /// False when no ground truth object ever appeared.
    pub mota_defined: bool,
    /// False when no match was ever made.
    pub motp_defined: bool,
    pub per_frame: Vec<(u64, FrameCounts)>,
    pub totals: FrameCounts,
}

/// CLEAR-MOT evaluation over a shared frame range. Correspondences persist:
/// a pair matched in the previous frame stays matched while both endpoints
/// exist and remain within the gate; everything else is re-assigned
/// optimally. A ground-truth id switching to a different hypothesis id
/// counts one mismatch at the frame where the switch happens.
pub fn score_tracking(truth: &TrackSet, hyps: &TrackSet, gate: f64) -> MotScore {
    let mut frames: Vec<u64> = truth
        .frames
        .keys()
        .chain(hyps.frames.keys())
        .copied()
        .collect();
    frames.sort_unstable();
    frames.dedup();

    // Last hypothesis id each ground-truth id was matched to, for mismatch
    // counting; persists across frames even when the object goes unmatched.
    let mut last_hyp_for: BTreeMap<String, String> = BTreeMap::new();
    // Active correspondences carried frame to frame.
    let mut active: BTreeMap<String, String> = BTreeMap::new();

    let mut per_frame = Vec::with_capacity(frames.len());
    let mut totals = FrameCounts::default();
    let mut distance_sum = 0.0;

    for &frame in &frames {
        let gt = truth.frame(frame);
        let hy = hyps.frame(frame);
        let mut counts = FrameCounts {
            ground_truth: gt.len() as u64,
            ..FrameCounts::default()
        };

        let mut gt_matched = vec![false; gt.len()];
        let mut hy_matched = vec![false; hy.len()];

        // Keep persisting correspondences that are still valid.
        let mut kept: BTreeMap<String, String> = BTreeMap::new();
        for (gid, hid) in &active {
            let g = gt.iter().position(|(id, _)| id == gid);
            let h = hy.iter().position(|(id, _)| id == hid);
            if let (Some(g), Some(h)) = (g, h) {
                let d = euclid(gt[g].1, hy[h].1);
                if d <= gate {
                    gt_matched[g] = true;
                    hy_matched[h] = true;
                    counts.matches += 1;
                    distance_sum += d;
                    kept.insert(gid.clone(), hid.clone());
                }
            }
        }

        // Optimally assign what remains.
        let free_gt: Vec<usize> = (0..gt.len()).filter(|&g| !gt_matched[g]).collect();
        let free_hy: Vec<usize> = (0..hy.len()).filter(|&h| !hy_matched[h]).collect();
        let gt_pts: Vec<Point> = free_gt.iter().map(|&g| gt[g].1).collect();
        let hy_pts: Vec<Point> = free_hy.iter().map(|&h| hy[h].1).collect();
        for (ti, hi) in assign(&gt_pts, &hy_pts, gate) {
            let g = free_gt[ti];
            let h = free_hy[hi];
            gt_matched[g] = true;
            hy_matched[h] = true;
            counts.matches += 1;
            distance_sum += euclid(gt[g].1, hy[h].1);
            let gid = gt[g].0.clone();
            let hid = hy[h].0.clone();
            if let Some(prev_hid) = last_hyp_for.get(&gid) {
                if *prev_hid != hid {
                    counts.mismatches += 1;
                }
            }
            kept.insert(gid, hid);
        }

        for (gid, hid) in &kept {
            last_hyp_for.insert(gid.clone(), hid.clone());
        }
        active = kept;

        counts.misses = gt.len() as u64 - counts.matches;
        counts.false_positives = hy.len() as u64 - counts.matches;

        totals.matches += counts.matches;
        totals.misses += counts.misses;
        totals.false_positives += counts.false_positives;
        totals.mismatches += counts.mismatches;
        totals.ground_truth += counts.ground_truth;
        per_frame.push((frame, counts));
    }

    let motp_defined = totals.matches > 0;
    let motp = if motp_defined {
        distance_sum / totals.matches as f64
    } else {
        0.0
    };
    let mota_defined = totals.ground_truth > 0;
    let mota = if mota_defined {
        1.0 - (totals.misses + totals.false_positives + totals.mismatches) as f64
            / totals.ground_truth as f64
    } else {
        0.0
    };
    MotScore {
        motp,
        mota,
        mota_defined,
        motp_defined,
        per_frame,
        totals,
    }
}

// ---------------------------------------------------------------------------
// Blob extraction and a minimal hypothesis-track builder
// ---------------------------------------------------------------------------

/// Centroids of 8-connected foreground components with at least `min_area`
/// pixels, enumerated in scanline order of each component's first pixel.
pub fn blobs_from_mask(mask: &MaskGray, min_area: usize) -> Vec<Point> {
    let w = mask.width;
    let h = mask.height;
    let mut visited = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut queue = Vec::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let mut count = 0usize;
        let mut sum_x = 0.0;
        let mut sum_y = 0.0;
        while let Some(idx) = queue.pop() {
            let x = idx % w;
            let y = idx / w;
            count += 1;
            sum_x += x as f64;
            sum_y += y as f64;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask.data[nidx] != 0 && !visited[nidx] {
                        visited[nidx] = true;
                        queue.push(nidx);
                    }
                }
            }
        }
        if count >= min_area {
            blobs.push((sum_x / count as f64, sum_y / count as f64));
        }
    }
    blobs
}

/// Builds hypothesis tracks from per-frame masks: blob centroids linked by
/// nearest-neighbour continuation within `gate`. Enough of a tracker to
/// compare segmentation variants by their effect on the tracking metrics.
pub fn tracks_from_masks<'a>(
    masks: impl IntoIterator<Item = (u64, &'a MaskGray)>,
    min_area: usize,
    gate: f64,
) -> TrackSet {
    let mut out = TrackSet::default();
    let mut next_id = 0u64;
    let mut previous: Vec<(String, Point)> = Vec::new();
    for (frame, mask) in masks {
        let blobs = blobs_from_mask(mask, min_area);
        let prev_pts: Vec<Point> = previous.iter().map(|&(_, p)| p).collect();
        let pairs = assign(&prev_pts, &blobs, gate);
        let mut current: Vec<(String, Point)> = Vec::with_capacity(blobs.len());
        let mut claimed = vec![false; blobs.len()];
        for (pi, bi) in pairs {
            claimed[bi] = true;
            current.push((previous[pi].0.clone(), blobs[bi]));
        }
        for (bi, &blob) in blobs.iter().enumerate() {
            if !claimed[bi] {
                current.push((format!("h{next_id}"), blob));
                next_id += 1;
            }
        }
        for (id, point) in &current {
            out.insert(frame, id.clone(), *point);
        }
        previous = current;
    }
    out
}
