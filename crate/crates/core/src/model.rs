//! Per-block-location background model: a diagonal Gaussian over descriptors
//! with a cached decision threshold, trained robustly so that moving objects
//! in the training footage do not corrupt the estimate.
//!
//! All likelihood comparisons happen in the log domain; the density itself
//! underflows 64-bit floats once descriptors drift far from the mean.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::Config;
use crate::descriptor::{dct_block, BlockGrid, DctBasis, Descriptor, DESCRIPTOR_DIM};
use crate::imaging::FrameRgb;

const LOG_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// EM internals for the two-component bootstrap fit. Deterministic init so
/// training is reproducible run to run.
const EM_MAX_ITERS: usize = 50;
const EM_REL_TOL: f64 = 1e-6;
const EM_INIT_SPLIT: f64 = 0.1;
/// Weight gap above which the dominant component is trusted to be the
/// background and the other treated as transient foreground.
const WEIGHT_GAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("learning rate {0} outside (0, 1)")]
    BadLearningRate(f64),
    #[error("model snapshot: {0}")]
    Snapshot(String),
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrevLabel {
    Foreground,
    Background,
    Unset,
}

/// Which training branch produced a block's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainBranch {
    /// Two-component fit with a clear weight gap; dominant component kept.
    Dominant,
    /// No clear gap; single Gaussian over all samples.
    Pooled,
}

/// Diagonal Gaussian for one block location plus the previous-frame state
/// consumed by the temporal-correlation check.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub mu: Descriptor,
    pub var: Descriptor,
    pub log_threshold: f64,
    pub prev_descriptor: Descriptor,
    pub prev_label: PrevLabel,
}

/// Log of the diagonal-Gaussian density at `d`.
pub fn log_likelihood(mu: &Descriptor, var: &Descriptor, d: &Descriptor) -> f64 {
    let mut maha = 0.0;
    let mut logdet = 0.0;
    for k in 0..DESCRIPTOR_DIM {
        let diff = d[k] - mu[k];
        maha += diff * diff / var[k];
        logdet += var[k].ln();
    }
    -0.5 * maha - 0.5 * (DESCRIPTOR_DIM as f64) * LOG_2PI - 0.5 * logdet
}

/// Threshold: the log-likelihood at `mu + 2*sqrt(var)` elementwise, i.e. the
/// 2-sigma surface of the diagonal model. The Mahalanobis term there is
/// always -2*D, so only the normalisation depends on the variances.
fn threshold_for(var: &Descriptor) -> f64 {
    let logdet: f64 = var.iter().map(|v| v.ln()).sum();
    -2.0 * DESCRIPTOR_DIM as f64 - 0.5 * (DESCRIPTOR_DIM as f64) * LOG_2PI - 0.5 * logdet
}

impl BlockModel {
    pub fn new(mu: Descriptor, var: Descriptor) -> Self {
        let log_threshold = threshold_for(&var);
        Self {
            mu,
            var,
            log_threshold,
            prev_descriptor: [0.0; DESCRIPTOR_DIM],
            prev_label: PrevLabel::Unset,
        }
    }

    pub fn log_likelihood(&self, d: &Descriptor) -> f64 {
        log_likelihood(&self.mu, &self.var, d)
    }

    /// Stage-1 verdict: background iff the likelihood clears the cached
    /// threshold. Never calls foreground on its own; the cascade continues.
    pub fn stage1_is_background(&self, d: &Descriptor) -> bool {
        self.log_likelihood(d) >= self.log_threshold
    }

    /// Online update toward `d` with exponential forgetting.
    pub fn adapt(&mut self, d: &Descriptor, rho: f64, variance_floor: f64) {
        debug_assert!(rho > 0.0 && rho < 1.0);
        for k in 0..DESCRIPTOR_DIM {
            let mu_new = (1.0 - rho) * self.mu[k] + rho * d[k];
            let diff = d[k] - mu_new;
            self.mu[k] = mu_new;
            self.var[k] = ((1.0 - rho) * self.var[k] + rho * diff * diff).max(variance_floor);
        }
        self.log_threshold = threshold_for(&self.var);
    }
}

pub fn validate_rho(rho: f64) -> Result<(), ModelError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(ModelError::BadLearningRate(rho))
    }
}

/// Robust per-location estimate: fit a two-component diagonal GMM; when the
/// component weights differ by more than 0.5 adopt the dominant component,
/// otherwise pool all samples into a single Gaussian.
pub fn robust_estimate(
    samples: &[Descriptor],
    variance_floor: f64,
) -> (Descriptor, Descriptor, TrainBranch) {
    let n = samples.len();
    debug_assert!(n >= 1);
    let (pooled_mu, pooled_var) = sample_mean_var(samples, variance_floor);
    if n == 1 {
        // A single sample (smallest rebuild window): the pooled estimate is
        // the sample itself with floored variance.
        return (pooled_mu, pooled_var, TrainBranch::Pooled);
    }

    let fit = fit_two_component(samples, &pooled_mu, &pooled_var, variance_floor);
    if (fit.w1 - fit.w2).abs() > WEIGHT_GAP {
        if fit.w1 >= fit.w2 {
            (fit.mu1, fit.var1, TrainBranch::Dominant)
        } else {
            (fit.mu2, fit.var2, TrainBranch::Dominant)
        }
    } else {
        (pooled_mu, pooled_var, TrainBranch::Pooled)
    }
}

fn sample_mean_var(samples: &[Descriptor], floor: f64) -> (Descriptor, Descriptor) {
    let n = samples.len() as f64;
    let mut mu = [0.0; DESCRIPTOR_DIM];
    for s in samples {
        for k in 0..DESCRIPTOR_DIM {
            mu[k] += s[k];
        }
    }
    for m in mu.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; DESCRIPTOR_DIM];
    for s in samples {
        for k in 0..DESCRIPTOR_DIM {
            let d = s[k] - mu[k];
            var[k] += d * d;
        }
    }
    for v in var.iter_mut() {
        *v = (*v / n).max(floor);
    }
    (mu, var)
}

struct TwoComponentFit {
    w1: f64,
    w2: f64,
    mu1: Descriptor,
    var1: Descriptor,
    mu2: Descriptor,
    var2: Descriptor,
}

/// Per-iteration component cache: the normalisation term and inverse
/// variances move out of the per-sample loop.
struct DiagComponent {
    mu: Descriptor,
    inv_var: Descriptor,
    log_norm: f64,
}

impl DiagComponent {
    fn prepare(mu: &Descriptor, var: &Descriptor) -> Self {
        let logdet: f64 = var.iter().map(|v| v.ln()).sum();
        Self {
            mu: *mu,
            inv_var: core::array::from_fn(|k| 1.0 / var[k]),
            log_norm: -0.5 * (DESCRIPTOR_DIM as f64) * LOG_2PI - 0.5 * logdet,
        }
    }

    #[inline]
    fn log_pdf(&self, s: &Descriptor) -> f64 {
        let mut maha = 0.0;
        for k in 0..DESCRIPTOR_DIM {
            let diff = s[k] - self.mu[k];
            maha += diff * diff * self.inv_var[k];
        }
        -0.5 * maha + self.log_norm
    }
}

fn fit_two_component(
    samples: &[Descriptor],
    pooled_mu: &Descriptor,
    pooled_var: &Descriptor,
    floor: f64,
) -> TwoComponentFit {
    let n = samples.len();
    // Split the pooled mean by a fraction of the pooled std in each
    // direction; asymmetry relative to the data breaks ties deterministically.
    let mut mu1 = *pooled_mu;
    let mut mu2 = *pooled_mu;
    for k in 0..DESCRIPTOR_DIM {
        let s = pooled_var[k].sqrt();
        mu1[k] -= EM_INIT_SPLIT * s;
        mu2[k] += EM_INIT_SPLIT * s;
    }
    let mut var1 = *pooled_var;
    let mut var2 = *pooled_var;
    let mut w1: f64 = 0.5;
    let mut w2: f64 = 0.5;

    let mut resp1 = vec![0.0f64; n];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        // E step in the log domain; log-sum-exp keeps far samples finite.
        let c1 = DiagComponent::prepare(&mu1, &var1);
        let c2 = DiagComponent::prepare(&mu2, &var2);
        let lw1 = w1.ln();
        let lw2 = w2.ln();
        let mut ll = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let l1 = lw1 + c1.log_pdf(s);
            let l2 = lw2 + c2.log_pdf(s);
            let m = l1.max(l2);
            let e1 = (l1 - m).exp();
            let e2 = (l2 - m).exp();
            let z = e1 + e2;
            resp1[i] = e1 / z;
            ll += m + z.ln();
        }

        // M step.
        let r1: f64 = resp1.iter().sum();
        let r2 = n as f64 - r1;
        w1 = r1 / n as f64;
        w2 = r2 / n as f64;
        let mut new_mu1 = [0.0; DESCRIPTOR_DIM];
        let mut new_mu2 = [0.0; DESCRIPTOR_DIM];
        for (i, s) in samples.iter().enumerate() {
            let g1 = resp1[i];
            let g2 = 1.0 - g1;
            for k in 0..DESCRIPTOR_DIM {
                new_mu1[k] += g1 * s[k];
                new_mu2[k] += g2 * s[k];
            }
        }
        if r1 > f64::EPSILON {
            for m in new_mu1.iter_mut() {
                *m /= r1;
            }
            mu1 = new_mu1;
        }
        if r2 > f64::EPSILON {
            for m in new_mu2.iter_mut() {
                *m /= r2;
            }
            mu2 = new_mu2;
        }
        let mut new_var1 = [0.0; DESCRIPTOR_DIM];
        let mut new_var2 = [0.0; DESCRIPTOR_DIM];
        for (i, s) in samples.iter().enumerate() {
            let g1 = resp1[i];
            let g2 = 1.0 - g1;
            for k in 0..DESCRIPTOR_DIM {
                let d1 = s[k] - mu1[k];
                let d2 = s[k] - mu2[k];
                new_var1[k] += g1 * d1 * d1;
                new_var2[k] += g2 * d2 * d2;
            }
        }
        for k in 0..DESCRIPTOR_DIM {
            var1[k] = if r1 > f64::EPSILON {
                (new_var1[k] / r1).max(floor)
            } else {
                pooled_var[k]
            };
            var2[k] = if r2 > f64::EPSILON {
                (new_var2[k] / r2).max(floor)
            } else {
                pooled_var[k]
            };
        }

        if prev_ll.is_finite() {
            let rel = (ll - prev_ll).abs() / prev_ll.abs().max(f64::EPSILON);
            if rel < EM_REL_TOL {
                break;
            }
        }
        prev_ll = ll;
    }

    TwoComponentFit {
        w1,
        w2,
        mu1,
        var1,
        mu2,
        var2,
    }
}

/// One model per grid anchor, plus the configuration that built it.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    pub grid: BlockGrid,
    pub blocks: Vec<BlockModel>,
    pub config: Config,
}

/// How many anchors took each training branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub dominant_blocks: usize,
    pub pooled_blocks: usize,
}

impl BackgroundModel {
    /// Trains one block model per anchor from per-anchor descriptor columns.
    /// `per_anchor[a][t]` is the descriptor of anchor `a` in training frame
    /// `t`.
    pub fn train_from_descriptors(
        per_anchor: &[Vec<Descriptor>],
        grid: BlockGrid,
        config: Config,
    ) -> Result<(Self, TrainStats), ModelError> {
        let frames = per_anchor.first().map_or(0, Vec::len);
        if frames < 2 {
            return Err(ModelError::TooFewFrames(frames));
        }
        let floor = config.variance_floor;
        let results: Vec<(BlockModel, TrainBranch)> = per_anchor
            .par_iter()
            .map(|samples| {
                let (mu, var, branch) = robust_estimate(samples, floor);
                (BlockModel::new(mu, var), branch)
            })
            .collect();
        Ok(Self::assemble(results, grid, config))
    }

    /// Trains one block model per anchor directly from the training frames.
    /// Each anchor extracts its own descriptor column and fits it, so the
    /// working set per task is one column (frames x 12 values) instead of a
    /// whole-grid descriptor table; results are identical to
    /// [`Self::train_from_descriptors`] over [`describe_frame`] output.
    pub fn train_from_frames(
        frames: &[FrameRgb],
        grid: BlockGrid,
        basis: &DctBasis,
        config: Config,
    ) -> Result<(Self, TrainStats), ModelError> {
        if frames.len() < 2 {
            return Err(ModelError::TooFewFrames(frames.len()));
        }
        let floor = config.variance_floor;
        let fit_anchor = |&anchor: &(usize, usize)| {
            let samples: Vec<Descriptor> = frames
                .iter()
                .map(|frame| dct_block(frame, anchor, basis))
                .collect();
            let (mu, var, branch) = robust_estimate(&samples, floor);
            (BlockModel::new(mu, var), branch)
        };
        let results: Vec<(BlockModel, TrainBranch)> = if grid.parallel_worthwhile() {
            grid.anchors.par_iter().map(fit_anchor).collect()
        } else {
            grid.anchors.iter().map(fit_anchor).collect()
        };
        Ok(Self::assemble(results, grid, config))
    }

    fn assemble(
        results: Vec<(BlockModel, TrainBranch)>,
        grid: BlockGrid,
        config: Config,
    ) -> (Self, TrainStats) {
        let mut stats = TrainStats::default();
        let mut blocks = Vec::with_capacity(results.len());
        for (block, branch) in results {
            match branch {
                TrainBranch::Dominant => stats.dominant_blocks += 1,
                TrainBranch::Pooled => stats.pooled_blocks += 1,
            }
            blocks.push(block);
        }
        (
            Self {
                grid,
                blocks,
                config,
            },
            stats,
        )
    }

    /// Re-estimates every mean from the buffered frames while keeping the
    /// variances as they are; used after a scene change. Thresholds are
    /// recomputed and the temporal state cleared.
    pub fn reestimate_means(&mut self, frames: &[FrameRgb], basis: &DctBasis) {
        let floor = self.config.variance_floor;
        let estimate = |&anchor: &(usize, usize)| {
            let samples: Vec<Descriptor> = frames
                .iter()
                .map(|frame| dct_block(frame, anchor, basis))
                .collect();
            robust_estimate(&samples, floor).0
        };
        let new_mus: Vec<Descriptor> = if self.grid.parallel_worthwhile() {
            self.grid.anchors.par_iter().map(estimate).collect()
        } else {
            self.grid.anchors.iter().map(estimate).collect()
        };
        for (block, mu) in self.blocks.iter_mut().zip(new_mus) {
            block.mu = mu;
            block.log_threshold = threshold_for(&block.var);
            block.prev_label = PrevLabel::Unset;
            block.prev_descriptor = [0.0; DESCRIPTOR_DIM];
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshot format: little-endian binary, versioned. Layout:
//   magic "FGBM", version u32,
//   config (12 f64 in Config field order),
//   grid width/height/block_size/advance as u32,
//   anchor count u64, then per anchor mu[12] f64 + var[12] f64.
// f64 bits are preserved verbatim, so round-trips are lossless.
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 4] = b"FGBM";
const SNAPSHOT_VERSION: u32 = 1;

impl BackgroundModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        for v in self.config.as_f64_fields() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [
            self.grid.width,
            self.grid.height,
            self.grid.block_size,
            self.grid.advance,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        for b in &self.blocks {
            for v in b.mu.iter().chain(b.var.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(ModelError::Snapshot("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(ModelError::Snapshot(format!(
                "unsupported version {version}"
            )));
        }
        let mut fields = [0.0f64; Config::FIELD_COUNT];
        for f in fields.iter_mut() {
            *f = read_f64(&mut r)?;
        }
        let config = Config::from_f64_fields(&fields)
            .map_err(|e| ModelError::Snapshot(format!("bad config: {e}")))?;
        let width = read_u32(&mut r)? as usize;
        let height = read_u32(&mut r)? as usize;
        let block_size = read_u32(&mut r)? as usize;
        let advance = read_u32(&mut r)? as usize;
        let grid = crate::descriptor::make_grid(width, height, block_size, advance)
            .map_err(|e| ModelError::Snapshot(format!("bad grid: {e}")))?;
        let count = read_u64(&mut r)? as usize;
        if count != grid.anchors.len() {
            return Err(ModelError::Snapshot(format!(
                "anchor count {count} does not match grid ({})",
                grid.anchors.len()
            )));
        }
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let mut mu = [0.0; DESCRIPTOR_DIM];
            let mut var = [0.0; DESCRIPTOR_DIM];
            for m in mu.iter_mut() {
                *m = read_f64(&mut r)?;
            }
            for v in var.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            blocks.push(BlockModel::new(mu, var));
        }
        Ok(Self {
            grid,
            blocks,
            config,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_bits(u64::from_le_bytes(b)))
}
