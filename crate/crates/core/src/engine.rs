//! Frame pipeline: descriptor extraction, per-block cascade, scene-change
//! bookkeeping, and pixel-level mask integration. Frames must be fed in
//! sequence order (adaptation and the temporal check are stateful); block
//! work inside a frame fans out to the rayon pool without affecting results.

use rayon::prelude::*;
use thiserror::Error;

use crate::cascade::{classify_block, BlockLabel, CascadeStats};
use crate::config::{Config, ConfigError};
use crate::descriptor::{describe_frame, make_grid, DctBasis, GridError};
use crate::imaging::{FrameRgb, MaskGray};
use crate::mask::{integrate, precompute_totals};
use crate::model::{BackgroundModel, ModelError, TrainStats};
use crate::reinit::{rebuild, Observation, ReinitError, ReinitState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reinit(#[from] ReinitError),
    #[error("frame is {got_w}x{got_h} but the model was built for {want_w}x{want_h}")]
    FrameMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("need at least {need} training frames, got {got}")]
    NotEnoughTrainingFrames { need: usize, got: usize },
}

/// Result of segmenting one frame.
pub struct FrameOutput {
    pub mask: MaskGray,
    /// Fraction of blocks labelled foreground; the reinitialisation trigger
    /// works on this, before mask integration.
    pub fg_block_fraction: f64,
    /// True when this frame completed the scene-change window and the model
    /// means were rebuilt. The mask still reflects the pre-rebuild labels.
    pub reinit_triggered: bool,
}

pub struct Segmenter {
    model: BackgroundModel,
    basis: DctBasis,
    totals: Vec<u32>,
    reinit: ReinitState,
    stats: CascadeStats,
    frames_processed: usize,
    reinit_events: Vec<usize>,
}

impl Segmenter {
    /// Trains a background model from the given frames and wraps it in a
    /// ready-to-run segmenter.
    pub fn train(frames: &[FrameRgb], config: Config) -> Result<(Self, TrainStats), EngineError> {
        config.validate()?;
        if frames.len() < 2 {
            return Err(EngineError::NotEnoughTrainingFrames {
                need: 2,
                got: frames.len(),
            });
        }
        let first = &frames[0];
        let grid = make_grid(first.width, first.height, config.block_size, config.advance)?;
        let basis = DctBasis::new(config.block_size);
        for frame in frames {
            if frame.width != first.width || frame.height != first.height {
                return Err(EngineError::FrameMismatch {
                    got_w: frame.width,
                    got_h: frame.height,
                    want_w: first.width,
                    want_h: first.height,
                });
            }
        }
        let (model, stats) = BackgroundModel::train_from_frames(frames, grid, &basis, config)?;
        Ok((Self::from_model(model), stats))
    }

    /// Wraps an existing model (freshly trained or loaded from a snapshot).
    pub fn from_model(model: BackgroundModel) -> Self {
        let basis = DctBasis::new(model.grid.block_size);
        let totals = precompute_totals(&model.grid);
        let reinit = ReinitState::new(model.config.reinit_area, model.config.reinit_window);
        Self {
            model,
            basis,
            totals,
            reinit,
            stats: CascadeStats::default(),
            frames_processed: 0,
            reinit_events: Vec::new(),
        }
    }

    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    pub fn config(&self) -> &Config {
        &self.model.config
    }

    pub fn stats(&self) -> CascadeStats {
        self.stats
    }

    pub fn frames_processed(&self) -> usize {
        self.frames_processed
    }

    /// Frame indices (within this segmenter's lifetime) where a rebuild ran.
    pub fn reinit_events(&self) -> &[usize] {
        &self.reinit_events
    }

    /// Segments one frame and updates every adaptive part of the pipeline.
    pub fn process(&mut self, frame: &FrameRgb) -> Result<FrameOutput, EngineError> {
        let grid = &self.model.grid;
        if frame.width != grid.width || frame.height != grid.height {
            return Err(EngineError::FrameMismatch {
                got_w: frame.width,
                got_h: frame.height,
                want_w: grid.width,
                want_h: grid.height,
            });
        }
        let cfg = self.model.config.clone();
        let descriptors = describe_frame(frame, grid, &self.basis);

        // Each anchor owns its model; large grids fan out, and label/stat
        // pairs merge in anchor order so the result is independent of the
        // pool size.
        let classify = |block: &mut crate::model::BlockModel, d: &crate::descriptor::Descriptor| {
            let mut stats = CascadeStats::default();
            let label = classify_block(
                block,
                d,
                cfg.c1,
                cfg.c2,
                cfg.rho,
                cfg.variance_floor,
                &mut stats,
            );
            (label, stats)
        };
        let results: Vec<(BlockLabel, CascadeStats)> = if self.model.grid.parallel_worthwhile() {
            self.model
                .blocks
                .par_iter_mut()
                .zip(descriptors.par_iter())
                .map(|(block, d)| classify(block, d))
                .collect()
        } else {
            self.model
                .blocks
                .iter_mut()
                .zip(descriptors.iter())
                .map(|(block, d)| classify(block, d))
                .collect()
        };

        let mut labels = Vec::with_capacity(results.len());
        for (label, stats) in &results {
            labels.push(*label);
            self.stats.merge(stats);
        }
        let fg_blocks = labels.iter().filter(|l| l.is_foreground()).count();
        let fg_block_fraction = fg_blocks as f64 / labels.len() as f64;

        let mut reinit_triggered = false;
        if self.reinit.observe(frame, fg_block_fraction) == Observation::Triggered {
            rebuild(&mut self.model, self.reinit.buffered(), &self.basis)?;
            self.reinit.clear();
            self.reinit_events.push(self.frames_processed);
            reinit_triggered = true;
        }

        let mask = integrate(&labels, &self.model.grid, &self.totals, cfg.vote_threshold);
        self.frames_processed += 1;
        Ok(FrameOutput {
            mask,
            fg_block_fraction,
            reinit_triggered,
        })
    }
}
