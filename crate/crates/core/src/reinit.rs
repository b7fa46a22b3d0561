//! Scene-change detection and model rebuild. When a large share of the
//! blocks stays foreground for a sustained run of frames, the background has
//! genuinely changed (lights switched on, camera re-aimed); the frames that
//! tripped the detector are then used to re-estimate the model means. The
//! variances are kept as is since the rebuild window holds little data.

use thiserror::Error;

use crate::descriptor::DctBasis;
use crate::imaging::FrameRgb;
use crate::model::BackgroundModel;

#[derive(Debug, Error)]
pub enum ReinitError {
    #[error("rebuild requested with an empty frame buffer")]
    EmptyBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    None,
    Triggered,
}

/// Counts consecutive heavy-foreground frames and buffers them for the
/// rebuild. Any frame below the area threshold resets the run.
#[derive(Debug, Clone)]
pub struct ReinitState {
    pub area_threshold: f64,
    pub window: usize,
    consecutive: usize,
    buffer: Vec<FrameRgb>,
}

impl ReinitState {
    pub fn new(area_threshold: f64, window: usize) -> Self {
        assert!(area_threshold > 0.0 && area_threshold < 1.0);
        assert!(window >= 1);
        Self {
            area_threshold,
            window,
            consecutive: 0,
            buffer: Vec::with_capacity(window),
        }
    }

    pub fn consecutive_heavy_frames(&self) -> usize {
        self.consecutive
    }

    pub fn buffered(&self) -> &[FrameRgb] {
        &self.buffer
    }

    /// Feeds one frame and its foreground block fraction. Returns
    /// `Triggered` on the frame that completes the window.
    pub fn observe(&mut self, frame: &FrameRgb, fg_block_fraction: f64) -> Observation {
        if fg_block_fraction >= self.area_threshold {
            self.consecutive += 1;
            if self.buffer.len() < self.window {
                self.buffer.push(frame.clone());
            }
            if self.consecutive >= self.window {
                return Observation::Triggered;
            }
        } else {
            self.consecutive = 0;
            self.buffer.clear();
        }
        Observation::None
    }

    pub fn clear(&mut self) {
        self.consecutive = 0;
        self.buffer.clear();
    }
}

/// Rebuilds the model means from the buffered frames; variances stay
/// untouched and the temporal state is reset. The caller clears the state.
pub fn rebuild(
    model: &mut BackgroundModel,
    buffered: &[FrameRgb],
    basis: &DctBasis,
) -> Result<(), ReinitError> {
    if buffered.is_empty() {
        return Err(ReinitError::EmptyBuffer);
    }
    model.reestimate_means(buffered, basis);
    Ok(())
}
