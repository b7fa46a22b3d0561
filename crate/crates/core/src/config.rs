//! Engine configuration. Defaults mirror the published operating point, so a
//! bare invocation runs the reference parameterisation: 8x8 blocks advanced
//! by 1 pixel, a 2-sigma likelihood gate, cosine thresholds C1 = 0.001 and
//! C2 = 0.0005, a 0.90 vote threshold, and reinitialisation after 15
//! consecutive frames that are at least 70% foreground.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {detail}")]
    OutOfRange { field: &'static str, detail: String },
    #[error("config file line {line}: expected key=value, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("config file line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config file line {line}: bad value for {key}: {value:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub block_size: usize,
    pub advance: usize,
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
    pub vote_threshold: f64,
    pub reinit_area: f64,
    pub reinit_window: usize,
    pub training_frames: usize,
    pub variance_floor: f64,
    pub gate: f64,
    pub min_blob_area: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            block_size: 8,
            advance: 1,
            rho: 0.01,
            c1: 0.001,
            c2: 0.0005,
            vote_threshold: 0.90,
            reinit_area: 0.70,
            reinit_window: 15,
            training_frames: 200,
            variance_floor: 1e-4,
            gate: 30.0,
            min_blob_area: 15,
        }
    }
}

fn range_err(field: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange {
        field,
        detail: detail.into(),
    }
}

impl Config {
    pub const FIELD_COUNT: usize = 12;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.block_size == 0 {
            return Err(range_err("block_size", "must be positive"));
        }
        if self.advance == 0 || self.advance > self.block_size {
            return Err(range_err(
                "advance",
                format!("{} outside 1..={}", self.advance, self.block_size),
            ));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(range_err("rho", format!("{} outside (0, 1)", self.rho)));
        }
        if !(0.0..=2.0).contains(&self.c1) {
            return Err(range_err("c1", format!("{} outside [0, 2]", self.c1)));
        }
        if self.c2 < 0.0 || self.c2 > self.c1 {
            return Err(range_err(
                "c2",
                format!("{} must satisfy 0 <= c2 <= c1 ({})", self.c2, self.c1),
            ));
        }
        if !(0.0..=1.0).contains(&self.vote_threshold) {
            return Err(range_err(
                "vote_threshold",
                format!("{} outside [0, 1]", self.vote_threshold),
            ));
        }
        if !(self.reinit_area > 0.0 && self.reinit_area < 1.0) {
            return Err(range_err(
                "reinit_area",
                format!("{} outside (0, 1)", self.reinit_area),
            ));
        }
        if self.reinit_window == 0 {
            return Err(range_err("reinit_window", "must be positive"));
        }
        if self.training_frames < 2 {
            return Err(range_err("training_frames", "need at least 2"));
        }
        if !self.variance_floor.is_finite() || self.variance_floor <= 0.0 {
            return Err(range_err("variance_floor", "must be positive"));
        }
        if !self.gate.is_finite() || self.gate <= 0.0 {
            return Err(range_err("gate", "must be positive"));
        }
        Ok(())
    }

    /// Fixed field order used by the model snapshot.
    pub fn as_f64_fields(&self) -> [f64; Self::FIELD_COUNT] {
        [
            self.block_size as f64,
            self.advance as f64,
            self.rho,
            self.c1,
            self.c2,
            self.vote_threshold,
            self.reinit_area,
            self.reinit_window as f64,
            self.training_frames as f64,
            self.variance_floor,
            self.gate,
            self.min_blob_area as f64,
        ]
    }

    pub fn from_f64_fields(fields: &[f64; Self::FIELD_COUNT]) -> Result<Self, ConfigError> {
        let cfg = Self {
            block_size: fields[0] as usize,
            advance: fields[1] as usize,
            rho: fields[2],
            c1: fields[3],
            c2: fields[4],
            vote_threshold: fields[5],
            reinit_area: fields[6],
            reinit_window: fields[7] as usize,
            training_frames: fields[8] as usize,
            variance_floor: fields[9],
            gate: fields[10],
            min_blob_area: fields[11] as usize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` assignment. Used both by config files and by
    /// command-line overrides, which win by being applied later.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            line,
            key: key.into(),
            value: value.into(),
        };
        match key {
            "block_size" => self.block_size = value.parse().map_err(|_| bad())?,
            "advance" => self.advance = value.parse().map_err(|_| bad())?,
            "rho" => self.rho = value.parse().map_err(|_| bad())?,
            "c1" => self.c1 = value.parse().map_err(|_| bad())?,
            "c2" => self.c2 = value.parse().map_err(|_| bad())?,
            "vote_threshold" => self.vote_threshold = value.parse().map_err(|_| bad())?,
            "reinit_area" => self.reinit_area = value.parse().map_err(|_| bad())?,
            "reinit_window" => self.reinit_window = value.parse().map_err(|_| bad())?,
            "training_frames" => self.training_frames = value.parse().map_err(|_| bad())?,
            "variance_floor" => self.variance_floor = value.parse().map_err(|_| bad())?,
            "gate" => self.gate = value.parse().map_err(|_| bad())?,
            "min_blob_area" => self.min_blob_area = value.parse().map_err(|_| bad())?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                })
            }
        }
        Ok(())
    }

    /// Loads a flat `key = value` file; `#` starts a comment, blank lines are
    /// skipped. Values overwrite the defaults; the result is validated.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ConfigError::BadLine {
                line,
                text: raw.into(),
            })?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
