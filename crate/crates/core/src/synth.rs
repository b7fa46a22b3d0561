//! Synthetic sequence generator with exact ground truth. Scenes provide the
//! phenomena that stress a background model — sensor noise, periodic
//! background motion, global illumination ramps, abrupt scene swaps, moving
//! objects — while the per-frame masks and centroids stay exact by
//! construction.
//!
//! Scripts are TOML: scene-level keys plus `[background]`, repeated
//! `[[object]]`, `[[gain]]` and `[[switch]]` tables. See the README for the
//! full format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::imaging::{FrameRgb, MaskGray};
use crate::metrics::TrackSet;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("script parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid script:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("script i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Background {
    /// Uniform colour everywhere.
    Constant { color: [u8; 3] },
    /// Per-pixel sinusoidal intensity modulation around a base colour: a
    /// controllable stand-in for waving vegetation or water.
    Flicker {
        color: [u8; 3],
        amplitude: f64,
        period: f64,
    },
    /// Static per-pixel pattern derived from the scene seed.
    Textured { color: [u8; 3], spread: u8 },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObjectEvent {
    /// Width and height in pixels.
    pub size: [usize; 2],
    pub color: [u8; 3],
    /// Top-left corner at the enter frame.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// First frame the object is visible.
    pub enter: usize,
    /// First frame the object is gone again (exclusive).
    pub exit: usize,
    /// Optional explicit id; defaults to the object's index.
    pub id: Option<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GainEvent {
    /// Gain ramps linearly from 1.0 at `from` to `factor` at `to`, then
    /// holds `factor` for the rest of the sequence.
    pub from: usize,
    pub to: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SwitchEvent {
    /// From this frame on, the background is replaced.
    pub frame: usize,
    pub background: Background,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub background: Background,
    #[serde(default, rename = "object")]
    pub objects: Vec<ObjectEvent>,
    #[serde(default, rename = "gain")]
    pub gains: Vec<GainEvent>,
    #[serde(default, rename = "switch")]
    pub switches: Vec<SwitchEvent>,
}

impl SceneScript {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let script: SceneScript = toml::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SynthError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut problems = Vec::new();
        if self.width == 0 || self.height == 0 {
            problems.push("frame dimensions must be positive".to_string());
        }
        if self.frames == 0 {
            problems.push("sequence length must be positive".to_string());
        }
        if self.noise_sigma < 0.0 {
            problems.push(format!("noise_sigma {} is negative", self.noise_sigma));
        }
        let mut seen_ids = std::collections::HashSet::new();
        for (idx, obj) in self.objects.iter().enumerate() {
            let name = obj.id.clone().unwrap_or_else(|| format!("object #{idx}"));
            let effective_id = obj.id.clone().unwrap_or_else(|| format!("obj{idx}"));
            if !seen_ids.insert(effective_id.clone()) {
                problems.push(format!("duplicate object id {effective_id:?}"));
            }
            if obj.size[0] == 0 || obj.size[1] == 0 {
                problems.push(format!("{name}: zero size"));
            }
            if obj.enter >= obj.exit {
                problems.push(format!(
                    "{name}: enter {} not before exit {}",
                    obj.enter, obj.exit
                ));
            }
            if obj.exit > self.frames {
                problems.push(format!(
                    "{name}: exit {} beyond sequence length {}",
                    obj.exit, self.frames
                ));
            }
            for frame in obj.enter..obj.exit.min(self.frames) {
                let (x, y) = obj.position(frame);
                let in_bounds = x >= 0
                    && y >= 0
                    && (x as usize + obj.size[0]) <= self.width
                    && (y as usize + obj.size[1]) <= self.height;
                if !in_bounds {
                    problems.push(format!(
                        "{name}: leaves the frame at frame {frame} (top-left {x},{y})"
                    ));
                    break;
                }
            }
        }
        for (idx, gain) in self.gains.iter().enumerate() {
            if gain.from > gain.to {
                problems.push(format!(
                    "gain #{idx}: from {} after to {}",
                    gain.from, gain.to
                ));
            }
            if gain.factor <= 0.0 {
                problems.push(format!("gain #{idx}: factor {} not positive", gain.factor));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Invalid(problems))
        }
    }
}

impl ObjectEvent {
    /// Integer top-left corner at a frame, rounding the linear motion.
    fn position(&self, frame: usize) -> (i64, i64) {
        let dt = (frame - self.enter) as f64;
        (
            (self.start[0] + self.velocity[0] * dt).round() as i64,
            (self.start[1] + self.velocity[1] * dt).round() as i64,
        )
    }

    /// Centroid of the rendered footprint (mean pixel coordinate).
    fn centroid(&self, frame: usize) -> (f64, f64) {
        let (x, y) = self.position(frame);
        (
            x as f64 + (self.size[0] as f64 - 1.0) / 2.0,
            y as f64 + (self.size[1] as f64 - 1.0) / 2.0,
        )
    }
}

/// Static per-pixel texture offsets for a `Textured` background, derived
/// deterministically from the scene seed so the pattern never moves.
fn texture_offsets(width: usize, height: usize, spread: u8, seed: u64) -> Vec<[i16; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7874);
    let spread = spread as i16;
    (0..width * height)
        .map(|_| {
            [
                rng.gen_range(-spread..=spread),
                rng.gen_range(-spread..=spread),
                rng.gen_range(-spread..=spread),
            ]
        })
        .collect()
}

struct BackgroundPainter {
    kind: Background,
    texture: Option<Vec<[i16; 3]>>,
}

impl BackgroundPainter {
    fn new(kind: Background, width: usize, height: usize, seed: u64, salt: u64) -> Self {
        let texture = match &kind {
            Background::Textured { spread, .. } => Some(texture_offsets(
                width,
                height,
                *spread,
                seed.wrapping_add(salt),
            )),
            _ => None,
        };
        Self { kind, texture }
    }

    fn pixel(&self, idx: usize, x: usize, y: usize, frame: usize) -> [f64; 3] {
        match &self.kind {
            Background::Constant { color } => color.map(f64::from),
            Background::Flicker {
                color,
                amplitude,
                period,
            } => {
                // Phase varies per pixel so neighbouring pixels do not move
                // in lockstep.
                let phase = (x as f64 * 0.7 + y as f64 * 1.3).sin() * std::f64::consts::PI;
                let w = 2.0 * std::f64::consts::PI * frame as f64 / period.max(1.0);
                let wobble = amplitude * (w + phase).sin();
                color.map(|c| f64::from(c) + wobble)
            }
            Background::Textured { color, .. } => {
                let offsets = self.texture.as_ref().expect("texture precomputed")[idx];
                [
                    f64::from(color[0]) + f64::from(offsets[0]),
                    f64::from(color[1]) + f64::from(offsets[1]),
                    f64::from(color[2]) + f64::from(offsets[2]),
                ]
            }
        }
    }
}

/// Rendered scene: frames, exact masks, and ground-truth centroid tracks.
pub struct Rendered {
    pub frames: Vec<FrameRgb>,
    pub masks: Vec<MaskGray>,
    pub tracks: TrackSet,
}

pub fn render(script: &SceneScript) -> Result<Rendered, SynthError> {
    script.validate()?;
    let w = script.width;
    let h = script.height;

    // Background painters in switch order; index 0 is the initial one.
    let mut painters = vec![BackgroundPainter::new(
        script.background.clone(),
        w,
        h,
        script.seed,
        0,
    )];
    let mut switches: Vec<(usize, usize)> = Vec::new(); // (frame, painter idx)
    let mut ordered = script.switches.clone();
    ordered.sort_by_key(|s| s.frame);
    for (k, sw) in ordered.iter().enumerate() {
        painters.push(BackgroundPainter::new(
            sw.background.clone(),
            w,
            h,
            script.seed,
            k as u64 + 1,
        ));
        switches.push((sw.frame, k + 1));
    }

    let mut frames = Vec::with_capacity(script.frames);
    let mut masks = Vec::with_capacity(script.frames);
    let mut tracks = TrackSet::default();

    for f in 0..script.frames {
        let painter_idx = switches
            .iter()
            .rev()
            .find(|&&(at, _)| f >= at)
            .map_or(0, |&(_, idx)| idx);
        let painter = &painters[painter_idx];

        let mut gain = 1.0;
        for g in &script.gains {
            if f >= g.from {
                let t = if f >= g.to || g.to == g.from {
                    1.0
                } else {
                    (f - g.from) as f64 / (g.to - g.from) as f64
                };
                gain *= 1.0 + t * (g.factor - 1.0);
            }
        }

        // Fresh noise stream per frame index: frames can be rendered in any
        // order (or in parallel) and still come out identical.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(script.seed);
        noise_rng.set_stream(f as u64 + 1);
        let noise = if script.noise_sigma > 0.0 {
            Some(Normal::new(0.0, script.noise_sigma).expect("sigma validated"))
        } else {
            None
        };

        let mut data = vec![0u8; w * h * 3];
        let mut mask = MaskGray::zeros(w, h);

        for y in 0..h {
            for x in 0..w {
                let idx = y * w + x;
                let mut rgb = painter.pixel(idx, x, y, f);
                for c in rgb.iter_mut() {
                    *c *= gain;
                }
                let base = idx * 3;
                for c in 0..3 {
                    let mut v = rgb[c];
                    if let Some(n) = &noise {
                        v += n.sample(&mut noise_rng);
                    }
                    data[base + c] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }

        for (oi, obj) in script.objects.iter().enumerate() {
            if f < obj.enter || f >= obj.exit {
                continue;
            }
            let (ox, oy) = obj.position(f);
            for dy in 0..obj.size[1] {
                for dx in 0..obj.size[0] {
                    let x = ox as usize + dx;
                    let y = oy as usize + dy;
                    let base = (y * w + x) * 3;
                    data[base..base + 3].copy_from_slice(&obj.color);
                    mask.set(x, y, 255);
                }
            }
            let id = obj.id.clone().unwrap_or_else(|| format!("obj{oi}"));
            tracks.insert(f as u64, id, obj.centroid(f));
        }

        frames.push(FrameRgb::new(w, h, data));
        masks.push(mask);
    }

    Ok(Rendered {
        frames,
        masks,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_script() -> SceneScript {
        SceneScript {
            width: 40,
            height: 30,
            frames: 10,
            seed: 5,
            noise_sigma: 0.0,
            background: Background::Constant {
                color: [90, 110, 90],
            },
            objects: vec![],
            gains: vec![],
            switches: vec![],
        }
    }

    #[test]
    fn static_scene_renders_identical_frames_and_empty_masks() {
        let rendered = render(&base_script()).unwrap();
        assert_eq!(rendered.frames.len(), 10);
        for f in &rendered.frames[1..] {
            assert_eq!(f, &rendered.frames[0]);
        }
        for m in &rendered.masks {
            assert!(m.data.iter().all(|&v| v == 0));
        }
        assert!(rendered.tracks.frames.is_empty());
    }

    #[test]
    fn moving_object_centroid_advances_one_pixel_per_frame() {
        let mut script = base_script();
        script.objects.push(ObjectEvent {
            size: [10, 10],
            color: [200, 40, 40],
            start: [2.0, 5.0],
            velocity: [1.0, 0.0],
            enter: 0,
            exit: 10,
            id: Some("car".into()),
        });
        let rendered = render(&script).unwrap();
        for f in 0..10u64 {
            let pts = rendered.tracks.frame(f);
            assert_eq!(pts.len(), 1);
            let (id, (cx, cy)) = &pts[0];
            assert_eq!(id, "car");
            assert_eq!(*cx, 2.0 + 4.5 + f as f64);
            assert_eq!(*cy, 5.0 + 4.5);
        }
    }

    #[test]
    fn mask_footprint_matches_rendered_rectangle_exactly() {
        let mut script = base_script();
        script.objects.push(ObjectEvent {
            size: [7, 5],
            color: [250, 250, 10],
            start: [11.0, 3.0],
            velocity: [0.5, 0.25],
            enter: 2,
            exit: 9,
            id: None,
        });
        let rendered = render(&script).unwrap();
        for (f, (frame, mask)) in rendered.frames.iter().zip(&rendered.masks).enumerate() {
            for y in 0..30 {
                for x in 0..40 {
                    let is_object = frame.pixel(x, y) == [250, 250, 10];
                    assert_eq!(
                        mask.get(x, y) == 255,
                        is_object,
                        "frame {f} pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn gain_is_illumination_not_foreground() {
        let mut script = base_script();
        script.gains.push(GainEvent {
            from: 2,
            to: 8,
            factor: 1.3,
        });
        let rendered = render(&script).unwrap();
        for m in &rendered.masks {
            assert!(m.data.iter().all(|&v| v == 0));
        }
        // Intensity actually ramps.
        let first = rendered.frames[0].pixel(5, 5)[0] as f64;
        let last = rendered.frames[9].pixel(5, 5)[0] as f64;
        assert!((last / first - 1.3).abs() < 0.02);
    }

    #[test]
    fn render_is_bit_reproducible() {
        let mut script = base_script();
        script.noise_sigma = 3.0;
        script.background = Background::Textured {
            color: [100, 100, 100],
            spread: 25,
        };
        script.switches.push(SwitchEvent {
            frame: 5,
            background: Background::Flicker {
                color: [60, 80, 120],
                amplitude: 6.0,
                period: 7.0,
            },
        });
        let a = render(&script).unwrap();
        let b = render(&script).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa, fb);
        }
        // Noise actually differs across frames.
        assert_ne!(a.frames[0], a.frames[1]);
        // And the switch changed the palette.
        assert_ne!(a.frames[4].pixel(0, 0), a.frames[5].pixel(0, 0));
    }

    #[test]
    fn validate_lists_all_violations() {
        let mut script = base_script();
        script.objects.push(ObjectEvent {
            size: [10, 10],
            color: [1, 2, 3],
            start: [35.0, 5.0], // runs off the right edge
            velocity: [2.0, 0.0],
            enter: 0,
            exit: 12, // also beyond sequence length
            id: Some("runaway".into()),
        });
        script.gains.push(GainEvent {
            from: 5,
            to: 2,
            factor: -1.0,
        });
        match render(&script) {
            Err(SynthError::Invalid(problems)) => {
                assert!(problems.len() >= 3, "{problems:?}");
                assert!(problems.iter().any(|p| p.contains("runaway")));
            }
            other => panic!("expected validation failure, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn rejects_duplicate_object_ids() {
        let mut script = base_script();
        for _ in 0..2 {
            script.objects.push(ObjectEvent {
                size: [4, 4],
                color: [1, 2, 3],
                start: [2.0, 2.0],
                velocity: [0.0, 0.0],
                enter: 0,
                exit: 5,
                id: Some("twin".into()),
            });
        }
        match render(&script) {
            Err(SynthError::Invalid(problems)) => {
                assert!(problems.iter().any(|p| p.contains("duplicate object id")));
            }
            _ => panic!("expected validation failure"),
        }
    }

    #[test]
    fn parses_toml_script() {
        let text = r#"
            width = 64
            height = 48
            frames = 30
            seed = 9
            noise_sigma = 2.0

            [background]
            kind = "textured"
            color = [90, 110, 90]
            spread = 20

            [[object]]
            size = [8, 8]
            color = [200, 50, 50]
            start = [4.0, 4.0]
            velocity = [1.0, 0.0]
            enter = 10
            exit = 30

            [[gain]]
            from = 0
            to = 10
            factor = 1.2

            [[switch]]
            frame = 20
            background = { kind = "constant", color = [10, 10, 10] }
        "#;
        let script = SceneScript::parse(text).unwrap();
        assert_eq!(script.width, 64);
        assert_eq!(script.objects.len(), 1);
        assert_eq!(script.gains.len(), 1);
        assert_eq!(script.switches[0].frame, 20);
        assert!(matches!(
            script.background,
            Background::Textured { spread: 20, .. }
        ));
    }

    #[test]
    fn rejects_unknown_script_keys() {
        let text = "width = 4\nheight = 4\nframes = 1\nwobble = true\n[background]\nkind = \"constant\"\ncolor = [0,0,0]\n";
        assert!(matches!(
            SceneScript::parse(text),
            Err(SynthError::Parse(_))
        ));
    }
}
