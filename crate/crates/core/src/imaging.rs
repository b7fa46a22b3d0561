//! Frame ingestion and mask emission via binary netpbm (PPM P6 / PGM P5).
//!
//! Decoding is bit-exact: no colour transforms, no gamma, no rescaling.
//! Grayscale inputs are replicated across the three channels so the rest of
//! the pipeline always sees RGB data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: unsupported magic {magic:?} (expected P5 or P6)")]
    BadMagic { path: PathBuf, magic: String },
    #[error("{path}: malformed header: {detail}")]
    BadHeader { path: PathBuf, detail: String },
    #[error("{path}: unsupported maxval {maxval} (only 255)")]
    BadMaxval { path: PathBuf, maxval: u32 },
    #[error("{path}: truncated payload (expected {expected} bytes, got {got})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("no files match {pattern:?} under {dir}")]
    EmptySequence { dir: PathBuf, pattern: String },
    #[error("bad glob pattern {pattern:?}: {detail}")]
    BadPattern { pattern: String, detail: String },
    #[error("{path}: dimensions {got_w}x{got_h} differ from first frame {want_w}x{want_h}")]
    DimensionMismatch {
        path: PathBuf,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// An RGB frame: row-major `(r, g, b)` byte triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRgb {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl FrameRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "frame payload length");
        Self {
            width,
            height,
            data,
        }
    }

    /// Uniform-colour frame, mostly for tests and synthetic scenes.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

/// A binary foreground mask: 0 = background, 255 = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGray {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl MaskGray {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "mask payload length");
        debug_assert!(data.iter().all(|&v| v == 0 || v == 255));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Fraction of pixels labelled foreground.
    pub fn foreground_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let fg = self.data.iter().filter(|&&v| v != 0).count();
        fg as f64 / self.data.len() as f64
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads header tokens (dimensions, maxval), skipping whitespace and `#`
/// comment lines, which netpbm allows between header fields.
fn read_header_token(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<u32, ImageError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::BadHeader {
            path: path.to_path_buf(),
            detail: "expected decimal header field".into(),
        });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::BadHeader {
            path: path.to_path_buf(),
            detail: "header field is not a valid number".into(),
        })
}

fn decode_pnm(bytes: &[u8], path: &Path) -> Result<FrameRgb, ImageError> {
    if bytes.len() < 2 {
        return Err(ImageError::BadHeader {
            path: path.to_path_buf(),
            detail: "file shorter than a magic number".into(),
        });
    }
    let magic = &bytes[..2];
    let channels = match magic {
        b"P6" => 3usize,
        b"P5" => 1usize,
        _ => {
            return Err(ImageError::BadMagic {
                path: path.to_path_buf(),
                magic: String::from_utf8_lossy(magic).into_owned(),
            })
        }
    };
    let mut pos = 2;
    let width = read_header_token(bytes, &mut pos, path)? as usize;
    let height = read_header_token(bytes, &mut pos, path)? as usize;
    let maxval = read_header_token(bytes, &mut pos, path)?;
    if maxval != 255 {
        return Err(ImageError::BadMaxval {
            path: path.to_path_buf(),
            maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(ImageError::BadHeader {
            path: path.to_path_buf(),
            detail: "zero dimension".into(),
        });
    }
    // Exactly one whitespace byte separates the maxval from the raw payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::BadHeader {
            path: path.to_path_buf(),
            detail: "missing whitespace after maxval".into(),
        });
    }
    pos += 1;
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            path: path.to_path_buf(),
            expected,
            got: payload.len(),
        });
    }
    let payload = &payload[..expected];
    let data = if channels == 3 {
        payload.to_vec()
    } else {
        // Grayscale: replicate into the three channels.
        let mut data = Vec::with_capacity(expected * 3);
        for &v in payload {
            data.extend_from_slice(&[v, v, v]);
        }
        data
    };
    Ok(FrameRgb {
        width,
        height,
        data,
    })
}

/// Decodes a binary PPM (P6) or PGM (P5) file with maxval 255.
pub fn load_frame(path: impl AsRef<Path>) -> Result<FrameRgb, ImageError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| {
            let mut r = BufReader::new(f);
            r.read_to_end(&mut bytes)
        })
        .map_err(|e| io_err(path, e))?;
    decode_pnm(&bytes, path)
}

/// Loads a mask file (P5 or P6). Any nonzero pixel is treated as foreground,
/// which is the convention ground-truth datasets follow.
pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskGray, ImageError> {
    let frame = load_frame(path)?;
    let data = frame
        .data
        .chunks_exact(3)
        .map(|px| {
            if px[0] != 0 || px[1] != 0 || px[2] != 0 {
                255
            } else {
                0
            }
        })
        .collect();
    Ok(MaskGray {
        width: frame.width,
        height: frame.height,
        data,
    })
}

/// Loads every frame in `dir` whose file name matches `pattern` (a glob such
/// as `*.ppm`), in lexicographic file-name order regardless of how the
/// filesystem enumerates entries. All frames must share dimensions.
pub fn load_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<FrameRgb>, ImageError> {
    let paths = sequence_paths(dir, pattern)?;
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            let first: &FrameRgb = first;
            if frame.width != first.width || frame.height != first.height {
                return Err(ImageError::DimensionMismatch {
                    path: path.clone(),
                    got_w: frame.width,
                    got_h: frame.height,
                    want_w: first.width,
                    want_h: first.height,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Matching file paths in lexicographic file-name order.
pub fn sequence_paths(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<PathBuf>, ImageError> {
    let dir = dir.as_ref();
    let matcher = glob::Pattern::new(pattern).map_err(|e| ImageError::BadPattern {
        pattern: pattern.into(),
        detail: e.to_string(),
    })?;
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_owned(),
            None => continue,
        };
        if matcher.matches(&name) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(ImageError::EmptySequence {
            dir: dir.to_path_buf(),
            pattern: pattern.into(),
        });
    }
    Ok(paths)
}

/// Writes a mask as binary PGM (P5, maxval 255); payload bytes are emitted
/// exactly as stored.
pub fn write_mask(mask: &MaskGray, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", mask.width, mask.height)?;
        w.write_all(&mask.data)?;
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

/// Writes a frame as binary PPM (P6, maxval 255).
pub fn write_frame(frame: &FrameRgb, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P6\n{} {}\n255\n", frame.width, frame.height)?;
        w.write_all(&frame.data)?;
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_p6_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let frame = FrameRgb::filled(2, 2, [10, 20, 30]);
        write_frame(&frame, &path).unwrap();
        let back = load_frame(&path).unwrap();
        assert_eq!(back, frame);
        assert_eq!(back.pixel(1, 1), [10, 20, 30]);
    }

    #[test]
    fn p5_replicates_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        std::fs::write(&path, b"P5\n1 1\n255\n\x07").unwrap();
        let frame = load_frame(&path).unwrap();
        assert_eq!(frame.pixel(0, 0), [7, 7, 7]);
    }

    #[test]
    fn mask_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for i in 0..100 {
            let (w, h) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let data: Vec<u8> = (0..w * h)
                .map(|_| if rng.gen_bool(0.5) { 255 } else { 0 })
                .collect();
            let mask = MaskGray::new(w, h, data);
            let path = dir.path().join(format!("m{i}.pgm"));
            write_mask(&mask, &path).unwrap();
            let back = load_mask(&path).unwrap();
            assert_eq!(back, mask);
        }
    }

    #[test]
    fn load_mask_binarizes_nonzero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n3 1\n255\n\x00\x80\xff").unwrap();
        let mask = load_mask(&path).unwrap();
        assert_eq!(mask.data, vec![0, 255, 255]);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P3\n1 1\n255\n1 2 3\n").unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(ImageError::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_bad_maxval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.ppm");
        std::fs::write(&path, b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(ImageError::BadMaxval { maxval: 65535, .. })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ppm");
        std::fs::write(&path, b"P6\n2 2\n255\n\x01\x02\x03").unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(ImageError::Truncated { expected: 12, .. })
        ));
    }

    #[test]
    fn sequence_is_lexicographic_and_checks_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        // Create out of order so enumeration order cannot be relied on.
        for (name, shade) in [("b_01.ppm", 2u8), ("a_10.ppm", 1), ("a_02.ppm", 0)] {
            write_frame(
                &FrameRgb::filled(3, 2, [shade, 0, 0]),
                dir.path().join(name),
            )
            .unwrap();
        }
        let frames = load_sequence(dir.path(), "*.ppm").unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[0].pixel(0, 0)[0], 0); // a_02
        assert_eq!(frames[1].pixel(0, 0)[0], 1); // a_10
        assert_eq!(frames[2].pixel(0, 0)[0], 2); // b_01

        write_frame(&FrameRgb::filled(4, 2, [0, 0, 0]), dir.path().join("c.ppm")).unwrap();
        let err = load_sequence(dir.path(), "*.ppm").unwrap_err();
        assert!(matches!(
            err,
            ImageError::DimensionMismatch { got_w: 4, .. }
        ));
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequence(dir.path(), "*.ppm"),
            Err(ImageError::EmptySequence { .. })
        ));
    }

    proptest! {
        #[test]
        fn frame_round_trip(w in 1usize..12, h in 1usize..12, seed in 0u64..1000) {
            let dir = tempfile::tempdir().unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
            let frame = FrameRgb::new(w, h, data);
            let path = dir.path().join("f.ppm");
            write_frame(&frame, &path).unwrap();
            prop_assert_eq!(load_frame(&path).unwrap(), frame);
        }
    }
}
