//! Command-line front end for the block-based foreground segmentation
//! engine: training, segmentation runs, mask and tracking evaluation, a
//! throughput/accuracy benchmark over block advancements, and the synthetic
//! scene renderer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fgseg_core::{
    load_frame, load_mask, score_mask, score_tracking, sequence_paths, tracks_from_masks,
    write_frame, write_mask, BackgroundModel, Config, FrameRgb, MaskGray, SceneScript, Segmenter,
    TrackSet,
};

#[derive(Parser)]
#[command(
    name = "fgseg",
    about = "Block-based foreground segmentation with cascade classification and probabilistic mask voting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a background model from the head of a frame sequence.
    Train(TrainArgs),
    /// Segment a sequence into per-frame foreground masks.
    Run(RunArgs),
    /// Score predicted masks against ground-truth masks (precision/recall/F).
    EvalMasks(EvalMasksArgs),
    /// Score tracking quality (MOTA/MOTP) of blob tracks built from masks.
    EvalTracking(EvalTrackingArgs),
    /// Measure the speed/accuracy trade-off across block advancements.
    Bench(BenchArgs),
    /// Synthetic scene generation.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Render a scene script into frames, ground-truth masks, and tracks.
    Render(SynthRenderArgs),
}

/// Configuration sources: a flat key=value file, then flag overrides on top.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key=value config file (one `key = value` per line, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    advance: Option<usize>,
    /// Learning rate for background adaptation.
    #[arg(long)]
    rho: Option<f64>,
    /// Cosine-distance threshold of the illumination check.
    #[arg(long)]
    c1: Option<f64>,
    /// Cosine-distance threshold of the temporal check.
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    vote_threshold: Option<f64>,
    /// Foreground block fraction that counts as a heavy frame.
    #[arg(long)]
    reinit_area: Option<f64>,
    /// Consecutive heavy frames before the model is rebuilt.
    #[arg(long)]
    reinit_window: Option<usize>,
    #[arg(long)]
    training_frames: Option<usize>,
    #[arg(long)]
    variance_floor: Option<f64>,
    /// Matching gate in pixels for tracking evaluation.
    #[arg(long)]
    gate: Option<f64>,
    #[arg(long)]
    min_blob_area: Option<usize>,
    /// Convenience: derive the reinit window from a frame rate (half a
    /// second of frames). An explicit --reinit-window wins.
    #[arg(long)]
    fps: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => Config::default(),
        };
        if let Some(fps) = self.fps {
            if fps <= 0.0 {
                bail!("--fps must be positive");
            }
            cfg.reinit_window = (fps * 0.5).round().max(1.0) as usize;
        }
        macro_rules! flag {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        flag!(block_size);
        flag!(advance);
        flag!(rho);
        flag!(c1);
        flag!(c2);
        flag!(vote_threshold);
        flag!(reinit_area);
        flag!(reinit_window);
        flag!(training_frames);
        flag!(variance_floor);
        flag!(gate);
        flag!(min_blob_area);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of input frames (binary PPM/PGM).
    #[arg(long)]
    frames: PathBuf,
    /// Glob for frame file names.
    #[arg(long, default_value = "*")]
    pattern: String,
    /// Output path for the model snapshot.
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value = "*")]
    pattern: String,
    /// Pre-trained model snapshot; omitted means inline training on the
    /// first `training_frames` frames, masks emitted for the rest.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory for masks (one PGM per processed frame).
    #[arg(long)]
    masks_out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalMasksArgs {
    /// Directory of predicted masks.
    #[arg(long)]
    masks: PathBuf,
    /// Directory of ground-truth masks with matching file names.
    #[arg(long)]
    truth: PathBuf,
    /// Optional file listing the mask file names to evaluate, one per line;
    /// defaults to every file in the truth directory.
    #[arg(long)]
    frame_list: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTrackingArgs {
    /// Directory of predicted masks; frame indices are parsed from trailing
    /// digits in each file name. Repeat the flag to score several sequences
    /// and report the average.
    #[arg(long, required = true)]
    masks: Vec<PathBuf>,
    #[arg(long, default_value = "*")]
    pattern: String,
    /// Ground-truth track file (`frame,id,x,y` per line), one per --masks in
    /// the same order.
    #[arg(long, required = true)]
    truth_tracks: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value = "*")]
    pattern: String,
    /// Comma-separated advancement values to sweep.
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    advances: Vec<usize>,
    /// Optional ground-truth mask directory for F-measure columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthRenderArgs {
    /// Scene script (TOML).
    #[arg(long)]
    script: PathBuf,
    /// Output directory; frames/, truth/ and tracks.txt are created inside.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Run(args) => cmd_run(args),
        Command::EvalMasks(args) => cmd_eval_masks(args),
        Command::EvalTracking(args) => cmd_eval_tracking(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(SynthCommand::Render(args)) => cmd_synth_render(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn frame_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into())
}

/// Frame index from the trailing digit run of a file stem, e.g.
/// `frame_000230.pgm` -> 230. Files without digits fall back to their
/// position in sorted order.
fn frame_index_from_name(path: &Path, fallback: u64) -> u64 {
    let stem = frame_stem(path);
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().unwrap_or(fallback)
}

/// Loads the listed frames; sequences can be long, so callers slice the
/// path list down to what they actually need first.
fn load_frames(paths: &[PathBuf]) -> Result<Vec<FrameRgb>> {
    paths
        .iter()
        .map(|p| load_frame(p).map_err(Into::into))
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let paths = sequence_paths(&args.frames, &args.pattern)?;
    let take = config.training_frames.min(paths.len());
    if take < paths.len() {
        println!("training on the first {take} of {} frames", paths.len());
    } else if take < config.training_frames {
        println!(
            "note: only {take} frames available (training_frames = {})",
            config.training_frames
        );
    }
    let frames = load_frames(&paths[..take])?;
    let (segmenter, stats) = Segmenter::train(&frames, config)?;
    let model = segmenter.model();
    model.save(&args.model_out)?;
    println!(
        "trained {} block models ({} dominant-component, {} pooled single-Gaussian)",
        model.blocks.len(),
        stats.dominant_blocks,
        stats.pooled_blocks
    );
    println!("model written to {}", args.model_out.display());
    Ok(())
}

/// Removes files this invocation created; called when a run fails midway so
/// no partial mask set is left behind.
fn remove_partial(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let paths = sequence_paths(&args.frames, &args.pattern)?;

    let (mut segmenter, first_output) = match &args.model {
        Some(model_path) => {
            let model = BackgroundModel::load(model_path)
                .with_context(|| format!("loading model {}", model_path.display()))?;
            (Segmenter::from_model(model), 0usize)
        }
        None => {
            let take = config.training_frames.min(paths.len().saturating_sub(1));
            let training = load_frames(&paths[..take])?;
            let (seg, stats) = Segmenter::train(&training, config)?;
            println!(
                "inline training on {take} frames ({} dominant, {} pooled)",
                stats.dominant_blocks, stats.pooled_blocks
            );
            (seg, take)
        }
    };

    std::fs::create_dir_all(&args.masks_out)
        .with_context(|| format!("creating {}", args.masks_out.display()))?;

    // Frames stream through one at a time; on any failure the masks written
    // so far are removed.
    let mut written: Vec<PathBuf> = Vec::new();
    let mut fg_sum = 0.0;
    let mut reinit_frames: Vec<u64> = Vec::new();
    let started = Instant::now();
    let processed = paths.len() - first_output;
    for path in &paths[first_output..] {
        let step = || -> Result<()> {
            let frame = load_frame(path)?;
            let out = segmenter
                .process(&frame)
                .with_context(|| path.display().to_string())?;
            let sequence_idx = first_output + written.len();
            if out.reinit_triggered {
                reinit_frames.push(frame_index_from_name(path, sequence_idx as u64));
            }
            fg_sum += out.mask.foreground_fraction();
            let mask_path = args.masks_out.join(format!("{}.pgm", frame_stem(path)));
            write_mask(&out.mask, &mask_path)?;
            written.push(mask_path);
            Ok(())
        }();
        if let Err(e) = step {
            remove_partial(&written);
            return Err(e);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    println!("frames processed: {processed}");
    println!(
        "reinit events: {}",
        if reinit_frames.is_empty() {
            "none".to_string()
        } else {
            format!("{reinit_frames:?}")
        }
    );
    if processed > 0 {
        println!("mean foreground fraction: {:.4}", fg_sum / processed as f64);
        println!("throughput: {:.1} frames/s", processed as f64 / elapsed);
    }
    println!("masks written to {}", args.masks_out.display());
    Ok(())
}

fn cmd_eval_masks(args: EvalMasksArgs) -> Result<()> {
    let names: Vec<String> = match &args.frame_list {
        Some(list) => std::fs::read_to_string(list)
            .with_context(|| format!("reading {}", list.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
        None => {
            let mut names: Vec<String> = std::fs::read_dir(&args.truth)
                .with_context(|| format!("reading {}", args.truth.display()))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_file())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            names
        }
    };
    if names.is_empty() {
        bail!("no ground-truth frames to evaluate");
    }

    let mut sum_f = 0.0;
    let mut sum_p = 0.0;
    let mut sum_r = 0.0;
    println!("{:<28} {:>8} {:>8} {:>8}", "frame", "F", "P", "R");
    for name in &names {
        let predicted =
            load_mask(args.masks.join(name)).with_context(|| format!("predicted mask {name}"))?;
        let truth =
            load_mask(args.truth.join(name)).with_context(|| format!("truth mask {name}"))?;
        let score = score_mask(&predicted, &truth)?;
        sum_f += score.f_measure;
        sum_p += score.precision;
        sum_r += score.recall;
        println!(
            "{name:<28} {:>8.4} {:>8.4} {:>8.4}",
            score.f_measure, score.precision, score.recall
        );
    }
    let n = names.len() as f64;
    println!(
        "{:<28} {:>8.4} {:>8.4} {:>8.4}",
        "mean",
        sum_f / n,
        sum_p / n,
        sum_r / n
    );
    println!("F={:.6} P={:.6} R={:.6}", sum_f / n, sum_p / n, sum_r / n);
    Ok(())
}

/// Tracking score of one mask directory against one ground-truth track
/// file, restricted to the frame range the masks cover.
fn score_one_sequence(
    masks_dir: &Path,
    pattern: &str,
    truth_path: &Path,
    config: &Config,
) -> Result<fgseg_core::MotScore> {
    let truth =
        TrackSet::load(truth_path).with_context(|| format!("loading {}", truth_path.display()))?;
    let mask_paths = sequence_paths(masks_dir, pattern)?;
    let mut masks: BTreeMap<u64, MaskGray> = BTreeMap::new();
    for (k, path) in mask_paths.iter().enumerate() {
        let mask = load_mask(path)?;
        masks.insert(frame_index_from_name(path, k as u64), mask);
    }
    let first = *masks.keys().next().expect("non-empty sequence");
    let last = *masks.keys().last().expect("non-empty sequence");

    let mut truth_in_range = TrackSet::default();
    for (&frame, entries) in &truth.frames {
        if (first..=last).contains(&frame) {
            for (id, point) in entries {
                truth_in_range.insert(frame, id.clone(), *point);
            }
        }
    }

    let hyps = tracks_from_masks(
        masks.iter().map(|(&f, m)| (f, m)),
        config.min_blob_area,
        config.gate,
    );
    let score = score_tracking(&truth_in_range, &hyps, config.gate);

    println!(
        "{}: {} frames ({first}..={last}), matches {}, misses {}, false positives {}, \
         mismatches {}, gt objects {}",
        masks_dir.display(),
        masks.len(),
        score.totals.matches,
        score.totals.misses,
        score.totals.false_positives,
        score.totals.mismatches,
        score.totals.ground_truth
    );
    if !score.mota_defined {
        println!("  MOTA undefined: no ground-truth objects in range");
    }
    if !score.motp_defined {
        println!("  MOTP undefined: no matches were made");
    }
    println!(
        "  MOTA: {:.1}%  MOTP: {:.2} px",
        score.mota * 100.0,
        score.motp
    );
    Ok(score)
}

fn cmd_eval_tracking(args: EvalTrackingArgs) -> Result<()> {
    let config = args.config.resolve()?;
    if args.masks.len() != args.truth_tracks.len() {
        bail!(
            "{} --masks directories but {} --truth-tracks files",
            args.masks.len(),
            args.truth_tracks.len()
        );
    }
    let mut scores = Vec::new();
    for (masks_dir, truth_path) in args.masks.iter().zip(&args.truth_tracks) {
        scores.push(score_one_sequence(
            masks_dir,
            &args.pattern,
            truth_path,
            &config,
        )?);
    }
    let defined: Vec<_> = scores.iter().filter(|s| s.mota_defined).collect();
    if defined.is_empty() {
        bail!("no sequence had ground-truth objects; MOTA undefined");
    }
    let mota = defined.iter().map(|s| s.mota).sum::<f64>() / defined.len() as f64;
    let motp = defined.iter().map(|s| s.motp).sum::<f64>() / defined.len() as f64;
    if scores.len() > 1 {
        println!(
            "average over {} sequences: MOTA {:.1}%  MOTP {:.2} px",
            defined.len(),
            mota * 100.0,
            motp
        );
    }
    println!("MOTA={mota:.6} MOTP={motp:.6}");
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let base = args.config.resolve()?;
    if args.advances.is_empty() {
        bail!("--advances needs at least one value");
    }
    let paths = sequence_paths(&args.frames, &args.pattern)?;
    let take = base.training_frames.min(paths.len().saturating_sub(1));
    if paths.len() - take == 0 {
        bail!("no frames left to benchmark after training");
    }
    let training = load_frames(&paths[..take])?;

    println!(
        "{:>8} {:>12} {:>10}  (training on {take} frames, timing {} frames)",
        "advance",
        "frames/s",
        "F",
        paths.len() - take
    );
    for &advance in &args.advances {
        let config = Config {
            advance,
            ..base.clone()
        };
        config.validate()?;
        let (mut segmenter, _) = Segmenter::train(&training, config)?;
        let mut scored = 0usize;
        let mut sum_f = 0.0;
        let mut elapsed = 0.0;
        for path in &paths[take..] {
            let frame = load_frame(path)?;
            // Time the segmentation alone; frame and truth I/O stay outside.
            let t0 = Instant::now();
            let out = segmenter.process(&frame)?;
            elapsed += t0.elapsed().as_secs_f64();
            if let Some(truth_dir) = &args.truth {
                let truth_path = truth_dir.join(format!("{}.pgm", frame_stem(path)));
                if truth_path.is_file() {
                    let truth = load_mask(&truth_path)?;
                    sum_f += score_mask(&out.mask, &truth)?.f_measure;
                    scored += 1;
                }
            }
        }
        let fps = (paths.len() - take) as f64 / elapsed;
        if scored > 0 {
            let f = sum_f / scored as f64;
            println!("{advance:>8} {fps:>12.1} {f:>10.4}");
            println!("advance={advance} fps={fps:.3} F={f:.6}");
        } else {
            println!("{advance:>8} {fps:>12.1} {:>10}", "-");
            println!("advance={advance} fps={fps:.3}");
        }
    }
    Ok(())
}

fn cmd_synth_render(args: SynthRenderArgs) -> Result<()> {
    let script = SceneScript::load(&args.script)
        .with_context(|| format!("loading script {}", args.script.display()))?;
    let rendered = fgseg_core::render(&script)?;
    let frames_dir = args.out.join("frames");
    let truth_dir = args.out.join("truth");
    std::fs::create_dir_all(&frames_dir)?;
    std::fs::create_dir_all(&truth_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut emit = || -> Result<()> {
        for (k, (frame, mask)) in rendered.frames.iter().zip(&rendered.masks).enumerate() {
            let frame_path = frames_dir.join(format!("frame_{k:06}.ppm"));
            write_frame(frame, &frame_path)?;
            written.push(frame_path);
            let mask_path = truth_dir.join(format!("frame_{k:06}.pgm"));
            write_mask(mask, &mask_path)?;
            written.push(mask_path);
        }
        let tracks_path = args.out.join("tracks.txt");
        rendered.tracks.save(&tracks_path)?;
        written.push(tracks_path);
        Ok(())
    };
    if let Err(e) = emit() {
        remove_partial(&written);
        return Err(e);
    }
    println!(
        "rendered {} frames ({}x{}) into {}",
        rendered.frames.len(),
        script.width,
        script.height,
        args.out.display()
    );
    Ok(())
}
