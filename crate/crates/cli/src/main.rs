use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use everest::evsim::{read_events, write_events, EventSimulator, EventStream, SimConfig};
use everest::image::{load_frame, save_frame};
use everest::metrics::parse_rect;
use everest::nn::load_checkpoint;
use everest::pipeline::{
    evaluate_dirs, list_frames, prepare, restore_samples, samples_from_events, synth_sequence,
    train, Sequence, SynthKind, TrainConfig, DEFAULT_FPS,
};
use everest::qtcodec::{degrade, BitBudget, Region, RoiMask};

#[derive(Parser)]
#[command(name = "everest", version, about = "Event-guided restoration of quadtree-compressed frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadtree-compress every frame of a directory.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        budget: u64,
        /// Mask image; pixels >= 0.5 belong to the region of interest.
        #[arg(long)]
        roi: Option<PathBuf>,
    },
    /// Simulate the event stream of a frame sequence.
    SimulateEvents {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SimConfig::default().threshold)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_FPS)]
        fps: f64,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth {
        #[arg(long, default_value = "moving-squares")]
        kind: SynthKind,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// HxW, e.g. 64x64.
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from frame directories.
    Train {
        /// key = value file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a sequence with a trained model.
    ///
    /// Without --events, --in holds original frames that are degraded at
    /// --budget and also serve as ground truth. With --events, --in holds
    /// already degraded frames and ground truth comes from --truth.
    Restore {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value_t = SimConfig::default().threshold)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_FPS)]
        fps: f64,
        /// x,y,w,h region also scored on its own.
        #[arg(long = "roi-rect")]
        roi_rect: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare two frame directories.
    Evaluate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long = "roi-rect")]
        roi_rect: Option<String>,
        #[arg(long)]
        report: PathBuf,
    },
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s.split_once(['x', 'X']).with_context(|| format!("size must look like HxW, got {s:?}"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

fn parse_roi(rect: Option<&str>) -> Result<Option<Region>> {
    Ok(rect.map(parse_rect).transpose()?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_frames(dir: &Path) -> Result<Vec<everest::Frame>> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        bail!("no frames in {}", dir.display());
    }
    Ok(paths.iter().map(load_frame).collect::<everest::Result<_>>()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Degrade { input, out, budget, roi } => {
            let budget = BitBudget::new(budget)?;
            let mask = roi.map(|p| load_frame(p).map(|f| RoiMask::from_frame(&f))).transpose()?;
            let paths = list_frames(&input)?;
            if paths.is_empty() {
                bail!("no frames in {}", input.display());
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for p in &paths {
                let degraded = degrade(&load_frame(p)?, budget, mask.as_ref())?;
                let name = p.file_name().context("frame without a file name")?;
                save_frame(&degraded, out.join(name).with_extension("pgm"))?;
            }
            println!("degraded {} frames", paths.len());
        }
        Command::SimulateEvents { input, out, threshold, fps } => {
            let seq = Sequence::load_dir(&input, fps)?;
            let mut sim = EventSimulator::new(SimConfig { threshold, ..SimConfig::default() })?;
            let mut all = EventStream::default();
            for t in 1..seq.len() {
                all.extend(sim.simulate(&seq.frames()[t - 1], &seq.frames()[t], seq.time(t - 1), seq.time(t))?)?;
            }
            write_events(&out, &all)?;
            println!("{} events", all.len());
        }
        Command::Synth { kind, frames, size, seed, out } => {
            let (h, w) = parse_size(&size)?;
            synth_sequence(kind, frames, h, w, seed)?.save_dir(&out)?;
            println!("wrote {frames} frames to {}", out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = match config {
                Some(p) => TrainConfig::parse(
                    &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => TrainConfig::default(),
            };
            let seqs = data
                .iter()
                .map(|d| Sequence::load_dir(d, cfg.fps))
                .collect::<everest::Result<Vec<_>>>()?;
            let outcome = train(&cfg, &seqs, Some(&out))?;
            if let Some(last) = outcome.losses.last() {
                println!("{} iterations, final loss {last}", outcome.losses.len());
            }
        }
        Command::Restore { model, input, truth, events, budget, threshold, fps, roi_rect, out, report } => {
            let ckpt = load_checkpoint(&model)?;
            let roi = parse_roi(roi_rect.as_deref())?;
            let samples = match events {
                Some(ev) => {
                    if budget.is_some() {
                        bail!("--budget applies only when frames are degraded here; drop it with --events");
                    }
                    let degraded = load_frames(&input)?;
                    let truth = truth.as_deref().map(load_frames).transpose()?;
                    samples_from_events(&degraded, &read_events(&ev)?, fps, truth.as_deref())?
                }
                None => {
                    let budget = budget.context("--budget is required unless --events is given")?;
                    let src = truth.as_deref().unwrap_or(&input);
                    if truth.is_some() && load_frames(&input)? != load_frames(src)? {
                        bail!("without --events, --in must already hold the original frames");
                    }
                    let seq = Sequence::load_dir(src, fps)?;
                    let sim = SimConfig { threshold, ..SimConfig::default() };
                    prepare(&seq, BitBudget::new(budget)?, sim)?
                }
            };
            let restored = restore_samples(&ckpt.params, &samples, roi)?;
            restored.save_frames(&out)?;
            match (&restored.report, report) {
                (Some(r), Some(path)) => {
                    write_text(&path, &r.to_csv())?;
                    print!("{}", r.summary());
                }
                (Some(r), None) => print!("{}", r.summary()),
                (None, Some(_)) => bail!("a report needs ground truth (--truth)"),
                (None, None) => println!("restored {} frames", restored.restored.len()),
            }
        }
        Command::Evaluate { a, b, roi_rect, report } => {
            let r = evaluate_dirs(&a, &b, parse_roi(roi_rect.as_deref())?)?;
            write_text(&report, &r.to_csv())?;
            print!("{}", r.summary());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
