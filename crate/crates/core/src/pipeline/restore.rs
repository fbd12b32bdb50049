//! Eval-mode restoration of whole sequences.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::prepare::{prepare, Sample};
use super::sequence::{frame_file_name, Sequence};
use crate::error::{Error, Result};
use crate::evsim::SimConfig;
use crate::image::save_frame;
use crate::metrics::{fmt_mean, FrameQuality, QualityReport};
use crate::nn::ModelParams;
use crate::qtcodec::{BitBudget, Region};
use crate::Frame;

/// Degraded-vs-truth and restored-vs-truth metrics for the same frames.
#[derive(Clone, Debug, PartialEq)]
pub struct RestoreReport {
    pub degraded: QualityReport,
    pub restored: QualityReport,
}

impl RestoreReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(
            "frame_index,psnr_degraded,ssim_degraded,psnr_restored,ssim_restored,\
             psnr_roi_degraded,ssim_roi_degraded,psnr_roi_restored,ssim_roi_restored\n",
        );
        for (d, r) in self.degraded.frames.iter().zip(&self.restored.frames) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                d.frame_index,
                d.psnr,
                d.ssim,
                r.psnr,
                r.ssim,
                opt(d.psnr_roi),
                opt(d.ssim_roi),
                opt(r.psnr_roi),
                opt(r.ssim_roi)
            );
        }
        s
    }

    /// Per-frame lines in the `PSNR: a (b)` style plus the means.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (d, r) in self.degraded.frames.iter().zip(&self.restored.frames) {
            let _ = writeln!(
                s,
                "frame {:>6}  degraded {} {}  restored {} {}",
                d.frame_index,
                d.psnr_label(),
                d.ssim_label(),
                r.psnr_label(),
                r.ssim_label()
            );
        }
        let _ = writeln!(s, "frames: {}", self.degraded.frames.len());
        let _ = writeln!(
            s,
            "mean PSNR: degraded {}  restored {}",
            fmt_mean(self.degraded.mean_psnr(), 4),
            fmt_mean(self.restored.mean_psnr(), 4)
        );
        let _ = writeln!(
            s,
            "mean SSIM: degraded {}  restored {}",
            fmt_mean(self.degraded.mean_ssim(), 4),
            fmt_mean(self.restored.mean_ssim(), 4)
        );
        s
    }
}

#[derive(Clone, Debug)]
pub struct RestoreOutput {
    pub frame_indices: Vec<usize>,
    pub degraded: Vec<Frame>,
    pub restored: Vec<Frame>,
    pub report: Option<RestoreReport>,
}

impl RestoreOutput {
    /// Writes each restored frame under its sequence index.
    pub fn save_frames(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, f) in self.frame_indices.iter().zip(&self.restored) {
            save_frame(f, dir.join(frame_file_name(*t)))?;
        }
        Ok(())
    }
}

/// Restores prepared samples; a report is produced when every sample has
/// ground truth.
pub fn restore_samples(params: &ModelParams<f64>, samples: &[Sample], roi: Option<Region>) -> Result<RestoreOutput> {
    let mut out = RestoreOutput {
        frame_indices: Vec::with_capacity(samples.len()),
        degraded: Vec::with_capacity(samples.len()),
        restored: Vec::with_capacity(samples.len()),
        report: None,
    };
    let with_truth = !samples.is_empty() && samples.iter().all(|s| s.target.is_some());
    let mut report = RestoreReport { degraded: QualityReport::default(), restored: QualityReport::default() };
    for s in samples {
        let restored = params.restore(&s.input)?;
        let degraded = s.degraded();
        if with_truth {
            let truth = s.target.as_ref().expect("checked above");
            report.degraded.frames.push(FrameQuality::measure(s.frame_index, truth, &degraded, roi)?);
            report.restored.frames.push(FrameQuality::measure(s.frame_index, truth, &restored, roi)?);
        }
        out.frame_indices.push(s.frame_index);
        out.degraded.push(degraded);
        out.restored.push(restored);
    }
    if with_truth {
        out.report = Some(report);
    }
    Ok(out)
}

/// Degrades `seq` at `budget`, simulates its events, and restores every
/// frame after the first. The sequence frames serve as ground truth.
pub fn restore_sequence(
    params: &ModelParams<f64>,
    seq: &Sequence,
    budget: BitBudget,
    sim: SimConfig,
    roi: Option<Region>,
) -> Result<RestoreOutput> {
    restore_samples(params, &prepare(seq, budget, sim)?, roi)
}
