//! Dataset preparation, training, restoration and evaluation.

pub mod prepare;
pub mod restore;
pub mod sequence;
pub mod synth;
pub mod train;

pub use prepare::{assemble_input, prepare, prepare_with, samples_from_events, Sample, INPUT_CHANNELS};
pub use restore::{restore_samples, restore_sequence, RestoreOutput, RestoreReport};
pub use sequence::{frame_file_name, list_frames, Sequence, DEFAULT_FPS, ROI_FILE};
pub use synth::{moving_squares, synth_sequence, Square, SynthKind};
pub use train::{build_dataset, train, train_on_samples, TrainConfig, TrainOutcome};

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::load_frame;
use crate::metrics::{FrameQuality, QualityReport};
use crate::qtcodec::Region;

/// Compares two frame directories file by file (in name order).
pub fn evaluate_dirs(a: impl AsRef<Path>, b: impl AsRef<Path>, roi: Option<Region>) -> Result<QualityReport> {
    let fa = list_frames(a)?;
    let fb = list_frames(b)?;
    if fa.len() != fb.len() {
        return Err(Error::InvalidValue(format!("{} frames vs {} frames", fa.len(), fb.len())));
    }
    let mut report = QualityReport::default();
    for (i, (pa, pb)) in fa.iter().zip(&fb).enumerate() {
        let index = frame_index_of(pa).unwrap_or(i);
        report.frames.push(FrameQuality::measure(index, &load_frame(pa)?, &load_frame(pb)?, roi)?);
    }
    Ok(report)
}

/// Numeric suffix of `frame_000123.pgm`-style names.
pub fn frame_index_of(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}
