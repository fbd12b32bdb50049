use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_frame, save_frame};
use crate::qtcodec::RoiMask;
use crate::Frame;

pub const DEFAULT_FPS: f64 = 25.0;
/// File name of the optional ROI mask stored next to a sequence's frames.
pub const ROI_FILE: &str = "roi.pgm";

/// Ordered frames of one video with uniform timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    frames: Vec<Frame>,
    fps: f64,
    roi: Option<RoiMask>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>, fps: f64, roi: Option<RoiMask>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidValue(format!("a sequence needs at least 2 frames, got {}", frames.len())));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidValue(format!("fps must be positive, got {fps}")));
        }
        for f in &frames[1..] {
            frames[0].check_same_dims(f)?;
        }
        if let Some(m) = &roi {
            if m.dims() != frames[0].dims() {
                return Err(Error::InvalidValue("ROI mask and frames differ in size".into()));
            }
        }
        Ok(Self { frames, fps, roi })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn roi(&self) -> Option<&RoiMask> {
        self.roi.as_ref()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Timestamp of frame `t` in seconds.
    pub fn time(&self, t: usize) -> f64 {
        t as f64 / self.fps
    }

    /// Reads every `.pgm`/`.png` in `dir` in file-name order, plus
    /// `roi.pgm` when present.
    pub fn load_dir(dir: impl AsRef<Path>, fps: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let frames = list_frames(dir)?
            .iter()
            .map(load_frame)
            .collect::<Result<Vec<_>>>()?;
        let roi_path = dir.join(ROI_FILE);
        let roi = if roi_path.exists() {
            Some(RoiMask::from_frame(&load_frame(&roi_path)?))
        } else {
            None
        };
        Self::new(frames, fps, roi)
    }

    /// Writes `frame_000000.pgm`, `frame_000001.pgm`, ... and the ROI mask.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, f) in self.frames.iter().enumerate() {
            save_frame(f, dir.join(frame_file_name(t)))?;
        }
        if let Some(m) = &self.roi {
            save_frame(&m.to_frame(), dir.join(ROI_FILE))?;
        }
        Ok(())
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

/// Frame files in `dir`, sorted by name; the ROI mask is skipped.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let is_roi = path.file_name().and_then(|n| n.to_str()) == Some(ROI_FILE);
        if path.is_file() && !is_roi && matches!(ext.as_deref(), Some("pgm" | "png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
