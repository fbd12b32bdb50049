//! Deterministic synthetic motion sequences with known ground truth.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sequence::{Sequence, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::image::{quantize8, Plane};
use crate::qtcodec::{Region, RoiMask};
use crate::Frame;

pub const MIN_SYNTH_SIZE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    MovingSquares,
    DriftingGradient,
    TexturePan,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moving-squares" => Ok(Self::MovingSquares),
            "drifting-gradient" => Ok(Self::DriftingGradient),
            "texture-pan" => Ok(Self::TexturePan),
            _ => Err(Error::InvalidValue(format!(
                "unknown sequence kind {s:?} (moving-squares, drifting-gradient, texture-pan)"
            ))),
        }
    }
}

/// A square that moves by `(vx, vy)` pixels per frame and bounces off the
/// frame border. It carries a centred inner square of a second intensity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Square {
    pub x: i64,
    pub y: i64,
    pub size: usize,
    pub vx: i64,
    pub vy: i64,
    pub intensity: f64,
    pub inner_intensity: f64,
}

impl Square {
    fn step(&mut self, height: usize, width: usize) {
        let max_x = (width - self.size) as i64;
        let max_y = (height - self.size) as i64;
        if !(0..=max_x).contains(&(self.x + self.vx)) {
            self.vx = -self.vx;
        }
        if !(0..=max_y).contains(&(self.y + self.vy)) {
            self.vy = -self.vy;
        }
        self.x = (self.x + self.vx).clamp(0, max_x);
        self.y = (self.y + self.vy).clamp(0, max_y);
    }

    fn region(&self) -> Region {
        Region { x0: self.x as usize, y0: self.y as usize, width: self.size, height: self.size }
    }

    fn paint(&self, frame: &mut Frame) {
        let inner = self.size / 2;
        let off = (self.size - inner) / 2;
        for dy in 0..self.size {
            for dx in 0..self.size {
                let in_inner = (off..off + inner).contains(&dy) && (off..off + inner).contains(&dx);
                let v = if in_inner { self.inner_intensity } else { self.intensity };
                frame.set(self.y as usize + dy, self.x as usize + dx, v);
            }
        }
    }
}

/// Renders squares over a static background. The ROI covers every pixel
/// any square touches during the sequence.
pub fn moving_squares(background: &Frame, squares: &[Square], n_frames: usize, fps: f64) -> Result<Sequence> {
    let (h, w) = background.dims();
    if squares.iter().any(|s| s.size == 0 || s.size > h || s.size > w || s.x < 0 || s.y < 0) {
        return Err(Error::InvalidValue("square does not fit in the frame".into()));
    }
    let mut squares = squares.to_vec();
    let mut frames = Vec::with_capacity(n_frames);
    let mut boxes = Vec::new();
    for t in 0..n_frames {
        if t > 0 {
            for s in &mut squares {
                s.step(h, w);
            }
        }
        let mut f = background.clone();
        for s in &squares {
            s.paint(&mut f);
            boxes.push(s.region());
        }
        frames.push(f.quantize8());
    }
    Sequence::new(frames, fps, Some(RoiMask::from_rects(h, w, &boxes)))
}

fn smooth_background(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Frame {
    let fx = rng.gen_range(0.5..1.5);
    let fy = rng.gen_range(0.5..1.5);
    let (px, py) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
    let tilt = rng.gen_range(-0.15..0.15);
    let base = rng.gen_range(0.35..0.6);
    Plane::from_fn(h, w, |y, x| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        let s = 0.15 * (TAU * fx * u + px).sin() * (TAU * fy * v + py).cos();
        (base + s + tilt * (u - 0.5)).clamp(0.0, 1.0)
    })
}

fn random_squares(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<Square> {
    let n = rng.gen_range(3..=5);
    let side = h.min(w);
    (0..n)
        .map(|_| {
            let size = rng.gen_range(side / 8..=side / 3).max(2);
            let pick = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.05..0.25)
                } else {
                    rng.gen_range(0.75..0.95)
                }
            };
            let mut vel = || {
                let v = rng.gen_range(1..=2);
                if rng.gen_bool(0.5) {
                    -v
                } else {
                    v
                }
            };
            let (vx, vy) = (vel(), vel());
            Square {
                x: rng.gen_range(0..=(w - size) as i64),
                y: rng.gen_range(0..=(h - size) as i64),
                size,
                vx,
                vy,
                intensity: pick(rng),
                inner_intensity: pick(rng),
            }
        })
        .collect()
}

/// Generates `n_frames` of the given kind at `height x width`. Frames are
/// 8-bit quantized so that writing and re-reading them is lossless.
pub fn synth_sequence(kind: SynthKind, n_frames: usize, height: usize, width: usize, seed: u64) -> Result<Sequence> {
    if height < MIN_SYNTH_SIZE || width < MIN_SYNTH_SIZE {
        return Err(Error::InvalidValue(format!(
            "synthetic sequences need at least {MIN_SYNTH_SIZE}x{MIN_SYNTH_SIZE}, got {height}x{width}"
        )));
    }
    if n_frames < 2 {
        return Err(Error::InvalidValue("a sequence needs at least 2 frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::MovingSquares => {
            let bg = smooth_background(height, width, &mut rng);
            let squares = random_squares(height, width, &mut rng);
            moving_squares(&bg, &squares, n_frames, DEFAULT_FPS)
        }
        SynthKind::DriftingGradient => {
            let theta = rng.gen_range(0.0..TAU);
            let wavelength = rng.gen_range(16.0..48.0);
            let speed = rng.gen_range(0.3..1.2); // pixels per frame
            let (c, s) = (theta.cos(), theta.sin());
            let frames = (0..n_frames)
                .map(|t| {
                    Plane::from_fn(height, width, |y, x| {
                        let d = x as f64 * c + y as f64 * s - speed * t as f64;
                        quantize8(0.5 + 0.4 * (TAU * d / wavelength).sin())
                    })
                })
                .collect();
            Sequence::new(frames, DEFAULT_FPS, None)
        }
        SynthKind::TexturePan => {
            let waves: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    let f = rng.gen_range(0.02..0.2);
                    let a = rng.gen_range(0.0..TAU);
                    (f * a.cos(), f * a.sin(), rng.gen_range(0.0..TAU), rng.gen_range(0.3..1.0))
                })
                .collect();
            let norm: f64 = waves.iter().map(|w| w.3).sum();
            let (vx, vy) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let frames = (0..n_frames)
                .map(|t| {
                    let (ox, oy) = (vx * t as f64, vy * t as f64);
                    Plane::from_fn(height, width, |y, x| {
                        let v: f64 = waves
                            .iter()
                            .map(|&(kx, ky, ph, a)| a * (TAU * (kx * (x as f64 + ox) + ky * (y as f64 + oy)) + ph).sin())
                            .sum();
                        quantize8(0.5 + 0.45 * v / norm)
                    })
                })
                .collect();
            Sequence::new(frames, DEFAULT_FPS, None)
        }
    }
}
