//! Turns sequences into network inputs.
//!
//! For every frame `t >= 1` the input volume stacks the degraded frames
//! `t` and `t-1` with the four event frames binned from the events fired
//! between them. Events come from the original frames; only the intensity
//! frames go through the codec.

use crate::error::{Error, Result};
use crate::evsim::{bin_events, event_count_map, EventFrameStack, EventSimulator, EventStream, SimConfig};
use crate::image::{Plane, Tensor3};
use crate::qtcodec::{degrade_with, BitBudget, CodecConfig};
use crate::Frame;

use super::sequence::Sequence;

/// Channels of an input volume: two intensity frames and four event frames.
pub const INPUT_CHANNELS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frame_index: usize,
    /// `[degraded_t, degraded_{t-1}, E_1, E_2, E_3, E_4]`
    pub input: Tensor3<f64>,
    pub ebar: Plane<f64>,
    /// Ground truth when known.
    pub target: Option<Frame>,
}

impl Sample {
    pub fn degraded(&self) -> Frame {
        self.input.channel_plane(0)
    }

    /// Same window of every channel, target and event counts.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Sample> {
        Ok(Sample {
            frame_index: self.frame_index,
            input: self.input.crop(y0, x0, h, w)?,
            ebar: self.ebar.crop(y0, x0, h, w)?,
            target: self.target.as_ref().map(|t| t.crop(y0, x0, h, w)).transpose()?,
        })
    }
}

pub fn assemble_input(degraded: &Frame, degraded_prev: &Frame, events: &EventFrameStack) -> Result<Tensor3<f64>> {
    let [e1, e2, e3, e4] = events.as_planes();
    Tensor3::from_planes(&[degraded, degraded_prev, &e1, &e2, &e3, &e4])
}

/// Degrades every frame and pairs each `t >= 1` with its events.
pub fn prepare(seq: &Sequence, budget: BitBudget, sim: SimConfig) -> Result<Vec<Sample>> {
    prepare_with(seq, budget, sim, CodecConfig::default())
}

pub fn prepare_with(seq: &Sequence, budget: BitBudget, sim: SimConfig, codec: CodecConfig) -> Result<Vec<Sample>> {
    let degraded = seq
        .frames()
        .iter()
        .map(|f| degrade_with(f, budget, seq.roi(), codec))
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = seq.dims();
    let mut simulator = EventSimulator::new(sim)?;
    let mut out = Vec::with_capacity(seq.len() - 1);
    for t in 1..seq.len() {
        let (t0, t1) = (seq.time(t - 1), seq.time(t));
        let stream = simulator.simulate(&seq.frames()[t - 1], &seq.frames()[t], t0, t1)?;
        let stack = bin_events(&stream, t0, t1, h, w)?;
        out.push(Sample {
            frame_index: t,
            input: assemble_input(&degraded[t], &degraded[t - 1], &stack)?,
            ebar: event_count_map(&stack),
            target: Some(seq.frames()[t].clone()),
        });
    }
    Ok(out)
}

/// Builds samples from already degraded frames and an external event
/// stream covering the whole sequence (frame `t` at `t / fps` seconds).
pub fn samples_from_events(degraded: &[Frame], events: &EventStream, fps: f64, truth: Option<&[Frame]>) -> Result<Vec<Sample>> {
    if degraded.len() < 2 {
        return Err(Error::InvalidValue("need at least 2 degraded frames".into()));
    }
    if let Some(t) = truth {
        if t.len() != degraded.len() {
            return Err(Error::InvalidValue(format!(
                "{} ground-truth frames for {} degraded frames",
                t.len(),
                degraded.len()
            )));
        }
    }
    let (h, w) = degraded[0].dims();
    let mut out = Vec::with_capacity(degraded.len() - 1);
    for t in 1..degraded.len() {
        let (t0, t1) = ((t - 1) as f64 / fps, t as f64 / fps);
        // events exactly on a frame boundary belong to the earlier interval
        let mut window: Vec<_> = events.window(t0, t1).events().to_vec();
        if t > 1 {
            window.retain(|e| e.t > t0);
        }
        let stack = bin_events(&EventStream::new(window)?, t0, t1, h, w)?;
        out.push(Sample {
            frame_index: t,
            input: assemble_input(&degraded[t], &degraded[t - 1], &stack)?,
            ebar: event_count_map(&stack),
            target: truth.map(|tr| tr[t].clone()),
        });
    }
    Ok(out)
}
