//! Event camera simulation and temporal binning.
//!
//! Each pixel tracks a reference log-intensity. Between two frames the
//! log-intensity `ln(I + log_eps)` is interpolated linearly in time, and an
//! event is emitted every time it reaches `reference ± threshold`; the
//! reference then moves by one threshold step. Reaching the threshold
//! exactly counts as a crossing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::Frame;

/// Number of temporal bins fed to the network.
pub const NUM_BINS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub x: usize,
    pub y: usize,
    /// Seconds.
    pub t: f64,
    /// `+1` for a brightness increase, `-1` for a decrease.
    pub p: i8,
}

/// Events ordered by time, ties broken by row, column, then polarity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
}

impl EventStream {
    /// Sorts `events` into canonical order.
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| e.p != 1 && e.p != -1) {
            return Err(Error::Event(format!("polarity must be -1 or 1, got {}", e.p)));
        }
        if let Some(e) = events.iter().find(|e| !e.t.is_finite()) {
            return Err(Error::Event(format!("non-finite timestamp {}", e.t)));
        }
        events.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.y.cmp(&b.y))
                .then(a.x.cmp(&b.x))
                .then(a.p.cmp(&b.p))
        });
        Ok(Self { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t_start <= t <= t_end`.
    pub fn window(&self, t_start: f64, t_end: f64) -> EventStream {
        let lo = self.events.partition_point(|e| e.t < t_start);
        let hi = self.events.partition_point(|e| e.t <= t_end);
        EventStream { events: self.events[lo..hi].to_vec() }
    }

    pub fn extend(&mut self, other: EventStream) -> Result<()> {
        let mut all = std::mem::take(&mut self.events);
        all.extend(other.events);
        *self = EventStream::new(all)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Contrast threshold in log-intensity units.
    pub threshold: f64,
    /// Offset added before taking the log so black pixels stay finite.
    pub log_eps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { threshold: 0.15, log_eps: 1e-3 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidValue(format!("threshold must be > 0, got {}", self.threshold)));
        }
        if !(self.log_eps > 0.0 && self.log_eps.is_finite()) {
            return Err(Error::InvalidValue(format!("log_eps must be > 0, got {}", self.log_eps)));
        }
        Ok(())
    }

    pub fn log_intensity(&self, v: f64) -> f64 {
        (v + self.log_eps).ln()
    }
}

/// Walks the linear segment `l_start -> l_end` from `reference`, moving the
/// reference one threshold step per crossing. Returns `(fraction, polarity)`
/// pairs where `fraction` in `[0, 1]` locates the crossing on the segment.
pub fn threshold_crossings(
    l_start: f64,
    l_end: f64,
    reference: &mut f64,
    threshold: f64,
) -> Vec<(f64, i8)> {
    let delta = l_end - l_start;
    let mut out = Vec::new();
    loop {
        let (level, p) = if l_end - *reference >= threshold {
            (*reference + threshold, 1)
        } else if *reference - l_end >= threshold {
            (*reference - threshold, -1)
        } else {
            break;
        };
        let frac = if delta != 0.0 {
            ((level - l_start) / delta).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push((frac, p));
        *reference = level;
    }
    out
}

/// Stateful simulator for one sequence. Reference levels persist across
/// calls and are initialized from the first `prev` frame seen.
#[derive(Clone, Debug)]
pub struct EventSimulator {
    cfg: SimConfig,
    reference: Option<Plane<f64>>,
}

impl EventSimulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, reference: None })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn reference(&self) -> Option<&Plane<f64>> {
        self.reference.as_ref()
    }

    pub fn simulate(&mut self, prev: &Frame, next: &Frame, t_prev: f64, t_next: f64) -> Result<EventStream> {
        prev.check_same_dims(next)?;
        if !(t_prev < t_next) {
            return Err(Error::Event(format!(
                "timestamps must increase: t_prev = {t_prev}, t_next = {t_next}"
            )));
        }
        let cfg = self.cfg;
        let reference = self
            .reference
            .get_or_insert_with(|| prev.map(|v| cfg.log_intensity(v)));
        prev.check_same_dims(reference)?;

        let dt = t_next - t_prev;
        let width = prev.width();
        let mut events = Vec::new();
        for (i, ((&a, &b), r)) in prev
            .data()
            .iter()
            .zip(next.data())
            .zip(reference.data_mut())
            .enumerate()
        {
            let (l0, l1) = (cfg.log_intensity(a), cfg.log_intensity(b));
            for (frac, p) in threshold_crossings(l0, l1, r, cfg.threshold) {
                let t = (t_prev + frac * dt).min(t_next);
                events.push(Event { x: i % width, y: i / width, t, p });
            }
        }
        EventStream::new(events)
    }
}

/// One-shot simulation with a fresh reference taken from `prev`.
pub fn simulate_events(prev: &Frame, next: &Frame, t_prev: f64, t_next: f64, cfg: SimConfig) -> Result<EventStream> {
    EventSimulator::new(cfg)?.simulate(prev, next, t_prev, t_next)
}

/// Four temporal event frames with values in `{-1, 0, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventFrameStack {
    bins: [Plane<i8>; NUM_BINS],
}

impl EventFrameStack {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { bins: std::array::from_fn(|_| Plane::filled(height, width, 0)) }
    }

    pub fn from_bins(bins: [Plane<i8>; NUM_BINS]) -> Result<Self> {
        for b in &bins[1..] {
            bins[0].check_same_dims(b)?;
        }
        if bins.iter().flat_map(|b| b.data()).any(|v| !(-1..=1).contains(v)) {
            return Err(Error::Event("event frame values must be -1, 0 or 1".into()));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[Plane<i8>; NUM_BINS] {
        &self.bins
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bins[0].dims()
    }

    /// Event frames as reals, ready to be stacked into a network input.
    pub fn as_planes(&self) -> [Plane<f64>; NUM_BINS] {
        std::array::from_fn(|i| self.bins[i].map(f64::from))
    }
}

/// Splits `[t_prev, t_next]` into four equal bins and collapses each pixel's
/// events in a bin to the sign of their polarity sum. Bin `i` is
/// `[t_prev + i*d/4, t_prev + (i+1)*d/4)`; the last bin also takes events
/// exactly at `t_next`.
pub fn bin_events(
    stream: &EventStream,
    t_prev: f64,
    t_next: f64,
    height: usize,
    width: usize,
) -> Result<EventFrameStack> {
    if !(t_prev < t_next) {
        return Err(Error::Event(format!("empty interval [{t_prev}, {t_next}]")));
    }
    let span = t_next - t_prev;
    let edges: [f64; NUM_BINS - 1] = std::array::from_fn(|i| t_prev + (i + 1) as f64 * span / NUM_BINS as f64);
    let mut sums = vec![0i32; NUM_BINS * height * width];
    for e in stream.events() {
        if e.t < t_prev || e.t > t_next {
            return Err(Error::Event(format!(
                "event at t = {} outside [{t_prev}, {t_next}]",
                e.t
            )));
        }
        if e.x >= width || e.y >= height {
            return Err(Error::Event(format!(
                "event at ({}, {}) outside {width}x{height} frame",
                e.x, e.y
            )));
        }
        let bin = edges.iter().filter(|&&edge| e.t >= edge).count();
        sums[(bin * height + e.y) * width + e.x] += e.p as i32;
    }
    let bins = std::array::from_fn(|b| {
        let chunk = &sums[b * height * width..(b + 1) * height * width];
        Plane::from_vec(height, width, chunk.iter().map(|s| s.signum() as i8).collect())
            .expect("chunk sized to frame")
    });
    Ok(EventFrameStack { bins })
}

/// Per-pixel number of active bins, in `0..=4`.
pub fn event_count_map(stack: &EventFrameStack) -> Plane<f64> {
    let (h, w) = stack.dims();
    let mut out = Plane::zeros(h, w);
    for bin in stack.bins() {
        for (o, &v) in out.data_mut().iter_mut().zip(bin.data()) {
            *o += v.unsigned_abs() as f64;
        }
    }
    out
}

/// Text event file: one `t x y p` line per event.
pub fn format_events(stream: &EventStream) -> String {
    let mut s = String::with_capacity(stream.len() * 24);
    for e in stream.events() {
        let _ = writeln!(s, "{} {} {} {}", e.t, e.x, e.y, e.p);
    }
    s
}

pub fn parse_events(text: &str) -> Result<EventStream> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Event(format!("line {}: expected `t x y p`, got {line:?}", lineno + 1));
        let mut it = line.split_whitespace();
        let t: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let x: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let y: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let p: i8 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() || (p != 1 && p != -1) {
            return Err(bad());
        }
        events.push(Event { x, y, t, p });
    }
    EventStream::new(events)
}

pub fn write_events(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_events(stream)).map_err(|e| Error::io(path, e))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text)
}
