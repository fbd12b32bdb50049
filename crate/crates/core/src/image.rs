//! Pixel containers and frame file I/O.
//!
//! [`Plane`] is a single-channel grid used for frames, gradient maps and
//! loss gradients alike; [`Tensor3`] stacks channels for network
//! activations. Intensity frames are `Plane<f64>` with every value in
//! `[0, 1]` (see [`crate::Frame`]); 8-bit quantization happens only when
//! reading or writing files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Frame;

/// Row-major single-channel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape {
                expected: (1, height, width),
                actual: (1, data.len(), 1),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Plane<U> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Plane::from_fn(self.width, self.height, |y, x| self.get(x, y))
    }

    /// Copies the `h x w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::InvalidValue(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Plane::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }

    pub(crate) fn check_same_dims<U>(&self, other: &Plane<U>) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Shape {
                expected: (1, self.height, self.width),
                actual: (1, other.height, other.width),
            });
        }
        Ok(())
    }
}

impl Plane<f64> {
    /// Builds an intensity frame, rejecting values outside `[0, 1]`.
    pub fn intensity(height: usize, width: usize, data: Vec<f64>) -> Result<Frame> {
        let frame = Plane::from_vec(height, width, data)?;
        frame.validate_intensity()?;
        Ok(frame)
    }

    pub fn validate_intensity(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(i) => Err(Error::InvalidValue(format!(
                "intensity {} at index {i} outside [0, 1]",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantize8(&self) -> Frame {
        self.map(quantize8)
    }
}

impl<T: Scalar> Plane<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }
}

/// Channel-major stack of equally sized planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape {
                expected: (channels, height, width),
                actual: (data.len(), 1, 1),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Concatenates planes channel-wise. All planes must share dimensions.
    pub fn from_planes(planes: &[&Plane<T>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidValue("no planes to stack".into()))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            first.check_same_dims(p)?;
            data.extend_from_slice(p.data());
        }
        Ok(Self {
            channels: planes.len(),
            height: h,
            width: w,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_plane(&self, c: usize) -> Plane<T> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::InvalidValue(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            let src = self.channel(c);
            for y in y0..y0 + h {
                let row = y * self.width;
                out.extend_from_slice(&src[row + x0..row + x0 + w]);
            }
        }
        Tensor3::from_vec(self.channels, h, w, out)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "tensor shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Rec. 601 luma of an RGB triple. Inputs are clamped to `[0, 1]`.
pub fn to_luma(r: f64, g: f64, b: f64) -> f64 {
    let c = |v: f64| v.clamp(0.0, 1.0);
    (0.299 * c(r) + 0.587 * c(g) + 0.114 * c(b)).min(1.0)
}

/// Nearest 8-bit level, ties rounded up.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn quantize8(v: f64) -> f64 {
    to_u8(v) as f64 / 255.0
}

/// Reads a binary PGM (P5, maxval 255) or an 8-bit PNG into a frame.
/// The format is chosen by the file's magic bytes.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes `frame` as a binary PGM with `round(v * 255)` levels.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(frame)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(frame: &Frame) -> Result<Vec<u8>> {
    frame.validate_intensity()?;
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.data().iter().map(|&v| to_u8(v)));
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "expected binary PGM magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_header_int(bytes, &mut pos, "width")?;
    let height = parse_header_int(bytes, &mut pos, "height")?;
    let maxval = parse_header_int(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PGM maxval {maxval}; only 8-bit (255) is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    pos += 1;
    let n = width * height;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Format(format!("PGM raster truncated: need {n} bytes")))?;
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    Plane::from_vec(height, width, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
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
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad PGM {what}: {:?}", String::from_utf8_lossy(tok))))
}

fn decode_png(bytes: &[u8]) -> Result<Frame> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "unsupported PNG bit depth {:?}; only 8-bit is supported",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let px = |v: u8| v as f64 / 255.0;
    let bpp = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::Format(format!(
                "unsupported PNG color type {other:?}"
            )))
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * stride..y * stride + w * bpp];
        for p in row.chunks_exact(bpp) {
            data.push(if bpp >= 3 {
                to_luma(px(p[0]), px(p[1]), px(p[2]))
            } else {
                px(p[0])
            });
        }
    }
    Plane::intensity(h, w, data)
}
