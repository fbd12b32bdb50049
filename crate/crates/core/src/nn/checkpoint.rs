//! Binary checkpoint files.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "EVRN"  u32 version
//! u32 in_channels  u32 features  u32 blocks  u32 out_channels
//! u64 value_count, then value_count f64:
//!     head (weight, bias)
//!     per block: conv1 (weight, bias), conv2 (weight, bias)
//!     tail (weight, bias)
//!     per block: bn1 (gamma, beta, running_mean, running_var), bn2 (same)
//! u8 optimizer flag; when 1:
//!     u64 step, f64 lr, beta1, beta2, eps,
//!     u64 n, n f64 first moments, n f64 second moments (learnable order)
//! ```

use std::fs;
use std::path::Path;

use super::batchnorm::BatchNorm;
use super::conv::Conv2d;
use super::model::{Architecture, ModelParams, ResidualBlock};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"EVRN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub optimizer: Option<Adam<T>>,
}

fn put_f64s<T: Scalar>(out: &mut Vec<u8>, vals: &[T]) {
    for v in vals {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

fn bn_state<T: Scalar>(bn: &BatchNorm<T>) -> [&[T]; 4] {
    [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
}

pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, optimizer: Option<&Adam<T>>) -> Vec<u8> {
    let arch = params.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [arch.in_channels, arch.features, arch.blocks, arch.out_channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.total_count() as u64).to_le_bytes());
    put_f64s(&mut out, &params.head.weight);
    put_f64s(&mut out, &params.head.bias);
    for b in &params.blocks {
        for s in [&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias] {
            put_f64s(&mut out, s);
        }
    }
    put_f64s(&mut out, &params.tail.weight);
    put_f64s(&mut out, &params.tail.bias);
    for b in &params.blocks {
        for s in bn_state(&b.bn1).into_iter().chain(bn_state(&b.bn2)) {
            put_f64s(&mut out, s);
        }
    }
    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.step_count().to_le_bytes());
            let c = opt.config;
            for v in [c.lr, c.beta1, c.beta2, c.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let m: Vec<T> = opt.first_moment().concat();
            let v: Vec<T> = opt.second_moment().concat();
            out.extend_from_slice(&(m.len() as u64).to_le_bytes());
            put_f64s(&mut out, &m);
            put_f64s(&mut out, &v);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Checkpoint("file truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        (0..n)
            .map(|_| {
                let v = self.f64()?;
                T::from_f64(v).ok_or_else(|| Error::Checkpoint(format!("value {v} not representable")))
            })
            .collect()
    }
}

/// Parses a checkpoint and checks it against the expected architecture.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8], expected: Architecture) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("bad magic, not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let arch = Architecture {
        in_channels: r.u32()? as usize,
        features: r.u32()? as usize,
        blocks: r.u32()? as usize,
        out_channels: r.u32()? as usize,
    };
    if arch != expected {
        return Err(Error::Architecture { expected: expected.to_string(), found: arch.to_string() });
    }
    let template = ModelParams::<T>::init(arch, 0);
    let count = r.u64()?;
    if count != template.total_count() as u64 {
        return Err(Error::Checkpoint(format!(
            "value count {count} does not match architecture ({})",
            template.total_count()
        )));
    }

    let conv = |r: &mut Reader, i: usize, o: usize| -> Result<Conv2d<T>> {
        let w = r.reals(o * i * 9)?;
        let b = r.reals(o)?;
        Conv2d::from_parts(i, o, w, b)
    };
    let f = arch.features;
    let head = conv(&mut r, arch.in_channels, f)?;
    let mut convs = Vec::with_capacity(arch.blocks);
    for _ in 0..arch.blocks {
        convs.push((conv(&mut r, f, f)?, conv(&mut r, f, f)?));
    }
    let tail = conv(&mut r, f, arch.out_channels)?;
    let mut blocks = Vec::with_capacity(arch.blocks);
    for (conv1, conv2) in convs {
        let mut bns = [BatchNorm::new(f), BatchNorm::new(f)];
        for bn in &mut bns {
            bn.gamma = r.reals(f)?;
            bn.beta = r.reals(f)?;
            bn.running_mean = r.reals(f)?;
            bn.running_var = r.reals(f)?;
            if bn.running_var.iter().any(|&v| v < T::zero()) {
                return Err(Error::Checkpoint("negative running variance".into()));
            }
        }
        let [bn1, bn2] = bns;
        blocks.push(ResidualBlock { conv1, bn1, conv2, bn2 });
    }
    let params = ModelParams::from_parts(arch, head, blocks, tail)?;

    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
            let n = r.u64()? as usize;
            let shapes: Vec<usize> = params.learnable().iter().map(|s| s.len()).collect();
            let split = |flat: Vec<T>| -> Vec<Vec<T>> {
                let mut it = flat.into_iter();
                shapes.iter().map(|&k| it.by_ref().take(k).collect()).collect()
            };
            let (m, v) = if n == 0 {
                (Vec::new(), Vec::new())
            } else if n == params.learnable_count() {
                (split(r.reals(n)?), split(r.reals(n)?))
            } else {
                return Err(Error::Checkpoint(format!("optimizer holds {n} moments, model has {}", params.learnable_count())));
            };
            Some(Adam::from_state(config, step, m, v)?)
        }
        flag => return Err(Error::Checkpoint(format!("bad optimizer flag {flag}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { params, optimizer })
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, optimizer: Option<&Adam<T>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(params, optimizer)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint for the default architecture.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    load_checkpoint_for(path, Architecture::default())
}

pub fn load_checkpoint_for<T: Scalar>(path: impl AsRef<Path>, expected: Architecture) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, expected)
}
