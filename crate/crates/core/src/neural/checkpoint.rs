//! Binary model checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "STAPCNN1"                          8 bytes
//! version                             u32 (= 1)
//! input kappa, n_theta, n_phi         3 x u32
//! layer count                         u32
//! per layer: type tag, trainable,     u32, u32,
//!            dim count, dims          u32, dim count x u32
//! parameter tensors                   f32, layer order, weight then bias
//!                                     (gamma then beta for batch norm)
//! Adam flag                           u32 (0 or 1)
//! if 1: step u64, first moments, second moments (parameter order)
//! running statistics                  f32, per batch-norm layer: mean, var
//! ```
//!
//! Type tags: 1 conv (dims cout, cin, 3, 3), 2 batch norm (channels),
//! 3 relu, 4 max-pool, 5 flatten, 6 dense (outputs, inputs), 7 tanh.

use std::fs;
use std::path::Path;

use super::layers::{BatchNorm2d, Conv2d, Dense};
use super::model::{CnnModel, Layer};
use super::real::Real;
use super::train::AdamState;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"STAPCNN1";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals<T: Real>(&mut self, vs: &[T]) {
        for v in vs {
            self.0.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated: need {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn reals<T: Real>(&mut self, out: &mut [T]) -> Result<()> {
        let bytes = self.take(out.len() * 4)?;
        for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
            *o = T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64);
        }
        Ok(())
    }
    fn dim(&mut self, limit: u32) -> Result<usize> {
        let at = self.pos;
        let d = self.u32()?;
        if d == 0 || d > limit {
            return Err(Error::format(at as u64, format!("implausible dimension {d}")));
        }
        Ok(d as usize)
    }
}

fn tag<T>(l: &Layer<T>) -> (u32, Vec<u32>) {
    match l {
        Layer::Conv(c) => (1, vec![c.cout as u32, c.cin as u32, 3, 3]),
        Layer::BatchNorm(b) => (2, vec![b.channels as u32]),
        Layer::Relu => (3, vec![]),
        Layer::MaxPool => (4, vec![]),
        Layer::Flatten => (5, vec![]),
        Layer::Dense(d) => (6, vec![d.outputs as u32, d.inputs as u32]),
        Layer::Tanh => (7, vec![]),
    }
}

pub fn encode_checkpoint<T: Real>(model: &CnnModel<T>, adam: Option<&AdamState<T>>) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(VERSION);
    let (k, h, wd) = model.input;
    for d in [k, h, wd] {
        w.u32(d as u32);
    }
    w.u32(model.layers.len() as u32);
    for (l, &t) in model.layers.iter().zip(&model.trainable) {
        let (code, dims) = tag(l);
        w.u32(code);
        w.u32(t as u32);
        w.u32(dims.len() as u32);
        dims.into_iter().for_each(|d| w.u32(d));
    }
    for l in &model.layers {
        for p in l.params() {
            w.reals(p);
        }
    }
    match adam {
        Some(state) => {
            w.u32(1);
            w.0.extend_from_slice(&state.step.to_le_bytes());
            for moments in [&state.m, &state.v] {
                moments.iter().flatten().for_each(|t| w.reals(t));
            }
        }
        None => w.u32(0),
    }
    for l in &model.layers {
        if let Layer::BatchNorm(b) = l {
            w.reals(&b.running_mean);
            w.reals(&b.running_var);
        }
    }
    w.0
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(CnnModel<T>, Option<AdamState<T>>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format(0, "bad magic, not a model checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
    }
    let input = (r.dim(1 << 16)?, r.dim(1 << 16)?, r.dim(1 << 16)?);
    let count = r.u32()? as usize;
    if count > 4096 {
        return Err(Error::format(r.pos as u64 - 4, "implausible layer count"));
    }
    let mut layers = Vec::with_capacity(count);
    let mut trainable = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos as u64;
        let code = r.u32()?;
        trainable.push(r.u32()? != 0);
        let ndims = r.u32()? as usize;
        let expected = match code {
            1 => 4,
            2 => 1,
            6 => 2,
            3 | 4 | 5 | 7 => 0,
            _ => return Err(Error::format(at, format!("unknown layer type {code}"))),
        };
        if ndims != expected {
            return Err(Error::format(at, format!("layer type {code} expects {expected} dims, got {ndims}")));
        }
        let dims: Vec<usize> = (0..ndims).map(|_| r.dim(1 << 24)).collect::<Result<_>>()?;
        layers.push(match code {
            1 => {
                if dims[2] != 3 || dims[3] != 3 {
                    return Err(Error::format(at, "only 3x3 kernels are supported"));
                }
                Layer::Conv(Conv2d {
                    cout: dims[0],
                    cin: dims[1],
                    weight: vec![T::zero(); dims[0] * dims[1] * 9],
                    bias: vec![T::zero(); dims[0]],
                })
            }
            2 => Layer::BatchNorm(BatchNorm2d::new(dims[0])),
            3 => Layer::Relu,
            4 => Layer::MaxPool,
            5 => Layer::Flatten,
            6 => Layer::Dense(Dense {
                outputs: dims[0],
                inputs: dims[1],
                weight: vec![T::zero(); dims[0] * dims[1]],
                bias: vec![T::zero(); dims[0]],
            }),
            _ => Layer::Tanh,
        });
    }
    let mut model = CnnModel {
        layers,
        trainable,
        input,
    };
    for l in model.layers.iter_mut() {
        for p in l.params_mut() {
            r.reals(p)?;
        }
    }
    let adam = match r.u32()? {
        0 => None,
        1 => {
            let mut state = AdamState::new(&model);
            state.step = r.u64()?;
            for t in state.m.iter_mut().flatten() {
                r.reals(t)?;
            }
            for t in state.v.iter_mut().flatten() {
                r.reals(t)?;
            }
            Some(state)
        }
        f => return Err(Error::format(r.pos as u64 - 4, format!("bad optimizer flag {f}"))),
    };
    for l in model.layers.iter_mut() {
        if let Layer::BatchNorm(b) = l {
            r.reals(&mut b.running_mean)?;
            r.reals(&mut b.running_var)?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after checkpoint"));
    }
    Ok((model, adam))
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &CnnModel<T>, adam: Option<&AdamState<T>>) -> Result<()> {
    fs::write(path, encode_checkpoint(model, adam))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(CnnModel<T>, Option<AdamState<T>>)> {
    decode_checkpoint(&fs::read(path)?)
}
