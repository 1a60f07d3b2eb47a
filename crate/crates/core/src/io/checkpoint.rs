//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `SNCK`, u32 version, input shape as three
//! u32, the layer list, one parameter block per layer carrying its weight
//! shape, a metadata string, an optional solver-state block and a trailing
//! SHA-256 digest of every preceding byte.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::cnn::{infer_shapes, LayerParams, LayerSpec, NetworkModel, Shape, TrainState, ValidationPoint};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SNCK";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A model plus free-form metadata and, for resumable runs, solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: NetworkModel,
    pub metadata: String,
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn new(model: NetworkModel) -> Self {
        Checkpoint {
            model,
            metadata: String::new(),
            state: None,
        }
    }
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    save_checkpoint(&Checkpoint::new(model.clone()), path)
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    Ok(load_checkpoint(path)?.model)
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let input = ck.model.input_shape();
    for d in [input.channels, input.height, input.width] {
        w.u32(d as u32);
    }
    let layers = ck.model.layers();
    w.u32(layers.len() as u32);
    for l in layers {
        write_layer(&mut w, l);
    }
    let shapes = infer_shapes(input, layers).expect("model shapes were validated on construction");
    for ((l, p), &s) in layers.iter().zip(ck.model.params()).zip(&shapes) {
        let dims = weight_dims(l, s);
        w.u32(dims.len() as u32);
        for d in &dims {
            w.u32(*d as u32);
        }
        w.u32(p.bias.len() as u32);
        w.f64s(&p.weights);
        w.f64s(&p.bias);
    }
    w.bytes(ck.metadata.as_bytes());
    match &ck.state {
        None => w.0.push(0),
        Some(s) => {
            w.0.push(1);
            w.u64(s.iteration);
            w.u64(s.best_iteration);
            w.f64s(&[s.best_accuracy]);
            w.u32(s.points.len() as u32);
            for p in &s.points {
                w.u64(p.iteration);
                w.f64s(&[p.accuracy]);
            }
            for blocks in [&s.params, &s.velocity, &s.best_params] {
                for b in blocks.iter() {
                    w.f64s(&b.weights);
                    w.f64s(&b.bias);
                }
            }
        }
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic in checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint version mismatch: file has {version}, expected {VERSION}"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checkpoint checksum failure (truncated or corrupted)".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let input = Shape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        layers.push(read_layer(&mut r)?);
    }
    let mut model = NetworkModel::new(input, layers.clone())?;
    let shapes = infer_shapes(input, &layers)?;
    let mut params = Vec::with_capacity(n_layers);
    for (l, &s) in layers.iter().zip(&shapes) {
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        if dims != weight_dims(l, s) {
            return Err(Error::Format(format!(
                "parameter block shape {dims:?} does not match layer {:?}",
                l.kind()
            )));
        }
        let n_bias = r.u32()? as usize;
        let weights = r.f64s(dims.iter().product::<usize>() * usize::from(!dims.is_empty()))?;
        let bias = r.f64s(n_bias)?;
        params.push(LayerParams { weights, bias });
    }
    model.set_params(params)?;
    let metadata = String::from_utf8(r.bytes()?.to_vec())
        .map_err(|_| Error::Format("checkpoint metadata is not UTF-8".into()))?;
    let state = match r.u8()? {
        0 => None,
        1 => {
            let iteration = r.u64()?;
            let best_iteration = r.u64()?;
            let best_accuracy = r.f64s(1)?[0];
            let n = r.u32()? as usize;
            let mut points = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let iteration = r.u64()?;
                let accuracy = r.f64s(1)?[0];
                points.push(ValidationPoint { iteration, accuracy });
            }
            let read_blocks = |r: &mut Reader| -> Result<Vec<LayerParams>> {
                model
                    .params()
                    .iter()
                    .map(|p| {
                        Ok(LayerParams {
                            weights: r.f64s(p.weights.len())?,
                            bias: r.f64s(p.bias.len())?,
                        })
                    })
                    .collect()
            };
            let params = read_blocks(&mut r)?;
            let velocity = read_blocks(&mut r)?;
            let best_params = read_blocks(&mut r)?;
            Some(TrainState {
                iteration,
                params,
                velocity,
                points,
                best_accuracy,
                best_iteration,
                best_params,
            })
        }
        other => return Err(Error::Format(format!("bad solver-state flag {other}"))),
    };
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(Checkpoint { model, metadata, state })
}

fn weight_dims(layer: &LayerSpec, input: Shape) -> Vec<usize> {
    match *layer {
        LayerSpec::Conv {
            kernel_h,
            kernel_w,
            out_channels,
            ..
        } => vec![out_channels, input.channels, kernel_h, kernel_w],
        LayerSpec::InnerProduct { outputs } => vec![outputs, input.len()],
        _ => Vec::new(),
    }
}

fn write_layer(w: &mut Writer, l: &LayerSpec) {
    match *l {
        LayerSpec::Conv {
            kernel_h,
            kernel_w,
            stride,
            out_channels,
        } => {
            w.0.push(0);
            for v in [kernel_h, kernel_w, stride, out_channels] {
                w.u32(v as u32);
            }
        }
        LayerSpec::MaxPool { window, stride } => {
            w.0.push(1);
            w.u32(window as u32);
            w.u32(stride as u32);
        }
        LayerSpec::Relu => w.0.push(2),
        LayerSpec::Lrn { size, alpha, beta } => {
            w.0.push(3);
            w.u32(size as u32);
            w.f64s(&[alpha, beta]);
        }
        LayerSpec::InnerProduct { outputs } => {
            w.0.push(4);
            w.u32(outputs as u32);
        }
        LayerSpec::Softmax => w.0.push(5),
    }
}

fn read_layer(r: &mut Reader) -> Result<LayerSpec> {
    Ok(match r.u8()? {
        0 => LayerSpec::Conv {
            kernel_h: r.u32()? as usize,
            kernel_w: r.u32()? as usize,
            stride: r.u32()? as usize,
            out_channels: r.u32()? as usize,
        },
        1 => LayerSpec::MaxPool {
            window: r.u32()? as usize,
            stride: r.u32()? as usize,
        },
        2 => LayerSpec::Relu,
        3 => {
            let size = r.u32()? as usize;
            let v = r.f64s(2)?;
            LayerSpec::Lrn {
                size,
                alpha: v[0],
                beta: v[1],
            }
        }
        4 => LayerSpec::InnerProduct {
            outputs: r.u32()? as usize,
        },
        5 => LayerSpec::Softmax,
        other => return Err(Error::Format(format!("unknown layer code {other}"))),
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
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
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format("oversized block".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn bytes(&mut self) -> Result<&[u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}
