//! Flat little-endian model container.
//!
//! ```text
//! "EDGS"  version:u32  layer_count:u32  input_side:u32
//! per layer:
//!   name_len:u16 name:utf8
//!   kind:u8   0 conv | 1 depthwise | 2 maxpool | 3 upsample | 4 concat | 5 head
//!   conv, depthwise: kernel:u32 stride:u32 pad:u32 relu:u8
//!   maxpool:         kernel:u32 stride:u32
//!   upsample:        factor:u32
//!   head:            anchor_count:u32 (w:f64 h:f64)*
//!   input_count:u32 input:i32*        (-1 is the image)
//!   out_channels:u32 out_scale:f64
//!   has_weights:u8, then
//!     rank:u32 dim:u32* weights:i8*
//!     granularity:u8 (0 tensor | 1 channel) scale_count:u32 scale:f64*
//!     bias_count:u32 bias:i32*
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::read_bytes;
use crate::error::{Error, Result};
use crate::pipeline::kernels::Window;
use crate::pipeline::model::{Layer, LayerKind, MicroModel, Source};
use crate::pipeline::quant::{Granularity, QuantParams, QuantizedTensor};

pub const MODEL_MAGIC: &[u8; 4] = b"EDGS";
pub const MODEL_VERSION: u32 = 1;

/// Guards allocations driven by header fields.
const MAX_ELEMENTS: usize = 1 << 26;

pub fn load_model(path: &Path) -> Result<MicroModel> {
    parse_model(&read_bytes(path)?)
}

pub fn write_model(model: &MicroModel) -> Result<Vec<u8>> {
    model.resolve()?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    let w = &mut out;
    w.write_u32::<LE>(MODEL_VERSION).unwrap();
    w.write_u32::<LE>(u32_of(model.layers.len())?).unwrap();
    w.write_u32::<LE>(u32_of(model.input_side)?).unwrap();
    for layer in &model.layers {
        let name = layer.name.as_bytes();
        w.write_u16::<LE>(u16::try_from(name.len()).map_err(|_| Error::ModelFile("layer name too long".into()))?)
            .unwrap();
        w.extend_from_slice(name);
        match &layer.kind {
            LayerKind::Conv { window, relu } | LayerKind::Depthwise { window, relu } => {
                w.write_u8(if matches!(layer.kind, LayerKind::Conv { .. }) {
                    0
                } else {
                    1
                })
                .unwrap();
                for v in [window.kernel, window.stride, window.pad] {
                    w.write_u32::<LE>(u32_of(v)?).unwrap();
                }
                w.write_u8(*relu as u8).unwrap();
            }
            LayerKind::MaxPool { kernel, stride } => {
                w.write_u8(2).unwrap();
                w.write_u32::<LE>(u32_of(*kernel)?).unwrap();
                w.write_u32::<LE>(u32_of(*stride)?).unwrap();
            }
            LayerKind::Upsample { factor } => {
                w.write_u8(3).unwrap();
                w.write_u32::<LE>(u32_of(*factor)?).unwrap();
            }
            LayerKind::Concat => w.write_u8(4).unwrap(),
            LayerKind::Head { anchors } => {
                w.write_u8(5).unwrap();
                w.write_u32::<LE>(u32_of(anchors.len())?).unwrap();
                for (aw, ah) in anchors {
                    w.write_f64::<LE>(*aw).unwrap();
                    w.write_f64::<LE>(*ah).unwrap();
                }
            }
        }
        w.write_u32::<LE>(u32_of(layer.inputs.len())?).unwrap();
        for src in &layer.inputs {
            let v = match src {
                Source::Image => -1,
                Source::Layer(j) => i32::try_from(*j).map_err(|_| Error::ModelFile("layer index too large".into()))?,
            };
            w.write_i32::<LE>(v).unwrap();
        }
        w.write_u32::<LE>(u32_of(layer.out_channels)?).unwrap();
        w.write_f64::<LE>(layer.out_scale).unwrap();
        match &layer.weights {
            None => w.write_u8(0).unwrap(),
            Some(t) => {
                w.write_u8(1).unwrap();
                w.write_u32::<LE>(u32_of(t.shape().len())?).unwrap();
                for d in t.shape() {
                    w.write_u32::<LE>(u32_of(*d)?).unwrap();
                }
                w.extend(t.data().iter().map(|&v| v as u8));
                let qp = t.qparams();
                w.write_u8(match qp.granularity() {
                    Granularity::PerTensor => 0,
                    Granularity::PerChannel => 1,
                })
                .unwrap();
                w.write_u32::<LE>(u32_of(qp.scales().len())?).unwrap();
                for s in qp.scales() {
                    w.write_f64::<LE>(*s).unwrap();
                }
                w.write_u32::<LE>(u32_of(layer.bias.len())?).unwrap();
                for b in &layer.bias {
                    w.write_i32::<LE>(*b).unwrap();
                }
            }
        }
    }
    Ok(out)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::ModelFile(format!("{v} does not fit a u32 field")))
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn fail<T>(&self, what: &str) -> Result<T> {
        Err(Error::ModelFile(format!(
            "truncated or invalid {what} at byte {}",
            self.cur.position()
        )))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        self.cur.read_u8().or_else(|_| self.fail(what))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.cur.read_u16::<LE>().or_else(|_| self.fail(what))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LE>().or_else(|_| self.fail(what))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let v = self.u32(what)? as usize;
        if v > MAX_ELEMENTS {
            return Err(Error::ModelFile(format!("{what} {v} is implausibly large")));
        }
        Ok(v)
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        self.cur.read_i32::<LE>().or_else(|_| self.fail(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.cur.read_f64::<LE>().or_else(|_| self.fail(what))
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.cur.read_exact(&mut buf).or_else(|_| self.fail(what))?;
        Ok(buf)
    }

    fn window(&mut self) -> Result<(Window, bool)> {
        let kernel = self.usize("kernel")?;
        let stride = self.usize("stride")?;
        let pad = self.usize("padding")?;
        let relu = match self.u8("relu flag")? {
            0 => false,
            1 => true,
            v => return Err(Error::ModelFile(format!("relu flag must be 0 or 1, got {v}"))),
        };
        Ok((Window { kernel, stride, pad }, relu))
    }
}

/// Decode a model container and check that its graph resolves.
pub fn parse_model(bytes: &[u8]) -> Result<MicroModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::ModelFile("missing EDGS magic".into()));
    }
    let mut r = Reader {
        cur: Cursor::new(&bytes[4..]),
    };
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFile(format!("unsupported version {version}")));
    }
    let count = r.usize("layer count")?;
    let input_side = r.usize("input side")?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = String::from_utf8(r.bytes(name_len, "layer name")?)
            .map_err(|_| Error::ModelFile(format!("layer {i}: name is not UTF-8")))?;
        let kind = match r.u8("layer kind")? {
            0 => {
                let (window, relu) = r.window()?;
                LayerKind::Conv { window, relu }
            }
            1 => {
                let (window, relu) = r.window()?;
                LayerKind::Depthwise { window, relu }
            }
            2 => LayerKind::MaxPool {
                kernel: r.usize("kernel")?,
                stride: r.usize("stride")?,
            },
            3 => LayerKind::Upsample {
                factor: r.usize("factor")?,
            },
            4 => LayerKind::Concat,
            5 => {
                let n = r.usize("anchor count")?;
                let mut anchors = Vec::with_capacity(n.min(64));
                for _ in 0..n {
                    anchors.push((r.f64("anchor")?, r.f64("anchor")?));
                }
                LayerKind::Head { anchors }
            }
            k => return Err(Error::ModelFile(format!("layer {i} `{name}`: unknown kind {k}"))),
        };
        let n_inputs = r.usize("input count")?;
        let mut inputs = Vec::with_capacity(n_inputs.min(16));
        for _ in 0..n_inputs {
            inputs.push(match r.i32("input")? {
                -1 => Source::Image,
                j if j >= 0 => Source::Layer(j as usize),
                j => return Err(Error::ModelFile(format!("layer {i} `{name}`: bad input index {j}"))),
            });
        }
        let out_channels = r.usize("output channels")?;
        let out_scale = r.f64("output scale")?;
        let mut bias = Vec::new();
        let weights = match r.u8("weight flag")? {
            0 => None,
            1 => {
                let rank = r.usize("rank")?;
                let mut shape = Vec::with_capacity(rank.min(8));
                for _ in 0..rank {
                    shape.push(r.usize("dimension")?);
                }
                let volume = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d).filter(|v| *v <= MAX_ELEMENTS))
                    .ok_or_else(|| Error::ModelFile(format!("layer {i} `{name}`: weight tensor too large")))?;
                let data: Vec<i8> = r.bytes(volume, "weights")?.into_iter().map(|b| b as i8).collect();
                let granularity = match r.u8("granularity")? {
                    0 => Granularity::PerTensor,
                    1 => Granularity::PerChannel,
                    g => return Err(Error::ModelFile(format!("layer {i} `{name}`: unknown granularity {g}"))),
                };
                let n_scales = r.usize("scale count")?;
                let mut scales = Vec::with_capacity(n_scales.min(4096));
                for _ in 0..n_scales {
                    scales.push(r.f64("scale")?);
                }
                let n_bias = r.usize("bias count")?;
                for _ in 0..n_bias {
                    bias.push(r.i32("bias")?);
                }
                let wrap = |e: Error| Error::ModelFile(format!("layer {i} `{name}`: {e}"));
                let qp = QuantParams::new(granularity, scales).map_err(wrap)?;
                Some(QuantizedTensor::new(shape, data, qp).map_err(wrap)?)
            }
            f => return Err(Error::ModelFile(format!("layer {i} `{name}`: weight flag {f}"))),
        };
        layers.push(Layer {
            name,
            kind,
            inputs,
            out_channels,
            weights,
            bias,
            out_scale,
        });
    }
    let consumed = 4 + r.cur.position() as usize;
    if consumed != bytes.len() {
        return Err(Error::ModelFile(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - consumed
        )));
    }
    let model = MicroModel { input_side, layers };
    model.resolve().map_err(|e| Error::ModelFile(e.to_string()))?;
    Ok(model)
}
