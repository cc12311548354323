//! A reduced YOLO-style detector graph with quantized weights.
//!
//! The graph is a list of layers in execution order; each layer names its
//! inputs, either the image or an earlier layer. Detection heads are 1×1
//! convolutions producing `anchors × 5` channels laid out as
//! `[anchor][tx, ty, tw, th, objectness]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::RgbImage;
use super::kernels::{chw, concat_int8, conv2d_int8, depthwise_int8, maxpool_int8, upsample_nearest_int8, Window};
use super::quant::{calibrate, dequantize, quantize, Granularity, QuantParams, QuantizedTensor};
use crate::error::{Error, Result};

/// Values predicted per anchor: box offsets, box size, objectness.
pub const ATTRS_PER_ANCHOR: usize = 5;

/// Quantization scale of the network input: pixels map to `[0, 1]`.
pub const INPUT_SCALE: f64 = 1.0 / 127.0;

/// `-ln((1 - p) / p)` for p = 0.01.
const OBJECTNESS_PRIOR_BIAS: f64 = -4.59511985013459;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Image,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv {
        window: Window,
        relu: bool,
    },
    Depthwise {
        window: Window,
        relu: bool,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Upsample {
        factor: usize,
    },
    Concat,
    /// 1×1 projection to `anchors.len() × 5` logits. Anchors are `(w, h)`
    /// in input pixels.
    Head {
        anchors: Vec<(f64, f64)>,
    },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Depthwise { .. } => "depthwise",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::Upsample { .. } => "upsample",
            LayerKind::Concat => "concat",
            LayerKind::Head { .. } => "head",
        }
    }

    fn has_weights(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv { .. } | LayerKind::Depthwise { .. } | LayerKind::Head { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<Source>,
    pub out_channels: usize,
    /// `[O, C, K, K]` for convolutions and heads, `[C, 1, K, K]` depthwise.
    pub weights: Option<QuantizedTensor>,
    /// In units of `input_scale · weight_scale[o]`.
    pub bias: Vec<i32>,
    /// Per-tensor scale of this layer's output.
    pub out_scale: f64,
}

/// Shape of an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn volume(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroModel {
    pub input_side: usize,
    pub layers: Vec<Layer>,
}

/// Raw output of one detection head, dequantized.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTensor {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Input pixels per grid cell.
    pub stride: f64,
    pub anchors: Vec<(f64, f64)>,
    /// `[anchors × 5, grid_h, grid_w]`, row-major.
    pub logits: Vec<f64>,
}

impl HeadTensor {
    pub fn logit(&self, anchor: usize, attr: usize, y: usize, x: usize) -> f64 {
        self.logits[((anchor * ATTRS_PER_ANCHOR + attr) * self.grid_h + y) * self.grid_w + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub heads: Vec<HeadTensor>,
    /// Multiply-accumulates performed by convolution layers.
    pub macs: u64,
}

/// Geometry and cost of a layer once shapes are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedLayer {
    pub input: Shape,
    pub output: Shape,
    pub macs: u64,
}

impl MicroModel {
    /// Resolve every layer's input/output shapes, checking that the graph
    /// chains and that weights match.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        let image = Shape {
            channels: 3,
            height: self.input_side,
            width: self.input_side,
        };
        let mut out: Vec<ResolvedLayer> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::domain(format!("layer {i} `{}`: {msg}", layer.name));
            let mut shapes = Vec::with_capacity(layer.inputs.len());
            for src in &layer.inputs {
                shapes.push(match *src {
                    Source::Image => image,
                    Source::Layer(j) if j < i => out[j].output,
                    Source::Layer(j) => return Err(err(format!("input {j} is not an earlier layer"))),
                });
            }
            let first = *shapes.first().ok_or_else(|| err("no inputs".into()))?;
            if !matches!(layer.kind, LayerKind::Concat) && shapes.len() != 1 {
                return Err(err("only concat takes several inputs".into()));
            }
            let conv_out = |w: &Window, oc: usize| -> Result<Shape> {
                Ok(Shape {
                    channels: oc,
                    height: w.output_len(first.height).map_err(|e| err(e.to_string()))?,
                    width: w.output_len(first.width).map_err(|e| err(e.to_string()))?,
                })
            };
            let (output, macs) = match &layer.kind {
                LayerKind::Conv { window, .. } => {
                    let s = conv_out(window, layer.out_channels)?;
                    let macs = s.volume() * first.channels * window.kernel * window.kernel;
                    (s, macs)
                }
                LayerKind::Depthwise { window, .. } => {
                    if layer.out_channels != first.channels {
                        return Err(err("depthwise layers keep the channel count".into()));
                    }
                    let s = conv_out(window, first.channels)?;
                    (s, s.volume() * window.kernel * window.kernel)
                }
                LayerKind::Head { anchors } => {
                    if anchors.is_empty() || layer.out_channels != anchors.len() * ATTRS_PER_ANCHOR {
                        return Err(err("head channels must equal anchors × 5".into()));
                    }
                    let s = Shape {
                        channels: layer.out_channels,
                        ..first
                    };
                    (s, s.volume() * first.channels)
                }
                LayerKind::MaxPool { kernel, stride } => {
                    let s = conv_out(
                        &Window {
                            kernel: *kernel,
                            stride: *stride,
                            pad: 0,
                        },
                        first.channels,
                    )?;
                    (s, 0)
                }
                LayerKind::Upsample { factor } => {
                    if *factor == 0 {
                        return Err(err("upsample factor must be positive".into()));
                    }
                    (
                        Shape {
                            channels: first.channels,
                            height: first.height * factor,
                            width: first.width * factor,
                        },
                        0,
                    )
                }
                LayerKind::Concat => {
                    if shapes
                        .iter()
                        .any(|s| (s.height, s.width) != (first.height, first.width))
                    {
                        return Err(err("concat inputs differ spatially".into()));
                    }
                    (
                        Shape {
                            channels: shapes.iter().map(|s| s.channels).sum(),
                            ..first
                        },
                        0,
                    )
                }
            };
            if layer.out_channels != output.channels {
                return Err(err(format!(
                    "declares {} output channels, resolves to {}",
                    layer.out_channels, output.channels
                )));
            }
            if layer.kind.has_weights() {
                let expected = weight_shape(&layer.kind, first.channels, output.channels);
                match &layer.weights {
                    Some(w) if w.shape() == expected.as_slice() => {}
                    _ => return Err(err(format!("weights must have shape {expected:?}"))),
                }
                if layer.bias.len() != output.channels {
                    return Err(err("one bias per output channel".into()));
                }
            }
            if !(layer.out_scale > 0.0) {
                return Err(err("output scale must be positive".into()));
            }
            out.push(ResolvedLayer {
                input: first,
                output,
                macs: macs as u64,
            });
        }
        if !self.layers.iter().any(|l| matches!(l.kind, LayerKind::Head { .. })) {
            return Err(Error::domain("model has no detection head"));
        }
        Ok(out)
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_ref().map_or(0, |w| w.len()) + l.bias.len())
            .sum()
    }

    pub fn mac_count(&self) -> Result<u64> {
        Ok(self.resolve()?.iter().map(|r| r.macs).sum())
    }

    /// Build the shipped detector for `side × side` inputs with weights drawn
    /// from `seed` and activation scales calibrated on synthetic images.
    pub fn reference(side: usize, seed: u64) -> Result<Self> {
        if side == 0 || !side.is_multiple_of(32) {
            return Err(Error::domain(format!("input side {side} must be a multiple of 32")));
        }
        let spec = reference_topology();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let float_layers: Vec<FloatLayer> = spec.into_iter().map(|t| FloatLayer::random(t, &mut rng)).collect();
        let calibration: Vec<RgbImage> = (0..3).map(|_| synthetic_image(side, &mut rng)).collect();
        quantize_graph(side, float_layers, &calibration)
    }
}

fn weight_shape(kind: &LayerKind, in_c: usize, out_c: usize) -> Vec<usize> {
    match kind {
        LayerKind::Conv { window, .. } => vec![out_c, in_c, window.kernel, window.kernel],
        LayerKind::Depthwise { window, .. } => vec![out_c, 1, window.kernel, window.kernel],
        LayerKind::Head { .. } => vec![out_c, in_c, 1, 1],
        _ => vec![],
    }
}

/// A layer before quantization: real-valued weights and biases.
#[derive(Debug, Clone)]
pub struct FloatLayer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<Source>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

struct Topology {
    name: &'static str,
    kind: LayerKind,
    inputs: Vec<Source>,
    in_c: usize,
    out_c: usize,
}

fn conv(k: usize, s: usize) -> LayerKind {
    LayerKind::Conv {
        window: Window {
            kernel: k,
            stride: s,
            pad: k / 2,
        },
        relu: true,
    }
}

fn dw(k: usize, s: usize) -> LayerKind {
    LayerKind::Depthwise {
        window: Window {
            kernel: k,
            stride: s,
            pad: k / 2,
        },
        relu: true,
    }
}

/// Strided backbone, one upsample/concat neck, heads at strides 32 and 16.
fn reference_topology() -> Vec<Topology> {
    use Source::{Image, Layer as L};
    let t = |name, kind, inputs, in_c, out_c| Topology {
        name,
        kind,
        inputs,
        in_c,
        out_c,
    };
    let head_anchors_p5 = vec![(40.0, 48.0), (64.0, 80.0), (104.0, 128.0)];
    let head_anchors_p4 = vec![(10.0, 12.0), (16.0, 20.0), (26.0, 32.0)];
    vec![
        t("stem", conv(3, 2), vec![Image], 3, 16),   // 0: /2
        t("down2", conv(3, 2), vec![L(0)], 16, 32),  // 1: /4
        t("down3", conv(3, 2), vec![L(1)], 32, 64),  // 2: /8
        t("dw3", dw(3, 1), vec![L(2)], 64, 64),      // 3
        t("pw3", conv(1, 1), vec![L(3)], 64, 64),    // 4
        t("down4", conv(3, 2), vec![L(4)], 64, 128), // 5: /16
        t("pw4", conv(1, 1), vec![L(5)], 128, 128),  // 6
        t("dw5", dw(3, 2), vec![L(6)], 128, 128),    // 7: /32
        t("pw5", conv(1, 1), vec![L(7)], 128, 320),  // 8
        t(
            "head_p5",
            LayerKind::Head {
                anchors: head_anchors_p5,
            },
            vec![L(8)],
            320,
            15,
        ), // 9
        t("up", LayerKind::Upsample { factor: 2 }, vec![L(8)], 320, 320), // 10: /16
        t("cat", LayerKind::Concat, vec![L(10), L(6)], 448, 448), // 11
        t("neck", conv(1, 1), vec![L(11)], 448, 96), // 12
        t("neck_dw", dw(3, 1), vec![L(12)], 96, 96), // 13
        t("neck_fuse", conv(3, 1), vec![L(13)], 96, 96), // 14
        t(
            "head_p4",
            LayerKind::Head {
                anchors: head_anchors_p4,
            },
            vec![L(14)],
            96,
            15,
        ), // 15
    ]
}

impl FloatLayer {
    fn random(t: Topology, rng: &mut ChaCha8Rng) -> Self {
        let (wlen, fan_in) = match &t.kind {
            LayerKind::Conv { window, .. } => (
                t.out_c * t.in_c * window.kernel * window.kernel,
                t.in_c * window.kernel * window.kernel,
            ),
            LayerKind::Depthwise { window, .. } => {
                (t.out_c * window.kernel * window.kernel, window.kernel * window.kernel)
            }
            LayerKind::Head { .. } => (t.out_c * t.in_c, t.in_c),
            _ => (0, 1),
        };
        // He-uniform keeps activation magnitudes roughly stable through ReLUs.
        let bound = (6.0 / fan_in as f64).sqrt();
        let weights = (0..wlen).map(|_| rng.gen_range(-bound..bound)).collect();
        let mut bias: Vec<f64> = if wlen > 0 {
            (0..t.out_c).map(|_| rng.gen_range(-0.05..0.05)).collect()
        } else {
            Vec::new()
        };
        if matches!(t.kind, LayerKind::Head { .. }) {
            // objectness starts at a 1% prior
            for b in bias.iter_mut().skip(ATTRS_PER_ANCHOR - 1).step_by(ATTRS_PER_ANCHOR) {
                *b = OBJECTNESS_PRIOR_BIAS;
            }
        }
        FloatLayer {
            name: t.name.to_string(),
            kind: t.kind,
            inputs: t.inputs,
            in_channels: t.in_c,
            out_channels: t.out_c,
            weights,
            bias,
        }
    }
}

fn synthetic_image(side: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let phase: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let freq: f64 = rng.gen_range(2.0..9.0);
    let planes = [0, 1, 2].map(|c| {
        (0..side * side)
            .map(|i| {
                let (x, y) = ((i % side) as f64 / side as f64, (i / side) as f64 / side as f64);
                let v = 0.5 + 0.45 * (freq * (x + 0.7 * y) * std::f64::consts::TAU + phase[c] * 6.0).sin();
                (v * 255.0).round() as u8
            })
            .collect()
    });
    RgbImage::new(side, side, planes).expect("synthetic image has consistent planes")
}

/// A dense `[C, H, W]` activation in real values.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

pub fn image_to_float(img: &RgbImage) -> FloatTensor {
    let mut data = Vec::with_capacity(3 * img.width() * img.height());
    for c in 0..3 {
        data.extend(img.plane(c).iter().map(|&v| v as f64 / 255.0));
    }
    FloatTensor {
        shape: Shape {
            channels: 3,
            height: img.height(),
            width: img.width(),
        },
        data,
    }
}

fn float_window(
    x: &FloatTensor,
    w: &[f64],
    bias: &[f64],
    window: Window,
    out_c: usize,
    depthwise: bool,
    relu: bool,
) -> FloatTensor {
    let Shape {
        channels: c,
        height: h,
        width: wd,
    } = x.shape;
    let oh = (h + 2 * window.pad - window.kernel) / window.stride + 1;
    let ow = (wd + 2 * window.pad - window.kernel) / window.stride + 1;
    let k = window.kernel;
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        let chans: Vec<usize> = if depthwise { vec![o] } else { (0..c).collect() };
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for (ci_idx, &ci) in chans.iter().enumerate() {
                    for ky in 0..k {
                        let iy = (oy * window.stride + ky) as isize - window.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * window.stride + kx) as isize - window.pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let wi = if depthwise {
                                (o * k + ky) * k + kx
                            } else {
                                ((o * c + ci_idx) * k + ky) * k + kx
                            };
                            acc += x.data[(ci * h + iy as usize) * wd + ix as usize] * w[wi];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = if relu { acc.max(0.0) } else { acc };
            }
        }
    }
    FloatTensor {
        shape: Shape {
            channels: out_c,
            height: oh,
            width: ow,
        },
        data: out,
    }
}

/// Evaluate a real-valued graph; returns every layer's activation.
pub fn run_float_graph(layers: &[FloatLayer], input: &FloatTensor) -> Vec<FloatTensor> {
    let mut acts: Vec<FloatTensor> = Vec::with_capacity(layers.len());
    for layer in layers {
        let get = |s: &Source| -> &FloatTensor {
            match *s {
                Source::Image => input,
                Source::Layer(j) => &acts[j],
            }
        };
        let x = get(&layer.inputs[0]);
        let y = match &layer.kind {
            LayerKind::Conv { window, relu } => float_window(
                x,
                &layer.weights,
                &layer.bias,
                *window,
                layer.out_channels,
                false,
                *relu,
            ),
            LayerKind::Depthwise { window, relu } => {
                float_window(x, &layer.weights, &layer.bias, *window, layer.out_channels, true, *relu)
            }
            LayerKind::Head { .. } => float_window(
                x,
                &layer.weights,
                &layer.bias,
                Window {
                    kernel: 1,
                    stride: 1,
                    pad: 0,
                },
                layer.out_channels,
                false,
                false,
            ),
            LayerKind::MaxPool { kernel, stride } => {
                let Shape {
                    channels: c,
                    height: h,
                    width: w,
                } = x.shape;
                let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
                let mut data = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut m = f64::NEG_INFINITY;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    m = m.max(x.data[(ch * h + oy * stride + ky) * w + ox * stride + kx]);
                                }
                            }
                            data.push(m);
                        }
                    }
                }
                FloatTensor {
                    shape: Shape {
                        channels: c,
                        height: oh,
                        width: ow,
                    },
                    data,
                }
            }
            LayerKind::Upsample { factor } => {
                let Shape {
                    channels: c,
                    height: h,
                    width: w,
                } = x.shape;
                let (oh, ow) = (h * factor, w * factor);
                let mut data = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            data.push(x.data[(ch * h + oy / factor) * w + ox / factor]);
                        }
                    }
                }
                FloatTensor {
                    shape: Shape {
                        channels: c,
                        height: oh,
                        width: ow,
                    },
                    data,
                }
            }
            LayerKind::Concat => {
                let parts: Vec<&FloatTensor> = layer.inputs.iter().map(get).collect();
                FloatTensor {
                    shape: Shape {
                        channels: parts.iter().map(|p| p.shape.channels).sum(),
                        ..x.shape
                    },
                    data: parts.iter().flat_map(|p| p.data.iter().copied()).collect(),
                }
            }
        };
        acts.push(y);
    }
    acts
}

/// Quantize a real-valued graph: per-channel weight scales, per-tensor
/// activation scales from the max-abs activation over `calibration`.
pub fn quantize_graph(side: usize, layers: Vec<FloatLayer>, calibration: &[RgbImage]) -> Result<MicroModel> {
    let mut act_max = vec![0.0f64; layers.len()];
    for img in calibration {
        let acts = run_float_graph(&layers, &image_to_float(img));
        for (m, a) in act_max.iter_mut().zip(&acts) {
            *m = a.data.iter().fold(*m, |m, v| m.max(v.abs()));
        }
    }
    let mut scales: Vec<f64> = act_max
        .iter()
        .map(|m| (m / 127.0).max(super::quant::MIN_SCALE))
        .collect();
    // Scale-preserving layers inherit their producer's scale so they stay
    // exact in the integer domain.
    for (i, layer) in layers.iter().enumerate() {
        if let LayerKind::MaxPool { .. } | LayerKind::Upsample { .. } = layer.kind {
            scales[i] = source_scale(&layer.inputs[0], &scales);
        }
    }
    let mut out = Vec::with_capacity(layers.len());
    for (i, layer) in layers.into_iter().enumerate() {
        let in_scale = source_scale(&layer.inputs[0], &scales);
        let (weights, bias) = if layer.kind.has_weights() {
            let shape = weight_shape(&layer.kind, layer.in_channels, layer.out_channels);
            let qp = calibrate(&layer.weights, &shape, Granularity::PerChannel)?;
            let w = quantize(&layer.weights, &shape, &qp)?;
            let bias = layer
                .bias
                .iter()
                .zip(qp.scales())
                .map(|(b, ws)| {
                    (b / (in_scale * ws))
                        .round_ties_even()
                        .clamp(i32::MIN as f64, i32::MAX as f64) as i32
                })
                .collect();
            (Some(w), bias)
        } else {
            (None, Vec::new())
        };
        out.push(Layer {
            name: layer.name,
            kind: layer.kind,
            inputs: layer.inputs,
            out_channels: layer.out_channels,
            weights,
            bias,
            out_scale: scales[i],
        });
    }
    let model = MicroModel {
        input_side: side,
        layers: out,
    };
    model.resolve()?;
    Ok(model)
}

fn source_scale(src: &Source, scales: &[f64]) -> f64 {
    match *src {
        Source::Image => INPUT_SCALE,
        Source::Layer(j) => scales[j],
    }
}

/// Quantize an image to the network input: `q = round(pixel · 127 / 255)`.
pub fn quantize_input(img: &RgbImage) -> Result<QuantizedTensor> {
    let f = image_to_float(img);
    quantize(
        &f.data,
        &[3, img.height(), img.width()],
        &QuantParams::per_tensor(INPUT_SCALE)?,
    )
}

/// Integer-only forward pass.
pub fn forward(model: &MicroModel, img: &RgbImage) -> Result<ForwardOutput> {
    if img.width() != model.input_side || img.height() != model.input_side {
        return Err(Error::domain(format!(
            "model expects {0}x{0} input, got {1}x{2}",
            model.input_side,
            img.width(),
            img.height()
        )));
    }
    let resolved = model.resolve()?;
    let input = quantize_input(img)?;
    let mut acts: Vec<QuantizedTensor> = Vec::with_capacity(model.layers.len());
    let mut heads = Vec::new();
    for layer in &model.layers {
        let src = |s: &Source| -> &QuantizedTensor {
            match *s {
                Source::Image => &input,
                Source::Layer(j) => &acts[j],
            }
        };
        let x = src(&layer.inputs[0]);
        let out_q = QuantParams::per_tensor(layer.out_scale)?;
        let weights = || layer.weights.as_ref().expect("resolved layers carry weights");
        let y = match &layer.kind {
            LayerKind::Conv { window, relu } => conv2d_int8(x, weights(), &layer.bias, &out_q, *window, *relu)?,
            LayerKind::Depthwise { window, relu } => depthwise_int8(x, weights(), &layer.bias, &out_q, *window, *relu)?,
            LayerKind::Head { anchors } => {
                let y = conv2d_int8(
                    x,
                    weights(),
                    &layer.bias,
                    &out_q,
                    Window {
                        kernel: 1,
                        stride: 1,
                        pad: 0,
                    },
                    false,
                )?;
                let (_, gh, gw) = chw(&y)?;
                heads.push(HeadTensor {
                    grid_h: gh,
                    grid_w: gw,
                    stride: model.input_side as f64 / gh as f64,
                    anchors: anchors.clone(),
                    logits: dequantize(&y),
                });
                y
            }
            LayerKind::MaxPool { kernel, stride } => maxpool_int8(x, *kernel, *stride)?,
            LayerKind::Upsample { factor } => upsample_nearest_int8(x, *factor)?,
            LayerKind::Concat => {
                let parts: Vec<&QuantizedTensor> = layer.inputs.iter().map(src).collect();
                concat_int8(&parts, layer.out_scale)?
            }
        };
        acts.push(y);
    }
    Ok(ForwardOutput {
        heads,
        macs: resolved.iter().map(|r| r.macs).sum(),
    })
}

/// Floating-point forward pass over the dequantized weights, with no
/// intermediate activation quantization.
pub fn forward_reference(model: &MicroModel, img: &RgbImage) -> Result<Vec<HeadTensor>> {
    let resolved = model.resolve()?;
    let scales: Vec<f64> = model.layers.iter().map(|l| l.out_scale).collect();
    let mut float_layers = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let in_scale = source_scale(&layer.inputs[0], &scales);
        let (weights, bias) = match &layer.weights {
            Some(w) => {
                let wd = dequantize(w);
                let scales = w.qparams().scales();
                let per_ch = w.qparams().granularity() == Granularity::PerChannel;
                let bias = layer
                    .bias
                    .iter()
                    .enumerate()
                    .map(|(o, &b)| b as f64 * in_scale * if per_ch { scales[o] } else { scales[0] })
                    .collect();
                (wd, bias)
            }
            None => (Vec::new(), Vec::new()),
        };
        float_layers.push(FloatLayer {
            name: layer.name.clone(),
            kind: layer.kind.clone(),
            inputs: layer.inputs.clone(),
            in_channels: resolved[i].input.channels,
            out_channels: layer.out_channels,
            weights,
            bias,
        });
    }
    let acts = run_float_graph(&float_layers, &image_to_float(img));
    Ok(model
        .layers
        .iter()
        .zip(acts)
        .filter_map(|(layer, a)| match &layer.kind {
            LayerKind::Head { anchors } => Some(HeadTensor {
                grid_h: a.shape.height,
                grid_w: a.shape.width,
                stride: model.input_side as f64 / a.shape.height as f64,
                anchors: anchors.clone(),
                logits: a.data,
            }),
            _ => None,
        })
        .collect())
}
