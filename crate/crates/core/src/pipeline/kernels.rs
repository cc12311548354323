//! Integer-only operator kernels over `[C, H, W]` activations.

use super::quant::{Granularity, QuantParams, QuantizedTensor, QMAX};
use crate::error::{Error, Result};

/// Fixed-point form of a positive real multiplier: `m0 · 2^-31 · 2^exponent`
/// with `m0` in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requantizer {
    m0: i64,
    exponent: i32,
}

impl Requantizer {
    pub fn new(multiplier: f64) -> Result<Self> {
        if !(multiplier > 0.0) || !multiplier.is_finite() {
            return Err(Error::domain(format!(
                "requantization multiplier {multiplier} must be positive"
            )));
        }
        // frexp: multiplier = frac · 2^exponent, frac in [0.5, 1)
        let mut exponent = multiplier.log2().floor() as i32 + 1;
        let mut frac = multiplier / 2f64.powi(exponent);
        while frac >= 1.0 {
            frac /= 2.0;
            exponent += 1;
        }
        while frac < 0.5 {
            frac *= 2.0;
            exponent -= 1;
        }
        let mut m0 = (frac * (1u64 << 31) as f64).round() as i64;
        if m0 == 1 << 31 {
            m0 /= 2;
            exponent += 1;
        }
        if exponent > 31 {
            return Err(Error::domain(format!(
                "requantization multiplier {multiplier} is too large"
            )));
        }
        Ok(Self { m0, exponent })
    }

    pub fn multiplier(&self) -> f64 {
        self.m0 as f64 / (1u64 << 31) as f64 * 2f64.powi(self.exponent)
    }

    /// `round_half_even(acc · multiplier)`.
    pub fn apply(&self, acc: i32) -> i32 {
        let prod = acc as i128 * self.m0 as i128;
        let shift = (31 - self.exponent) as u32;
        rounding_shift_half_even(prod, shift).clamp(i32::MIN as i128, i32::MAX as i128) as i32
    }
}

fn rounding_shift_half_even(x: i128, shift: u32) -> i128 {
    if shift == 0 {
        return x;
    }
    if shift >= 127 {
        return 0;
    }
    let floor = x >> shift;
    let rem = x - (floor << shift);
    let half = 1i128 << (shift - 1);
    match rem.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => floor + (floor & 1),
    }
}

fn saturate(v: i32, relu: bool) -> i8 {
    let lo = if relu { 0 } else { -QMAX };
    v.clamp(lo, QMAX) as i8
}

/// Geometry shared by convolution-like operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Window {
    pub fn output_len(&self, input: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::domain("kernel and stride must be positive"));
        }
        let padded = input + 2 * self.pad;
        if padded < self.kernel {
            return Err(Error::domain(format!(
                "kernel {} does not fit an input of {input} with padding {}",
                self.kernel, self.pad
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

pub(crate) fn chw(t: &QuantizedTensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::domain(format!(
            "expected a [C, H, W] tensor, got {:?}",
            t.shape()
        ))),
    }
}

fn per_tensor_scale(t: &QuantizedTensor, what: &str) -> Result<f64> {
    if t.qparams().granularity() != Granularity::PerTensor {
        return Err(Error::domain(format!("{what} must be quantized per tensor")));
    }
    Ok(t.qparams().scale())
}

fn output_tensor(c: usize, h: usize, w: usize, data: Vec<i8>, out_scale: f64) -> Result<QuantizedTensor> {
    QuantizedTensor::new(vec![c, h, w], data, QuantParams::per_tensor(out_scale)?)
}

/// Per-output-channel requantizers for `in_scale · w_scale[o] / out_scale`.
fn requantizers(
    in_scale: f64,
    weights: &QuantizedTensor,
    out_channels: usize,
    out_scale: f64,
) -> Result<Vec<Requantizer>> {
    (0..out_channels)
        .map(|o| {
            let w_scale = match weights.qparams().granularity() {
                Granularity::PerChannel => weights.qparams().scales()[o],
                Granularity::PerTensor => weights.qparams().scale(),
            };
            Requantizer::new(in_scale * w_scale / out_scale)
        })
        .collect()
}

/// INT8 convolution with 32-bit accumulation. `bias[o]` is expressed in
/// units of `in_scale · w_scale[o]`.
pub fn conv2d_int8(
    input: &QuantizedTensor,
    weights: &QuantizedTensor,
    bias: &[i32],
    out_qparams: &QuantParams,
    window: Window,
    relu: bool,
) -> Result<QuantizedTensor> {
    let (c, h, w) = chw(input)?;
    let (oc, kc, kh, kw) = match *weights.shape() {
        [o, c, kh, kw] => (o, c, kh, kw),
        _ => {
            return Err(Error::domain(format!(
                "conv weights must be [O, C, K, K], got {:?}",
                weights.shape()
            )))
        }
    };
    if kc != c || kh != window.kernel || kw != window.kernel {
        return Err(Error::domain(format!(
            "weights {:?} do not match {c} input channels with a {}x{} window",
            weights.shape(),
            window.kernel,
            window.kernel
        )));
    }
    if bias.len() != oc {
        return Err(Error::domain(format!("{} biases for {oc} output channels", bias.len())));
    }
    let in_scale = per_tensor_scale(input, "conv input")?;
    if out_qparams.granularity() != Granularity::PerTensor {
        return Err(Error::domain("activations are quantized per tensor"));
    }
    let out_scale = out_qparams.scale();
    let rq = requantizers(in_scale, weights, oc, out_scale)?;
    let (oh, ow) = (window.output_len(h)?, window.output_len(w)?);
    let x = input.data();
    let wt = weights.data();
    let k = window.kernel;
    let mut out = vec![0i8; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc: i32 = bias[o];
                for ci in 0..c {
                    for ky in 0..k {
                        let iy = (oy * window.stride + ky) as isize - window.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * window.stride + kx) as isize - window.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xv = x[(ci * h + iy as usize) * w + ix as usize] as i32;
                            let wv = wt[((o * c + ci) * k + ky) * k + kx] as i32;
                            acc += xv * wv;
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = saturate(rq[o].apply(acc), relu);
            }
        }
    }
    output_tensor(oc, oh, ow, out, out_scale)
}

/// Depthwise INT8 convolution; weights are `[C, 1, K, K]`.
pub fn depthwise_int8(
    input: &QuantizedTensor,
    weights: &QuantizedTensor,
    bias: &[i32],
    out_qparams: &QuantParams,
    window: Window,
    relu: bool,
) -> Result<QuantizedTensor> {
    let (c, h, w) = chw(input)?;
    if weights.shape() != [c, 1, window.kernel, window.kernel] {
        return Err(Error::domain(format!(
            "depthwise weights {:?} do not match {c} channels",
            weights.shape()
        )));
    }
    if bias.len() != c {
        return Err(Error::domain(format!("{} biases for {c} channels", bias.len())));
    }
    let in_scale = per_tensor_scale(input, "depthwise input")?;
    let out_scale = out_qparams.scale();
    let rq = requantizers(in_scale, weights, c, out_scale)?;
    let (oh, ow) = (window.output_len(h)?, window.output_len(w)?);
    let k = window.kernel;
    let (x, wt) = (input.data(), weights.data());
    let mut out = vec![0i8; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[ch];
                for ky in 0..k {
                    let iy = (oy * window.stride + ky) as isize - window.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * window.stride + kx) as isize - window.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += x[(ch * h + iy as usize) * w + ix as usize] as i32 * wt[(ch * k + ky) * k + kx] as i32;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = saturate(rq[ch].apply(acc), relu);
            }
        }
    }
    output_tensor(c, oh, ow, out, out_scale)
}

/// Max pooling without padding; the scale is carried through.
pub fn maxpool_int8(input: &QuantizedTensor, kernel: usize, stride: usize) -> Result<QuantizedTensor> {
    let (c, h, w) = chw(input)?;
    let window = Window { kernel, stride, pad: 0 };
    let (oh, ow) = (window.output_len(h)?, window.output_len(w)?);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = i8::MIN;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        m = m.max(x[(ch * h + oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out.push(m);
            }
        }
    }
    output_tensor(c, oh, ow, out, per_tensor_scale(input, "pool input")?)
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample_nearest_int8(input: &QuantizedTensor, factor: usize) -> Result<QuantizedTensor> {
    if factor == 0 {
        return Err(Error::domain("upsample factor must be positive"));
    }
    let (c, h, w) = chw(input)?;
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out.push(x[(ch * h + oy / factor) * w + ox / factor]);
            }
        }
    }
    output_tensor(c, oh, ow, out, per_tensor_scale(input, "upsample input")?)
}

/// Channel concatenation, requantizing every input to `out_scale`.
pub fn concat_int8(inputs: &[&QuantizedTensor], out_scale: f64) -> Result<QuantizedTensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::domain("concat needs at least one input"))?;
    let (_, h, w) = chw(first)?;
    let mut total_c = 0;
    let mut out = Vec::new();
    for t in inputs {
        let (c, th, tw) = chw(t)?;
        if (th, tw) != (h, w) {
            return Err(Error::domain(format!(
                "concat inputs differ spatially: {h}x{w} vs {th}x{tw}"
            )));
        }
        let rq = Requantizer::new(per_tensor_scale(t, "concat input")? / out_scale)?;
        out.extend(t.data().iter().map(|&v| saturate(rq.apply(v as i32), false)));
        total_c += c;
    }
    output_tensor(total_c, h, w, out, out_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::quant::{calibrate, dequantize, quantize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn requantizer_tracks_multiplier() {
        for m in [1e-6, 0.00123, 0.5, 0.75, 1.0, 1.5, 3.0, 117.0] {
            let r = Requantizer::new(m).unwrap();
            assert!((r.multiplier() / m - 1.0).abs() < 1e-9, "{m}");
            for acc in [-100_000, -7, 0, 3, 12_345, 1_000_000] {
                let exact = acc as f64 * m;
                assert!((r.apply(acc) as f64 - exact).abs() <= 0.5 + 1e-6 * exact.abs().max(1.0));
            }
        }
        assert_eq!(Requantizer::new(0.5).unwrap().apply(5), 2);
        assert_eq!(Requantizer::new(0.5).unwrap().apply(7), 4);
        assert_eq!(Requantizer::new(0.5).unwrap().apply(-5), -2);
        assert!(Requantizer::new(0.0).is_err());
    }

    #[test]
    fn identity_one_by_one_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..2 * 5 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qp = calibrate(&vals, &[2, 5, 5], Granularity::PerTensor).unwrap();
        let x = quantize(&vals, &[2, 5, 5], &qp).unwrap();
        let wv = [1.0, 0.0, 0.0, 1.0];
        let wq = calibrate(&wv, &[2, 2, 1, 1], Granularity::PerChannel).unwrap();
        let w = quantize(&wv, &[2, 2, 1, 1], &wq).unwrap();
        let y = conv2d_int8(
            &x,
            &w,
            &[0, 0],
            &qp,
            Window {
                kernel: 1,
                stride: 1,
                pad: 0,
            },
            false,
        )
        .unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_gives_requantized_bias() {
        let x = QuantizedTensor::new(vec![3, 4, 4], vec![0; 48], QuantParams::per_tensor(0.01).unwrap()).unwrap();
        let wv: Vec<f64> = (0..2 * 3 * 9).map(|i| (i as f64 - 20.0) / 30.0).collect();
        let wq = calibrate(&wv, &[2, 3, 3, 3], Granularity::PerChannel).unwrap();
        let w = quantize(&wv, &[2, 3, 3, 3], &wq).unwrap();
        let out_q = QuantParams::per_tensor(0.02).unwrap();
        let bias = [1000, -2500];
        let y = conv2d_int8(
            &x,
            &w,
            &bias,
            &out_q,
            Window {
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            false,
        )
        .unwrap();
        for (o, b) in bias.iter().enumerate() {
            let expect = (*b as f64 * 0.01 * wq.scales()[o] / 0.02).round_ties_even() as i8;
            assert!(y.data()[o * 16..(o + 1) * 16].iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn relu_clamps_negative_outputs() {
        let x = QuantizedTensor::new(
            vec![1, 2, 2],
            vec![10, -10, 5, -5],
            QuantParams::per_tensor(1.0).unwrap(),
        )
        .unwrap();
        let w = QuantizedTensor::new(vec![1, 1, 1, 1], vec![1], QuantParams::per_channel(vec![1.0]).unwrap()).unwrap();
        let q = QuantParams::per_tensor(1.0).unwrap();
        let y = conv2d_int8(
            &x,
            &w,
            &[0],
            &q,
            Window {
                kernel: 1,
                stride: 1,
                pad: 0,
            },
            true,
        )
        .unwrap();
        assert_eq!(y.data(), &[10, 0, 5, 0]);
    }

    #[test]
    fn shape_errors() {
        let x = QuantizedTensor::new(vec![2, 3, 3], vec![0; 18], QuantParams::per_tensor(1.0).unwrap()).unwrap();
        let w = QuantizedTensor::new(
            vec![1, 3, 1, 1],
            vec![0; 3],
            QuantParams::per_channel(vec![1.0]).unwrap(),
        )
        .unwrap();
        let q = QuantParams::per_tensor(1.0).unwrap();
        assert!(conv2d_int8(
            &x,
            &w,
            &[0],
            &q,
            Window {
                kernel: 1,
                stride: 1,
                pad: 0
            },
            false
        )
        .is_err());
        let other = QuantizedTensor::new(vec![1, 2, 2], vec![0; 4], QuantParams::per_tensor(1.0).unwrap()).unwrap();
        assert!(concat_int8(&[&x, &other], 1.0).is_err());
    }

    #[test]
    fn pool_upsample_concat() {
        let s = QuantParams::per_tensor(0.5).unwrap();
        let x = QuantizedTensor::new(vec![1, 2, 2], vec![1, -3, 7, 2], s.clone()).unwrap();
        assert_eq!(maxpool_int8(&x, 2, 2).unwrap().data(), &[7]);
        let up = upsample_nearest_int8(&x, 2).unwrap();
        assert_eq!(up.shape(), &[1, 4, 4]);
        assert_eq!(&up.data()[..4], &[1, 1, -3, -3]);
        let y = QuantizedTensor::new(vec![1, 2, 2], vec![4, 4, 4, 4], QuantParams::per_tensor(0.25).unwrap()).unwrap();
        let cat = concat_int8(&[&x, &y], 0.5).unwrap();
        assert_eq!(cat.shape(), &[2, 2, 2]);
        assert_eq!(cat.data(), &[1, -3, 7, 2, 2, 2, 2, 2]);
        let deq = dequantize(&cat);
        assert_eq!(deq[4], 1.0);
    }
}
