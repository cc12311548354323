//! Symmetric INT8 post-training quantization.
//!
//! `q = clamp(round_half_even(x / scale), -127, 127)`, zero point fixed at 0.
//! Weights use one scale per output channel (axis 0), activations one scale
//! per tensor.

use crate::error::{Error, Result};

pub const QMAX: i32 = 127;

/// Smallest scale handed out by [`calibrate`], used for all-zero inputs.
pub const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    PerTensor,
    PerChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantParams {
    granularity: Granularity,
    scales: Vec<f64>,
}

impl QuantParams {
    pub fn per_tensor(scale: f64) -> Result<Self> {
        Self::new(Granularity::PerTensor, vec![scale])
    }

    pub fn per_channel(scales: Vec<f64>) -> Result<Self> {
        Self::new(Granularity::PerChannel, scales)
    }

    pub fn new(granularity: Granularity, scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::domain("quantization needs at least one scale"));
        }
        if granularity == Granularity::PerTensor && scales.len() != 1 {
            return Err(Error::domain("per-tensor quantization takes exactly one scale"));
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::domain(format!("scales must be positive and finite, got {s}")));
        }
        Ok(Self { granularity, scales })
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Scale of a per-tensor parameter set (first scale otherwise).
    pub fn scale(&self) -> f64 {
        self.scales[0]
    }

    pub fn zero_point(&self) -> i32 {
        0
    }

    fn check_shape(&self, shape: &[usize], len: usize) -> Result<usize> {
        let volume: usize = shape.iter().product();
        if shape.is_empty() || volume != len {
            return Err(Error::domain(format!("shape {shape:?} does not describe {len} values")));
        }
        match self.granularity {
            Granularity::PerTensor => Ok(volume),
            Granularity::PerChannel => {
                if shape[0] != self.scales.len() {
                    return Err(Error::domain(format!(
                        "{} per-channel scales for {} channels",
                        self.scales.len(),
                        shape[0]
                    )));
                }
                Ok(volume / shape[0])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    shape: Vec<usize>,
    data: Vec<i8>,
    qparams: QuantParams,
}

impl QuantizedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<i8>, qparams: QuantParams) -> Result<Self> {
        qparams.check_shape(&shape, data.len())?;
        if data.contains(&i8::MIN) {
            return Err(Error::domain("-128 is outside the symmetric INT8 range"));
        }
        Ok(Self { shape, data, qparams })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn qparams(&self) -> &QuantParams {
        &self.qparams
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Scale applied to element `i`.
    pub fn scale_of(&self, i: usize) -> f64 {
        match self.qparams.granularity {
            Granularity::PerTensor => self.qparams.scales[0],
            Granularity::PerChannel => self.qparams.scales[i / (self.data.len() / self.shape[0])],
        }
    }
}

/// Max-abs calibration. Per-channel scales are taken along axis 0.
pub fn calibrate(values: &[f64], shape: &[usize], granularity: Granularity) -> Result<QuantParams> {
    let volume: usize = shape.iter().product();
    if values.is_empty() || shape.is_empty() || volume != values.len() {
        return Err(Error::domain(format!(
            "cannot calibrate {} values with shape {shape:?}",
            values.len()
        )));
    }
    let to_scale = |max_abs: f64| (max_abs / QMAX as f64).max(MIN_SCALE);
    let max_abs = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scales = match granularity {
        Granularity::PerTensor => vec![to_scale(max_abs(values))],
        Granularity::PerChannel => values.chunks(volume / shape[0]).map(|c| to_scale(max_abs(c))).collect(),
    };
    QuantParams::new(granularity, scales)
}

pub fn quantize_value(x: f64, scale: f64) -> i8 {
    (x / scale).round_ties_even().clamp(-(QMAX as f64), QMAX as f64) as i8
}

pub fn quantize(values: &[f64], shape: &[usize], qparams: &QuantParams) -> Result<QuantizedTensor> {
    let inner = qparams.check_shape(shape, values.len())?;
    let data = match qparams.granularity {
        Granularity::PerTensor => values.iter().map(|&x| quantize_value(x, qparams.scales[0])).collect(),
        Granularity::PerChannel => values
            .chunks(inner)
            .zip(&qparams.scales)
            .flat_map(|(chunk, &s)| chunk.iter().map(move |&x| quantize_value(x, s)))
            .collect(),
    };
    QuantizedTensor::new(shape.to_vec(), data, qparams.clone())
}

pub fn dequantize(q: &QuantizedTensor) -> Vec<f64> {
    q.data
        .iter()
        .enumerate()
        .map(|(i, &v)| v as f64 * q.scale_of(i))
        .collect()
}
