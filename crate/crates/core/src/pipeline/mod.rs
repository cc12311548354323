//! The on-device vision pipeline, run at desk scale:
//! demosaic → white balance → downscale → INT8 detector → decode → NMS →
//! occupancy count.

pub mod decode;
pub mod image;
pub mod kernels;
pub mod model;
pub mod nms;
pub mod quant;

pub use decode::{decode, DetectionBox};
pub use image::{auto_white_balance, debayer, downscale, CfaPattern, RawBayerImage, RgbImage};
pub use model::{forward, forward_reference, MicroModel};
pub use nms::{count_occupancy, iou, nms};
pub use quant::{calibrate, dequantize, quantize, Granularity, QuantParams, QuantizedTensor};

use crate::error::Result;

/// Confidence threshold applied before suppression.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.4;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub boxes: Vec<DetectionBox>,
    pub macs: u64,
}

impl Detections {
    pub fn occupancy(&self) -> usize {
        count_occupancy(&self.boxes)
    }
}

/// Full pipeline from a raw mosaic to NMS-filtered boxes.
pub fn detect(raw: &RawBayerImage, model: &MicroModel, conf_threshold: f64, iou_threshold: f64) -> Result<Detections> {
    let rgb = auto_white_balance(&debayer(raw)?)?;
    let input = if rgb.width() == model.input_side && rgb.height() == model.input_side {
        rgb
    } else {
        downscale(&rgb, model.input_side)?
    };
    let out = forward(model, &input)?;
    let boxes = nms(&decode(&out.heads, model.input_side, conf_threshold), iou_threshold);
    Ok(Detections { boxes, macs: out.macs })
}
