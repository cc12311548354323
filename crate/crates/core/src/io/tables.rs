use std::fmt::Write as _;

use crate::pipeline::DetectionBox;
use crate::tiler::TilePlan;

pub const DETECTIONS_HEADER: [&str; 6] = ["frame_id", "cx", "cy", "w", "h", "confidence"];

pub const PLAN_HEADER: [&str; 8] = [
    "layer",
    "tile_h",
    "tile_w",
    "tile_oc",
    "tiles",
    "working_set_bytes",
    "dma_in",
    "dma_out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub frame_id: u64,
    pub detection: DetectionBox,
}

/// Coordinates are normalized to the network input; six decimals.
pub fn write_detections(rows: &[DetectionRow]) -> String {
    let mut out = DETECTIONS_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let d = &r.detection;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.frame_id, d.cx, d.cy, d.w, d.h, d.confidence
        );
    }
    out
}

pub fn write_plan(plans: &[TilePlan]) -> String {
    let mut out = PLAN_HEADER.join(",");
    out.push('\n');
    for p in plans {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.layer,
            p.tile_h,
            p.tile_w,
            p.tile_oc,
            p.tiles_total,
            p.l1_working_set_bytes,
            p.dma_bytes_in,
            p.dma_bytes_out
        );
    }
    out
}
