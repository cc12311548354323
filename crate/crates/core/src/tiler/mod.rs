//! Static operator tiling over a three-level memory hierarchy.
//!
//! A layer's output is cut into a grid of `tile_h × tile_w × tile_oc` tiles.
//! Every tile pulls its full input-channel depth (plus halo) into L1, and the
//! out-channel loop is outermost so each weight slice is fetched exactly
//! once. The cost model counts DMA bytes, not cycles; transfer latency is
//! assumed to be hidden by the buffering.
//!
//! Tile shapes are always chosen against the triple-buffered budget, so a
//! plan stays deployable at depth 3 whatever depth is requested. The
//! requested depth only scales the reported L1 residency.

use std::fmt;

use crate::error::{Error, Result};
use crate::pipeline::model::{LayerKind, MicroModel};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

/// Buffering depth the tile search budgets for.
pub const SEARCH_DEPTH: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryHierarchy {
    pub l1_bytes: u64,
    pub l2_bytes: u64,
    pub l3_bytes: u64,
}

impl Default for MemoryHierarchy {
    fn default() -> Self {
        Self {
            l1_bytes: 128 * KIB,
            l2_bytes: 3 * MIB / 2,
            l3_bytes: 64 * MIB,
        }
    }
}

impl MemoryHierarchy {
    pub fn new(l1_bytes: u64, l2_bytes: u64, l3_bytes: u64) -> Result<Self> {
        if !(0 < l1_bytes && l1_bytes < l2_bytes && l2_bytes < l3_bytes) {
            return Err(Error::domain(format!(
                "memory levels must grow strictly: L1 {l1_bytes} < L2 {l2_bytes} < L3 {l3_bytes}"
            )));
        }
        Ok(Self {
            l1_bytes,
            l2_bytes,
            l3_bytes,
        })
    }

    /// Default hierarchy with a different L1 size (L2/L3 grow if needed).
    pub fn with_l1(l1_bytes: u64) -> Result<Self> {
        let d = Self::default();
        let l2 = d.l2_bytes.max(l1_bytes + 1);
        Self::new(l1_bytes, l2, d.l3_bytes.max(l2 + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemLevel {
    L1,
    L2,
    L3,
}

impl fmt::Display for MemLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemLevel::L1 => "L1",
            MemLevel::L2 => "L2",
            MemLevel::L3 => "L3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Conv,
    Depthwise,
    Pool,
    /// Nearest upsampling; `stride` holds the scale factor.
    Upsample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: OpKind,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub bytes_per_element: usize,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::domain(format!("layer `{}`: {m}", self.name)));
        if [
            self.in_h,
            self.in_w,
            self.in_c,
            self.out_c,
            self.k_h,
            self.k_w,
            self.stride,
            self.bytes_per_element,
        ]
        .contains(&0)
        {
            return bad("dimensions must be positive");
        }
        if matches!(self.kind, OpKind::Depthwise | OpKind::Pool | OpKind::Upsample) && self.in_c != self.out_c {
            return bad("channel-wise operators keep the channel count");
        }
        if self.kind != OpKind::Upsample
            && (self.in_h + 2 * self.pad_h < self.k_h || self.in_w + 2 * self.pad_w < self.k_w)
        {
            return bad("kernel larger than the padded input");
        }
        if self.kind != OpKind::Upsample && (self.pad_h >= self.k_h || self.pad_w >= self.k_w) {
            return bad("padding must be smaller than the kernel");
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        match self.kind {
            OpKind::Upsample => self.in_h * self.stride,
            _ => (self.in_h + 2 * self.pad_h - self.k_h) / self.stride + 1,
        }
    }

    pub fn out_w(&self) -> usize {
        match self.kind {
            OpKind::Upsample => self.in_w * self.stride,
            _ => (self.in_w + 2 * self.pad_w - self.k_w) / self.stride + 1,
        }
    }

    pub fn input_bytes(&self) -> u64 {
        (self.in_h * self.in_w * self.in_c * self.bytes_per_element) as u64
    }

    pub fn output_bytes(&self) -> u64 {
        (self.out_h() * self.out_w() * self.out_c * self.bytes_per_element) as u64
    }

    pub fn weight_bytes(&self) -> u64 {
        self.weight_slice_bytes(self.out_c)
    }

    pub fn weight_slice_bytes(&self, oc: usize) -> u64 {
        let per_oc = match self.kind {
            OpKind::Conv => self.k_h * self.k_w * self.in_c,
            OpKind::Depthwise => self.k_h * self.k_w,
            OpKind::Pool | OpKind::Upsample => 0,
        };
        (per_oc * oc * self.bytes_per_element) as u64
    }

    /// Whether every tile reads all input channels.
    fn full_depth_input(&self) -> bool {
        self.kind == OpKind::Conv
    }

    /// Inclusive input index range read by outputs `[start, end)` along one
    /// axis, clipped to the input. `None` if the range lies in padding only.
    pub fn input_span(&self, axis: Axis, start: usize, end: usize) -> Option<(usize, usize)> {
        let (len, k, pad) = match axis {
            Axis::H => (self.in_h, self.k_h, self.pad_h),
            Axis::W => (self.in_w, self.k_w, self.pad_w),
        };
        if self.kind == OpKind::Upsample {
            return Some((start / self.stride, (end - 1) / self.stride));
        }
        let lo = (start * self.stride) as isize - pad as isize;
        let hi = ((end - 1) * self.stride + k - 1) as isize - pad as isize;
        let lo = lo.max(0);
        let hi = hi.min(len as isize - 1);
        (hi >= lo).then_some((lo as usize, hi as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    H,
    W,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub layer: String,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub tile_oc: usize,
    pub buffering_depth: u32,
    pub tiles_total: usize,
    pub l1_working_set_bytes: u64,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
    pub resident_level_weights: MemLevel,
}

impl TilePlan {
    pub fn dma_total(&self) -> u64 {
        self.dma_bytes_in + self.dma_bytes_out
    }
}

/// Per-axis summary of a tile size: summed and largest input span.
#[derive(Debug, Clone, Copy)]
struct AxisCost {
    tiles: usize,
    sum_span: u64,
    max_span: u64,
}

fn axis_costs(layer: &LayerSpec, axis: Axis, out: usize) -> Vec<AxisCost> {
    (1..=out)
        .map(|t| {
            let mut c = AxisCost {
                tiles: 0,
                sum_span: 0,
                max_span: 0,
            };
            let mut start = 0;
            while start < out {
                let end = (start + t).min(out);
                let span = layer
                    .input_span(axis, start, end)
                    .map_or(0, |(lo, hi)| (hi - lo + 1) as u64);
                c.tiles += 1;
                c.sum_span += span;
                c.max_span = c.max_span.max(span);
                start = end;
            }
            c
        })
        .collect()
}

struct Evaluated {
    tiles: usize,
    tile_bytes: u64,
    dma_in: u64,
}

fn evaluate(layer: &LayerSpec, h: &AxisCost, w: &AxisCost, tile_h: usize, tile_w: usize, tile_oc: usize) -> Evaluated {
    let bpe = layer.bytes_per_element as u64;
    let n_oc = layer.out_c.div_ceil(tile_oc);
    let in_ch = if layer.full_depth_input() { layer.in_c } else { tile_oc } as u64;
    let in_tile = h.max_span * w.max_span * in_ch * bpe;
    let out_tile = (tile_h.min(layer.out_h()) * tile_w.min(layer.out_w()) * tile_oc) as u64 * bpe;
    let tile_bytes = in_tile + out_tile + layer.weight_slice_bytes(tile_oc);
    let spatial = h.sum_span * w.sum_span * bpe;
    let input_traffic = if layer.full_depth_input() {
        n_oc as u64 * spatial * layer.in_c as u64
    } else {
        spatial * layer.out_c as u64
    };
    Evaluated {
        tiles: h.tiles * w.tiles * n_oc,
        tile_bytes,
        dma_in: input_traffic + layer.weight_bytes(),
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if !(2..=3).contains(&depth) {
        return Err(Error::domain(format!("buffering depth must be 2 or 3, got {depth}")));
    }
    Ok(())
}

fn weight_level(layer: &LayerSpec, tile_oc: usize, mem: &MemoryHierarchy) -> MemLevel {
    if tile_oc == layer.out_c || layer.weight_bytes() == 0 {
        MemLevel::L1
    } else if layer.weight_bytes() <= mem.l2_bytes {
        MemLevel::L2
    } else {
        MemLevel::L3
    }
}

/// Traffic-minimal tiling of `layer` whose triple-buffered working set fits
/// L1. Ties go to the largest `tile_h`, then `tile_w`, then `tile_oc`.
pub fn plan(layer: &LayerSpec, mem: &MemoryHierarchy, buffering_depth: u32) -> Result<TilePlan> {
    layer.validate()?;
    check_depth(buffering_depth)?;
    let (oh, ow, oc) = (layer.out_h(), layer.out_w(), layer.out_c);
    let hs = axis_costs(layer, Axis::H, oh);
    let ws = axis_costs(layer, Axis::W, ow);
    let budget = mem.l1_bytes;

    let smallest = evaluate(layer, &hs[0], &ws[0], 1, 1, 1);
    if SEARCH_DEPTH * smallest.tile_bytes > budget {
        return Err(Error::Infeasible {
            layer: layer.name.clone(),
            constraint: format!(
                "a 1x1x1 output tile needs {} bytes x {SEARCH_DEPTH} buffers = {} bytes, L1 holds {budget}",
                smallest.tile_bytes,
                SEARCH_DEPTH * smallest.tile_bytes
            ),
        });
    }

    // (traffic, tile_h, tile_w, tile_oc); compared with the tie-break order.
    let mut best: Option<(u64, usize, usize, usize, Evaluated)> = None;
    for th in (1..=oh).rev() {
        for tw in (1..=ow).rev() {
            for toc in (1..=oc).rev() {
                let e = evaluate(layer, &hs[th - 1], &ws[tw - 1], th, tw, toc);
                if SEARCH_DEPTH * e.tile_bytes > budget {
                    continue;
                }
                let cost = e.dma_in + layer.output_bytes();
                // Visiting order is already (th, tw, toc) descending, so only
                // a strictly cheaper candidate replaces the incumbent.
                if best.as_ref().is_none_or(|b| cost < b.0) {
                    best = Some((cost, th, tw, toc, e));
                }
            }
        }
    }
    let (_, tile_h, tile_w, tile_oc, e) = best.expect("the 1x1x1 tile is feasible");
    Ok(TilePlan {
        layer: layer.name.clone(),
        out_h: oh,
        out_w: ow,
        out_c: oc,
        tile_h,
        tile_w,
        tile_oc,
        buffering_depth,
        tiles_total: e.tiles,
        l1_working_set_bytes: buffering_depth as u64 * e.tile_bytes,
        dma_bytes_in: e.dma_in,
        dma_bytes_out: layer.output_bytes(),
        resident_level_weights: weight_level(layer, tile_oc, mem),
    })
}

/// Exact DMA bytes `(in, out)` moved by `plan` on `layer`.
pub fn traffic(plan: &TilePlan, layer: &LayerSpec) -> Result<(u64, u64)> {
    layer.validate()?;
    if plan.layer != layer.name
        || (plan.out_h, plan.out_w, plan.out_c) != (layer.out_h(), layer.out_w(), layer.out_c)
        || plan.tile_h == 0
        || plan.tile_w == 0
        || plan.tile_oc == 0
        || plan.tile_h > plan.out_h
        || plan.tile_w > plan.out_w
        || plan.tile_oc > plan.out_c
    {
        return Err(Error::domain(format!(
            "plan for `{}` ({}x{}x{}) does not match layer `{}`",
            plan.layer, plan.out_h, plan.out_w, plan.out_c, layer.name
        )));
    }
    let hs = axis_costs(layer, Axis::H, layer.out_h());
    let ws = axis_costs(layer, Axis::W, layer.out_w());
    let e = evaluate(
        layer,
        &hs[plan.tile_h - 1],
        &ws[plan.tile_w - 1],
        plan.tile_h,
        plan.tile_w,
        plan.tile_oc,
    );
    Ok((e.dma_in, layer.output_bytes()))
}

/// Tiling of every compute layer in a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPlan {
    pub plans: Vec<TilePlan>,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
}

impl GraphPlan {
    pub fn dma_total(&self) -> u64 {
        self.dma_bytes_in + self.dma_bytes_out
    }
}

/// Lower a model to tileable operators. Concatenation is free (producers
/// write into adjacent channel ranges) and activations are folded into the
/// producing convolution, so neither yields an operator.
pub fn layer_specs(model: &MicroModel) -> Result<Vec<LayerSpec>> {
    let resolved = model.resolve()?;
    let mut specs = Vec::new();
    for (layer, r) in model.layers.iter().zip(&resolved) {
        let base = |kind, k: usize, stride: usize, pad: usize| LayerSpec {
            name: layer.name.clone(),
            kind,
            in_h: r.input.height,
            in_w: r.input.width,
            in_c: r.input.channels,
            out_c: r.output.channels,
            k_h: k,
            k_w: k,
            stride,
            pad_h: pad,
            pad_w: pad,
            bytes_per_element: 1,
        };
        let spec = match &layer.kind {
            LayerKind::Conv { window, .. } => base(OpKind::Conv, window.kernel, window.stride, window.pad),
            LayerKind::Depthwise { window, .. } => base(OpKind::Depthwise, window.kernel, window.stride, window.pad),
            LayerKind::Head { .. } => base(OpKind::Conv, 1, 1, 0),
            LayerKind::MaxPool { kernel, stride } => base(OpKind::Pool, *kernel, *stride, 0),
            LayerKind::Upsample { factor } => base(OpKind::Upsample, 1, *factor, 0),
            LayerKind::Concat => continue,
        };
        specs.push(spec);
    }
    Ok(specs)
}

pub fn plan_graph(model: &MicroModel, mem: &MemoryHierarchy, buffering_depth: u32) -> Result<GraphPlan> {
    let mut plans = Vec::new();
    for spec in layer_specs(model)? {
        plans.push(plan(&spec, mem, buffering_depth)?);
    }
    Ok(GraphPlan {
        dma_bytes_in: plans.iter().map(|p| p.dma_bytes_in).sum(),
        dma_bytes_out: plans.iter().map(|p| p.dma_bytes_out).sum(),
        plans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(name: &str, h: usize, c: usize, oc: usize, k: usize, s: usize) -> LayerSpec {
        LayerSpec {
            name: name.into(),
            kind: OpKind::Conv,
            in_h: h,
            in_w: h,
            in_c: c,
            out_c: oc,
            k_h: k,
            k_w: k,
            stride: s,
            pad_h: k / 2,
            pad_w: k / 2,
            bytes_per_element: 1,
        }
    }

    #[test]
    fn small_layer_is_one_tile() {
        let l = conv("small", 8, 4, 8, 3, 1);
        let p = plan(&l, &MemoryHierarchy::default(), 3).unwrap();
        assert_eq!(p.tiles_total, 1);
        assert_eq!(p.dma_bytes_in, l.input_bytes() + l.weight_bytes());
        assert_eq!(p.dma_bytes_out, l.output_bytes());
        assert_eq!(p.resident_level_weights, MemLevel::L1);
    }

    #[test]
    fn halo_of_a_two_way_split() {
        // 8x8x1 input, 3x3 stride 1 pad 1, split into two 4-row tiles: each
        // tile reads 5 rows, i.e. one extra 2-row halo strip overall.
        let l = conv("halo", 8, 1, 1, 3, 1);
        let p = TilePlan {
            layer: "halo".into(),
            out_h: 8,
            out_w: 8,
            out_c: 1,
            tile_h: 4,
            tile_w: 8,
            tile_oc: 1,
            buffering_depth: 3,
            tiles_total: 2,
            l1_working_set_bytes: 0,
            dma_bytes_in: 0,
            dma_bytes_out: 0,
            resident_level_weights: MemLevel::L1,
        };
        let (din, dout) = traffic(&p, &l).unwrap();
        assert_eq!(din - l.weight_bytes(), l.input_bytes() + 2 * 8);
        assert_eq!(dout, 64);
    }

    #[test]
    fn upsample_has_no_halo() {
        let l = LayerSpec {
            name: "up".into(),
            kind: OpKind::Upsample,
            in_h: 6,
            in_w: 6,
            in_c: 4,
            out_c: 4,
            k_h: 1,
            k_w: 1,
            stride: 2,
            pad_h: 0,
            pad_w: 0,
            bytes_per_element: 1,
        };
        for (th, tw, toc) in [(1, 1, 1), (2, 4, 3), (12, 12, 4), (5, 7, 2)] {
            let p = TilePlan {
                layer: "up".into(),
                out_h: 12,
                out_w: 12,
                out_c: 4,
                tile_h: th,
                tile_w: tw,
                tile_oc: toc,
                buffering_depth: 2,
                tiles_total: 0,
                l1_working_set_bytes: 0,
                dma_bytes_in: 0,
                dma_bytes_out: 0,
                resident_level_weights: MemLevel::L1,
            };
            // odd tile sizes straddle a source row, which is then fetched twice
            let (din, _) = traffic(&p, &l).unwrap();
            if th % 2 == 0 && tw % 2 == 0 {
                assert_eq!(din, l.input_bytes(), "{th}x{tw}");
            } else {
                assert!(din >= l.input_bytes());
            }
        }
    }

    #[test]
    fn depth_changes_residency_not_traffic() {
        let l = conv("mid", 192, 16, 16, 3, 1);
        let mem = MemoryHierarchy::default();
        let p2 = plan(&l, &mem, 2).unwrap();
        let p3 = plan(&l, &mem, 3).unwrap();
        assert_eq!(p2.dma_total(), p3.dma_total());
        assert!(p2.l1_working_set_bytes <= p3.l1_working_set_bytes);
        assert!(p3.l1_working_set_bytes <= mem.l1_bytes);
        assert!(plan(&l, &mem, 4).is_err());
    }

    #[test]
    fn absurd_budget_is_infeasible() {
        let l = conv("big", 16, 64, 8, 3, 1);
        let mem = MemoryHierarchy::with_l1(64).unwrap();
        match plan(&l, &mem, 3) {
            Err(Error::Infeasible { layer, constraint }) => {
                assert_eq!(layer, "big");
                assert!(constraint.contains("L1 holds 64"));
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_plan_rejected() {
        let a = conv("a", 8, 4, 8, 3, 1);
        let b = conv("b", 8, 4, 8, 3, 1);
        let p = plan(&a, &MemoryHierarchy::default(), 3).unwrap();
        assert!(traffic(&p, &b).is_err());
        let c = conv("a", 16, 4, 8, 3, 1);
        assert!(traffic(&p, &c).is_err());
    }

    #[test]
    fn hierarchy_must_grow() {
        assert!(MemoryHierarchy::new(10, 10, 100).is_err());
        assert!(MemoryHierarchy::new(10, 20, 15).is_err());
        let d = MemoryHierarchy::default();
        assert_eq!((d.l1_bytes, d.l2_bytes, d.l3_bytes), (131_072, 1_572_864, 67_108_864));
    }
}
