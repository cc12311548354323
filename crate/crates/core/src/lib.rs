//! Energy and performance model of a battery-powered, camera-equipped
//! environmental sensing node with on-device INT8 inference.
//!
//! * [`energy`]: calibrated power figures and energy/lifetime arithmetic.
//! * [`pipeline`]: the vision pipeline from Bayer mosaic to occupancy count.
//! * [`tiler`]: static operator tiling over an L1/L2/L3 hierarchy.
//! * [`sim`]: duty-cycle simulation and per-sample energy estimates.
//! * [`io`]: every file format the toolkit reads or writes.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod pipeline;
pub mod sim;
pub mod tiler;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/tiling.md")]
    mod tiling {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
