//! Pipeline calibration constants and the closed-form cycle model.
//!
//! These are the design's tuned constants: single-cycle issue, fixed
//! result latencies, and reduce trees whose drain depends on the lane
//! count they span. The expander's bundle patterns and these formulas are
//! kept consistent by construction and asserted equal in tests.

use super::{Kernel, NvuConfig};

/// Fixed result latencies, in cycles from issue to first use.
#[derive(Debug, Clone, Copy)]
pub struct Latencies {
    pub load: u64,
    pub arith: u64,
    pub mul: u64,
    pub pwl: u64,
    /// Priority-encode + shift normalizer (single cycle, like the
    /// segment-address encoder).
    pub normalize: u64,
}

pub const LATENCIES: Latencies = Latencies { load: 2, arith: 1, mul: 2, pwl: 3, normalize: 1 };

pub fn latency(kind: LatKind) -> u64 {
    match kind {
        LatKind::Load => LATENCIES.load,
        LatKind::Arith => LATENCIES.arith,
        LatKind::Mul => LATENCIES.mul,
        LatKind::Pwl => LATENCIES.pwl,
        LatKind::Normalize => LATENCIES.normalize,
    }
}

#[derive(Debug, Clone, Copy)]
pub enum LatKind {
    Load,
    Arith,
    Mul,
    Pwl,
    Normalize,
}

/// Scalar-visible drain of a lane reduction: tree depth over the lanes it
/// actually spans, plus the accumulator stage. Back-to-back accumulating
/// reductions forward internally at one per cycle.
pub fn reduce_latency(cfg: &NvuConfig, n_elements: usize) -> u64 {
    let lanes = cfg.lanes16().min(n_elements.max(1));
    (usize::BITS - (lanes - 1).leading_zeros().min(usize::BITS - 1)) as u64 + 1
}

fn chunks(cfg: &NvuConfig, n: usize) -> u64 {
    (n as u64).div_ceil(cfg.lanes16() as u64)
}

/// Predicted cycles to run `kernel` over one `n_elements` vector of
/// 16-bit elements. Matches [`super::execute`] exactly; the tests pin the
/// equality across kernels, widths, and lengths.
pub fn kernel_cycle_model(kernel: Kernel, n_elements: usize, cfg: &NvuConfig) -> u64 {
    if n_elements == 0 {
        return 0;
    }
    let ch = chunks(cfg, n_elements);
    let lred = reduce_latency(cfg, n_elements);
    match kernel {
        // Three passes (max, exp+sum, scale) at 9 bundles per chunk, two
        // reduce drains, and a 6-cycle scalar tail (normalize, reciprocal
        // lookup, denormalizing shift).
        Kernel::Softmax => 9 * ch + 2 * lred + SOFTMAX_TAIL + if ch == 1 { 1 } else { 0 },
        // Sum, centered-square, and apply passes at 18 bundles per chunk
        // with the mean/variance scalar blocks in between.
        Kernel::LayerNorm => 18 * ch + 2 * lred + LAYERNORM_TAIL,
        // Table lookup with clamp-to-identity fixup, software-pipelined
        // two chunks at a time: 8 cycles per pair, zero fill/drain.
        Kernel::Gelu => 8 * (ch / 2) + 7 * (ch % 2),
        Kernel::VectorAdd => 3 * ch + 2,
    }
}

pub const SOFTMAX_TAIL: u64 = 6;
pub const LAYERNORM_TAIL: u64 = 12;
