//! Cycle-level model of the nonlinear vector unit (NVU): a VLIW
//! load/store vector machine with a vector register file, up to three
//! concurrent vector-compute operations per cycle, a scalar unit running
//! concurrently with vector work, and special support for piecewise-linear
//! table evaluation.
//!
//! The microprogram controller expands each high-level kernel (softmax,
//! layer normalization, GELU, vector add) into a fixed bundle sequence;
//! [`execute`] runs a program functionally and charges cycles (one bundle
//! per cycle plus hazard stalls), and [`kernel_cycle_model`] predicts the
//! same counts in closed form for the scheduler.

mod exec;
mod expand;
mod program;
mod timing;

pub use exec::{execute, ExecError, ExecOutput};
pub use expand::{expand_microprogram, KernelIo};
pub use program::{
    Addressing, Dst, Half, LsuOp, MemSpace, Microprogram, ProgramMeta, ScuKind, ScuOp, VSrc,
    VcuKind, VcuOp, VliwBundle, TABLE_EXP, TABLE_GELU, TABLE_RECIP, TABLE_RSQRT,
};
pub use timing::{kernel_cycle_model, latency, reduce_latency, Latencies};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vector register widths the design scales across.
pub const SUPPORTED_VRWIDTHS: [u32; 4] = [256, 512, 1024, 2048];

#[derive(Debug, Error, PartialEq)]
pub enum NvuError {
    #[error("vrwidth_bits must be one of 256/512/1024/2048, got {0}")]
    BadWidth(u32),
    #[error("unsupported element count {0} (1..=32768)")]
    BadElementCount(usize),
    #[error("bundle holds {0} VCU ops, limit is 3")]
    TooManyVcuOps(usize),
    #[error("bundle touches {0} distinct vector registers, port limit is 8")]
    PortLimit(usize),
    #[error("register v{0} read before any write")]
    ReadBeforeWrite(u8),
    #[error("scalar register s{0} read before any write")]
    ScalarReadBeforeWrite(u8),
}

/// Geometry of one NVU instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvuConfig {
    pub vrwidth_bits: u32,
    pub vrf_registers: u32,
    pub vcu_issue_slots: u32,
}

impl NvuConfig {
    pub fn new(vrwidth_bits: u32) -> Result<Self, NvuError> {
        if !SUPPORTED_VRWIDTHS.contains(&vrwidth_bits) {
            return Err(NvuError::BadWidth(vrwidth_bits));
        }
        Ok(Self { vrwidth_bits, vrf_registers: 32, vcu_issue_slots: 3 })
    }

    /// Elements of the given width held by one vector register.
    pub fn elements_per_register(&self, element_bits: u8) -> usize {
        (self.vrwidth_bits / element_bits as u32) as usize
    }

    /// 16-bit lanes, the native element size of kernel I/O.
    pub fn lanes16(&self) -> usize {
        self.elements_per_register(16)
    }
}

/// The high-level instructions the microprogram memory holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Softmax,
    LayerNorm,
    Gelu,
    VectorAdd,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Softmax, Kernel::LayerNorm, Kernel::Gelu, Kernel::VectorAdd];

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Softmax => "softmax",
            Kernel::LayerNorm => "layernorm",
            Kernel::Gelu => "gelu",
            Kernel::VectorAdd => "vector_add",
        }
    }
}

#[cfg(test)]
mod tests;
