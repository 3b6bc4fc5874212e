//! Cycle-level, bit-accurate model of an FPGA overlay processor for
//! transformer-encoder inference.
//!
//! The modeled machine pairs a matrix multiply unit (MMU) with a VLIW
//! nonlinear vector unit (NVU) that computes softmax, layer normalization
//! and GELU out of nothing but piecewise-linear table lookups and simple
//! vector arithmetic. The crate provides:
//!
//! - [`fx`]: multi-precision fixed-point arithmetic with saturation,
//! - [`pwl`]: non-uniform continuous piecewise-linear approximation,
//! - [`nonlinear`]: the encoder nonlinearities in reference and
//!   fixed-point form,
//! - [`mmu`]: functional plus cycle model of the matrix multiply unit,
//! - [`workload`]: the encoder computation DAG and overlap-aware schedule,
//! - [`nvu`]: the vector unit's microprograms, executor and cycle model,
//! - [`analytics`]: throughput-requirement and latency/overhead reports,
//! - [`reference`]: a high-precision reference encoder and error harness.

pub mod fx;
pub mod mmu;
pub mod nonlinear;
pub mod pwl;
pub mod workload;

pub use fx::{FixMatrix, FixedPointFormat, FixedWord};
