//! The encoder nonlinearities — softmax, layer normalization, GELU — in
//! two forms: a high-precision reference and a fixed-point path built
//! exclusively from piecewise-linear table lookups plus simple vector
//! arithmetic.
//!
//! The fixed-point kernels never divide, exponentiate or take square
//! roots: softmax rewrites `1/sum` through a reciprocal table on a
//! power-of-two-normalized range, and layer normalization does the same
//! for `1/sqrt(var + eps)`. Every datapath operation is routed through the
//! instrumented [`ops`] layer so the claim is checkable, not asserted.

pub mod ops;
mod tables;

pub use tables::{
    NonlinearTables, TableBudgets, TableReports, EXP_IN_FMT, EXP_OUT_FMT, GELU_FMT, RECIP_FMT,
    RSQRT_IN_FMT, RSQRT_OUT_FMT,
};

use thiserror::Error;

use crate::fx::{quantize, FixMatrix, FixedPointFormat, FixedWord};
use crate::pwl::{NamedFunction, PwlError};
use ops::OpLog;

pub use crate::pwl::{gelu as gelu_scalar_reference, gelu_tanh};

#[derive(Debug, Error)]
pub enum NonlinearError {
    #[error("softmax of an empty vector")]
    EmptyVector,
    #[error("dimension mismatch: row length {row} vs parameter length {param}")]
    DimMismatch { row: usize, param: usize },
    #[error("attention scale divisor must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Table(#[from] PwlError),
}

/// Which arithmetic path computes a nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Reference,
    FixedPoint,
}

/// Trained scale/shift of a layer normalization, plus its epsilon.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl LayerNormParams {
    pub fn unit(k: usize) -> Self {
        Self { gamma: vec![1.0; k], beta: vec![0.0; k], epsilon: LN_EPSILON }
    }
}

/// Softmax pre-scale divisor (`1/sqrt(d_head)` scaling of attention scores).
#[derive(Debug, Clone, Copy)]
pub struct AttentionScale {
    pub k: f64,
}

/// Epsilon of the fixed-point layer normalization: one step at 2^-20,
/// representable whenever the input carries at least 10 fraction bits.
pub const LN_EPSILON: f64 = 1.0 / (1 << 20) as f64;
const LN_EPSILON_LOG2: i32 = -20;

/// Scale/shift parameters enter the datapath at Q2.14.
pub const GAMMA_BETA_FMT: FixedPointFormat = match FixedPointFormat::const_new(16, 14) {
    Some(f) => f,
    None => unreachable!(),
};
/// Normalized activations before gamma/beta.
const XHAT_FMT: FixedPointFormat = match FixedPointFormat::const_new(16, 12) {
    Some(f) => f,
    None => unreachable!(),
};
/// 1/sigma after denormalization; spans [2^-6, 2^10].
const INV_SIGMA_FMT: FixedPointFormat = match FixedPointFormat::const_new(32, 20) {
    Some(f) => f,
    None => unreachable!(),
};

// ---------------------------------------------------------------------
// Reference path (f64 end to end, libm transcendentals).
// ---------------------------------------------------------------------

pub fn softmax_reference(x: &[f64]) -> Result<Vec<f64>, NonlinearError> {
    if x.is_empty() {
        return Err(NonlinearError::EmptyVector);
    }
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| libm::exp(v - m)).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn layernorm_reference(x: &[f64], p: &LayerNormParams) -> Result<Vec<f64>, NonlinearError> {
    if x.len() != p.gamma.len() || x.len() != p.beta.len() {
        return Err(NonlinearError::DimMismatch { row: x.len(), param: p.gamma.len() });
    }
    let k = x.len() as f64;
    let mu: f64 = x.iter().sum::<f64>() / k;
    let var: f64 = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / k;
    let inv = 1.0 / libm::sqrt(var + p.epsilon);
    Ok(x.iter()
        .zip(p.gamma.iter().zip(&p.beta))
        .map(|(&v, (&g, &b))| (v - mu) * inv * g + b)
        .collect())
}

/// GELU through the error function (the exact definition).
pub fn gelu_reference(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| NamedFunction::Gelu.eval(v)).collect()
}

pub fn scale_reference(x: &[f64], s: &AttentionScale) -> Result<Vec<f64>, NonlinearError> {
    if s.k <= 0.0 {
        return Err(NonlinearError::BadScale(s.k));
    }
    Ok(x.iter().map(|&v| v / s.k).collect())
}

// ---------------------------------------------------------------------
// Fixed-point path.
// ---------------------------------------------------------------------

/// The fixed-point kernels: lookup tables plus an operation log feeding
/// the unified-datapath audit. Immutable after construction; safe to share
/// across threads.
#[derive(Debug)]
pub struct FixedKernels {
    tables: NonlinearTables,
    log: OpLog,
}

impl FixedKernels {
    pub fn new(budgets: TableBudgets) -> Result<Self, NonlinearError> {
        Ok(Self { tables: NonlinearTables::build(budgets)?, log: OpLog::new() })
    }

    pub fn with_default_tables() -> Result<Self, NonlinearError> {
        Self::new(TableBudgets::default())
    }

    pub fn tables(&self) -> &NonlinearTables {
        &self.tables
    }

    pub fn op_log(&self) -> &OpLog {
        &self.log
    }

    /// Softmax over one row: max subtraction, exp via table, exact 32-bit
    /// sum, reciprocal via table on the `[1, 2)`-normalized sum, one
    /// multiply per element.
    pub fn softmax_row(
        &self,
        x: &[FixedWord],
        out_fmt: FixedPointFormat,
    ) -> Result<Vec<FixedWord>, NonlinearError> {
        if x.is_empty() {
            return Err(NonlinearError::EmptyVector);
        }
        let log = &self.log;
        let m = ops::reduce_max(log, x);

        let mut exps = Vec::with_capacity(x.len());
        for &xi in x {
            let d = ops::sub(log, xi, m, xi.fmt());
            let d_t = ops::requant(log, d, tables::EXP_IN_FMT);
            exps.push(ops::pwl(log, &self.tables.exp, d_t));
        }

        // The max element contributes exp(0) = 1 exactly, so the sum is on
        // the reciprocal table's side of 1 by construction.
        let sum_fmt = FixedPointFormat::q(32, tables::EXP_OUT_FMT.frac_bits());
        let sum = ops::reduce_sum(log, &exps, sum_fmt);
        let (s_norm, s) = ops::normalize_1_2(log, sum, tables::RECIP_FMT);
        let r0 = ops::pwl(log, &self.tables.recip, s_norm);
        let r = ops::shift(log, r0, -(s as i32), tables::RECIP_FMT);

        Ok(exps.into_iter().map(|e| ops::mul(log, e, r, out_fmt)).collect())
    }

    /// Layer normalization over one row, with the variance accumulated in
    /// 64-bit fixed point and `1/sqrt` via table on `[1, 4)` after an
    /// even power-of-two normalization.
    pub fn layernorm_row(
        &self,
        x: &[FixedWord],
        gamma: &[FixedWord],
        beta: &[FixedWord],
        out_fmt: FixedPointFormat,
    ) -> Result<Vec<FixedWord>, NonlinearError> {
        let k = x.len();
        if gamma.len() != k || beta.len() != k {
            return Err(NonlinearError::DimMismatch { row: k, param: gamma.len() });
        }
        let log = &self.log;
        let in_fmt = x[0].fmt();
        let f_in = in_fmt.frac_bits();
        assert!(
            (10..=14).contains(&f_in) && in_fmt.total_bits() == 16,
            "layernorm expects 16-bit inputs with 10..=14 fraction bits, got {in_fmt}"
        );

        // Mean, rounded back onto the input grid so constant rows zero out
        // exactly.
        let sum = ops::reduce_sum(log, x, FixedPointFormat::q(32, f_in));
        let recip_k = quantize(1.0 / k as f64, tables::RECIP_FMT).expect("finite");
        let mu_wide = ops::mul(log, sum, recip_k, FixedPointFormat::q(32, f_in + 12));
        let mu = ops::requant(log, mu_wide, in_fmt);

        let d: Vec<FixedWord> = x.iter().map(|&xi| ops::sub(log, xi, mu, in_fmt)).collect();

        // Variance: exact 16x16 squares summed in 64-bit.
        let var_fmt = FixedPointFormat::q(64, 2 * f_in);
        let var_sum = ops::reduce_dot(log, &d, &d, var_fmt);
        let sigma2 = ops::mul(log, var_sum, recip_k, var_fmt);
        let eps = FixedWord::from_raw(1i64 << (2 * f_in as i32 + LN_EPSILON_LOG2), var_fmt);
        let a = ops::add(log, sigma2, eps, var_fmt);

        let (a_norm, t) = ops::normalize_1_4(log, a, tables::RSQRT_IN_FMT);
        let y = ops::pwl(log, &self.tables.rsqrt, a_norm);
        let inv_sigma = ops::shift(log, y, -t, INV_SIGMA_FMT);

        let g_fmt = FixedPointFormat::q(32, XHAT_FMT.frac_bits() + GAMMA_BETA_FMT.frac_bits());
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let xh = ops::mul(log, d[i], inv_sigma, XHAT_FMT);
            let g = ops::mul(log, xh, gamma[i], g_fmt);
            out.push(ops::add(log, g, beta[i], out_fmt));
        }
        Ok(out)
    }

    /// GELU via one direct table on `[-8, 8]`, clamped to the identity
    /// beyond the right edge (`pwl(clamp(x)) + max(x - hi, 0)`).
    pub fn gelu(&self, x: &[FixedWord], out_fmt: FixedPointFormat) -> Vec<FixedWord> {
        let log = &self.log;
        let table = &self.tables.gelu;
        x.iter()
            .map(|&xi| {
                let xg = ops::requant(log, xi, table.input_fmt());
                let t = ops::pwl(log, table, xg);
                let hi = ops::requant(log, table.hi(), xi.fmt());
                let s = ops::sub(log, xi, hi, xi.fmt());
                let r = ops::max(log, s, FixedWord::zero(xi.fmt()));
                ops::add(log, t, r, out_fmt)
            })
            .collect()
    }

    /// Elementwise division by the attention constant, implemented as a
    /// multiply by the precomputed reciprocal.
    pub fn apply_attention_scale(
        &self,
        x: &FixMatrix,
        s: &AttentionScale,
        out_fmt: FixedPointFormat,
    ) -> Result<FixMatrix, NonlinearError> {
        if s.k <= 0.0 {
            return Err(NonlinearError::BadScale(s.k));
        }
        let log = &self.log;
        let r = quantize(1.0 / s.k, tables::RECIP_FMT).expect("finite");
        let mut out = FixMatrix::zeros(x.rows(), x.cols(), out_fmt);
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, ops::mul(log, x.get(i, j), r, out_fmt));
            }
        }
        Ok(out)
    }
}
