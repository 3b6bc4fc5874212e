//! Functional and cycle model of the matrix multiply unit: an array of
//! processing elements (128 x 16 multiply-accumulate by default) running
//! either 16-bit or packed 8-bit multiplies, accumulating exactly in
//! 32 bits and quantizing the result to a 16-bit output format.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fx::{rescale_raw, rne_shift_right, FixMatrix, FixedPointFormat, FixedWord};
use crate::workload::matmul_cycles;

#[derive(Debug, Error, PartialEq)]
pub enum MmuError {
    #[error("inner dimensions differ: lhs is {lr}x{lc}, rhs is {rr}x{rc}")]
    DimMismatch { lr: usize, lc: usize, rr: usize, rc: usize },
    #[error("operand word size {got} does not match configured precision ({want}-bit)")]
    PrecisionMismatch { got: u8, want: u8 },
    #[error("output format must be 16-bit, got {0}")]
    BadOutputFormat(FixedPointFormat),
    #[error("bias length {got} does not match output columns {want}")]
    BiasLength { got: usize, want: usize },
    #[error("8-bit packing violated in MAC slot {slot}: products share no operand")]
    SharedInputViolation { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Int8,
    Int16,
}

impl Precision {
    pub fn bits(&self) -> u8 {
        match self {
            Precision::Int8 => 8,
            Precision::Int16 => 16,
        }
    }
}

/// PE-array geometry and operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmuConfig {
    pub pe_count: u32,
    pub macs_per_pe: u32,
    pub precision: Precision,
    /// Results always leave the MMU as 16-bit words.
    pub output_fmt: FixedPointFormat,
}

impl MmuConfig {
    pub fn new(precision: Precision, output_fmt: FixedPointFormat) -> Self {
        Self { pe_count: 128, macs_per_pe: 16, precision, output_fmt }
    }

    /// Each DSP slice carries one 16-bit multiply or two 8-bit multiplies
    /// sharing an input.
    pub fn mults_per_cycle(&self) -> u64 {
        let base = self.pe_count as u64 * self.macs_per_pe as u64;
        match self.precision {
            Precision::Int8 => 2 * base,
            Precision::Int16 => base,
        }
    }

    pub fn validate(&self) -> Result<(), MmuError> {
        if self.output_fmt.total_bits() != 16 {
            return Err(MmuError::BadOutputFormat(self.output_fmt));
        }
        Ok(())
    }
}

/// 32-bit accumulator range, the saturation bound of the adder tree
/// backend. Realistic activation scales stay far inside it.
const ACC_MIN: i64 = i32::MIN as i64;
const ACC_MAX: i64 = i32::MAX as i64;

fn check_operands(a: &FixMatrix, b: &FixMatrix, cfg: &MmuConfig) -> Result<(), MmuError> {
    cfg.validate()?;
    if a.cols() != b.rows() {
        return Err(MmuError::DimMismatch { lr: a.rows(), lc: a.cols(), rr: b.rows(), rc: b.cols() });
    }
    for m in [a, b] {
        if m.fmt().total_bits() != cfg.precision.bits() {
            return Err(MmuError::PrecisionMismatch {
                got: m.fmt().total_bits(),
                want: cfg.precision.bits(),
            });
        }
    }
    Ok(())
}

/// Exact integer accumulation (with 32-bit saturation), before the output
/// quantization stage. Row-major `a.rows() x b.cols()` raw accumulators at
/// `a.frac + b.frac` fraction bits.
pub fn mmu_accumulate(
    a: &FixMatrix,
    b: &FixMatrix,
    bias: Option<&[FixedWord]>,
    cfg: &MmuConfig,
) -> Result<Vec<i64>, MmuError> {
    check_operands(a, b, cfg)?;
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let acc_frac = a.fmt().frac_bits() + b.fmt().frac_bits();
    if let Some(bias) = bias {
        if bias.len() != m {
            return Err(MmuError::BiasLength { got: bias.len(), want: m });
        }
    }

    let mut acc = vec![0i64; n * m];
    if let Some(bias) = bias {
        // The accumulator is preloaded with the bias, so the add costs
        // nothing on the vector unit.
        for i in 0..n {
            for (j, bw) in bias.iter().enumerate() {
                let wide = rescale_raw(bw.raw() as i128, bw.fmt().frac_bits(), acc_frac);
                acc[i * m + j] = (wide.clamp(ACC_MIN as i128, ACC_MAX as i128)) as i64;
            }
        }
    }

    let ar = a.raw();
    let br = b.raw();
    for i in 0..n {
        for kk in 0..k {
            let av = ar[i * k + kk];
            if av == 0 {
                continue;
            }
            let row = kk * m;
            let out = i * m;
            for j in 0..m {
                let p = av * br[row + j];
                let s = acc[out + j].saturating_add(p).clamp(ACC_MIN, ACC_MAX);
                acc[out + j] = s;
            }
        }
    }
    Ok(acc)
}

/// Full MMU pass: accumulate exactly, quantize to the output format, and
/// report the cycle count `ceil(n*m*k / mults_per_cycle)`.
pub fn mmu_matmul(
    a: &FixMatrix,
    b: &FixMatrix,
    cfg: &MmuConfig,
) -> Result<(FixMatrix, u64), MmuError> {
    mmu_matmul_bias(a, b, None, cfg)
}

/// Like [`mmu_matmul`] with the accumulators preloaded with a per-column
/// bias vector.
pub fn mmu_matmul_bias(
    a: &FixMatrix,
    b: &FixMatrix,
    bias: Option<&[FixedWord]>,
    cfg: &MmuConfig,
) -> Result<(FixMatrix, u64), MmuError> {
    let acc = mmu_accumulate(a, b, bias, cfg)?;
    let (n, m) = (a.rows(), b.cols());
    let acc_frac = a.fmt().frac_bits() + b.fmt().frac_bits();
    let out_fmt = cfg.output_fmt;

    let mut out = FixMatrix::zeros(n, m, out_fmt);
    for (slot, &v) in acc.iter().enumerate() {
        let scaled = if out_fmt.frac_bits() >= acc_frac {
            (v as i128) << (out_fmt.frac_bits() - acc_frac)
        } else {
            rne_shift_right(v as i128, (acc_frac - out_fmt.frac_bits()) as u32)
        };
        out.raw_mut()[slot] =
            scaled.clamp(out_fmt.min_raw() as i128, out_fmt.max_raw() as i128) as i64;
    }
    let cycles = matmul_cycles(n, m, a.cols(), cfg.mults_per_cycle());
    Ok((out, cycles))
}

/// One scalar product inside a MAC slot, identified by its coordinates.
pub type ProductCoord = (usize, usize, usize); // (i, j, k)

/// Assignment of one DSP slice in 8-bit mode: two products that must
/// share an operand, or a single product in a ragged tail.
#[derive(Debug, Clone, Copy)]
pub struct MacAssignment {
    pub first: ProductCoord,
    pub second: Option<ProductCoord>,
}

impl MacAssignment {
    fn shares_operand(&self) -> bool {
        match self.second {
            None => true,
            Some((i2, j2, k2)) => {
                let (i1, j1, k1) = self.first;
                // Same A element (i, k) or same B element (k, j).
                (i1 == i2 && k1 == k2) || (k1 == k2 && j1 == j2)
            }
        }
    }
}

/// The dataflow the 8-bit mode uses by default: adjacent output columns
/// of one row are paired on the same slice, sharing the A operand.
pub fn default_int8_tiling(n: usize, m: usize, k: usize) -> Vec<MacAssignment> {
    let mut slots = Vec::with_capacity(n * k * m.div_ceil(2));
    for i in 0..n {
        for kk in 0..k {
            let mut j = 0;
            while j < m {
                let first = (i, j, kk);
                let second = if j + 1 < m { Some((i, j + 1, kk)) } else { None };
                slots.push(MacAssignment { first, second });
                j += 2;
            }
        }
    }
    slots
}

/// Verifies the DSP packing constraint of 8-bit mode: every paired slot's
/// two products share an operand.
pub fn shared_input_constraint_check(tiling: &[MacAssignment]) -> Result<(), MmuError> {
    for (slot, a) in tiling.iter().enumerate() {
        if !a.shares_operand() {
            return Err(MmuError::SharedInputViolation { slot });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fx::quantize;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn fmt(total: u8, frac: u8) -> FixedPointFormat {
        FixedPointFormat::q(total, frac)
    }

    fn cfg8() -> MmuConfig {
        MmuConfig::new(Precision::Int8, fmt(16, 12))
    }

    fn cfg16() -> MmuConfig {
        MmuConfig::new(Precision::Int16, fmt(16, 12))
    }

    #[test]
    fn throughput_per_mode() {
        assert_eq!(cfg16().mults_per_cycle(), 2048);
        assert_eq!(cfg8().mults_per_cycle(), 4096);
    }

    #[test]
    fn identity_times_x_is_exact() {
        for (cfg, in_fmt) in [(cfg8(), fmt(8, 4)), (cfg16(), fmt(16, 8))] {
            let n = 5;
            let mut eye = FixMatrix::zeros(n, n, in_fmt);
            for i in 0..n {
                eye.set(i, i, quantize(1.0, in_fmt).unwrap());
            }
            let xs: Vec<f64> = (0..n * n).map(|i| (i as f64 - 12.0) * 0.25).collect();
            let x = FixMatrix::quantize_from(&xs, n, n, in_fmt).unwrap();
            let (y, _) = mmu_matmul(&eye, &x, &cfg).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(y.get(i, j).to_f64(), x.get(i, j).to_f64());
                }
            }
        }
    }

    #[test]
    fn one_full_array_pass_is_one_cycle() {
        let a = FixMatrix::zeros(1, 2048, fmt(16, 8));
        let b = FixMatrix::zeros(2048, 1, fmt(16, 8));
        let (_, cycles) = mmu_matmul(&a, &b, &cfg16()).unwrap();
        assert_eq!(cycles, 1);
    }

    #[test]
    fn dimension_and_precision_errors() {
        let a = FixMatrix::zeros(2, 3, fmt(16, 8));
        let b = FixMatrix::zeros(4, 2, fmt(16, 8));
        assert_eq!(
            mmu_matmul(&a, &b, &cfg16()).unwrap_err(),
            MmuError::DimMismatch { lr: 2, lc: 3, rr: 4, rc: 2 }
        );
        let b8 = FixMatrix::zeros(3, 2, fmt(8, 4));
        assert_eq!(
            mmu_matmul(&a, &b8, &cfg16()).unwrap_err(),
            MmuError::PrecisionMismatch { got: 8, want: 16 }
        );
    }

    #[test]
    fn int8_random_matmul_matches_bigint_oracle_before_quantization() {
        let in_fmt = fmt(8, 5);
        let mut state = 0xABCDEF12_34567890u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let n = 64;
        let mut a = FixMatrix::zeros(n, n, in_fmt);
        let mut b = FixMatrix::zeros(n, n, in_fmt);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, FixedWord::from_raw((next() % 256) as i64 - 128, in_fmt));
                b.set(i, j, FixedWord::from_raw((next() % 256) as i64 - 128, in_fmt));
            }
        }
        let acc = mmu_accumulate(&a, &b, None, &cfg8()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut want = BigInt::from(0);
                for k in 0..n {
                    want += BigInt::from(a.get(i, k).raw()) * BigInt::from(b.get(k, j).raw());
                }
                assert_eq!(BigInt::from(acc[i * n + j]), want, "({i},{j})");
            }
        }
    }

    #[test]
    fn accumulator_saturates_at_32_bits() {
        let in_fmt = fmt(16, 0);
        let k = 8;
        let mut a = FixMatrix::zeros(1, k, in_fmt);
        let mut b = FixMatrix::zeros(k, 1, in_fmt);
        for i in 0..k {
            a.set(0, i, FixedWord::from_raw(i16::MAX as i64, in_fmt));
            b.set(i, 0, FixedWord::from_raw(i16::MAX as i64, in_fmt));
        }
        let acc = mmu_accumulate(&a, &b, None, &cfg16()).unwrap();
        assert_eq!(acc[0], i32::MAX as i64);
    }

    #[test]
    fn bias_preload_matches_post_add() {
        let in_fmt = fmt(16, 10);
        let a = FixMatrix::quantize_from(&[0.5, -0.25, 1.0, 2.0], 2, 2, in_fmt).unwrap();
        let b = FixMatrix::quantize_from(&[1.0, 0.5, -1.0, 0.25], 2, 2, in_fmt).unwrap();
        let bias =
            [quantize(0.125, fmt(16, 12)).unwrap(), quantize(-0.5, fmt(16, 12)).unwrap()];
        let (with_bias, _) = mmu_matmul_bias(&a, &b, Some(&bias), &cfg16()).unwrap();
        let (plain, _) = mmu_matmul(&a, &b, &cfg16()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = plain.get(i, j).to_f64() + bias[j].to_f64();
                assert!((with_bias.get(i, j).to_f64() - expect).abs() <= fmt(16, 12).ulp());
            }
        }
    }

    #[test]
    fn quantized_output_error_bound_vs_real_matmul() {
        let in_fmt = fmt(16, 14);
        let out_fmt = fmt(16, 12);
        let cfg = MmuConfig::new(Precision::Int16, out_fmt);
        let mut state = 0x1111_2222_3333_4444u64;
        let mut uni = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let (n, k, m) = (16, 48, 16);
        let av: Vec<f64> = (0..n * k).map(|_| uni()).collect();
        let bv: Vec<f64> = (0..k * m).map(|_| uni()).collect();
        let a = FixMatrix::quantize_from(&av, n, k, in_fmt).unwrap();
        let b = FixMatrix::quantize_from(&bv, k, m, in_fmt).unwrap();
        let (c, _) = mmu_matmul(&a, &b, &cfg).unwrap();
        // |c - real| <= k * (|a|eps_b/2 + |b|eps_a/2 + eps^2/4) + out_ulp/2.
        let eps = in_fmt.ulp();
        let bound = k as f64 * (eps / 2.0 + eps / 2.0 + eps * eps / 4.0) + out_fmt.ulp() / 2.0;
        for i in 0..n {
            for j in 0..m {
                let mut real = 0.0;
                for kk in 0..k {
                    real += av[i * k + kk] * bv[kk * m + j];
                }
                assert!(
                    (c.get(i, j).to_f64() - real).abs() <= bound,
                    "({i},{j}): {} vs {real}",
                    c.get(i, j).to_f64()
                );
            }
        }
    }

    #[test]
    fn default_tiling_satisfies_shared_input_constraint() {
        let mut state = 0x5555_AAAA_5555_AAAAu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 63 + 1) as usize
        };
        for _ in 0..100 {
            let (n, m, k) = (next(), next(), next());
            let t = default_int8_tiling(n, m, k);
            shared_input_constraint_check(&t).unwrap();
            let products: usize = t.iter().map(|s| 1 + s.second.is_some() as usize).sum();
            assert_eq!(products, n * m * k);
        }
    }

    #[test]
    fn adversarial_tiling_is_rejected() {
        let mut t = default_int8_tiling(4, 4, 4);
        // Pair two products with disjoint operands.
        t[3] = MacAssignment { first: (0, 0, 0), second: Some((1, 1, 1)) };
        assert_eq!(
            shared_input_constraint_check(&t).unwrap_err(),
            MmuError::SharedInputViolation { slot: 3 }
        );
    }

    proptest! {
        /// On shapes whose product is a multiple of 4096, 8-bit mode takes
        /// exactly half the cycles of 16-bit mode.
        #[test]
        fn int8_halves_cycles_on_aligned_shapes(n in 1usize..8, m in 1usize..8, k in 1usize..4) {
            let (n, m, k) = (n * 16, m * 16, k * 16);
            let c16 = matmul_cycles(n, m, k, cfg16().mults_per_cycle());
            let c8 = matmul_cycles(n, m, k, cfg8().mults_per_cycle());
            prop_assert_eq!(2 * c8, c16);
        }
    }
}
