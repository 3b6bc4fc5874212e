//! Multi-precision signed fixed-point arithmetic with saturation.
//!
//! Every numeric path in the simulator runs on [`FixedWord`] values: an
//! integer payload plus a Q-format descriptor. All operations are pure
//! integer arithmetic in a wide intermediate followed by a single
//! round-to-nearest-even requantization, so results are bit-exact across
//! runs and platforms.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Word sizes supported by the datapath.
pub const SUPPORTED_TOTAL_BITS: [u8; 4] = [8, 16, 32, 64];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FxError {
    #[error("total_bits must be one of 8/16/32/64, got {0}")]
    BadTotalBits(u8),
    #[error("frac_bits {frac} out of range for {total}-bit word")]
    BadFracBits { frac: u8, total: u8 },
    #[error("cannot quantize NaN")]
    NanInput,
    #[error("malformed format descriptor {0:?}, expected \"Qi.f@b\"")]
    BadDescriptor(String),
    #[error("shift amount {0} exceeds word size")]
    BadShift(i64),
    #[error("operand format mismatch: {0} vs {1}")]
    FormatMismatch(FixedPointFormat, FixedPointFormat),
}

/// Signed two's-complement Q-format: `total_bits` wide with `frac_bits`
/// fractional bits. Rendered as `Qi.f@b` where `i = total - frac`
/// (integer field includes the sign bit), e.g. `Q1.15@16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    total_bits: u8,
    frac_bits: u8,
}

impl FixedPointFormat {
    pub fn new(total_bits: u8, frac_bits: u8) -> Result<Self, FxError> {
        if !SUPPORTED_TOTAL_BITS.contains(&total_bits) {
            return Err(FxError::BadTotalBits(total_bits));
        }
        if frac_bits >= total_bits {
            return Err(FxError::BadFracBits { frac: frac_bits, total: total_bits });
        }
        Ok(Self { total_bits, frac_bits })
    }

    /// Shorthand used throughout tests and defaults; panics on invalid input.
    pub fn q(total_bits: u8, frac_bits: u8) -> Self {
        Self::new(total_bits, frac_bits).expect("valid format")
    }

    /// `const` constructor for format constants.
    pub const fn const_new(total_bits: u8, frac_bits: u8) -> Option<Self> {
        let ok = matches!(total_bits, 8 | 16 | 32 | 64);
        if ok && frac_bits < total_bits {
            Some(Self { total_bits, frac_bits })
        } else {
            None
        }
    }

    pub fn total_bits(&self) -> u8 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// Integer field width (sign bit included), the `i` of `Qi.f@b`.
    pub fn int_bits(&self) -> u8 {
        self.total_bits - self.frac_bits
    }

    /// Largest representable raw payload, `2^(total-1) - 1`.
    pub fn max_raw(&self) -> i64 {
        if self.total_bits == 64 {
            i64::MAX
        } else {
            (1i64 << (self.total_bits - 1)) - 1
        }
    }

    /// Smallest representable raw payload, `-2^(total-1)`.
    pub fn min_raw(&self) -> i64 {
        if self.total_bits == 64 {
            i64::MIN
        } else {
            -(1i64 << (self.total_bits - 1))
        }
    }

    /// Value of one least-significant step, `2^-frac`.
    pub fn ulp(&self) -> f64 {
        libm::exp2(-(self.frac_bits as f64))
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    fn saturate_i128(&self, raw: i128) -> i64 {
        let hi = self.max_raw() as i128;
        let lo = self.min_raw() as i128;
        raw.clamp(lo, hi) as i64
    }

    /// Parses the `Qi.f@b` descriptor form, e.g. `Q1.15@16`.
    pub fn parse(s: &str) -> Result<Self, FxError> {
        let bad = || FxError::BadDescriptor(s.to_string());
        let rest = s.strip_prefix('Q').ok_or_else(bad)?;
        let (int_s, rest) = rest.split_once('.').ok_or_else(bad)?;
        let (frac_s, total_s) = rest.split_once('@').ok_or_else(bad)?;
        let int: u8 = int_s.parse().map_err(|_| bad())?;
        let frac: u8 = frac_s.parse().map_err(|_| bad())?;
        let total: u8 = total_s.parse().map_err(|_| bad())?;
        if int as u16 + frac as u16 != total as u16 {
            return Err(bad());
        }
        Self::new(total, frac)
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}@{}", self.int_bits(), self.frac_bits, self.total_bits)
    }
}

impl Serialize for FixedPointFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FixedPointFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One fixed-point value: raw two's-complement payload plus its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedWord {
    raw: i64,
    fmt: FixedPointFormat,
}

/// Arithmetic operations of the shared datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FxOp {
    Add,
    Sub,
    Mul,
    /// Scale by a power of two: `b.raw` is the (possibly negative) exponent.
    Shift,
}

impl FixedWord {
    /// Builds a word from a raw payload, saturating it into the format range.
    pub fn from_raw(raw: i64, fmt: FixedPointFormat) -> Self {
        Self { raw: fmt.saturate_i128(raw as i128), fmt }
    }

    pub fn zero(fmt: FixedPointFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn fmt(&self) -> FixedPointFormat {
        self.fmt
    }

    /// Real value of the word. Exact for words up to 53 significant bits.
    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.fmt.ulp()
    }
}

/// Nearest-even integer division by an arbitrary positive divisor.
pub fn div_rne_i128(n: i128, d: i128) -> i128 {
    debug_assert!(d > 0);
    let q = n.div_euclid(d);
    let r = n - q * d;
    match (2 * r).cmp(&d) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Equal => {
            if q & 1 == 1 {
                q + 1
            } else {
                q
            }
        }
    }
}

/// Round-to-nearest-even division of `x` by `2^shift` (`shift >= 0`).
pub fn rne_shift_right(x: i128, shift: u32) -> i128 {
    if shift == 0 {
        return x;
    }
    let floor = x >> shift;
    let rem = x - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half {
        floor + 1
    } else if rem < half {
        floor
    } else if floor & 1 == 1 {
        floor + 1
    } else {
        floor
    }
}

/// Rescales a raw payload from `from_frac` to `to_frac` fractional bits,
/// rounding to nearest even when narrowing. No range saturation here.
pub fn rescale_raw(raw: i128, from_frac: u8, to_frac: u8) -> i128 {
    if to_frac >= from_frac {
        raw << (to_frac - from_frac)
    } else {
        rne_shift_right(raw, (from_frac - to_frac) as u32)
    }
}

/// Quantizes a real value: round-to-nearest-even of `value * 2^frac`,
/// saturated to the representable range. NaN is a contract violation.
pub fn quantize(value: f64, fmt: FixedPointFormat) -> Result<FixedWord, FxError> {
    if value.is_nan() {
        return Err(FxError::NanInput);
    }
    let scaled = value * libm::exp2(fmt.frac_bits as f64);
    let raw = if scaled >= fmt.max_raw() as f64 {
        fmt.max_raw()
    } else if scaled <= fmt.min_raw() as f64 {
        fmt.min_raw()
    } else {
        // In-range => |scaled| < 2^63, safe to round and cast.
        let r = scaled.round_ties_even();
        fmt.saturate_i128(r as i128)
    };
    Ok(FixedWord { raw, fmt })
}

/// Real value of a word; inverse of [`quantize`] up to rounding.
pub fn dequantize(w: FixedWord) -> f64 {
    w.to_f64()
}

/// Re-expresses a word in another format: exact when widening, RNE plus
/// saturation when narrowing.
pub fn requantize(w: FixedWord, to_fmt: FixedPointFormat) -> FixedWord {
    let wide = rescale_raw(w.raw as i128, w.fmt.frac_bits, to_fmt.frac_bits);
    FixedWord { raw: to_fmt.saturate_i128(wide), fmt: to_fmt }
}

/// Shared-datapath arithmetic: exact integer math in a 128-bit
/// intermediate, one RNE requantization into `out_fmt`, saturation on
/// overflow. Multiplying m- and n-fraction-bit operands yields m+n
/// fraction bits before the output requantization.
pub fn fx_arith(op: FxOp, a: FixedWord, b: FixedWord, out_fmt: FixedPointFormat) -> Result<FixedWord, FxError> {
    let (wide, wide_frac): (i128, u8) = match op {
        FxOp::Add | FxOp::Sub => {
            let frac = a.fmt.frac_bits.max(b.fmt.frac_bits);
            let x = rescale_raw(a.raw as i128, a.fmt.frac_bits, frac);
            let y = rescale_raw(b.raw as i128, b.fmt.frac_bits, frac);
            (if op == FxOp::Add { x + y } else { x - y }, frac)
        }
        FxOp::Mul => {
            let p = a.raw as i128 * b.raw as i128;
            (p, a.fmt.frac_bits + b.fmt.frac_bits)
        }
        FxOp::Shift => {
            let k = b.raw;
            if k.unsigned_abs() >= 64 {
                return Err(FxError::BadShift(k));
            }
            // Exact scaling by 2^k in value space; negative k rounds at the
            // final requantization below.
            let frac = a.fmt.frac_bits;
            if k >= 0 {
                ((a.raw as i128) << k as u32, frac)
            } else {
                // Defer the division: widen the fraction instead so the
                // single rounding happens once, at the output format.
                let kk = (-k) as u8;
                if frac as u16 + kk as u16 <= 127 {
                    (a.raw as i128, frac + kk)
                } else {
                    (rne_shift_right(a.raw as i128, kk as u32), frac)
                }
            }
        }
    };
    let scaled = rescale_raw(wide, wide_frac, out_fmt.frac_bits);
    Ok(FixedWord { raw: out_fmt.saturate_i128(scaled), fmt: out_fmt })
}

/// Convenience wrappers over [`fx_arith`] with the output format of `a`.
impl FixedWord {
    pub fn add(self, b: FixedWord) -> FixedWord {
        fx_arith(FxOp::Add, self, b, self.fmt).expect("add cannot fail")
    }

    pub fn sub(self, b: FixedWord) -> FixedWord {
        fx_arith(FxOp::Sub, self, b, self.fmt).expect("sub cannot fail")
    }

    pub fn mul(self, b: FixedWord, out_fmt: FixedPointFormat) -> FixedWord {
        fx_arith(FxOp::Mul, self, b, out_fmt).expect("mul cannot fail")
    }

    /// Multiply by 2^k with a single rounding into `out_fmt`.
    pub fn shift(self, k: i8, out_fmt: FixedPointFormat) -> FixedWord {
        let b = FixedWord { raw: k as i64, fmt: self.fmt };
        fx_arith(FxOp::Shift, self, b, out_fmt).expect("shift in range")
    }
}

/// Dense row-major matrix of fixed-point words sharing one format, the
/// way a hardware buffer holds a quantized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FixMatrix {
    rows: usize,
    cols: usize,
    fmt: FixedPointFormat,
    raw: Vec<i64>,
}

impl FixMatrix {
    pub fn zeros(rows: usize, cols: usize, fmt: FixedPointFormat) -> Self {
        Self { rows, cols, fmt, raw: vec![0; rows * cols] }
    }

    /// Quantizes a real matrix given in row-major order.
    pub fn quantize_from(data: &[f64], rows: usize, cols: usize, fmt: FixedPointFormat) -> Result<Self, FxError> {
        assert_eq!(data.len(), rows * cols);
        let mut raw = Vec::with_capacity(data.len());
        for &v in data {
            raw.push(quantize(v, fmt)?.raw());
        }
        Ok(Self { rows, cols, fmt, raw })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fmt(&self) -> FixedPointFormat {
        self.fmt
    }

    pub fn raw(&self) -> &[i64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [i64] {
        &mut self.raw
    }

    pub fn get(&self, r: usize, c: usize) -> FixedWord {
        FixedWord::from_raw(self.raw[r * self.cols + c], self.fmt)
    }

    pub fn set(&mut self, r: usize, c: usize, w: FixedWord) {
        debug_assert_eq!(w.fmt(), self.fmt);
        self.raw[r * self.cols + c] = w.raw();
    }

    pub fn row(&self, r: usize) -> Vec<FixedWord> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn set_row(&mut self, r: usize, words: &[FixedWord]) {
        debug_assert_eq!(words.len(), self.cols);
        for (c, w) in words.iter().enumerate() {
            self.set(r, c, *w);
        }
    }

    /// Real-valued copy, row-major.
    pub fn dequantize(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| r as f64 * self.fmt.ulp()).collect()
    }
}
