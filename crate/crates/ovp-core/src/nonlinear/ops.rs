//! Instrumented primitive layer shared by the fixed-point kernels and the
//! vector-unit executor.
//!
//! Every datapath operation a kernel performs goes through these helpers,
//! which tally invocations per [`OpKind`]. The audit that the kernels use
//! nothing beyond table lookups and simple vector arithmetic reads these
//! counters: a division primitive exists (tests use it for direct-division
//! oracles) but no shipped kernel may ever reach it.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::fx::{fx_arith, FixedPointFormat, FixedWord, FxOp};
use crate::pwl::{eval_cpwl, find_segment, PwlTable};

/// Datapath operation classes, as counted by the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    PwlEval,
    FindSegment,
    Add,
    Sub,
    Mul,
    Shift,
    Compare,
    Min,
    Max,
    Reduce,
    Permute,
    /// Present so its absence from kernel traces is checkable, not assumed.
    Div,
}

pub const OP_KIND_COUNT: usize = 12;

impl OpKind {
    pub const ALL: [OpKind; OP_KIND_COUNT] = [
        OpKind::PwlEval,
        OpKind::FindSegment,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Shift,
        OpKind::Compare,
        OpKind::Min,
        OpKind::Max,
        OpKind::Reduce,
        OpKind::Permute,
        OpKind::Div,
    ];

    fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::PwlEval => "pwl_eval",
            OpKind::FindSegment => "find_segment",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Shift => "shift",
            OpKind::Compare => "compare",
            OpKind::Min => "min",
            OpKind::Max => "max",
            OpKind::Reduce => "reduce",
            OpKind::Permute => "permute",
            OpKind::Div => "div",
        }
    }
}

/// Thread-safe per-kind invocation counters.
#[derive(Debug, Default)]
pub struct OpLog {
    counts: [AtomicU64; OP_KIND_COUNT],
}

impl OpLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bump(&self, kind: OpKind) {
        self.counts[kind.index()].fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self, kind: OpKind) -> u64 {
        self.counts[kind.index()].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub fn total(&self) -> u64 {
        OpKind::ALL.iter().map(|&k| self.count(k)).sum()
    }

    /// Kinds with a nonzero tally.
    pub fn used_kinds(&self) -> Vec<OpKind> {
        OpKind::ALL.iter().copied().filter(|&k| self.count(k) > 0).collect()
    }
}

pub fn add(log: &OpLog, a: FixedWord, b: FixedWord, out: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Add);
    fx_arith(FxOp::Add, a, b, out).expect("add cannot fail")
}

pub fn sub(log: &OpLog, a: FixedWord, b: FixedWord, out: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Sub);
    fx_arith(FxOp::Sub, a, b, out).expect("sub cannot fail")
}

pub fn mul(log: &OpLog, a: FixedWord, b: FixedWord, out: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Mul);
    fx_arith(FxOp::Mul, a, b, out).expect("mul cannot fail")
}

/// Scale by a power of two with a single rounding; also the requantization
/// primitive (a shift into another word size).
pub fn shift(log: &OpLog, a: FixedWord, k: i32, out: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Shift);
    let b = FixedWord::from_raw(k as i64, a.fmt());
    fx_arith(FxOp::Shift, a, b, out).expect("shift in range")
}

pub fn requant(log: &OpLog, a: FixedWord, out: FixedPointFormat) -> FixedWord {
    shift(log, a, 0, out)
}

pub fn max(log: &OpLog, a: FixedWord, b: FixedWord) -> FixedWord {
    log.bump(OpKind::Max);
    debug_assert_eq!(a.fmt(), b.fmt());
    if b.raw() > a.raw() {
        b
    } else {
        a
    }
}

pub fn min(log: &OpLog, a: FixedWord, b: FixedWord) -> FixedWord {
    log.bump(OpKind::Min);
    debug_assert_eq!(a.fmt(), b.fmt());
    if b.raw() < a.raw() {
        b
    } else {
        a
    }
}

/// `a >= b` as a datapath compare.
pub fn cmp_ge(log: &OpLog, a: FixedWord, b: FixedWord) -> bool {
    log.bump(OpKind::Compare);
    debug_assert_eq!(a.fmt(), b.fmt());
    a.raw() >= b.raw()
}

pub fn pwl(log: &OpLog, table: &PwlTable, x: FixedWord) -> FixedWord {
    log.bump(OpKind::PwlEval);
    eval_cpwl(x, table)
}

pub fn segment_index(log: &OpLog, table: &PwlTable, x: FixedWord) -> usize {
    log.bump(OpKind::FindSegment);
    find_segment(x, table)
}

/// Division primitive, deliberately outside every kernel's reach; kept so
/// the audit's "zero divider invocations" claim is falsifiable.
pub fn div(log: &OpLog, a: FixedWord, b: FixedWord, out: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Div);
    assert!(b.raw() != 0, "division by zero");
    // Exact rational a/b rendered at the output format with RNE.
    let num = (a.raw() as i128) << 64;
    let q = crate::fx::div_rne_i128(num, b.raw() as i128);
    let from_frac = a.fmt().frac_bits() as i32 - b.fmt().frac_bits() as i32 + 64;
    debug_assert!(from_frac >= out.frac_bits() as i32);
    let raw = crate::fx::rne_shift_right(q, (from_frac - out.frac_bits() as i32) as u32);
    FixedWord::from_raw(raw.clamp(out.min_raw() as i128, out.max_raw() as i128) as i64, out)
}

/// Exact integer sum of equal-format words into a wider accumulator.
/// Counts as one vector reduction.
pub fn reduce_sum(log: &OpLog, items: &[FixedWord], acc_fmt: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Reduce);
    let frac = acc_fmt.frac_bits();
    let mut acc: i128 = 0;
    for w in items {
        debug_assert!(w.fmt().frac_bits() <= frac, "accumulator must not drop fraction bits");
        acc += crate::fx::rescale_raw(w.raw() as i128, w.fmt().frac_bits(), frac);
    }
    FixedWord::from_raw(
        acc.clamp(acc_fmt.min_raw() as i128, acc_fmt.max_raw() as i128) as i64,
        acc_fmt,
    )
}

/// Running maximum over a vector; one reduction plus per-lane max logic.
pub fn reduce_max(log: &OpLog, items: &[FixedWord]) -> FixedWord {
    log.bump(OpKind::Reduce);
    let mut it = items.iter();
    let first = *it.next().expect("reduce_max of empty vector");
    it.fold(first, |acc, &w| max(log, acc, w))
}

/// Inner-product reduction `sum(a_i * b_i)` exact in the accumulator format.
pub fn reduce_dot(log: &OpLog, a: &[FixedWord], b: &[FixedWord], acc_fmt: FixedPointFormat) -> FixedWord {
    log.bump(OpKind::Reduce);
    debug_assert_eq!(a.len(), b.len());
    let frac = acc_fmt.frac_bits();
    let mut acc: i128 = 0;
    for (x, y) in a.iter().zip(b) {
        let p = x.raw() as i128 * y.raw() as i128;
        let pf = x.fmt().frac_bits() + y.fmt().frac_bits();
        debug_assert!(pf <= frac);
        acc += crate::fx::rescale_raw(p, pf, frac);
    }
    FixedWord::from_raw(
        acc.clamp(acc_fmt.min_raw() as i128, acc_fmt.max_raw() as i128) as i64,
        acc_fmt,
    )
}

/// Normalizes a value `>= 1` into `[1, 2)` by a compare/shift ladder.
/// Returns the normalized word in `out_fmt` and the shift `s` with
/// `value = norm * 2^s`. Exact up to the single output rounding: the
/// ladder runs on a zero-padded wide word so no bits are dropped.
pub fn normalize_1_2(log: &OpLog, v: FixedWord, out_fmt: FixedPointFormat) -> (FixedWord, u32) {
    let f = v.fmt().frac_bits();
    assert!(v.raw() >= 1i64 << f, "normalize_1_2 needs value >= 1, got {}", v.to_f64());
    // Zero-pad the fraction so right shifts stay exact.
    let pad = (62 - 16 - f as i32).max(0) as u8;
    let wide_fmt = FixedPointFormat::q(64, f + pad);
    let mut w = shift(log, v, 0, wide_fmt);
    let mut s = 0u32;
    for k in [8u32, 4, 2, 1] {
        let threshold = FixedWord::from_raw(1i64 << (wide_fmt.frac_bits() as u32 + k), wide_fmt);
        if cmp_ge(log, w, threshold) {
            w = shift(log, w, -(k as i32), wide_fmt);
            s += k;
        }
    }
    (requant(log, w, out_fmt), s)
}

/// Normalizes a positive value into `[1, 4)` by an even (two-bit) ladder.
/// Returns the normalized word and `t` with `value = norm * 4^t`.
pub fn normalize_1_4(log: &OpLog, v: FixedWord, out_fmt: FixedPointFormat) -> (FixedWord, i32) {
    assert!(v.raw() > 0, "normalize_1_4 needs a positive value");
    let f = v.fmt().frac_bits();
    let one = 1i64 << f;
    let mut w = v;
    let mut t = 0i32;
    // Downward pass: value >= 4^k => shift right by 2k.
    for k in [8i32, 4, 2, 1] {
        if 2 * k + 2 + 63 - f as i32 > 62 {
            continue; // threshold not representable; value cannot be that large
        }
        let threshold = FixedWord::from_raw(one << (2 * k), v.fmt());
        if cmp_ge(log, w, threshold) {
            w = shift(log, w, -2 * k, v.fmt());
            t += k;
        }
    }
    // Upward pass: value < 4^(1-k) => shift left by 2k keeps it below 4.
    for k in [8i32, 4, 2, 1] {
        if 2 * (k - 1) > f as i32 {
            continue;
        }
        let threshold = FixedWord::from_raw(one >> (2 * (k - 1)), v.fmt());
        if !cmp_ge(log, w, threshold) {
            w = shift(log, w, 2 * k, v.fmt());
            t -= k;
        }
    }
    debug_assert!(w.raw() >= one && w.raw() < 4 * one, "normalize_1_4 landed at {}", w.to_f64());
    (requant(log, w, out_fmt), t)
}
