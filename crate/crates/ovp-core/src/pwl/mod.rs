//! Non-uniform continuous piecewise-linear (optionally piecewise-quadratic)
//! function approximation.
//!
//! A [`PwlTable`] holds knot samples `x_0..x_N` and nodal values
//! `v(x_0)..v(x_N)` in fixed point, together with precomputed per-segment
//! reciprocal widths so evaluation is multiply-only (no divider in the
//! datapath). Evaluation computes the fractional distance
//! `delta = (x - x_i) / (x_{i+1} - x_i)` and returns
//! `(1 - delta) * v(x_i) + delta * v(x_{i+1})`, with a widened intermediate
//! for the products and a single round-to-nearest-even at the output.

mod functions;
mod io;
mod segment;

pub use functions::{gelu, gelu_tanh, NamedFunction};
pub use io::{read_table, table_from_json, table_to_json, write_table};
pub use segment::{build_uniform, segment_function, Budget, SegmentOpts};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fx::{self, FixedPointFormat, FixedWord};

/// Fraction bits used for the interpolation coordinate under [`RangePolicy::Clamp`].
pub const DELTA_FRAC: u8 = 30;
/// Fraction bits for the coordinate when extrapolation may push it past 1.
pub const DELTA_FRAC_EXTRAP: u8 = 24;

#[derive(Debug, Error)]
pub enum PwlError {
    #[error("table needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knots_raw not strictly increasing at index {0}")]
    KnotsNotIncreasing(usize),
    #[error("values_raw length {values} does not match knots_raw length {knots}")]
    LengthMismatch { knots: usize, values: usize },
    #[error("recip_width_raw length {got}, expected one per segment ({want})")]
    RecipLengthMismatch { got: usize, want: usize },
    #[error("mid_values_raw length {got}, expected one per segment ({want})")]
    MidLengthMismatch { got: usize, want: usize },
    #[error("degree {0} unsupported (1 or 2)")]
    UnsupportedDegree(u8),
    #[error("degree 2 requires mid_values_raw")]
    MissingMidValues,
    #[error("interval [{lo}, {hi}] snaps to an empty range in {fmt}")]
    EmptyInterval { lo: f64, hi: f64, fmt: FixedPointFormat },
    #[error("function not finite at x = {0}")]
    NonFiniteSample(f64),
    #[error(
        "error budget infeasible: achieved {achieved:.3e} > target {target:.3e} at {segments} segments (cap)"
    )]
    BudgetInfeasible { achieved: f64, target: f64, segments: usize },
    #[error("field {field}: {detail}")]
    Field { field: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("table file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Fx(#[from] fx::FxError),
}

/// Behavior for inputs outside `[x_0, x_N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    /// Pin the input to the interval ends (range limiting).
    Clamp,
    /// Continue the first/last segment's line beyond the interval.
    ExtrapolateLastSegment,
}

/// Certified approximation error of a table against a scalar function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Input (real value) where the absolute error peaks.
    pub argmax_point: f64,
    pub grid_points: usize,
}

/// Denominator floor for relative error so zeros don't blow up the metric.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Continuous piecewise-linear (or quadratic) table in fixed point.
///
/// Raw payloads are the table's identity: two tables with equal raws and
/// formats evaluate bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlTable {
    knots_raw: Vec<i64>,
    values_raw: Vec<i64>,
    /// Per-segment reciprocal of the knot spacing, in `recip_fmt`.
    recip_width_raw: Vec<i64>,
    /// Nodal values at segment midpoints, present only for degree 2.
    mid_values_raw: Option<Vec<i64>>,
    input_fmt: FixedPointFormat,
    output_fmt: FixedPointFormat,
    recip_fmt: FixedPointFormat,
    degree: u8,
    range_policy: RangePolicy,
    /// Power-of-two scaling applied to the input before lookup.
    prescale: i8,
    /// Power-of-two scaling applied to the output after interpolation.
    postscale: i8,
}

impl PwlTable {
    /// Builds a degree-1 table from knot/value words. The reciprocal format
    /// and payloads are derived deterministically from the knot spacing.
    pub fn new(
        knots: &[FixedWord],
        values: &[FixedWord],
        range_policy: RangePolicy,
    ) -> Result<Self, PwlError> {
        let input_fmt = knots.first().map(|w| w.fmt()).unwrap_or(FixedPointFormat::q(16, 8));
        let output_fmt = values.first().map(|w| w.fmt()).unwrap_or(input_fmt);
        let knots_raw: Vec<i64> = knots.iter().map(|w| w.raw()).collect();
        let values_raw: Vec<i64> = values.iter().map(|w| w.raw()).collect();
        Self::from_raw_parts(
            knots_raw, values_raw, None, input_fmt, output_fmt, 1, range_policy, 0, 0,
        )
    }

    /// Assembles a table from raw payloads, recomputing reciprocal widths.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw_parts(
        knots_raw: Vec<i64>,
        values_raw: Vec<i64>,
        mid_values_raw: Option<Vec<i64>>,
        input_fmt: FixedPointFormat,
        output_fmt: FixedPointFormat,
        degree: u8,
        range_policy: RangePolicy,
        prescale: i8,
        postscale: i8,
    ) -> Result<Self, PwlError> {
        validate_shape(&knots_raw, &values_raw, degree, &mid_values_raw)?;
        let recip_fmt = derive_recip_fmt(&knots_raw, input_fmt);
        let recip_width_raw = compute_recips(&knots_raw, input_fmt, recip_fmt);
        Ok(Self {
            knots_raw,
            values_raw,
            recip_width_raw,
            mid_values_raw,
            input_fmt,
            output_fmt,
            recip_fmt,
            degree,
            range_policy,
            prescale,
            postscale,
        })
    }

    pub fn segments(&self) -> usize {
        self.knots_raw.len() - 1
    }

    pub fn knots(&self) -> impl Iterator<Item = FixedWord> + '_ {
        let fmt = self.input_fmt;
        self.knots_raw.iter().map(move |&r| FixedWord::from_raw(r, fmt))
    }

    pub fn nodal_values(&self) -> impl Iterator<Item = FixedWord> + '_ {
        let fmt = self.output_fmt;
        self.values_raw.iter().map(move |&r| FixedWord::from_raw(r, fmt))
    }

    pub fn knots_raw(&self) -> &[i64] {
        &self.knots_raw
    }

    pub fn values_raw(&self) -> &[i64] {
        &self.values_raw
    }

    pub fn recip_width_raw(&self) -> &[i64] {
        &self.recip_width_raw
    }

    pub fn mid_values_raw(&self) -> Option<&[i64]> {
        self.mid_values_raw.as_deref()
    }

    pub fn input_fmt(&self) -> FixedPointFormat {
        self.input_fmt
    }

    pub fn output_fmt(&self) -> FixedPointFormat {
        self.output_fmt
    }

    pub fn recip_fmt(&self) -> FixedPointFormat {
        self.recip_fmt
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn range_policy(&self) -> RangePolicy {
        self.range_policy
    }

    pub fn prescale(&self) -> i8 {
        self.prescale
    }

    pub fn postscale(&self) -> i8 {
        self.postscale
    }

    pub fn lo(&self) -> FixedWord {
        FixedWord::from_raw(self.knots_raw[0], self.input_fmt)
    }

    pub fn hi(&self) -> FixedWord {
        FixedWord::from_raw(*self.knots_raw.last().unwrap(), self.input_fmt)
    }
}

fn validate_shape(
    knots: &[i64],
    values: &[i64],
    degree: u8,
    mids: &Option<Vec<i64>>,
) -> Result<(), PwlError> {
    if knots.len() < 2 {
        return Err(PwlError::TooFewKnots(knots.len()));
    }
    if values.len() != knots.len() {
        return Err(PwlError::LengthMismatch { knots: knots.len(), values: values.len() });
    }
    for i in 1..knots.len() {
        if knots[i] <= knots[i - 1] {
            return Err(PwlError::KnotsNotIncreasing(i));
        }
    }
    match degree {
        1 => {
            if mids.is_some() {
                return Err(PwlError::Field {
                    field: "mid_values_raw",
                    detail: "present on a degree-1 table".into(),
                });
            }
        }
        2 => match mids {
            None => return Err(PwlError::MissingMidValues),
            Some(m) if m.len() != knots.len() - 1 => {
                return Err(PwlError::MidLengthMismatch { got: m.len(), want: knots.len() - 1 })
            }
            _ => {}
        },
        d => return Err(PwlError::UnsupportedDegree(d)),
    }
    Ok(())
}


/// Picks the reciprocal format so the largest 1/width still fits a 32-bit
/// word: as many fraction bits as the narrowest segment allows.
fn derive_recip_fmt(knots: &[i64], input_fmt: FixedPointFormat) -> FixedPointFormat {
    let min_w = knots.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1).max(1);
    // Largest reciprocal value is 2^frac_in / min_w.
    let rec_max = ((1i128 << input_fmt.frac_bits()) + min_w as i128 - 1) / min_w as i128;
    let rec_bits = 128 - rec_max.leading_zeros() as i64; // bits of the integer part
    let frac = (30 - rec_bits).clamp(0, 31) as u8;
    FixedPointFormat::new(32, frac).expect("valid recip format")
}

fn compute_recips(knots: &[i64], input_fmt: FixedPointFormat, recip_fmt: FixedPointFormat) -> Vec<i64> {
    knots
        .windows(2)
        .map(|w| {
            let width = (w[1] - w[0]) as i128;
            // 1/width_value at recip_fmt: width_value = width * 2^-frac_in.
            let num = 1i128 << (recip_fmt.frac_bits() as u32 + input_fmt.frac_bits() as u32);
            crate::fx::div_rne_i128(num, width) as i64
        })
        .collect()
}

/// Index of the segment containing `x`: the largest `i` with
/// `knots[i] <= x`, clamped into `[0, segments - 1]`.
pub fn find_segment(x: FixedWord, table: &PwlTable) -> usize {
    let raw = x.raw();
    let n = table.knots_raw.len();
    // partition_point returns the count of knots <= raw.
    let upper = table.knots_raw.partition_point(|&k| k <= raw);
    if upper == 0 {
        0
    } else {
        (upper - 1).min(n - 2)
    }
}

/// Evaluates the table at `x` with exact fixed-point semantics.
///
/// All products run in a 128-bit intermediate; the result takes a single
/// round-to-nearest-even into the output format. Evaluation at a knot
/// returns exactly that knot's nodal value.
pub fn eval_cpwl(x: FixedWord, table: &PwlTable) -> FixedWord {
    assert_eq!(
        x.fmt(),
        table.input_fmt,
        "input format {} does not match table input format {}",
        x.fmt(),
        table.input_fmt
    );
    let x = if table.prescale != 0 { x.shift(table.prescale, table.input_fmt) } else { x };

    let n = table.knots_raw.len();
    let lo_raw = table.knots_raw[0];
    let hi_raw = table.knots_raw[n - 1];

    let (x_raw, clamped_hi) = match table.range_policy {
        RangePolicy::Clamp => {
            let c = x.raw().clamp(lo_raw, hi_raw);
            (c, c == hi_raw)
        }
        RangePolicy::ExtrapolateLastSegment => (x.raw(), x.raw() == hi_raw),
    };

    let out = if clamped_hi {
        // The last knot belongs to no segment's half-open interval; return
        // its nodal value directly so continuity is exact.
        FixedWord::from_raw(table.values_raw[n - 1], table.output_fmt)
    } else {
        let i = find_segment(FixedWord::from_raw(x_raw, table.input_fmt), table);
        interpolate_segment(table, i, x_raw)
    };

    if table.postscale != 0 {
        out.shift(table.postscale, table.output_fmt)
    } else {
        out
    }
}

fn delta_frac(policy: RangePolicy) -> u8 {
    match policy {
        RangePolicy::Clamp => DELTA_FRAC,
        RangePolicy::ExtrapolateLastSegment => DELTA_FRAC_EXTRAP,
    }
}

fn interpolate_segment(table: &PwlTable, i: usize, x_raw: i64) -> FixedWord {
    let df = delta_frac(table.range_policy);
    let dx = (x_raw - table.knots_raw[i]) as i128;
    let wide = dx * table.recip_width_raw[i] as i128;
    let from_frac = table.input_fmt.frac_bits() + table.recip_fmt.frac_bits();
    let delta = fx::rescale_raw(wide, from_frac, df);

    let one = 1i128 << df;
    let v0 = table.values_raw[i] as i128;
    let v1 = table.values_raw[i + 1] as i128;

    let acc_frac = table.output_fmt.frac_bits() as u32 + df as u32;
    let acc = match table.degree {
        1 => (one - delta) * v0 + delta * v1,
        2 => {
            // Quadratic through both endpoints and the stored midpoint
            // sample, in Horner form: v0 + delta*(c1 + delta*c2).
            let vm = table.mid_values_raw.as_ref().expect("validated")[i] as i128;
            let c1 = 4 * vm - 3 * v0 - v1;
            let c2 = 2 * v0 + 2 * v1 - 4 * vm;
            let inner = c1 * one + c2 * delta; // frac: f_out + df
            return finish(table, v0 * (one << df) + delta * inner, acc_frac + df as u32);
        }
        _ => unreachable!("validated degree"),
    };
    finish(table, acc, acc_frac)
}

fn finish(table: &PwlTable, acc: i128, acc_frac: u32) -> FixedWord {
    let out_frac = table.output_fmt.frac_bits() as u32;
    let raw = fx::rne_shift_right(acc, acc_frac - out_frac);
    let raw = raw.clamp(table.output_fmt.min_raw() as i128, table.output_fmt.max_raw() as i128);
    FixedWord::from_raw(raw as i64, table.output_fmt)
}

/// Certifies the table against `f` on a uniform `grid_points` grid over
/// the knot span plus every knot, using the exact fixed-point evaluator.
pub fn certify_error<F: Fn(f64) -> f64>(table: &PwlTable, f: F, grid_points: usize) -> ErrorReport {
    assert!(grid_points >= 2, "grid_points must be at least 2");
    let lo = table.lo().to_f64();
    let hi = table.hi().to_f64();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut argmax = lo;

    let mut consider = |x_raw: i64| {
        let xw = FixedWord::from_raw(x_raw, table.input_fmt);
        let x = xw.to_f64();
        let want = f(x);
        let got = eval_cpwl(xw, table).to_f64();
        let abs = (got - want).abs();
        if abs > max_abs {
            max_abs = abs;
            argmax = x;
        }
        let rel = abs / want.abs().max(REL_ERROR_FLOOR);
        if rel > max_rel {
            max_rel = rel;
        }
    };

    for g in 0..grid_points {
        let x = lo + (hi - lo) * g as f64 / (grid_points - 1) as f64;
        let raw = crate::fx::quantize(x, table.input_fmt).expect("finite grid point").raw();
        consider(raw.clamp(table.knots_raw[0], *table.knots_raw.last().unwrap()));
    }
    for &k in &table.knots_raw {
        consider(k);
    }

    ErrorReport { max_abs_error: max_abs, max_rel_error: max_rel, argmax_point: argmax, grid_points }
}

#[cfg(test)]
mod tests;

#[cfg(test)]
pub(crate) mod tests_export {
    pub(crate) use super::tests::GELU16_MAX_ABS;
}
