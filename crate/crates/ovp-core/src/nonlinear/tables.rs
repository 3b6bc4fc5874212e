//! The lookup tables backing the fixed-point nonlinearities, with their
//! formats and segment budgets.

use serde::{Deserialize, Serialize};

use crate::fx::FixedPointFormat;
use crate::pwl::{
    certify_error, segment_function, Budget, ErrorReport, NamedFunction, PwlError, PwlTable,
    RangePolicy, SegmentOpts,
};

/// Segment counts per shipped table. Defaults were calibrated against the
/// numerical acceptance bounds: the reciprocal table carries the per-row
/// sum normalization of softmax and needs the most resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableBudgets {
    pub exp_segments: usize,
    pub recip_segments: usize,
    pub rsqrt_segments: usize,
    pub gelu_segments: usize,
}

impl Default for TableBudgets {
    fn default() -> Self {
        Self { exp_segments: 32, recip_segments: 192, rsqrt_segments: 96, gelu_segments: 16 }
    }
}

/// Fixed table geometry: exp consumes post-subtraction 16-bit values, the
/// scalar reciprocal/rsqrt tables run at 32-bit on normalized ranges.
pub const EXP_IN_FMT: FixedPointFormat = fmt16(10);
pub const EXP_OUT_FMT: FixedPointFormat = fmt16(14);
pub const RECIP_FMT: FixedPointFormat = fmt32(30);
pub const RSQRT_IN_FMT: FixedPointFormat = fmt32(29);
pub const RSQRT_OUT_FMT: FixedPointFormat = fmt32(30);
pub const GELU_FMT: FixedPointFormat = fmt16(12);

/// Softmax subtracts the row max before exponentiation; anything below
/// this is zero at the exp output format anyway.
pub const EXP_DOMAIN: (f64, f64) = (-16.0, 0.0);
pub const RECIP_DOMAIN: (f64, f64) = (1.0, 2.0);
pub const RSQRT_DOMAIN: (f64, f64) = (1.0, 4.0);
pub const GELU_DOMAIN: (f64, f64) = (-8.0, 8.0);

const fn fmt16(frac: u8) -> FixedPointFormat {
    match FixedPointFormat::const_new(16, frac) {
        Some(f) => f,
        None => panic!("bad format"),
    }
}

const fn fmt32(frac: u8) -> FixedPointFormat {
    match FixedPointFormat::const_new(32, frac) {
        Some(f) => f,
        None => panic!("bad format"),
    }
}

/// The four tables the kernels evaluate, plus their certified errors.
#[derive(Debug, Clone)]
pub struct NonlinearTables {
    pub exp: PwlTable,
    pub recip: PwlTable,
    pub rsqrt: PwlTable,
    pub gelu: PwlTable,
    pub reports: TableReports,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReports {
    pub exp: ErrorReport,
    pub recip: ErrorReport,
    pub rsqrt: ErrorReport,
    pub gelu: ErrorReport,
}

const CERTIFY_GRID: usize = 1 << 17;

impl NonlinearTables {
    pub fn build(budgets: TableBudgets) -> Result<Self, PwlError> {
        let mk = |f: NamedFunction,
                  domain: (f64, f64),
                  segs: usize,
                  input_fmt: FixedPointFormat,
                  output_fmt: FixedPointFormat|
         -> Result<(PwlTable, ErrorReport), PwlError> {
            let opts = SegmentOpts {
                input_fmt,
                output_fmt,
                degree: 1,
                range_policy: RangePolicy::Clamp,
                ..Default::default()
            };
            let func = move |x: f64| f.eval(x);
            let t = segment_function(func, domain, Budget::MaxSegments(segs), opts)?;
            let rep = certify_error(&t, func, CERTIFY_GRID + 1);
            Ok((t, rep))
        };

        let (exp, exp_rep) =
            mk(NamedFunction::Exp, EXP_DOMAIN, budgets.exp_segments, EXP_IN_FMT, EXP_OUT_FMT)?;
        let (recip, recip_rep) =
            mk(NamedFunction::Recip, RECIP_DOMAIN, budgets.recip_segments, RECIP_FMT, RECIP_FMT)?;
        let (rsqrt, rsqrt_rep) = mk(
            NamedFunction::Rsqrt,
            RSQRT_DOMAIN,
            budgets.rsqrt_segments,
            RSQRT_IN_FMT,
            RSQRT_OUT_FMT,
        )?;
        let (gelu, gelu_rep) =
            mk(NamedFunction::Gelu, GELU_DOMAIN, budgets.gelu_segments, GELU_FMT, GELU_FMT)?;

        Ok(Self {
            exp,
            recip,
            rsqrt,
            gelu,
            reports: TableReports { exp: exp_rep, recip: recip_rep, rsqrt: rsqrt_rep, gelu: gelu_rep },
        })
    }
}
