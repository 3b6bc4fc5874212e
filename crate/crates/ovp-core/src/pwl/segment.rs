//! Non-uniform segmentation: greedy max-error bisection with one pass of
//! local knot adjustment.
//!
//! The builder starts from a single segment, repeatedly splits the segment
//! with the largest certified error at its worst grid point, then nudges
//! each interior knot to the locally best nearby position. Nodal values
//! are the function samples at the knots, so the table is interpolatory
//! and continuity holds by construction.

use crate::fx::{quantize, FixedPointFormat, FixedWord};

use super::{certify_error, eval_cpwl, ErrorReport, PwlError, PwlTable, RangePolicy};

/// Stopping rule for the segmentation loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Grow to exactly this many segments (or fewer if the grid runs out).
    MaxSegments(usize),
    /// Split until the certified max abs error is at or below this value;
    /// fails if the cap is reached first.
    TargetMaxError(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SegmentOpts {
    pub input_fmt: FixedPointFormat,
    pub output_fmt: FixedPointFormat,
    pub degree: u8,
    pub range_policy: RangePolicy,
    /// Hard ceiling on segments for the target-error mode.
    pub segment_cap: usize,
    /// Points per segment for the in-loop error scan.
    pub scan_points: usize,
    /// Interior knots pinned before refinement starts (e.g. an exact zero
    /// crossing). Snapped to the input grid; never moved or removed.
    pub seed_knots: &'static [f64],
}

impl Default for SegmentOpts {
    fn default() -> Self {
        Self {
            input_fmt: FixedPointFormat::q(16, 10),
            output_fmt: FixedPointFormat::q(16, 10),
            degree: 1,
            range_policy: RangePolicy::Clamp,
            segment_cap: 1024,
            scan_points: 129,
            seed_knots: &[],
        }
    }
}

/// Builds a non-uniform table for `f` on `[lo, hi]` under the given budget.
///
/// Interval ends snap inward to the input format grid. The certified error
/// uses the exact fixed-point evaluator, so the number reported here is
/// the number the hardware model will exhibit.
pub fn segment_function<F: Fn(f64) -> f64>(
    f: F,
    interval: (f64, f64),
    budget: Budget,
    opts: SegmentOpts,
) -> Result<PwlTable, PwlError> {
    let (lo, hi) = interval;
    let fmt = opts.input_fmt;
    let lo_raw = snap_ceil(lo, fmt);
    let hi_raw = snap_floor(hi, fmt);
    if lo_raw >= hi_raw {
        return Err(PwlError::EmptyInterval { lo, hi, fmt });
    }

    let sample = |raw: i64| -> Result<i64, PwlError> {
        let x = FixedWord::from_raw(raw, fmt).to_f64();
        let y = f(x);
        if !y.is_finite() {
            return Err(PwlError::NonFiniteSample(x));
        }
        Ok(quantize(y, opts.output_fmt)?.raw())
    };

    let mut knots = vec![lo_raw, hi_raw];
    for &k in opts.seed_knots {
        let raw = quantize(k, fmt)?.raw();
        if raw > lo_raw && raw < hi_raw && !knots.contains(&raw) {
            knots.push(raw);
        }
    }
    knots.sort_unstable();
    let mut values = Vec::with_capacity(knots.len());
    for &k in &knots {
        values.push(sample(k)?);
    }
    let pinned: Vec<i64> = knots[1..knots.len() - 1].to_vec();

    let (max_segments, target) = match budget {
        Budget::MaxSegments(n) => {
            assert!(n >= 1, "budget must be positive");
            (n, None)
        }
        Budget::TargetMaxError(e) => {
            assert!(e > 0.0, "budget must be positive");
            (opts.segment_cap, Some(e))
        }
    };

    loop {
        let table = build_table(&knots, &values, &f, fmt, opts)?;
        let mut scans: Vec<SegmentScan> =
            (0..table.segments()).map(|i| scan_segment(&table, &f, i, opts.scan_points)).collect();

        let achieved = scans.iter().map(|s| s.max_abs).fold(0.0f64, f64::max);
        if let Some(t) = target {
            if achieved <= t {
                // The coarse scan says done; certify on the dense grid
                // before accepting, and keep splitting from the dense
                // picture if it disagrees.
                scans = (0..table.segments())
                    .map(|i| scan_segment(&table, &f, i, opts.scan_points * 8))
                    .collect();
                if scans.iter().map(|s| s.max_abs).fold(0.0f64, f64::max) <= t {
                    break;
                }
            }
        }
        if knots.len() - 1 >= max_segments {
            if let Some(t) = target {
                return Err(PwlError::BudgetInfeasible {
                    achieved,
                    target: t,
                    segments: knots.len() - 1,
                });
            }
            break;
        }

        let worst = scans
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                // Ties go to the lowest segment index.
                a.max_abs.partial_cmp(&b.max_abs).unwrap().then(ib.cmp(ia))
            })
            .map(|(i, s)| (i, s.max_abs, s.argmax_raw))
            .unwrap();

        // Split the worst segment at its worst point, snapped strictly inside.
        let (i, _, mut split_raw) = worst;
        if split_raw <= knots[i] || split_raw >= knots[i + 1] {
            split_raw = midpoint(knots[i], knots[i + 1]);
        }
        if split_raw <= knots[i] || split_raw >= knots[i + 1] {
            // Segment is one step wide: nothing left to refine anywhere
            // useful; find any splittable segment in error order.
            let mut done = true;
            let mut order: Vec<usize> = (0..scans.len()).collect();
            order.sort_by(|&a, &b| {
                scans[b].max_abs.partial_cmp(&scans[a].max_abs).unwrap().then(a.cmp(&b))
            });
            for j in order {
                let m = midpoint(knots[j], knots[j + 1]);
                if m > knots[j] && m < knots[j + 1] {
                    split_raw = m;
                    done = false;
                    knots.insert(j + 1, split_raw);
                    values.insert(j + 1, sample(split_raw)?);
                    break;
                }
            }
            if done {
                break;
            }
        } else {
            knots.insert(i + 1, split_raw);
            values.insert(i + 1, sample(split_raw)?);
        }
    }

    // One pass of local search over interior knots, kept only if the
    // densely measured global max did not regress.
    let dense_max = |k: &[i64], v: &[i64]| -> Result<f64, PwlError> {
        let t = build_table(k, v, &f, fmt, opts)?;
        Ok((0..t.segments())
            .map(|i| scan_segment(&t, &f, i, opts.scan_points * 8).max_abs)
            .fold(0.0f64, f64::max))
    };
    let before = dense_max(&knots, &values)?;
    let (knots_orig, values_orig) = (knots.clone(), values.clone());
    adjust_knots(&mut knots, &mut values, &f, &sample, fmt, opts, &pinned)?;
    let after = dense_max(&knots, &values)?;
    let regressed = after > before || target.map(|t| after > t).unwrap_or(false);
    if regressed {
        knots = knots_orig;
        values = values_orig;
    }

    build_table(&knots, &values, &f, fmt, opts)
}

/// Uniform-width counterpart, used to demonstrate the non-uniform
/// advantage and for quick experiments.
pub fn build_uniform<F: Fn(f64) -> f64>(
    f: F,
    interval: (f64, f64),
    segments: usize,
    opts: SegmentOpts,
) -> Result<PwlTable, PwlError> {
    assert!(segments >= 1);
    let fmt = opts.input_fmt;
    let lo_raw = snap_ceil(interval.0, fmt);
    let hi_raw = snap_floor(interval.1, fmt);
    if lo_raw >= hi_raw {
        return Err(PwlError::EmptyInterval { lo: interval.0, hi: interval.1, fmt });
    }
    let mut knots = Vec::with_capacity(segments + 1);
    for k in 0..=segments {
        let raw = lo_raw + ((hi_raw - lo_raw) as i128 * k as i128 / segments as i128) as i64;
        if knots.last() != Some(&raw) {
            knots.push(raw);
        }
    }
    let mut values = Vec::with_capacity(knots.len());
    for &k in &knots {
        let x = FixedWord::from_raw(k, fmt).to_f64();
        let y = f(x);
        if !y.is_finite() {
            return Err(PwlError::NonFiniteSample(x));
        }
        values.push(quantize(y, opts.output_fmt)?.raw());
    }
    build_table(&knots, &values, &f, fmt, opts)
}

struct SegmentScan {
    max_abs: f64,
    argmax_raw: i64,
}

fn scan_segment<F: Fn(f64) -> f64>(
    table: &PwlTable,
    f: &F,
    seg: usize,
    points: usize,
) -> SegmentScan {
    let lo = table.knots_raw()[seg];
    let hi = table.knots_raw()[seg + 1];
    let fmt = table.input_fmt();
    let mut max_abs = -1.0f64;
    let mut argmax_raw = lo;
    let pts = points.max(3);
    for g in 0..pts {
        let raw = lo + ((hi - lo) as i128 * g as i128 / (pts - 1) as i128) as i64;
        let xw = FixedWord::from_raw(raw, fmt);
        let err = (eval_cpwl(xw, table).to_f64() - f(xw.to_f64())).abs();
        if err > max_abs {
            max_abs = err;
            argmax_raw = raw;
        }
    }
    SegmentScan { max_abs, argmax_raw }
}

fn build_table<F: Fn(f64) -> f64>(
    knots: &[i64],
    values: &[i64],
    f: &F,
    fmt: FixedPointFormat,
    opts: SegmentOpts,
) -> Result<PwlTable, PwlError> {
    let mids = if opts.degree == 2 {
        let mut m = Vec::with_capacity(knots.len() - 1);
        for w in knots.windows(2) {
            let raw = midpoint(w[0], w[1]);
            let x = FixedWord::from_raw(raw, fmt).to_f64();
            let y = f(x);
            if !y.is_finite() {
                return Err(PwlError::NonFiniteSample(x));
            }
            m.push(quantize(y, opts.output_fmt)?.raw());
        }
        Some(m)
    } else {
        None
    };
    PwlTable::from_raw_parts(
        knots.to_vec(),
        values.to_vec(),
        mids,
        fmt,
        opts.output_fmt,
        opts.degree,
        opts.range_policy,
        0,
        0,
    )
}

/// One ascending pass of local search: each interior knot tries a handful
/// of nearby grid positions and keeps the one minimizing the max error of
/// its two adjacent segments. Strict improvement only, so the pass is
/// deterministic and never regresses.
fn adjust_knots<F, S>(
    knots: &mut [i64],
    values: &mut [i64],
    f: &F,
    sample: &S,
    fmt: FixedPointFormat,
    opts: SegmentOpts,
    pinned: &[i64],
) -> Result<(), PwlError>
where
    F: Fn(f64) -> f64,
    S: Fn(i64) -> Result<i64, PwlError>,
{
    if knots.len() <= 2 {
        return Ok(());
    }
    for i in 1..knots.len() - 1 {
        if pinned.contains(&knots[i]) {
            continue;
        }
        let base_table = build_table(knots, values, f, fmt, opts)?;
        let local = |t: &PwlTable| -> f64 {
            let a = scan_segment(t, f, i - 1, opts.scan_points).max_abs;
            let b = scan_segment(t, f, i, opts.scan_points).max_abs;
            a.max(b)
        };
        let mut best_err = local(&base_table);
        let mut best_raw = knots[i];
        let span = (knots[i + 1] - knots[i]).min(knots[i] - knots[i - 1]);
        for off in [-span / 4, -span / 8, span / 8, span / 4] {
            let cand = knots[i] + off;
            if off == 0 || cand <= knots[i - 1] || cand >= knots[i + 1] {
                continue;
            }
            let mut k2 = knots.to_vec();
            let mut v2 = values.to_vec();
            k2[i] = cand;
            v2[i] = sample(cand)?;
            let t2 = build_table(&k2, &v2, f, fmt, opts)?;
            let e2 = local(&t2);
            if e2 < best_err {
                best_err = e2;
                best_raw = cand;
            }
        }
        if best_raw != knots[i] {
            knots[i] = best_raw;
            values[i] = sample(best_raw)?;
        }
    }
    Ok(())
}

fn midpoint(a: i64, b: i64) -> i64 {
    a + (b - a) / 2
}

fn snap_ceil(v: f64, fmt: FixedPointFormat) -> i64 {
    let scaled = libm::ceil(v / fmt.ulp());
    let raw = if scaled >= fmt.max_raw() as f64 {
        fmt.max_raw()
    } else if scaled <= fmt.min_raw() as f64 {
        fmt.min_raw()
    } else {
        scaled as i64
    };
    raw
}

fn snap_floor(v: f64, fmt: FixedPointFormat) -> i64 {
    let scaled = libm::floor(v / fmt.ulp());
    if scaled >= fmt.max_raw() as f64 {
        fmt.max_raw()
    } else if scaled <= fmt.min_raw() as f64 {
        fmt.min_raw()
    } else {
        scaled as i64
    }
}

/// Convenience: build and certify in one call.
pub fn segment_and_certify<F: Fn(f64) -> f64 + Copy>(
    f: F,
    interval: (f64, f64),
    budget: Budget,
    opts: SegmentOpts,
    grid_points: usize,
) -> Result<(PwlTable, ErrorReport), PwlError> {
    let table = segment_function(f, interval, budget, opts)?;
    let report = certify_error(&table, f, grid_points);
    Ok((table, report))
}
