use super::*;
use crate::fx::{quantize, FixedPointFormat, FixedWord};
use num_bigint::BigInt;
use proptest::prelude::*;

fn q(t: u8, f: u8) -> FixedPointFormat {
    FixedPointFormat::q(t, f)
}

fn opts16(in_frac: u8, out_frac: u8) -> SegmentOpts {
    SegmentOpts { input_fmt: q(16, in_frac), output_fmt: q(16, out_frac), ..Default::default() }
}

/// Descending-scan segment address: return the first (largest) i with
/// x >= x_i, scanning from the top; 0 when x is below every knot.
/// Clamped to a valid segment index like the production lookup.
fn scan_oracle(x_raw: i64, table: &PwlTable) -> usize {
    let knots = table.knots_raw();
    let n = knots.len();
    for i in (0..n).rev() {
        if x_raw >= knots[i] {
            return i.min(n - 2);
        }
    }
    0
}

fn bigint_rne_shift(x: BigInt, shift: u32) -> BigInt {
    if shift == 0 {
        return x;
    }
    let floor: BigInt = x.clone() >> shift;
    let rem = x - (floor.clone() << shift);
    let half = BigInt::from(1) << (shift - 1);
    if rem > half {
        floor + 1
    } else if rem < half {
        floor
    } else if &floor % 2 != BigInt::from(0) {
        floor + 1
    } else {
        floor
    }
}

/// Independent arbitrary-precision re-derivation of the degree-1
/// fixed-point evaluation contract (clamp policy, no pre/post scale).
fn bigint_eval_oracle(x: FixedWord, t: &PwlTable) -> i64 {
    assert_eq!(t.degree(), 1);
    assert_eq!(t.range_policy(), RangePolicy::Clamp);
    let knots = t.knots_raw();
    let n = knots.len();
    let x_raw = x.raw().clamp(knots[0], knots[n - 1]);
    if x_raw == knots[n - 1] {
        return t.values_raw()[n - 1];
    }
    let i = scan_oracle(x_raw, t);
    let dx = BigInt::from(x_raw - knots[i]);
    let wide = dx * BigInt::from(t.recip_width_raw()[i]);
    let from_frac = (t.input_fmt().frac_bits() + t.recip_fmt().frac_bits()) as u32;
    let delta = bigint_rne_shift(wide, from_frac - DELTA_FRAC as u32);
    let one = BigInt::from(1) << DELTA_FRAC;
    let acc = (&one - &delta) * BigInt::from(t.values_raw()[i])
        + delta * BigInt::from(t.values_raw()[i + 1]);
    let raw = bigint_rne_shift(acc, DELTA_FRAC as u32);
    let lo = BigInt::from(t.output_fmt().min_raw());
    let hi = BigInt::from(t.output_fmt().max_raw());
    let raw = raw.clamp(lo, hi);
    i64::try_from(raw).unwrap()
}

fn table_from_reals(knots: &[f64], fmt_in: FixedPointFormat, fmt_out: FixedPointFormat, f: impl Fn(f64) -> f64) -> PwlTable {
    let kw: Vec<FixedWord> = knots.iter().map(|&x| quantize(x, fmt_in).unwrap()).collect();
    let vw: Vec<FixedWord> =
        kw.iter().map(|k| quantize(f(k.to_f64()), fmt_out).unwrap()).collect();
    PwlTable::new(&kw, &vw, RangePolicy::Clamp).unwrap()
}

#[test]
fn find_segment_direct_containment() {
    let t = table_from_reals(&[0.0, 0.25, 0.75, 1.5], q(16, 12), q(16, 12), |x| x);
    let x = quantize(0.8, q(16, 12)).unwrap();
    assert_eq!(find_segment(x, &t), 2);
}

#[test]
fn find_segment_knot_belongs_to_segment_it_starts() {
    let t = table_from_reals(&[0.0, 0.25, 0.75, 1.5], q(16, 12), q(16, 12), |x| x);
    let x = quantize(0.75, q(16, 12)).unwrap();
    assert_eq!(find_segment(x, &t), 2);
}

#[test]
fn find_segment_exhaustive_16bit_matches_scan_oracle() {
    let t = table_from_reals(&[-4.0, -1.25, 0.0, 0.5, 3.75], q(16, 12), q(16, 12), |x| x);
    for raw in i16::MIN as i64..=i16::MAX as i64 {
        let x = FixedWord::from_raw(raw, q(16, 12));
        assert_eq!(find_segment(x, &t), scan_oracle(raw, &t), "raw {raw}");
    }
}

#[test]
fn eval_identity_table_midpoint() {
    let t = table_from_reals(&[0.0, 1.0, 2.0], q(16, 13), q(16, 13), |x| x);
    let x = quantize(0.5, q(16, 13)).unwrap();
    assert_eq!(eval_cpwl(x, &t).to_f64(), 0.5);
}

#[test]
fn eval_at_knots_returns_nodal_values_exactly() {
    let t = table_from_reals(&[-2.0, -0.7, 0.1, 0.9, 1.999], q(16, 13), q(16, 11), |x| {
        libm::sin(x)
    });
    for (k, v) in t.knots().zip(t.nodal_values()) {
        assert_eq!(eval_cpwl(k, &t).raw(), v.raw(), "knot {}", k.to_f64());
    }
}

#[test]
fn eval_continuity_across_interior_knots() {
    // One step left of a knot must interpolate to within one output ULP of
    // the nodal value; the knot itself is exact.
    let t = table_from_reals(&[0.0, 0.5, 1.0, 1.5], q(16, 13), q(16, 13), |x| x * x);
    for i in 1..t.knots_raw().len() - 1 {
        let at = FixedWord::from_raw(t.knots_raw()[i], t.input_fmt());
        let before = FixedWord::from_raw(t.knots_raw()[i] - 1, t.input_fmt());
        let v_at = eval_cpwl(at, &t);
        let v_before = eval_cpwl(before, &t);
        assert_eq!(v_at.raw(), t.values_raw()[i]);
        assert!((v_at.raw() - v_before.raw()).abs() <= 2, "jump at knot {i}");
    }
}

#[test]
fn clamp_policy_pins_out_of_range_inputs() {
    let t = table_from_reals(&[0.0, 1.0], q(16, 12), q(16, 12), |x| x);
    let below = quantize(-3.0, q(16, 12)).unwrap();
    let above = quantize(5.0, q(16, 12)).unwrap();
    assert_eq!(eval_cpwl(below, &t).to_f64(), 0.0);
    assert_eq!(eval_cpwl(above, &t).to_f64(), 1.0);
}

#[test]
fn extrapolate_policy_continues_last_segment() {
    let kw: Vec<FixedWord> = [0.0, 1.0, 2.0].iter().map(|&x| quantize(x, q(16, 10)).unwrap()).collect();
    let vw: Vec<FixedWord> = [1.0, 3.0, 5.0].iter().map(|&y| quantize(y, q(16, 8)).unwrap()).collect();
    let kraw: Vec<i64> = kw.iter().map(|w| w.raw()).collect();
    let vraw: Vec<i64> = vw.iter().map(|w| w.raw()).collect();
    let t = PwlTable::from_raw_parts(
        kraw, vraw, None, q(16, 10), q(16, 8), 1, RangePolicy::ExtrapolateLastSegment, 0, 0,
    )
    .unwrap();
    // y = 2x + 1 everywhere, so extrapolation stays on the line.
    let x = quantize(4.0, q(16, 10)).unwrap();
    assert!((eval_cpwl(x, &t).to_f64() - 9.0).abs() <= 2.0 * q(16, 8).ulp());
    let x = quantize(-2.0, q(16, 10)).unwrap();
    assert!((eval_cpwl(x, &t).to_f64() - (-3.0)).abs() <= 2.0 * q(16, 8).ulp());
}

#[test]
fn segment_linear_function_single_segment_is_exact() {
    let t = segment_function(|x| 2.0 * x + 1.0, (0.0, 4.0), Budget::MaxSegments(1), opts16(12, 11))
        .unwrap();
    assert_eq!(t.segments(), 1);
    let rep = certify_error(&t, |x| 2.0 * x + 1.0, 4097);
    assert!(rep.max_abs_error <= t.output_fmt().ulp(), "err {}", rep.max_abs_error);
}

#[test]
fn affine_exactness_is_independent_of_segment_count() {
    for n in [1, 2, 5, 16] {
        let t = segment_function(
            |x| -0.75 * x + 0.2,
            (-1.0, 3.0),
            Budget::MaxSegments(n),
            opts16(13, 13),
        )
        .unwrap();
        let rep = certify_error(&t, |x| -0.75 * x + 0.2, 2049);
        assert!(rep.max_abs_error <= t.output_fmt().ulp(), "n={n} err {}", rep.max_abs_error);
    }
}

#[test]
fn segment_sqrt_three_segments() {
    let t = segment_function(
        libm::sqrt,
        (0.0, 2.0),
        Budget::MaxSegments(3),
        opts16(14, 14),
    )
    .unwrap();
    assert_eq!(t.segments(), 3);
    let rep = certify_error(&t, libm::sqrt, 65_537);
    // Frozen from the dense-grid scan of this construction.
    assert!(rep.max_abs_error <= SQRT3_MAX_ABS, "err {}", rep.max_abs_error);
    // sqrt is steepest at 0, so the greedy knots must crowd left.
    let k: Vec<f64> = t.knots().map(|w| w.to_f64()).collect();
    assert!(k[1] - k[0] < k[3] - k[2]);
}

/// Dense-grid certified bound for the 3-segment sqrt table.
const SQRT3_MAX_ABS: f64 = 0.08;

/// Dense-grid certified bound for the 16-segment GELU table.
pub(crate) const GELU16_MAX_ABS: f64 = 8.0e-3;

#[test]
fn segment_gelu_sixteen_segments_meets_frozen_bound() {
    let t = segment_function(
        functions::gelu,
        (-8.0, 8.0),
        Budget::MaxSegments(16),
        opts16(12, 12),
    )
    .unwrap();
    assert_eq!(t.segments(), 16);
    let rep = certify_error(&t, functions::gelu, 1_000_001);
    assert!(rep.max_abs_error <= GELU16_MAX_ABS, "err {}", rep.max_abs_error);
}

#[test]
fn eval_error_on_random_points_bounded_by_certified_plus_ulp() {
    let t = segment_function(
        functions::gelu,
        (-8.0, 8.0),
        Budget::MaxSegments(16),
        opts16(12, 12),
    )
    .unwrap();
    let rep = certify_error(&t, functions::gelu, 1_000_001);
    let mut state = 0x2545F4914F6CDD1Du64;
    for _ in 0..100_000 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let x = (state >> 11) as f64 / (1u64 << 53) as f64 * 16.0 - 8.0;
        let xw = quantize(x, t.input_fmt()).unwrap();
        let err = (eval_cpwl(xw, &t).to_f64() - functions::gelu(xw.to_f64())).abs();
        assert!(err <= rep.max_abs_error + t.output_fmt().ulp(), "x {x} err {err}");
    }
}

#[test]
fn certify_linear_table_at_most_one_ulp() {
    let t = table_from_reals(&[0.0, 2.0], q(16, 12), q(16, 12), |x| 0.5 * x);
    let rep = certify_error(&t, |x| 0.5 * x, 4097);
    assert!(rep.max_abs_error <= t.output_fmt().ulp());
}

#[test]
fn certified_error_dominates_any_single_point() {
    let t = segment_function(libm::exp, (-4.0, 0.0), Budget::MaxSegments(4), opts16(12, 13))
        .unwrap();
    let rep = certify_error(&t, libm::exp, 10_001);
    for x in [-3.7, -2.0, -1.234, -0.01] {
        let xw = quantize(x, t.input_fmt()).unwrap();
        let err = (eval_cpwl(xw, &t).to_f64() - libm::exp(xw.to_f64())).abs();
        assert!(err <= rep.max_abs_error + 1e-15);
    }
}

#[test]
fn refinement_never_increases_certified_error() {
    let lo = libm::exp2(-8.0);
    let mut prev = f64::INFINITY;
    for n in [2, 4, 8, 16, 32] {
        let t = segment_function(libm::sqrt, (lo, 2.0), Budget::MaxSegments(n), opts16(14, 14))
            .unwrap();
        let rep = certify_error(&t, libm::sqrt, 65_537);
        assert!(
            rep.max_abs_error <= prev * (1.0 + 1e-9) + q(16, 14).ulp(),
            "error rose from {prev} to {} at {n} segments",
            rep.max_abs_error
        );
        prev = rep.max_abs_error;
    }
}

#[test]
fn target_error_budget_feasible_and_infeasible() {
    let ok = segment_function(
        libm::exp,
        (-8.0, 0.0),
        Budget::TargetMaxError(1e-3),
        opts16(12, 14),
    )
    .unwrap();
    let rep = certify_error(&ok, libm::exp, 65_537);
    assert!(rep.max_abs_error <= 1e-3);

    let opts = SegmentOpts { segment_cap: 4, ..opts16(12, 14) };
    let err = segment_function(libm::exp, (-8.0, 0.0), Budget::TargetMaxError(1e-9), opts);
    match err {
        Err(PwlError::BudgetInfeasible { achieved, target, segments }) => {
            assert!(achieved > target);
            assert_eq!(segments, 4);
        }
        other => panic!("expected BudgetInfeasible, got {other:?}"),
    }
}

#[test]
fn nonuniform_beats_uniform_on_gelu_segment_count() {
    let nonuni = segment_function(
        functions::gelu,
        (-8.0, 8.0),
        Budget::MaxSegments(16),
        opts16(12, 12),
    )
    .unwrap();
    let target = certify_error(&nonuni, functions::gelu, 100_001).max_abs_error;
    // Grow a uniform-width table until it reaches the same error.
    let mut n = 16;
    loop {
        let uni = build_uniform(functions::gelu, (-8.0, 8.0), n, opts16(12, 12)).unwrap();
        let e = certify_error(&uni, functions::gelu, 100_001).max_abs_error;
        if e <= target {
            break;
        }
        n += 8;
        assert!(n <= 4096, "uniform table never reached error {target}");
    }
    assert!(n > 16, "uniform needed {n} segments, non-uniform needed 16");
}

#[test]
fn degree2_table_evaluates_quadratic_exactly_at_samples() {
    let f = |x: f64| 0.25 * x * x - 0.5 * x + 0.125;
    let opts = SegmentOpts { degree: 2, ..opts16(12, 13) };
    let t = segment_function(f, (-2.0, 2.0), Budget::MaxSegments(4), opts).unwrap();
    assert_eq!(t.degree(), 2);
    // A quadratic through three exact samples per segment reproduces the
    // function up to quantization everywhere.
    let rep = certify_error(&t, f, 10_001);
    assert!(rep.max_abs_error <= 4.0 * t.output_fmt().ulp(), "err {}", rep.max_abs_error);
}

#[test]
fn degree2_beats_degree1_on_exp() {
    let o1 = opts16(12, 14);
    let o2 = SegmentOpts { degree: 2, ..o1 };
    let t1 = segment_function(libm::exp, (-8.0, 0.0), Budget::MaxSegments(8), o1).unwrap();
    let t2 = segment_function(libm::exp, (-8.0, 0.0), Budget::MaxSegments(8), o2).unwrap();
    let e1 = certify_error(&t1, libm::exp, 65_537).max_abs_error;
    let e2 = certify_error(&t2, libm::exp, 65_537).max_abs_error;
    assert!(e2 < e1, "degree2 {e2} vs degree1 {e1}");
}

#[test]
fn io_round_trip_is_structurally_identical() {
    let t = segment_function(
        functions::gelu,
        (-8.0, 8.0),
        Budget::MaxSegments(12),
        opts16(12, 12),
    )
    .unwrap();
    let json = table_to_json(&t);
    let back = table_from_json(&json).unwrap();
    assert_eq!(t, back);
}

#[test]
fn io_rejects_decreasing_knots() {
    let t = table_from_reals(&[0.0, 1.0, 2.0], q(16, 12), q(16, 12), |x| x);
    let mut v: serde_json::Value = serde_json::from_str(&table_to_json(&t)).unwrap();
    v["knots_raw"][0] = serde_json::Value::from(9_999_999i64);
    match table_from_json(&v.to_string()) {
        Err(PwlError::KnotsNotIncreasing(1)) => {}
        other => panic!("expected KnotsNotIncreasing, got {other:?}"),
    }
}

#[test]
fn io_rejects_mismatched_lengths() {
    let t = table_from_reals(&[0.0, 1.0, 2.0], q(16, 12), q(16, 12), |x| x);
    let mut v: serde_json::Value = serde_json::from_str(&table_to_json(&t)).unwrap();
    v["values_raw"].as_array_mut().unwrap().pop();
    match table_from_json(&v.to_string()) {
        Err(PwlError::LengthMismatch { knots: 3, values: 2 }) => {}
        other => panic!("expected LengthMismatch, got {other:?}"),
    }
}

#[test]
fn io_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let t = table_from_reals(&[-1.0, 0.0, 1.0], q(16, 12), q(16, 14), |x| x * 0.5);
    write_table(&t, &path).unwrap();
    assert_eq!(read_table(&path).unwrap(), t);
}

#[test]
fn eval_matches_bigint_oracle_exhaustively_16bit() {
    let t = table_from_reals(
        &[-3.99, -1.0, -0.1, 0.33, 2.5, 3.99],
        q(16, 13),
        q(16, 11),
        libm::tanh,
    );
    for raw in (i16::MIN as i64..=i16::MAX as i64).step_by(7) {
        let x = FixedWord::from_raw(raw, q(16, 13));
        assert_eq!(eval_cpwl(x, &t).raw(), bigint_eval_oracle(x, &t), "raw {raw}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_matches_bigint_oracle_random_tables(
        seed in 0u64..1_000_000,
        x_raw in i16::MIN as i64..=i16::MAX as i64,
    ) {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17; s
        };
        let nseg = 2 + (next() % 6) as usize;
        let mut knots: Vec<i64> = (0..=nseg).map(|_| (next() % 60000) as i64 - 30000).collect();
        knots.sort_unstable();
        knots.dedup();
        prop_assume!(knots.len() >= 2);
        let values: Vec<i64> = knots.iter().map(|_| (next() % 60000) as i64 - 30000).collect();
        let t = PwlTable::from_raw_parts(
            knots, values, None, q(16, 13), q(16, 12), 1, RangePolicy::Clamp, 0, 0,
        ).unwrap();
        let x = FixedWord::from_raw(x_raw, q(16, 13));
        prop_assert_eq!(eval_cpwl(x, &t).raw(), bigint_eval_oracle(x, &t));
    }

    #[test]
    fn clamp_eval_stays_within_nodal_hull(x_raw in i16::MIN as i64..=i16::MAX as i64) {
        let t = table_from_reals(&[-2.0, -0.5, 0.5, 2.0], q(16, 13), q(16, 12), |x| x * x - 1.0);
        let lo = t.values_raw().iter().copied().min().unwrap();
        let hi = t.values_raw().iter().copied().max().unwrap();
        let y = eval_cpwl(FixedWord::from_raw(x_raw, q(16, 13)), &t).raw();
        prop_assert!(y >= lo - 1 && y <= hi + 1);
    }
}
