use etap_core::cost_model::{
    padded_extent, predicted_speedup, utilization, Axis, DecodeShape, Mode, WgmmaSpec,
};
use proptest::prelude::*;

const CONTEXTS: [u64; 8] = [512, 1024, 2048, 4096, 8192, 16384, 32768, 65536];

#[test]
fn speedup_is_monotone_over_the_context_grid() {
    let spec = WgmmaSpec::default();
    let s: Vec<f64> = CONTEXTS
        .iter()
        .map(|&kv| predicted_speedup(&DecodeShape::decode(kv), &spec))
        .collect();
    assert!(s.windows(2).all(|w| w[0] <= w[1]), "{s:?}");
    assert!((s[7] - 4.0).abs() <= 0.04);
    assert!(s[0] > 3.9);
}

fn arb_shape() -> impl Strategy<Value = DecodeShape> {
    (
        1u64..130,
        1u64..5,
        1u64..5000,
        1u64..700,
        1u64..700,
        1u64..4,
    )
        .prop_map(|(heads, q_tokens, kv_len, d_qk, d_v, batch)| DecodeShape {
            heads,
            q_tokens,
            kv_len,
            d_qk,
            d_v,
            batch,
        })
}

proptest! {
    #[test]
    fn utilization_in_unit_interval(shape in arb_shape(), etap in any::<bool>()) {
        let mode = if etap { Mode::Etap } else { Mode::Original };
        let r = utilization(mode, &shape, &WgmmaSpec::default());
        prop_assert!(r.issued_macs >= r.useful_macs);
        prop_assert!(r.utilization > 0.0 && r.utilization <= 1.0);
        prop_assert_eq!(r.utilization, r.useful_macs as f64 / r.issued_macs as f64);
        let gemm_sum: u64 = r.per_gemm.iter().rev().map(|g| g.issued_macs()).sum::<u64>() * shape.batch;
        prop_assert_eq!(gemm_sum, r.issued_macs);
    }

    #[test]
    fn full_utilization_iff_aligned(shape in arb_shape()) {
        let spec = WgmmaSpec::default();
        let r = utilization(Mode::Original, &shape, &spec);
        let q = shape.queries();
        let aligned = padded_extent(q, Axis::M, &spec) == q
            && padded_extent(shape.kv_len, Axis::N, &spec) == shape.kv_len
            && padded_extent(shape.d_qk, Axis::K, &spec) == shape.d_qk
            && padded_extent(shape.d_v, Axis::N, &spec) == shape.d_v
            && padded_extent(shape.kv_len, Axis::K, &spec) == shape.kv_len;
        prop_assert_eq!(r.utilization == 1.0, aligned);
    }

    #[test]
    fn original_utilization_ignores_aligned_context(shape in arb_shape(), a in 1u64..300, b in 1u64..300) {
        let spec = WgmmaSpec::default();
        let at = |kv| utilization(Mode::Original, &DecodeShape { kv_len: kv, ..shape }, &spec).utilization;
        prop_assert!((at(16 * a) - at(16 * b)).abs() < 1e-12);
    }

    #[test]
    fn speedup_monotone_in_aligned_context(shape in arb_shape(), a in 1u64..200, b in 1u64..200) {
        let spec = WgmmaSpec::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at = |kv| predicted_speedup(&DecodeShape { kv_len: 64 * kv, ..shape }, &spec);
        prop_assert!(at(lo) <= at(hi) + 1e-12);
    }

    #[test]
    fn padded_queries_always_gain(shape in arb_shape(), kv in 1u64..200, q8 in 1u64..8, dv in 1u64..10) {
        // Query count a multiple of n_step below m_min; context and d_v (both
        // on M in the transposed mapping) aligned to m_min.
        let spec = WgmmaSpec::default();
        let s = DecodeShape { heads: 8 * q8, q_tokens: 1, kv_len: 64 * kv, d_v: 64 * dv, ..shape };
        prop_assert!(predicted_speedup(&s, &spec) >= 1.0);
    }
}

#[test]
fn speedup_approaches_issued_ratio_for_long_context() {
    let spec = WgmmaSpec::default();
    let ratio = |kv| {
        let s = DecodeShape::decode(kv);
        utilization(Mode::Original, &s, &spec).issued_macs as f64
            / utilization(Mode::Etap, &s, &spec).issued_macs as f64
    };
    let gap = |kv| (ratio(kv) - predicted_speedup(&DecodeShape::decode(kv), &spec)).abs();
    assert!(gap(1 << 20) < gap(1 << 10));
    assert!(gap(1 << 20) < 1e-4);
}
