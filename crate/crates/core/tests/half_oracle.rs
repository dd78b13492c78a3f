use etap_core::precision::{f64_to_half_bits, half_bits_to_f64};
use etap_core::round_half;
use proptest::prelude::*;

/// Nearest-representable search over the ordered positive binary16 codes with
/// exact distance comparison; ties go to the even code. Independent of the
/// bit-twiddling conversion under test.
fn oracle(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let mag = x.abs();
    let decode = |code: u32| -> f64 {
        // 0x7c00 stands in for the first value past the largest finite half (2^16).
        if code == 0x7c00 {
            65536.0
        } else {
            let e = (code >> 10) as i32;
            let f = (code & 0x3ff) as f64;
            if e == 0 {
                f * 2f64.powi(-24)
            } else {
                (1024.0 + f) * 2f64.powi(e - 25)
            }
        }
    };
    let rounded = if mag >= 65536.0 {
        f64::INFINITY
    } else {
        // largest code with decode(code) <= mag
        let (mut lo, mut hi) = (0u32, 0x7c00u32);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if decode(mid) <= mag {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (decode(lo), decode(hi));
        let pick = if mag == a {
            lo
        } else {
            let (da, db) = (mag - a, b - mag);
            if da < db || (da == db && lo % 2 == 0) {
                lo
            } else {
                hi
            }
        };
        if pick == 0x7c00 {
            f64::INFINITY
        } else {
            decode(pick)
        }
    };
    if x.is_sign_negative() {
        -rounded
    } else {
        rounded
    }
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits()
}

#[test]
fn named_examples() {
    assert_eq!(round_half(1.0), 1.0);
    assert_eq!(oracle(2049.0), 2048.0);
    assert_eq!(round_half(2049.0), 2048.0);
    assert_eq!(oracle(65520.0), f64::INFINITY);
    assert_eq!(round_half(65520.0), f64::INFINITY);
}

#[test]
fn boundary_set_matches_oracle() {
    let tiny = 2f64.powi(-24);
    let mut xs = vec![
        0.0,
        -0.0,
        65504.0,
        65519.999999,
        65520.0,
        65536.0,
        tiny,
        2f64.powi(-25),
        2f64.powi(-25) * (1.0 + f64::EPSILON),
        2f64.powi(-25) * (1.0 - f64::EPSILON / 2.0),
        1.5 * tiny,
        2.5 * tiny,
        1023.0 * tiny,
        1023.5 * tiny,
        2f64.powi(-14),
        2f64.powi(-14) * (1.0 - f64::EPSILON),
        f64::MIN_POSITIVE,
        f64::MAX,
        f64::INFINITY,
    ];
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    xs.extend(neg);
    for x in xs {
        assert!(same(round_half(x), oracle(x)), "x = {x:e}");
    }
}

#[test]
fn every_midpoint_between_consecutive_halves() {
    for code in 0u16..0x7bff {
        let a = half_bits_to_f64(code);
        let b = half_bits_to_f64(code + 1);
        let mid = (a + b) / 2.0;
        assert!(same(round_half(mid), oracle(mid)), "mid of {code:#x}");
        let above = f64::from_bits(mid.to_bits() + 1);
        assert!(same(round_half(above), oracle(above)));
        let below = f64::from_bits(mid.to_bits() - 1);
        assert!(same(round_half(below), oracle(below)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn agrees_with_oracle_on_raw_bits(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assert!(same(round_half(x), oracle(x)));
    }

    #[test]
    fn agrees_with_oracle_in_half_range(x in -70000.0f64..70000.0) {
        prop_assert!(same(round_half(x), oracle(x)));
    }

    #[test]
    fn idempotent(x in any::<f64>()) {
        prop_assert!(same(round_half(round_half(x)), round_half(x)));
    }

    #[test]
    fn monotone(a in -1e5f64..1e5, b in -1e5f64..1e5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(round_half(lo) <= round_half(hi));
    }

    #[test]
    fn bits_round_trip(x in -65504.0f64..65504.0) {
        let h = f64_to_half_bits(x);
        prop_assert_eq!(f64_to_half_bits(half_bits_to_f64(h)), h);
    }
}
