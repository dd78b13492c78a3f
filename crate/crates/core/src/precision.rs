//! Precision emulation on a binary64 carrier.
//!
//! Every scalar is stored as `f64`; narrower formats are modelled by rounding
//! at fixed points. `Fp16Emu` rounds operands and softmax numerators to
//! binary16 and accumulates in binary32, the usual tensor-core contract.

use core::fmt;
use core::str::FromStr;

/// Arithmetic mode used by the pipelines and [`crate::gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    /// No rounding anywhere.
    #[default]
    Exact64,
    /// Operands and accumulators rounded to binary32.
    Fp32,
    /// Operands and probabilities rounded to binary16, binary32 accumulation.
    Fp16Emu,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Exact64, Precision::Fp32, Precision::Fp16Emu];

    pub fn label(self) -> &'static str {
        match self {
            Precision::Exact64 => "exact64",
            Precision::Fp32 => "fp32",
            Precision::Fp16Emu => "fp16emu",
        }
    }

    /// Rounding applied to stored operands (Q, K, V and GEMM inputs).
    #[inline]
    pub fn operand(self, x: f64) -> f64 {
        match self {
            Precision::Exact64 => x,
            Precision::Fp32 => round_single(x),
            Precision::Fp16Emu => round_half(x),
        }
    }

    /// Rounding applied to accumulators and softmax statistics.
    #[inline]
    pub fn accumulate(self, x: f64) -> f64 {
        match self {
            Precision::Exact64 => x,
            Precision::Fp32 | Precision::Fp16Emu => round_single(x),
        }
    }

    /// Rounding applied to the unnormalized probabilities before the PV product.
    #[inline]
    pub fn probability(self, x: f64) -> f64 {
        self.operand(x)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPrecision;

impl fmt::Display for UnknownPrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of exact64, fp32, fp16emu")
    }
}

impl core::error::Error for UnknownPrecision {}

impl FromStr for Precision {
    type Err = UnknownPrecision;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact64" => Ok(Precision::Exact64),
            "fp32" => Ok(Precision::Fp32),
            "fp16emu" => Ok(Precision::Fp16Emu),
            _ => Err(UnknownPrecision),
        }
    }
}

/// Round to the nearest binary32 value (ties to even).
#[inline]
pub fn round_single(x: f64) -> f64 {
    x as f32 as f64
}

/// Round to the nearest binary16 value (ties to even) and widen back.
///
/// NaN stays NaN, values at or beyond the overflow threshold become infinite
/// and values below half the smallest subnormal flush to a signed zero.
#[inline]
pub fn round_half(x: f64) -> f64 {
    half_bits_to_f64(f64_to_half_bits(x))
}

/// Correctly rounded binary64 -> binary16 conversion on raw bits.
pub fn f64_to_half_bits(x: f64) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 48) & 0x8000) as u16;
    let exp_field = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);

    if exp_field == 0x7ff {
        return if frac == 0 {
            sign | 0x7c00
        } else {
            sign | 0x7e00
        };
    }
    if exp_field == 0 {
        // binary64 zero or subnormal: far below 2^-25
        return sign;
    }

    let exp = exp_field - 1023;
    if exp >= 16 {
        return sign | 0x7c00;
    }

    let significand = frac | (1u64 << 52);
    // Bits of the 53-bit significand dropped to reach 11 (normal) or fewer (subnormal).
    let shift = if exp >= -14 {
        42
    } else {
        42 + (-14 - exp) as u32
    };
    if shift > 53 {
        return sign;
    }

    let kept = significand >> shift;
    let rem = significand & ((1u64 << shift) - 1);
    let halfway = 1u64 << (shift - 1);
    let rounded = if rem > halfway || (rem == halfway && kept & 1 == 1) {
        kept + 1
    } else {
        kept
    };

    let magnitude = if exp >= -14 {
        // `rounded` carries the hidden bit at 1 << 10, so adding it onto the
        // biased exponent minus one lands the exponent (and any carry) right.
        (((exp + 14) as u64) << 10) + rounded
    } else {
        rounded
    };
    if magnitude >= 0x7c00 {
        sign | 0x7c00
    } else {
        sign | magnitude as u16
    }
}

/// Exact widening of binary16 bits.
pub fn half_bits_to_f64(h: u16) -> f64 {
    let negative = h & 0x8000 != 0;
    let exp = ((h >> 10) & 0x1f) as i32;
    let frac = (h & 0x3ff) as f64;
    let magnitude = match exp {
        0 => frac * libm::ldexp(1.0, -24),
        0x1f if frac == 0.0 => f64::INFINITY,
        0x1f => f64::NAN,
        _ => (1024.0 + frac) * libm::ldexp(1.0, exp - 25),
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}
