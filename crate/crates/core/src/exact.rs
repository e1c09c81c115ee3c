//! Exact arithmetic on finite binary floating-point values.
//!
//! Every finite `f64` is a dyadic rational `m * 2^e`. Sums and products of
//! dyadics are dyadic, so they can be carried without any rounding; only
//! the final division by an integer and conversion back to `f64` rounds,
//! once, to nearest-even. Two algebraically equal expressions over the same
//! `f64` inputs therefore produce bit-identical results, whatever order or
//! grouping they were evaluated in.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dyadic {
    mantissa: BigInt,
    exponent: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Self {
            mantissa: BigInt::zero(),
            exponent: 0,
        }
    }

    /// Exact conversion. Panics on NaN or infinity.
    pub fn from_f64(value: f64) -> Self {
        assert!(value.is_finite(), "cannot represent {value} exactly");
        if value == 0.0 {
            return Self::zero();
        }
        let bits = value.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (fraction, -1074)
        } else {
            (fraction | (1u64 << 52), biased - 1075)
        };
        let mut mantissa = BigInt::from(mant);
        if negative {
            mantissa = -mantissa;
        }
        Self {
            mantissa,
            exponent: exp,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    fn align(&self, other: &Dyadic) -> (BigInt, BigInt, i64) {
        let exp = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - exp) as usize;
        let b = &other.mantissa << (other.exponent - exp) as usize;
        (a, b, exp)
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let (a, b, exponent) = self.align(other);
        Dyadic {
            mantissa: a + b,
            exponent,
        }
    }

    pub fn sub(&self, other: &Dyadic) -> Dyadic {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic {
            mantissa: -&self.mantissa,
            exponent: self.exponent,
        }
    }

    pub fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic {
            mantissa: &self.mantissa * &other.mantissa,
            exponent: self.exponent + other.exponent,
        }
    }

    pub fn mul_int(&self, factor: u64) -> Dyadic {
        Dyadic {
            mantissa: &self.mantissa * factor,
            exponent: self.exponent,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.div_round(1)
    }

    /// `self / divisor`, correctly rounded to the nearest `f64` (ties to even).
    pub fn div_round(&self, divisor: u64) -> f64 {
        assert!(divisor > 0, "division by zero");
        if self.is_zero() {
            return 0.0;
        }
        let negative = self.mantissa.sign() == Sign::Minus;
        let num: BigUint = self.mantissa.abs().to_biguint().expect("non-negative");
        let den = BigUint::from(divisor);

        // Choose a shift so the integer quotient carries at least 55 bits.
        let num_bits = num.bits() as i64;
        let den_bits = den.bits() as i64;
        let shift = (56 - (num_bits - den_bits)).max(0);
        let scaled = &num << shift as usize;
        let quotient = &scaled / &den;
        let sticky_rem = !(&scaled % &den).is_zero();
        // value = quotient * 2^(exponent - shift), with `sticky_rem` marking a
        // nonzero tail below the last quotient bit.
        let q_bits = quotient.bits() as i64;
        let base_exp = self.exponent - shift;
        // Unbiased exponent of the leading bit.
        let lead = base_exp + q_bits - 1;
        let sign = if negative { -1.0 } else { 1.0 };
        if lead > 1023 {
            return sign * f64::INFINITY;
        }
        // Number of significand bits we may keep (53 for normals, fewer below).
        let keep = if lead >= -1022 { 53 } else { 53 - (-1022 - lead) };
        if keep <= 0 {
            // Below half the smallest subnormal, or exactly rounding to it.
            let min_sub_exp = -1074i64;
            // value < 2^(lead+1) <= 2^(min_sub_exp - 1 + 1)
            let half = min_sub_exp - 1;
            if lead < half {
                return sign * 0.0;
            }
            // lead == half: value in [2^-1075, 2^-1074)
            let exact_half = quotient.count_ones() == 1 && !sticky_rem;
            return if exact_half {
                sign * 0.0
            } else {
                sign * f64::from_bits(1)
            };
        }
        let drop = q_bits - keep;
        debug_assert!(drop >= 2);
        let drop_u = drop as usize;
        let mut kept = &quotient >> drop_u;
        let half_bit = (&quotient >> (drop_u - 1)) & BigUint::one();
        let below_half = &quotient & ((BigUint::one() << (drop_u - 1)) - BigUint::one());
        let round_up = !half_bit.is_zero()
            && (!below_half.is_zero() || sticky_rem || (&kept & BigUint::one()) == BigUint::one());
        if round_up {
            kept += BigUint::one();
        }
        let mut kept = kept.to_u64().expect("fits in 54 bits");
        let mut exp = base_exp + drop;
        if kept == 1u64 << keep {
            kept >>= 1;
            exp += 1;
        }
        compose(kept, exp, sign)
    }
}

/// `sign * mantissa * 2^exp` where the product is known to be representable.
fn compose(mantissa: u64, exp: i64, sign: f64) -> f64 {
    if mantissa == 0 {
        return sign * 0.0;
    }
    let bits = 64 - mantissa.leading_zeros() as i64;
    let lead = exp + bits - 1;
    if lead > 1023 {
        return sign * f64::INFINITY;
    }
    let sign_bit = if sign < 0.0 { 1u64 << 63 } else { 0 };
    if lead >= -1022 {
        // normal: shift mantissa so its leading bit is bit 52
        let m = if bits <= 53 {
            mantissa << (53 - bits)
        } else {
            mantissa >> (bits - 53)
        };
        let biased = (lead + 1023) as u64;
        f64::from_bits(sign_bit | (biased << 52) | (m & ((1u64 << 52) - 1)))
    } else {
        // subnormal: value = frac * 2^-1074
        let shift = exp + 1074;
        let frac = if shift >= 0 {
            mantissa << shift
        } else {
            mantissa >> (-shift)
        };
        f64::from_bits(sign_bit | frac)
    }
}
