//! Fixed-point arithmetic for membrane potentials, synaptic currents and weights.
//!
//! State values use an 18-bit signed format with 1 sign bit, 7 integer bits and
//! 10 fractional bits ([`Q710`]). Weights are plain signed bytes ([`Weight8`])
//! that are shifted into the Q7.10 grid before they touch a neuron.
//!
//! All arithmetic saturates at the format bounds; nothing ever wraps.

use std::fmt;

/// Signed Q1.7.10 value stored in the low 18 bits of an `i32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct Q710(i32);

impl Q710 {
    /// Number of fractional bits.
    pub const FRAC_BITS: u32 = 10;
    /// Total width including sign.
    pub const BITS: u32 = 18;
    pub const RAW_MAX: i32 = (1 << (Self::BITS - 1)) - 1;
    pub const RAW_MIN: i32 = -(1 << (Self::BITS - 1));
    pub const MAX: Q710 = Q710(Self::RAW_MAX);
    pub const MIN: Q710 = Q710(Self::RAW_MIN);
    pub const ZERO: Q710 = Q710(0);
    pub const ONE: Q710 = Q710(1 << Self::FRAC_BITS);

    /// Builds a value from a raw 18-bit integer, saturating anything wider.
    #[inline]
    pub const fn saturating_from_raw(raw: i64) -> Self {
        if raw > Self::RAW_MAX as i64 {
            Self::MAX
        } else if raw < Self::RAW_MIN as i64 {
            Self::MIN
        } else {
            Q710(raw as i32)
        }
    }

    /// Builds a value from a raw integer, or `None` if it does not fit in 18 bits.
    #[inline]
    pub const fn from_raw(raw: i32) -> Option<Self> {
        if raw > Self::RAW_MAX || raw < Self::RAW_MIN {
            None
        } else {
            Some(Q710(raw))
        }
    }

    #[inline]
    pub const fn raw(self) -> i32 {
        self.0
    }

    /// Nearest representable value to `x` (ties away from zero), saturated.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            return Self::ZERO;
        }
        let scaled = (x * (1u32 << Self::FRAC_BITS) as f64).round();
        if scaled >= Self::RAW_MAX as f64 {
            Self::MAX
        } else if scaled <= Self::RAW_MIN as f64 {
            Self::MIN
        } else {
            Q710(scaled as i32)
        }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / (1u32 << Self::FRAC_BITS) as f64
    }

    #[inline]
    pub const fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Saturating negation (`-MIN` saturates to `MAX`).
    #[inline]
    pub const fn saturating_neg(self) -> Self {
        Self::saturating_from_raw(-(self.0 as i64))
    }

    #[inline]
    pub const fn abs_raw(self) -> i32 {
        self.0.abs()
    }
}

impl fmt::Display for Q710 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Saturating addition.
#[inline]
pub const fn q_add(a: Q710, b: Q710) -> Q710 {
    Q710::saturating_from_raw(a.0 as i64 + b.0 as i64)
}

/// Saturating subtraction.
#[inline]
pub const fn q_sub(a: Q710, b: Q710) -> Q710 {
    Q710::saturating_from_raw(a.0 as i64 - b.0 as i64)
}

/// Signed 8-bit synaptic weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct Weight8(pub i8);

impl Weight8 {
    pub const ZERO: Weight8 = Weight8(0);
    pub const MAX: Weight8 = Weight8(i8::MAX);
    pub const MIN: Weight8 = Weight8(i8::MIN);

    #[inline]
    pub const fn raw(self) -> i8 {
        self.0
    }

    /// Moves the weight by a signed step, clamping to `[-128, 127]`.
    #[inline]
    pub fn saturating_step(self, delta: i32) -> Self {
        Weight8((self.0 as i32 + delta).clamp(i8::MIN as i32, i8::MAX as i32) as i8)
    }
}

impl From<i8> for Weight8 {
    fn from(v: i8) -> Self {
        Weight8(v)
    }
}

/// Largest shift accepted by [`weight_to_current`]; at this shift one weight
/// unit equals 1.0 in membrane units.
pub const MAX_WEIGHT_SHIFT: u8 = Q710::FRAC_BITS as u8;

/// Default weight alignment: weight `+1` adds exactly `+1.0`.
pub const DEFAULT_WEIGHT_SHIFT: u8 = MAX_WEIGHT_SHIFT;

/// Widens a weight into the Q7.10 grid: `raw = w << shift`, saturated.
///
/// `shift` is clamped to `0..=10`.
#[inline]
pub const fn weight_to_current(w: Weight8, shift: u8) -> Q710 {
    let s = if shift > MAX_WEIGHT_SHIFT { MAX_WEIGHT_SHIFT } else { shift };
    Q710::saturating_from_raw((w.0 as i64) << s)
}

/// Raw (unsaturated) contribution of a weight, for accumulating many inputs
/// in a wide register before the single saturation at the end.
#[inline]
pub const fn weight_to_raw_current(w: Weight8, shift: u8) -> i64 {
    let s = if shift > MAX_WEIGHT_SHIFT { MAX_WEIGHT_SHIFT } else { shift };
    (w.0 as i64) << s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(raw: i32) -> Q710 {
        Q710::from_raw(raw).unwrap()
    }

    #[test]
    fn add_examples() {
        let x = q(777);
        assert_eq!(q_add(Q710::ZERO, x), x);
        assert_eq!(q_add(q(131071), q(1024)), q(131071));
        assert_eq!(q_add(q(1536), q(-512)), q(1024));
    }

    #[test]
    fn sub_examples() {
        let x = q(-4321);
        assert_eq!(q_sub(x, Q710::ZERO), x);
        assert_eq!(q_sub(q(-131072), q(1)), q(-131072));
        assert_eq!(q_sub(q(2048), q(512)), q(1536));
    }

    #[test]
    fn weight_alignment_examples() {
        for s in 0..=10 {
            assert_eq!(weight_to_current(Weight8(0), s), Q710::ZERO);
        }
        assert_eq!(weight_to_current(Weight8(1), 10).raw(), 1024);
        assert_eq!(weight_to_current(Weight8(-128), 10).raw(), -131072);
        assert_eq!(weight_to_current(Weight8(127), 10).raw(), 127 * 1024);
    }

    #[test]
    fn raw_bounds() {
        assert_eq!(Q710::RAW_MAX, 131071);
        assert_eq!(Q710::RAW_MIN, -131072);
        assert!(Q710::from_raw(131072).is_none());
        assert!(Q710::from_raw(-131073).is_none());
        assert_eq!(Q710::MIN.saturating_neg(), Q710::MAX);
    }

    #[test]
    fn real_conversion() {
        assert_eq!(Q710::from_f64(1.5).raw(), 1536);
        assert_eq!(Q710::from_f64(1.8).raw(), 1843);
        assert_eq!(Q710::from_f64(1000.0), Q710::MAX);
        assert_eq!(Q710::from_f64(-1000.0), Q710::MIN);
        assert_eq!(q(-512).to_f64(), -0.5);
    }

    fn any_q() -> impl Strategy<Value = Q710> {
        (Q710::RAW_MIN..=Q710::RAW_MAX).prop_map(q)
    }

    proptest! {
        #[test]
        fn add_commutes_and_has_identity(a in any_q(), b in any_q()) {
            prop_assert_eq!(q_add(a, b), q_add(b, a));
            prop_assert_eq!(q_add(a, Q710::ZERO), a);
        }

        #[test]
        fn sub_is_add_of_negation(a in any_q(), b in any_q()) {
            prop_assume!(b != Q710::MIN);
            prop_assert_eq!(q_sub(a, b), q_add(a, b.saturating_neg()));
        }

        #[test]
        fn add_saturates_monotonically(a in any_q(), b in any_q()) {
            let exact = a.raw() as i64 + b.raw() as i64;
            let r = q_add(a, b).raw() as i64;
            if exact >= Q710::RAW_MAX as i64 {
                prop_assert_eq!(r, Q710::RAW_MAX as i64);
            } else if exact <= Q710::RAW_MIN as i64 {
                prop_assert_eq!(r, Q710::RAW_MIN as i64);
            } else {
                prop_assert_eq!(r, exact);
            }
        }

        #[test]
        fn weight_alignment_is_exact(w in any::<i8>(), shift in 0u8..=10) {
            let got = weight_to_current(Weight8(w), shift).raw() as i64;
            let exact = w as i64 * (1i64 << shift);
            prop_assert_eq!(got, exact.clamp(Q710::RAW_MIN as i64, Q710::RAW_MAX as i64));
        }
    }
}
