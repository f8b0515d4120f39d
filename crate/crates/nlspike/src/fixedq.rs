//! Fixed-point scalars on power-of-two grids.
//!
//! Every quantity in this crate travels as a [`QValue`]: a signed 64-bit raw
//! integer paired with a binary scale exponent, so the represented value is
//! `raw * 2^scale_exp`. Scale changes are exact shifts; there is no hidden
//! floating point on the arithmetic path.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FixedqError {
    #[error("scale mismatch: operands carry exponents {0} and {1}")]
    ScaleMismatch(i32, i32),
}

/// Fixed-point scalar: `value = raw * 2^scale_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QValue {
    pub raw: i64,
    pub scale_exp: i32,
}

impl QValue {
    pub const fn new(raw: i64, scale_exp: i32) -> Self {
        Self { raw, scale_exp }
    }

    pub const fn zero(scale_exp: i32) -> Self {
        Self { raw: 0, scale_exp }
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 * (self.scale_exp as f64).exp2()
    }

    pub const fn is_zero(self) -> bool {
        self.raw == 0
    }

    pub const fn abs(self) -> Self {
        Self { raw: self.raw.abs(), scale_exp: self.scale_exp }
    }

    pub const fn neg(self) -> Self {
        Self { raw: -self.raw, scale_exp: self.scale_exp }
    }

    /// Re-express on a finer grid (`new_exp <= scale_exp`). Exact; the raw is
    /// left-shifted by the exponent difference.
    pub fn widen_to(self, new_exp: i32) -> Self {
        assert!(new_exp <= self.scale_exp, "widen_to coarser grid loses bits");
        let k = (self.scale_exp - new_exp) as u32;
        debug_assert!(self.raw.unsigned_abs().leading_zeros() > k);
        Self { raw: self.raw << k, scale_exp: new_exp }
    }
}

/// Uniform quantization grid: `bits`-wide raws scaled by `2^scale_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QGrid {
    pub bits: u32,
    pub scale_exp: i32,
    pub signed: bool,
}

impl QGrid {
    pub const fn signed(bits: u32, scale_exp: i32) -> Self {
        Self { bits, scale_exp, signed: true }
    }

    pub const fn unsigned(bits: u32, scale_exp: i32) -> Self {
        Self { bits, scale_exp, signed: false }
    }

    pub const fn raw_min(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.bits - 1))
        } else {
            0
        }
    }

    pub const fn raw_max(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bits - 1)) - 1
        } else {
            (1i64 << self.bits) - 1
        }
    }

    pub fn step(&self) -> f64 {
        (self.scale_exp as f64).exp2()
    }

    pub fn min_value(&self) -> f64 {
        self.raw_min() as f64 * self.step()
    }

    pub fn max_value(&self) -> f64 {
        self.raw_max() as f64 * self.step()
    }
}

/// Quantization outcome; `saturated` is a flagged result, not a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub value: QValue,
    pub saturated: bool,
}

/// Nearest representable value on `g`, rounding half away from zero.
/// Out-of-range inputs clamp to the grid extremes and set the flag.
pub fn quantize(v: f64, g: QGrid) -> Quantized {
    assert!(v.is_finite(), "quantize requires a finite input");
    let ideal = (v * (-g.scale_exp as f64).exp2()).round();
    let (raw, saturated) = if ideal > g.raw_max() as f64 {
        (g.raw_max(), true)
    } else if ideal < g.raw_min() as f64 {
        (g.raw_min(), true)
    } else {
        (ideal as i64, false)
    };
    Quantized { value: QValue::new(raw, g.scale_exp), saturated }
}

pub fn dequantize(q: QValue) -> f64 {
    q.to_f64()
}

/// Floor division by `2^k` via arithmetic shift; negatives round toward
/// negative infinity, matching `floor(raw / 2^k)`.
pub fn shift_right(q: QValue, k: u32) -> QValue {
    QValue { raw: q.raw >> k.min(63), scale_exp: q.scale_exp }
}

/// Saturating add at the 64-bit working width. Operands must share a grid.
pub fn sat_add(a: QValue, b: QValue) -> Result<Quantized, FixedqError> {
    if a.scale_exp != b.scale_exp {
        return Err(FixedqError::ScaleMismatch(a.scale_exp, b.scale_exp));
    }
    match a.raw.checked_add(b.raw) {
        Some(raw) => Ok(Quantized { value: QValue::new(raw, a.scale_exp), saturated: false }),
        None => {
            let raw = if a.raw > 0 { i64::MAX } else { i64::MIN };
            Ok(Quantized { value: QValue::new(raw, a.scale_exp), saturated: true })
        }
    }
}

/// Round-half-away-from-zero rescale of a wide intermediate onto a coarser
/// grid. `from_exp <= to_exp`; used when folding products back to a working
/// grid.
pub(crate) fn rescale_round(raw: i128, from_exp: i32, to_exp: i32) -> i64 {
    debug_assert!(from_exp <= to_exp);
    let k = (to_exp - from_exp) as u32;
    if k == 0 {
        return raw as i64;
    }
    let half = 1i128 << (k - 1);
    let adj = if raw >= 0 { raw + half } else { raw - half };
    // i128 arithmetic shift floors; adjust negative halves toward zero first.
    let q = if adj >= 0 { adj >> k } else { -((-adj) >> k) };
    q as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn quantize_zero_on_any_grid() {
        for g in [QGrid::signed(8, -6), QGrid::unsigned(16, -3), QGrid::signed(16, 2)] {
            let q = quantize(0.0, g);
            assert_eq!(q.value.raw, 0);
            assert!(!q.saturated);
        }
    }

    #[test]
    fn quantize_one_on_8bit_grid() {
        // Exhaustive check that raw 64 is the nearest grid point to 1.0.
        let g = QGrid::signed(8, -6);
        let q = quantize(1.0, g);
        assert_eq!(q.value.raw, 64);
        let mut best = (f64::INFINITY, 0i64);
        for raw in g.raw_min()..=g.raw_max() {
            let err = (raw as f64 * g.step() - 1.0).abs();
            if err < best.0 {
                best = (err, raw);
            }
        }
        assert_eq!(best.1, 64);
    }

    #[test]
    fn quantize_saturates_and_flags() {
        let g = QGrid::signed(8, -6);
        let q = quantize(1000.0, g);
        assert_eq!(q.value.raw, 127);
        assert!(q.saturated);
        let q = quantize(-1000.0, g);
        assert_eq!(q.value.raw, -128);
        assert!(q.saturated);
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        let g = QGrid::signed(8, 0);
        assert_eq!(quantize(2.5, g).value.raw, 3);
        assert_eq!(quantize(-2.5, g).value.raw, -3);
    }

    #[test]
    fn grid_range_is_exact() {
        let g = QGrid::signed(8, -6);
        assert_eq!(g.raw_min(), -128);
        assert_eq!(g.raw_max(), 127);
        let u = QGrid::unsigned(8, 0);
        assert_eq!(u.raw_min(), 0);
        assert_eq!(u.raw_max(), 255);
    }

    #[test]
    fn shift_right_examples() {
        assert_eq!(shift_right(QValue::new(4096, 0), 12).raw, 1);
        assert_eq!(shift_right(QValue::new(4097, 0), 12).raw, 1);
        // floor(-1/2) = -1 under arithmetic-shift semantics
        assert_eq!(shift_right(QValue::new(-1, 0), 1).raw, -1);
    }

    #[test]
    fn shift_right_matches_floor_division() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let raw: i64 = rng.random_range(-(1i64 << 40)..(1i64 << 40));
            let k: u32 = rng.random_range(0..45);
            let got = shift_right(QValue::new(raw, 0), k).raw;
            let want = (raw as f64 / (k as f64).exp2()).floor() as i64;
            assert_eq!(got, want, "raw={raw} k={k}");
        }
    }

    #[test]
    fn sat_add_examples() {
        let a = QValue::new(5, -3);
        let b = QValue::new(7, -3);
        assert_eq!(sat_add(a, b).unwrap().value.raw, 12);
        let z = QValue::zero(-3);
        assert_eq!(sat_add(z, b).unwrap().value, b);
        let m = QValue::new(i64::MAX, -3);
        let one = QValue::new(1, -3);
        let r = sat_add(m, one).unwrap();
        assert_eq!(r.value.raw, i64::MAX);
        assert!(r.saturated);
    }

    #[test]
    fn sat_add_rejects_scale_mismatch() {
        let a = QValue::new(1, 0);
        let b = QValue::new(1, -1);
        assert_eq!(sat_add(a, b), Err(FixedqError::ScaleMismatch(0, -1)));
    }

    #[test]
    fn round_trip_error_within_half_step() {
        // 10^6 uniform reals per grid.
        let grids = [QGrid::signed(8, -4), QGrid::signed(16, -10), QGrid::unsigned(8, -5)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for g in grids {
            let (lo, hi) = (g.min_value(), g.max_value());
            let half = g.step() / 2.0;
            for _ in 0..1_000_000 {
                let v = rng.random_range(lo..hi);
                let q = quantize(v, g);
                assert!(!q.saturated);
                assert!((dequantize(q.value) - v).abs() <= half + 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn shift_right_composes(raw in -(1i64 << 60)..(1i64 << 60), k in 0u32..=30) {
            let direct = shift_right(QValue::new(raw, 0), k);
            let mut step = QValue::new(raw, 0);
            for _ in 0..k {
                step = shift_right(step, 1);
            }
            prop_assert_eq!(direct, step);
        }

        #[test]
        fn quantize_is_monotone(v1 in -200.0f64..200.0, v2 in -200.0f64..200.0) {
            let g = QGrid::signed(8, -4);
            let (a, b) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(quantize(a, g).value.raw <= quantize(b, g).value.raw);
        }

        #[test]
        fn rescale_round_matches_reference(raw in -(1i128 << 50)..(1i128 << 50), k in 0i32..40) {
            // the f64 reference is exact below 2^53
            let got = rescale_round(raw, -k, 0) as i128;
            let want = (raw as f64 / (k as f64).exp2()).round() as i128;
            prop_assert_eq!(got, want);
        }
    }
}
