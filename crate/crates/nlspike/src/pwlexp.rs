//! PWL-Exp unit: K-segment piecewise-linear `e^x` on `[-H, H]` with
//! quantized slope/intercept lookup tables.
//!
//! Slopes are stored as 8-bit mantissas and intercepts as 16-bit mantissas;
//! each entry carries an implicit power-of-two shift derived from `(H, K, i)`
//! alone, so the serialized table is exactly `K` bytes of slopes and `2K`
//! bytes of intercepts plus a fixed header. Evaluation is index-by-shift,
//! one mantissa multiply (a short shift-add chain in hardware) and one add.

use thiserror::Error;

use crate::fixedq::QValue;

#[derive(Debug, Error, PartialEq)]
pub enum PwlError {
    #[error("segment count must be a power of two >= 2, got {0}")]
    BadSegmentCount(u32),
    #[error("half-interval must be positive and finite, got {0}")]
    BadHalfInterval(f64),
    #[error("malformed table payload: {0}")]
    Malformed(&'static str),
}

/// Policy for inputs below `-H`. The softmax path zeroes them; `Clamp` is
/// the safe total extension used everywhere a hard zero is wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BelowRangePolicy {
    Zero,
    Clamp,
}

const SLOPE_MANT_BITS: u32 = 7;
const INTERCEPT_MANT_BITS: u32 = 14;
const SLOPE_SCALE_EXP: i32 = -(SLOPE_MANT_BITS as i32);
const INTERCEPT_SCALE_EXP: i32 = -(INTERCEPT_MANT_BITS as i32);
const HEADER_LEN: usize = 8 + 4 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PwlExpTable {
    h: f64,
    k: u32,
    gamma: f64,
    below: BelowRangePolicy,
    slope_raw: Vec<u8>,
    intercept_raw: Vec<u16>,
    slope_shift: Vec<i32>,
    intercept_shift: Vec<i32>,
}

impl PwlExpTable {
    /// Grid all evaluations land on: `raw * 2^-20`.
    pub const OUTPUT_SCALE_EXP: i32 = -20;

    pub fn build(h: f64, k: u32, below: BelowRangePolicy) -> Result<Self, PwlError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(PwlError::BadHalfInterval(h));
        }
        if k < 2 || !k.is_power_of_two() {
            return Err(PwlError::BadSegmentCount(k));
        }
        let gamma = 2.0 * h / k as f64;
        let mut slope_raw = Vec::with_capacity(k as usize);
        let mut intercept_raw = Vec::with_capacity(k as usize);
        let mut slope_shift = Vec::with_capacity(k as usize);
        let mut intercept_shift = Vec::with_capacity(k as usize);
        for i in 0..k {
            let (a, b) = exact_coefficients(h, k, i);
            let (sa, ra) = encode_mantissa(a, SLOPE_MANT_BITS);
            slope_shift.push(sa);
            slope_raw.push(ra as u8);
            let (sb, rb) = encode_mantissa(b, INTERCEPT_MANT_BITS);
            intercept_shift.push(sb);
            intercept_raw.push(rb as u16);
        }
        Ok(Self { h, k, gamma, below, slope_raw, intercept_raw, slope_shift, intercept_shift })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn below_policy(&self) -> BelowRangePolicy {
        self.below
    }

    /// Breakpoint `x_i = -H + gamma*i`, valid for `i` in `0..=K`.
    pub fn knot(&self, i: u32) -> f64 {
        -self.h + self.gamma * i as f64
    }

    /// Stored (quantized) slope of segment `i`.
    pub fn slope_value(&self, i: usize) -> f64 {
        self.slope_raw[i] as f64 * ((SLOPE_SCALE_EXP + self.slope_shift[i]) as f64).exp2()
    }

    /// Stored (quantized) intercept of segment `i`.
    pub fn intercept_value(&self, i: usize) -> f64 {
        self.intercept_raw[i] as f64 * ((INTERCEPT_SCALE_EXP + self.intercept_shift[i]) as f64).exp2()
    }

    /// Integer-path evaluation. The segment index is an exact shift-and-
    /// divide on the input raw, the multiply is the 8-bit mantissa times the
    /// in-segment offset, and the result lands on the fixed output grid.
    pub fn eval(&self, x: QValue) -> QValue {
        let xf = x.to_f64(); // exact: raws are small dyadics
        if xf < -self.h {
            match self.below {
                BelowRangePolicy::Zero => return QValue::zero(Self::OUTPUT_SCALE_EXP),
                BelowRangePolicy::Clamp => {}
            }
        }
        let (h_mant, h_exp) = dyadic_parts(self.h);
        let common = x.scale_exp.min(h_exp);
        let hr = (h_mant as i128) << (h_exp - common) as u32;
        let xr = ((x.raw as i128) << (x.scale_exp - common) as u32).clamp(-hr, hr);

        let log2_k = self.k.trailing_zeros();
        let idx = (((xr + hr) * self.k as i128) / (2 * hr)).min(self.k as i128 - 1) as usize;
        // x - x_i on scale common - log2(K); exact because x_i = -H + i*2H/K.
        let dx = ((xr + hr) << log2_k) - 2 * hr * idx as i128;
        debug_assert!(dx >= 0);

        let dx_exp = common - log2_k as i32;
        let prod = self.slope_raw[idx] as i128 * dx;
        let prod_exp = SLOPE_SCALE_EXP + self.slope_shift[idx] + dx_exp;
        let base = self.intercept_raw[idx] as i128;
        let base_exp = INTERCEPT_SCALE_EXP + self.intercept_shift[idx];
        let raw = change_scale(prod, prod_exp, Self::OUTPUT_SCALE_EXP)
            + change_scale(base, base_exp, Self::OUTPUT_SCALE_EXP);
        QValue::new(raw, Self::OUTPUT_SCALE_EXP)
    }

    /// The interpolant with real-valued coefficients; the reference the
    /// quantized path is allowed to drift from by [`Self::coeff_slack_rel`].
    pub fn eval_unquantized(&self, x: f64) -> f64 {
        if x < -self.h {
            match self.below {
                BelowRangePolicy::Zero => return 0.0,
                BelowRangePolicy::Clamp => {}
            }
        }
        let xc = x.clamp(-self.h, self.h);
        let idx = (((xc + self.h) / self.gamma).floor() as i64).clamp(0, self.k as i64 - 1) as u32;
        let (a, b) = exact_coefficients(self.h, self.k, idx);
        a * (xc - self.knot(idx)) + b
    }

    /// Analytic relative slack of the quantized path against the real-valued
    /// interpolant: one slope half-step times the segment width, one
    /// intercept half-step, and the two output-grid roundings, taken
    /// relative to the segment's minimum of `e^x`.
    pub fn coeff_slack_rel(&self) -> f64 {
        let out_round = 2.0 * (Self::OUTPUT_SCALE_EXP as f64 - 1.0).exp2();
        (0..self.k as usize)
            .map(|i| {
                let half_a = ((SLOPE_SCALE_EXP + self.slope_shift[i] - 1) as f64).exp2();
                let half_b = ((INTERCEPT_SCALE_EXP + self.intercept_shift[i] - 1) as f64).exp2();
                (half_a * self.gamma + half_b + out_round) / self.knot(i as u32).exp()
            })
            .fold(0.0, f64::max)
    }

    /// Worst jump magnitude at interior knots, from coefficient quantization.
    pub fn knot_jump_bound(&self) -> f64 {
        (0..self.k as usize - 1)
            .map(|i| {
                let half_a = ((SLOPE_SCALE_EXP + self.slope_shift[i] - 1) as f64).exp2();
                let half_b0 = ((INTERCEPT_SCALE_EXP + self.intercept_shift[i] - 1) as f64).exp2();
                let half_b1 = ((INTERCEPT_SCALE_EXP + self.intercept_shift[i + 1] - 1) as f64).exp2();
                half_a * self.gamma + half_b0 + half_b1
            })
            .fold(0.0, f64::max)
    }

    /// Little-endian layout: header `{H bits, K, slope scale_exp, intercept
    /// scale_exp}` then `K` slope bytes and `K` 16-bit intercepts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 3 * self.k as usize);
        out.extend_from_slice(&self.h.to_bits().to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&SLOPE_SCALE_EXP.to_le_bytes());
        out.extend_from_slice(&INTERCEPT_SCALE_EXP.to_le_bytes());
        out.extend_from_slice(&self.slope_raw);
        for b in &self.intercept_raw {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], below: BelowRangePolicy) -> Result<Self, PwlError> {
        if bytes.len() < HEADER_LEN {
            return Err(PwlError::Malformed("short header"));
        }
        let h = f64::from_bits(u64::from_le_bytes(bytes[0..8].try_into().unwrap()));
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let sa = i32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let sb = i32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if sa != SLOPE_SCALE_EXP || sb != INTERCEPT_SCALE_EXP {
            return Err(PwlError::Malformed("unsupported coefficient grids"));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(PwlError::BadHalfInterval(h));
        }
        if k < 2 || !k.is_power_of_two() {
            return Err(PwlError::BadSegmentCount(k));
        }
        if bytes.len() != HEADER_LEN + 3 * k as usize {
            return Err(PwlError::Malformed("payload length mismatch"));
        }
        let slope_raw = bytes[HEADER_LEN..HEADER_LEN + k as usize].to_vec();
        let mut intercept_raw = Vec::with_capacity(k as usize);
        let tail = &bytes[HEADER_LEN + k as usize..];
        for c in tail.chunks_exact(2) {
            intercept_raw.push(u16::from_le_bytes([c[0], c[1]]));
        }
        // Per-entry shifts are a pure function of (H, K, i); recompute them.
        let mut slope_shift = Vec::with_capacity(k as usize);
        let mut intercept_shift = Vec::with_capacity(k as usize);
        for i in 0..k {
            let (a, b) = exact_coefficients(h, k, i);
            slope_shift.push(encode_mantissa(a, SLOPE_MANT_BITS).0);
            intercept_shift.push(encode_mantissa(b, INTERCEPT_MANT_BITS).0);
        }
        let gamma = 2.0 * h / k as f64;
        Ok(Self { h, k, gamma, below, slope_raw, intercept_raw, slope_shift, intercept_shift })
    }

    /// Negative-control hook: knocks one intercept off its grid point so
    /// bound verification has a failure to detect.
    #[doc(hidden)]
    pub fn perturb_intercept(&mut self, index: usize, delta: i32) {
        let v = self.intercept_raw[index] as i32 + delta;
        self.intercept_raw[index] = v.clamp(0, u16::MAX as i32) as u16;
    }
}

/// Endpoint-interpolation coefficients of segment `i` in real arithmetic.
fn exact_coefficients(h: f64, k: u32, i: u32) -> (f64, f64) {
    let gamma = 2.0 * h / k as f64;
    let x0 = -h + gamma * i as f64;
    let x1 = -h + gamma * (i + 1) as f64;
    ((x1.exp() - x0.exp()) / gamma, x0.exp())
}

/// Split a positive value into `(shift, mantissa_raw)` with
/// `mantissa_raw = round(value / 2^shift * 2^mant_bits)` in
/// `[2^mant_bits, 2^(mant_bits+1))`.
fn encode_mantissa(value: f64, mant_bits: u32) -> (i32, u32) {
    debug_assert!(value > 0.0);
    let mut shift = value.log2().floor() as i32;
    // Guard the floor against log2 landing a hair under an integer.
    if value / (shift as f64).exp2() >= 2.0 {
        shift += 1;
    } else if value / (shift as f64).exp2() < 1.0 {
        shift -= 1;
    }
    let mut raw = (value / (shift as f64).exp2() * (mant_bits as f64).exp2()).round() as u32;
    if raw == 1 << (mant_bits + 1) {
        shift += 1;
        raw = 1 << mant_bits;
    }
    debug_assert!(raw >= 1 << mant_bits && raw < 1 << (mant_bits + 1));
    (shift, raw)
}

/// Positive half-interval as exact dyadic `(mantissa, exponent)`.
fn dyadic_parts(h: f64) -> (i128, i32) {
    let mut m = h;
    let mut e = 0i32;
    while m.fract() != 0.0 {
        m *= 2.0;
        e -= 1;
        assert!(e > -64, "half-interval has no short dyadic form");
    }
    (m as i128, e)
}

/// Exact left shift or round-half-away right shift between binary grids.
fn change_scale(raw: i128, from_exp: i32, to_exp: i32) -> i64 {
    if from_exp >= to_exp {
        (raw << (from_exp - to_exp) as u32) as i64
    } else {
        crate::fixedq::rescale_round(raw, from_exp, to_exp)
    }
}

/// Closed-form relative error bound of the unquantized interpolant:
/// `(2H/K)^2 / 8 * e^(2H/K)`.
pub fn bound_eps_exp(h: f64, k: u32) -> f64 {
    let step = 2.0 * h / k as f64;
    step * step / 8.0 * step.exp()
}
