//! PolarNorm unit: pairwise CORDIC vectoring hypot merged in a balanced
//! binary tree, computing `sqrt(sum x_i^2 + eps*d)` from shifts and adds.
//!
//! A configured iteration count `n` runs micro-rotations with shift indices
//! `0..=n`, which pins the residual angle below `atan(2^-n)` and hence the
//! gain-corrected relative error below `2^(-2n-1)` per merge. The fixed-point
//! path carries 32 fractional bits and block-normalizes its inputs, so
//! doubling every input is exactly a one-bit exponent change.

use crate::fixedq::{rescale_round, QValue};

/// Iteration count plus the precomputed inverse gain on a 32-bit grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CordicConfig {
    n_iters: u32,
    gain_inv_raw: i64,
    gain_inv: f64,
}

const GAIN_SCALE_EXP: i32 = -32;
/// Fixed-point CORDIC state grid (fractional bits).
const WORK_MSB: u32 = 29;

impl CordicConfig {
    pub fn new(n_iters: u32) -> Self {
        assert!(n_iters >= 1 && n_iters <= 24, "iteration count out of supported range");
        let mut gain = 1.0f64;
        for i in 0..=n_iters {
            gain *= (1.0 + (-2.0 * i as f64).exp2()).sqrt();
        }
        let gain_inv = 1.0 / gain;
        let gain_inv_raw = (gain_inv * (-(GAIN_SCALE_EXP as f64)).exp2()).round() as i64;
        Self { n_iters, gain_inv_raw, gain_inv }
    }

    pub fn n_iters(&self) -> u32 {
        self.n_iters
    }

    /// Pairwise relative error bound `2^(-2n-1)`.
    pub fn eps_pair(&self) -> f64 {
        (-(2.0 * self.n_iters as f64) - 1.0).exp2()
    }

    pub fn gain_inv(&self) -> f64 {
        self.gain_inv
    }

    pub fn gain_inv_raw(&self) -> i64 {
        self.gain_inv_raw
    }
}

/// Closed-form tree bound `eps_pol = ceil(log2 d) * 2^(-2n-1)`.
pub fn bound_eps_pol(d: usize, n_iters: u32) -> f64 {
    assert!(d >= 1 && n_iters >= 1);
    let levels = usize::BITS - (d - 1).leading_zeros(); // ceil(log2 d), 0 for d=1
    let levels = if d == 1 { 0 } else { levels };
    levels as f64 * (-(2.0 * n_iters as f64) - 1.0).exp2()
}

/// Levels actually merged: the augmented length is `d + 1` when `eps > 0`.
pub fn tree_height(d: usize, eps: f64) -> u32 {
    let total = d + usize::from(eps > 0.0);
    if total <= 1 {
        0
    } else {
        usize::BITS - (total - 1).leading_zeros()
    }
}

// ---------------------------------------------------------------------------
// real-valued reference path

/// Vectoring-mode hypot in real arithmetic with exact gain correction.
pub fn hypot_f64(a: f64, b: f64, cfg: &CordicConfig) -> f64 {
    let (mut x, mut y) = order(a.abs(), b.abs());
    if x == 0.0 {
        return 0.0;
    }
    for i in 0..=cfg.n_iters {
        let p = (-(i as f64)).exp2();
        let (dx, dy) = (y * p, x * p);
        if y >= 0.0 {
            x += dx;
            y -= dy;
        } else {
            x -= dx;
            y += dy;
        }
    }
    x * cfg.gain_inv
}

/// Balanced-tree norm `sqrt(sum x_i^2 + eps*len)` in real arithmetic.
pub fn tree_norm_f64(xs: &[f64], eps: f64, cfg: &CordicConfig) -> f64 {
    assert!(!xs.is_empty());
    assert!(eps >= 0.0);
    let mut level: Vec<f64> = xs.iter().map(|v| v.abs()).collect();
    if eps > 0.0 {
        level.push((eps * xs.len() as f64).sqrt());
    }
    let padded = level.len().next_power_of_two();
    level.resize(padded, 0.0);
    while level.len() > 1 {
        level = level.chunks(2).map(|p| hypot_f64(p[0], p[1], cfg)).collect();
    }
    level[0]
}

/// Relative error of one gain-corrected vectoring pass, measured on a
/// 96-fractional-bit integer trajectory so the check against `2^(-2n-1)`
/// carries no float noise. Rotations preserve `x^2 + y^2 = K^2 r^2`, so the
/// corrected output is `r cos(residual)` and the error is
/// `1 - x/sqrt(x^2+y^2)`, evaluated in its cancellation-free form.
pub fn pairwise_error_exact(a: f64, b: f64, n_iters: u32) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        return 0.0;
    }
    let frac = 96u32;
    let (mut x, mut y) = order(a.abs() / m, b.abs() / m);
    let mut xi = (x * (frac as f64).exp2()).round() as i128;
    let mut yi = (y * (frac as f64).exp2()).round() as i128;
    (x, y) = (xi as f64, yi as f64); // the dyadic pair actually tested
    let _ = (x, y);
    for i in 0..n_iters + 1 {
        let (dx, dy) = (yi >> i, xi >> i);
        if yi >= 0 {
            xi += dx;
            yi -= dy;
        } else {
            xi -= dx;
            yi += dy;
        }
    }
    let xf = xi as f64;
    let yf = yi as f64;
    let h = (xf * xf + yf * yf).sqrt();
    (yf * yf) / (h * (h + xf))
}

// ---------------------------------------------------------------------------
// fixed-point path

/// Fixed-point hypot. Inputs are aligned, block-normalized into the working
/// grid, merged, and the gain is applied as a 32-bit shift-add multiply.
pub fn hypot_q(a: QValue, b: QValue, cfg: &CordicConfig) -> QValue {
    let common = a.scale_exp.min(b.scale_exp);
    let ar = widen(a, common);
    let br = widen(b, common);
    let norm = block_shift(ar.abs().max(br.abs()));
    let work_exp = common - norm;
    let raw = hypot_raw(shift_signed(ar.abs(), norm), shift_signed(br.abs(), norm), cfg);
    QValue::new(raw, work_exp)
}

/// Fixed-point balanced-tree norm of a vector, with the `sqrt(eps*d)`
/// augmentation quantized onto the working grid at call time.
pub fn tree_norm_q(xs: &[QValue], eps: f64, cfg: &CordicConfig) -> QValue {
    assert!(!xs.is_empty());
    assert!(eps >= 0.0);
    let common = xs.iter().map(|v| v.scale_exp).min().unwrap();
    let raws: Vec<i64> = xs.iter().map(|v| widen(*v, common).abs()).collect();
    let max_raw = raws.iter().copied().max().unwrap();
    let aug_in_common =
        if eps > 0.0 { (eps * xs.len() as f64).sqrt() * (-(common as f64)).exp2() } else { 0.0 };
    if max_raw == 0 && eps == 0.0 {
        return QValue::zero(common);
    }

    // One block exponent for the whole call keeps power-of-two input
    // scalings exactly covariant. When the vector is all zero the augment
    // is the only magnitude and sets the block exponent instead.
    let norm = if max_raw > 0 {
        block_shift(max_raw)
    } else {
        WORK_MSB as i32 - aug_in_common.log2().floor() as i32
    };
    let work_exp = common - norm;
    let mut level: Vec<i64> = raws.iter().map(|&r| shift_signed(r, norm)).collect();
    if eps > 0.0 {
        let aug = (eps * xs.len() as f64).sqrt() * (-(work_exp as f64)).exp2();
        level.push(aug.round() as i64);
    }
    let padded = level.len().next_power_of_two();
    level.resize(padded, 0);
    while level.len() > 1 {
        level = level.chunks(2).map(|p| hypot_raw(p[0], p[1], cfg)).collect();
    }
    QValue::new(level[0], work_exp)
}

fn hypot_raw(a: i64, b: i64, cfg: &CordicConfig) -> i64 {
    debug_assert!(a >= 0 && b >= 0);
    let (mut x, mut y) = order(a, b);
    if x == 0 {
        return 0;
    }
    for i in 0..=cfg.n_iters {
        let (dx, dy) = (y >> i, x >> i);
        if y >= 0 {
            x += dx;
            y -= dy;
        } else {
            x -= dx;
            y += dy;
        }
    }
    rescale_round(x as i128 * cfg.gain_inv_raw as i128, GAIN_SCALE_EXP, 0)
}

fn order<T: PartialOrd>(a: T, b: T) -> (T, T) {
    if a >= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn widen(v: QValue, to_exp: i32) -> i64 {
    v.raw << (v.scale_exp - to_exp) as u32
}

/// Left-shift count placing `max_raw` at the working MSB. Negative when the
/// input is already wider than the working grid.
fn block_shift(max_raw: i64) -> i32 {
    if max_raw == 0 {
        return 0;
    }
    WORK_MSB as i32 - (63 - max_raw.leading_zeros() as i32)
}

fn shift_signed(v: i64, k: i32) -> i64 {
    if k >= 0 {
        v << k as u32
    } else {
        v >> (-k) as u32
    }
}
