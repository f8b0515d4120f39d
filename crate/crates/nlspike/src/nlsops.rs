//! Composed NLSpiking operators: NLS-Softmax, NLS-SiLU, NLS-RMSNorm and the
//! LayerNorm extension, plus the closed-form bound calculators.
//!
//! Every operator is the same skeleton: a numerator path and a strictly
//! positive denominator path, recombined through the division neuron group.
//! Signs never enter the group; callers route magnitudes and reapply the
//! sign at decode. Denominators are widened by a fixed guard shift before
//! calibration so the derived threshold carries enough bits that its floor
//! quantization is negligible against `delta`.

use thiserror::Error;

use crate::divneuron::{self, DivisionError, DivisionGroupConfig};
use crate::fixedq::{QGrid, QValue};
use crate::polarnorm::{self, bound_eps_pol, tree_height, CordicConfig};
use crate::pwlexp::{bound_eps_exp, BelowRangePolicy, PwlError, PwlExpTable};
use crate::spikecode::{spread_currents, SpikeTrain};

#[derive(Debug, Error)]
pub enum NlsError {
    #[error(transparent)]
    Division(#[from] DivisionError),
    #[error(transparent)]
    Table(#[from] PwlError),
    #[error("operator inputs must share one grid")]
    MixedInputGrids,
    #[error("operator input must be non-empty")]
    EmptyInput,
}

/// Extra bits the denominator is widened by before the threshold shift.
const DEN_GUARD_BITS: u32 = 6;

/// One shared kernel configuration: division group geometry, exponential
/// lookup table, CORDIC depth and the clipping half-interval `H`.
#[derive(Debug, Clone)]
pub struct NlsConfig {
    pub div: DivisionGroupConfig,
    pub exp_table: PwlExpTable,
    pub cordic: CordicConfig,
    pub h: f64,
}

impl NlsConfig {
    pub fn new(h: f64, k: u32, t: u32, l: u32, n_cordic: u32) -> Result<Self, NlsError> {
        let exp_table = PwlExpTable::build(h, k, BelowRangePolicy::Zero)?;
        let div = DivisionGroupConfig::new(t, l)?;
        Ok(Self { div, exp_table, cordic: CordicConfig::new(n_cordic), h })
    }

    /// H=5, K=64, (T, L) = (16, 256), 8 CORDIC iterations.
    pub fn recommended() -> Self {
        Self::new(5.0, 64, 16, 256, 8).expect("recommended configuration is valid")
    }

    /// Division quantization step `1/(T*L)`.
    pub fn delta(&self) -> f64 {
        self.div.delta()
    }

    /// PWL-Exp relative error bound for this table.
    pub fn eps_exp(&self) -> f64 {
        bound_eps_exp(self.h, self.exp_table.k())
    }

    /// 8-bit signed input grid whose range covers `[-H, H]`.
    pub fn input_grid(&self) -> QGrid {
        input_grid(self.h)
    }
}

/// Smallest 8-bit signed grid covering `[-range, range]`.
pub fn input_grid(range: f64) -> QGrid {
    assert!(range > 0.0 && range.is_finite());
    let mut s = -24i32;
    while 127.0 * (s as f64).exp2() < range {
        s += 1;
    }
    QGrid::signed(8, s)
}

fn common_scale(xs: &[QValue]) -> Result<i32, NlsError> {
    let first = xs.first().ok_or(NlsError::EmptyInput)?.scale_exp;
    if xs.iter().any(|v| v.scale_exp != first) {
        return Err(NlsError::MixedInputGrids);
    }
    Ok(first)
}

fn guarded_train(total_raw: u64, scale_exp: i32, t_len: u32) -> SpikeTrain {
    let widened = (total_raw as u128) << DEN_GUARD_BITS;
    SpikeTrain::from_currents(
        spread_currents(widened as u64, t_len as usize),
        QValue::new(1, scale_exp - DEN_GUARD_BITS as i32),
    )
}

fn magnitude_train(total_raw: u64, scale_exp: i32, t_len: u32) -> SpikeTrain {
    SpikeTrain::from_currents(spread_currents(total_raw, t_len as usize), QValue::new(1, scale_exp))
}

/// Shift-stabilized spiking softmax. All exponentials accumulate into one
/// shared denominator window; every class reuses the single calibrated
/// threshold for its own division run.
pub fn nls_softmax(z: &[QValue], cfg: &NlsConfig) -> Result<Vec<QValue>, NlsError> {
    let scale = common_scale(z)?;
    let h_raw = (cfg.h * (-(scale as f64)).exp2()).floor() as i64;
    let max_raw = z.iter().map(|v| v.raw).max().unwrap();

    let numerators: Vec<QValue> = z
        .iter()
        .map(|v| cfg.exp_table.eval(QValue::new(v.raw - max_raw + h_raw, scale)))
        .collect();
    let den_total: i64 = numerators.iter().map(|a| a.raw).sum();
    // The max class maps to +H, so exp(H) > 0 always contributes.
    assert!(den_total > 0, "softmax denominator cannot vanish");

    let out_exp = PwlExpTable::OUTPUT_SCALE_EXP;
    let den = guarded_train(den_total as u64, out_exp, cfg.div.t_len());
    let theta = divneuron::calibrate(&den, &cfg.div)?;

    numerators
        .iter()
        .map(|a| {
            let num = magnitude_train(a.raw as u64, out_exp, cfg.div.t_len());
            Ok(divneuron::divide_with_theta(&num, theta, den.theta().scale_exp, &cfg.div)?.value)
        })
        .collect()
}

/// Spiking SiLU with the linear extension outside `[-H, H]`: identity above,
/// zero below. Inside the window the input magnitude is the numerator and
/// `1 + exp(-x)` the denominator; the sign is reapplied at decode.
pub fn nls_silu(x: QValue, cfg: &NlsConfig) -> Result<QValue, NlsError> {
    let xf = x.to_f64();
    if xf > cfg.h {
        return Ok(x);
    }
    if xf < -cfg.h {
        return Ok(QValue::zero(x.scale_exp));
    }
    let out_exp = PwlExpTable::OUTPUT_SCALE_EXP;
    let e = cfg.exp_table.eval(x.neg());
    let den_raw = e.raw + (1i64 << (-out_exp) as u32); // 1 + exp(-x), exact add of one
    let den = guarded_train(den_raw as u64, out_exp, cfg.div.t_len());
    let theta = divneuron::calibrate(&den, &cfg.div)?;
    let num = magnitude_train(x.raw.unsigned_abs(), x.scale_exp, cfg.div.t_len());
    let q = divneuron::divide_with_theta(&num, theta, den.theta().scale_exp, &cfg.div)?;
    Ok(q_signed(q.value, x.raw))
}

fn q_signed(v: QValue, sign_source: i64) -> QValue {
    if sign_source < 0 {
        v.neg()
    } else {
        v
    }
}

/// Spiking RMSNorm: `x_i * sqrt(d)` against the PolarNorm estimate of
/// `sqrt(sum x^2 + eps*d)`, one division run per coordinate against one
/// calibrated threshold.
pub fn nls_rmsnorm(x: &[QValue], eps: f64, cfg: &NlsConfig) -> Result<Vec<QValue>, NlsError> {
    let scale = common_scale(x)?;
    let norm = polarnorm::tree_norm_q(x, eps, &cfg.cordic);
    let den = guarded_train(norm.raw.max(0) as u64, norm.scale_exp, cfg.div.t_len());
    let theta = divneuron::calibrate(&den, &cfg.div)?;

    let sqrt_d = sqrt_multiplier(x.len());
    x.iter()
        .map(|v| {
            let total = v.raw.unsigned_abs() * sqrt_d.raw as u64;
            let num = magnitude_train(total, scale + sqrt_d.scale_exp, cfg.div.t_len());
            let q = divneuron::divide_with_theta(&num, theta, den.theta().scale_exp, &cfg.div)?;
            Ok(q_signed(q.value, v.raw))
        })
        .collect()
}

/// LayerNorm as mean subtraction followed by RMSNorm. The mean lands on a
/// finer grid (`scale - log2 d` for power-of-two `d`, exactly; otherwise via
/// a 24-bit reciprocal multiply) so centering is an integer subtraction.
pub fn nls_layernorm(x: &[QValue], eps: f64, cfg: &NlsConfig) -> Result<Vec<QValue>, NlsError> {
    let scale = common_scale(x)?;
    let d = x.len();
    let sum: i64 = x.iter().map(|v| v.raw).sum();
    let centered: Vec<QValue> = if d.is_power_of_two() {
        let k = d.trailing_zeros();
        x.iter().map(|v| QValue::new((v.raw << k) - sum, scale - k as i32)).collect()
    } else {
        let recip = ((24f64).exp2() / d as f64).round() as i64;
        let mean_raw = sum * recip;
        x.iter().map(|v| QValue::new((v.raw << 24) - mean_raw, scale - 24)).collect()
    };
    nls_rmsnorm(&centered, eps, cfg)
}

/// `sqrt(d)` as a 16-bit fixed-point multiplier (15-bit mantissa).
fn sqrt_multiplier(d: usize) -> QValue {
    let v = (d as f64).sqrt();
    let shift = v.log2().floor() as i32;
    let raw = (v * ((14 - shift) as f64).exp2()).round() as i64;
    debug_assert!((1 << 14..=1 << 15).contains(&raw));
    QValue::new(raw, shift - 14)
}

// ---------------------------------------------------------------------------
// bound calculators

/// The three primitive error scales plus one assembled operator bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub eps_exp: f64,
    pub delta: f64,
    pub eps_pol: f64,
    pub bound: f64,
}

/// Per-class relative bound `2/(1 - eps_exp) * (eps_exp + delta)`.
pub fn bound_softmax(cfg: &NlsConfig) -> f64 {
    let e = cfg.eps_exp();
    2.0 / (1.0 - e) * (e + cfg.delta())
}

/// Absolute bound `|x| * 2 eps_exp / (1 - eps_exp) + |x| * delta`.
pub fn bound_silu(x: f64, cfg: &NlsConfig) -> f64 {
    let e = cfg.eps_exp();
    x.abs() * (2.0 * e / (1.0 - e)) + x.abs() * cfg.delta()
}

/// Per-coordinate relative bound `(eps_pol + delta)/(1 - eps_pol) + sqrt(d) delta`.
/// The tree term never drops below one pairwise merge, which covers the
/// `eps*d` augmentation leaf at degenerate sizes.
pub fn bound_rms(d: usize, cfg: &NlsConfig) -> f64 {
    let ep = bound_eps_pol(d, cfg.cordic.n_iters()).max(cfg.cordic.eps_pair());
    (ep + cfg.delta()) / (1.0 - ep) + (d as f64).sqrt() * cfg.delta()
}

pub fn bound_report_softmax(cfg: &NlsConfig) -> BoundReport {
    BoundReport { eps_exp: cfg.eps_exp(), delta: cfg.delta(), eps_pol: 0.0, bound: bound_softmax(cfg) }
}

pub fn bound_report_silu(x: f64, cfg: &NlsConfig) -> BoundReport {
    BoundReport { eps_exp: cfg.eps_exp(), delta: cfg.delta(), eps_pol: 0.0, bound: bound_silu(x, cfg) }
}

pub fn bound_report_rms(d: usize, cfg: &NlsConfig) -> BoundReport {
    BoundReport {
        eps_exp: cfg.eps_exp(),
        delta: cfg.delta(),
        eps_pol: bound_eps_pol(d, cfg.cordic.n_iters()),
        bound: bound_rms(d, cfg),
    }
}

// ---------------------------------------------------------------------------
// documented implementation slack
//
// The Theorem-style bounds above assume real-valued table coefficients, an
// ideal division with step delta and an exact threshold. The implementation
// adds three analytically bounded effects that the verification harness
// prints next to each bound:
//   * coefficient-grid error of the stored table (coeff_slack_rel),
//   * the normalized division's floor error of up to 2*delta plus the
//     threshold's own floor quantization (the guard shift keeps the
//     threshold above 2^14, so that term is at most 2^-14),
//   * for RMSNorm, the augmented tree's extra merge level and the 16-bit
//     sqrt(d) multiplier.

const INV_THETA_GUARD: f64 = 1.0 / ((1 << 14) as f64);
const CORDIC_FIXED_SLACK: f64 = 1e-7;

pub fn slack_softmax(cfg: &NlsConfig) -> f64 {
    let e = cfg.eps_exp() + cfg.exp_table.coeff_slack_rel();
    let dq = 2.0 * cfg.delta() + INV_THETA_GUARD;
    2.0 / (1.0 - e) * (e + dq) - bound_softmax(cfg)
}

/// Slack per unit `|x|`; multiply by `|x|` (or `H` for a whole-domain check).
pub fn slack_silu_per_unit(cfg: &NlsConfig) -> f64 {
    let e0 = cfg.eps_exp();
    let e = e0 + cfg.exp_table.coeff_slack_rel();
    let extra_exp = 2.0 * e / (1.0 - e) - 2.0 * e0 / (1.0 - e0);
    let extra_div = cfg.delta() + INV_THETA_GUARD;
    extra_exp + extra_div
}

pub fn slack_rms(d: usize, eps: f64, cfg: &NlsConfig) -> f64 {
    let ep_used = bound_eps_pol(d, cfg.cordic.n_iters()).max(cfg.cordic.eps_pair());
    let ep_actual =
        tree_height(d, eps) as f64 * cfg.cordic.eps_pair() + CORDIC_FIXED_SLACK;
    let ep = ep_actual.max(ep_used);
    let dq = 2.0 * cfg.delta() + INV_THETA_GUARD + (-15f64).exp2();
    (ep + dq) / (1.0 - ep) + (d as f64).sqrt() * cfg.delta() - bound_rms(d, cfg)
}
