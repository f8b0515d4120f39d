//! Division neuron group: two-window spike-native integer division.
//!
//! Window one integrates the denominator and derives the base threshold by a
//! right shift; window two drives a population of `L` ordered-threshold LIF
//! neurons with the numerator and counts firings. The cumulative count is the
//! integer quotient; reading it with a `2^-n` scale exponent recovers the
//! fixed-point ratio at resolution `delta = 1/(T*L)`.

use thiserror::Error;

use crate::fixedq::QValue;
use crate::spikecode::SpikeTrain;

#[derive(Debug, Error, PartialEq)]
pub enum DivisionError {
    #[error("{name} must be a power of two, got {value}")]
    NotPowerOfTwo { name: &'static str, value: u64 },
    #[error("denominator underflow: accumulated input is below the minimum representable denominator {min_denominator}")]
    DenominatorUnderflow { min_denominator: f64 },
    #[error("base threshold must be at least 1")]
    ThetaOutOfRange,
    #[error("numerator window length {got} does not match configured T={want}")]
    WindowLengthMismatch { got: usize, want: usize },
}

/// Group geometry: window length `T`, population size `L` (both powers of
/// two) and the shift amount `n = log2(T*L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivisionGroupConfig {
    t_len: u32,
    l_size: u32,
    shift_n: u32,
}

impl DivisionGroupConfig {
    pub fn new(t_len: u32, l_size: u32) -> Result<Self, DivisionError> {
        if !t_len.is_power_of_two() {
            return Err(DivisionError::NotPowerOfTwo { name: "T", value: t_len as u64 });
        }
        if !l_size.is_power_of_two() {
            return Err(DivisionError::NotPowerOfTwo { name: "L", value: l_size as u64 });
        }
        let shift_n = t_len.trailing_zeros() + l_size.trailing_zeros();
        Ok(Self { t_len, l_size, shift_n })
    }

    pub fn t_len(&self) -> u32 {
        self.t_len
    }

    pub fn l_size(&self) -> u32 {
        self.l_size
    }

    pub fn shift_n(&self) -> u32 {
        self.shift_n
    }

    /// Quantization step `delta = 2^-n = 1/(T*L)`.
    pub fn delta(&self) -> f64 {
        (-(self.shift_n as f64)).exp2()
    }
}

/// Calibration window: accumulate the denominator and derive the base
/// threshold `theta = floor(I_B / 2^n)`. Thresholds are frozen afterwards.
pub fn calibrate(denominator: &SpikeTrain, cfg: &DivisionGroupConfig) -> Result<u64, DivisionError> {
    let accumulated = denominator.total() as u128 * denominator.theta().raw as u128;
    let theta = accumulated >> cfg.shift_n;
    if theta == 0 {
        let min = (1u64 << cfg.shift_n) as f64 * denominator.theta().to_f64();
        return Err(DivisionError::DenominatorUnderflow { min_denominator: min });
    }
    Ok(theta as u64)
}

/// Outcome of one computation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivisionRun {
    /// Cumulative firing count.
    pub q: u64,
    /// Some step asked for more than `L` firings; the excess was retained.
    pub clipped: bool,
    /// Potential of at least `theta` was left undrained at window end, so
    /// `q` fell short of `floor(sum / theta)`.
    pub undrained: bool,
}

impl DivisionRun {
    pub fn saturated(&self) -> bool {
        self.clipped || self.undrained
    }
}

/// Computation window with the population firing limit enforced: per step at
/// most `L` neurons fire; `V - q*theta` is retained across steps, so a
/// front-loaded numerator still drains to the exact quotient when the window
/// has capacity left.
pub fn run(
    numerator: &SpikeTrain,
    theta: u64,
    cfg: &DivisionGroupConfig,
) -> Result<DivisionRun, DivisionError> {
    if theta == 0 {
        return Err(DivisionError::ThetaOutOfRange);
    }
    if numerator.len() != cfg.t_len as usize {
        return Err(DivisionError::WindowLengthMismatch {
            got: numerator.len(),
            want: cfg.t_len as usize,
        });
    }
    let th = theta as u128;
    let limit = cfg.l_size as u128;
    let mut potential: u128 = 0;
    let mut q: u64 = 0;
    let mut clipped = false;
    for &current in numerator.steps() {
        potential += current as u128;
        let pending = potential / th;
        let fire = pending.min(limit);
        if pending > limit {
            clipped = true;
        }
        q += fire as u64;
        potential -= fire * th;
    }
    Ok(DivisionRun { q, clipped, undrained: potential >= th })
}

/// Fractional-output mode: the per-step population limit is lifted, so the
/// count always completes to `floor(sum / theta)` regardless of how the
/// numerator is distributed over the window.
pub fn run_unbounded(
    numerator: &SpikeTrain,
    theta: u64,
    cfg: &DivisionGroupConfig,
) -> Result<u64, DivisionError> {
    if theta == 0 {
        return Err(DivisionError::ThetaOutOfRange);
    }
    if numerator.len() != cfg.t_len as usize {
        return Err(DivisionError::WindowLengthMismatch {
            got: numerator.len(),
            want: cfg.t_len as usize,
        });
    }
    let th = theta as u128;
    let mut potential: u128 = 0;
    let mut q: u64 = 0;
    for &current in numerator.steps() {
        potential += current as u128;
        let fire = potential / th;
        q += fire as u64;
        potential -= fire * th;
    }
    Ok(q)
}

/// Read the count as a fixed-point value `q * 2^-n`.
pub fn decode(q: u64, cfg: &DivisionGroupConfig) -> QValue {
    QValue::new(q as i64, -(cfg.shift_n as i32))
}

/// A decoded quotient together with the shift bookkeeping that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledQuotient {
    pub value: QValue,
    pub q: u64,
    /// Power-of-two pre-scale applied to the numerator (negative values were
    /// folded into the threshold instead).
    pub pre_shift: i32,
    pub theta: u64,
}

/// Full two-window division of one train by another.
pub fn divide(
    numerator: &SpikeTrain,
    denominator: &SpikeTrain,
    cfg: &DivisionGroupConfig,
) -> Result<ScaledQuotient, DivisionError> {
    let theta = calibrate(denominator, cfg)?;
    divide_with_theta(numerator, theta, denominator.theta().scale_exp, cfg)
}

/// Computation window against an already calibrated threshold, with per-run
/// power-of-two normalization.
///
/// The numerator is shifted so the count lands in `[2^(n-1), 2^n)`; the shift
/// is tracked in the output exponent. This keeps the quotient's relative
/// error at `<= 2^-(n-1)` for any magnitude and keeps the count inside the
/// population's `T*L` window capacity, so the limited run never leaves
/// potential undrained. Numerators must be nonnegative (signs are routed
/// around the group by callers).
pub fn divide_with_theta(
    numerator: &SpikeTrain,
    theta: u64,
    denominator_scale_exp: i32,
    cfg: &DivisionGroupConfig,
) -> Result<ScaledQuotient, DivisionError> {
    if theta == 0 {
        return Err(DivisionError::ThetaOutOfRange);
    }
    let num_theta = numerator.theta();
    let accumulated = numerator.total() as u128 * num_theta.raw as u128;
    let base_exp = num_theta.scale_exp - denominator_scale_exp - cfg.shift_n as i32;
    if accumulated == 0 {
        return Ok(ScaledQuotient { value: QValue::new(0, base_exp), q: 0, pre_shift: 0, theta });
    }

    let bits_a = 128 - accumulated.leading_zeros() as i32;
    let bits_t = 64 - theta.leading_zeros() as i32;
    let mut k = cfg.shift_n as i32 - 1 - (bits_a - bits_t);
    // One comparison refines the estimate so the count starts at 2^(n-1).
    if shifted_lt(accumulated, k + 1, theta as u128, cfg.shift_n as i32) {
        k += 1;
    }

    let (currents, run_theta): (Vec<u64>, u64) = if k >= 0 {
        let steps = numerator
            .steps()
            .iter()
            .map(|&c| ((c as u128 * num_theta.raw as u128) << k as u32) as u64)
            .collect();
        (steps, theta)
    } else {
        let steps = numerator.steps().iter().map(|&c| c * num_theta.raw as u64).collect();
        (steps, theta << (-k) as u32)
    };
    let scaled = SpikeTrain::from_currents(currents, QValue::new(1, 0));
    let outcome = run(&scaled, run_theta, cfg)?;
    debug_assert!(!outcome.undrained, "normalized quotient exceeded window capacity");
    debug_assert!(outcome.q < (cfg.t_len as u64) * (cfg.l_size as u64));

    Ok(ScaledQuotient {
        value: QValue::new(outcome.q as i64, base_exp - k),
        q: outcome.q,
        pre_shift: k,
        theta,
    })
}

/// `a * 2^ka < b * 2^kb`, shift exponents may be negative.
fn shifted_lt(a: u128, ka: i32, b: u128, kb: i32) -> bool {
    let up_a = (ka - kb).max(0) as u32;
    let up_b = (kb - ka).max(0) as u32;
    (a << up_a) < (b << up_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spikecode::{lif_step, spread_currents, DyadicLeak, LifState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn train(steps: Vec<u64>) -> SpikeTrain {
        SpikeTrain::from_currents(steps, QValue::new(1, 0))
    }

    fn cfg(t: u32, l: u32) -> DivisionGroupConfig {
        DivisionGroupConfig::new(t, l).unwrap()
    }

    #[test]
    fn config_requires_powers_of_two() {
        assert!(DivisionGroupConfig::new(3, 4).is_err());
        assert!(DivisionGroupConfig::new(4, 6).is_err());
        let c = cfg(16, 256);
        assert_eq!(c.shift_n(), 12);
        assert!((c.delta() - 2.44140625e-4).abs() < 1e-18);
    }

    #[test]
    fn calibrate_shift_examples() {
        let c = cfg(4, 4);
        assert_eq!(calibrate(&train(spread_currents(4096, 4)), &c).unwrap(), 256);
        assert_eq!(calibrate(&train(spread_currents(16, 4)), &c).unwrap(), 1);
        let err = calibrate(&train(spread_currents(15, 4)), &c).unwrap_err();
        assert_eq!(err, DivisionError::DenominatorUnderflow { min_denominator: 16.0 });
    }

    #[test]
    fn calibrate_is_distribution_invariant() {
        let c = cfg(4, 4);
        let a = calibrate(&train(vec![100, 0, 0, 0]), &c).unwrap();
        let b = calibrate(&train(vec![25, 25, 25, 25]), &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn run_integer_division_example() {
        // sum(I_A)=40, I_B=160 with n=4 gives theta=10, q=4, q_hat=0.25.
        let c = cfg(4, 4);
        let theta = calibrate(&train(spread_currents(160, 4)), &c).unwrap();
        assert_eq!(theta, 10);
        let out = run(&train(vec![7, 9, 14, 10]), theta, &c).unwrap();
        assert_eq!(out.q, 4);
        assert!(!out.saturated());
        assert!((decode(out.q, &c).to_f64() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn run_zero_numerator() {
        let c = cfg(4, 4);
        let out = run(&train(vec![0, 0, 0, 0]), 10, &c).unwrap();
        assert_eq!(out.q, 0);
        assert!(!out.saturated());
    }

    #[test]
    fn run_drains_front_loaded_numerator() {
        // Step 1 wants 10 firings but only 4 fire; the retained potential
        // drains over the remaining steps to the exact quotient.
        let c = cfg(4, 4);
        let out = run(&train(vec![100, 0, 0, 0]), 10, &c).unwrap();
        assert_eq!(out.q, 10);
        assert!(out.clipped);
        assert!(!out.undrained);
    }

    #[test]
    fn run_flags_undrained_residual() {
        let c = cfg(4, 4);
        let out = run(&train(vec![400, 0, 0, 0]), 10, &c).unwrap();
        assert_eq!(out.q, 16); // window capacity T*L
        assert!(out.undrained);
    }

    #[test]
    fn run_rejects_bad_window() {
        let c = cfg(4, 4);
        assert!(matches!(
            run(&train(vec![1, 2]), 10, &c),
            Err(DivisionError::WindowLengthMismatch { got: 2, want: 4 })
        ));
        assert!(matches!(run(&train(vec![0; 4]), 0, &c), Err(DivisionError::ThetaOutOfRange)));
    }

    #[test]
    fn decode_examples() {
        let c = cfg(4, 4);
        assert_eq!(decode(0, &c).to_f64(), 0.0);
        assert_eq!(decode(16, &c).to_f64(), 1.0);
        let big = cfg(16, 256);
        assert!((decode(1, &big).to_f64() - 2.44140625e-4).abs() < 1e-18);
    }

    #[test]
    fn unbounded_run_is_exact_floor_division() {
        let c = cfg(4, 4);
        for a in (0u64..4096).step_by(17) {
            for theta in [1u64, 2, 7, 31, 64] {
                let q = run_unbounded(&train(spread_currents(a, 4)), theta, &c).unwrap();
                assert_eq!(q, a / theta, "a={a} theta={theta}");
            }
        }
    }

    #[test]
    fn limited_run_matches_single_lif_neuron_when_l_is_one() {
        let c = cfg(8, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let theta: u64 = rng.random_range(1..20);
            let steps: Vec<u64> = (0..8).map(|_| rng.random_range(0..30)).collect();
            let group = run(&train(steps.clone()), theta, &c).unwrap();
            let mut lif = LifState::resting(DyadicLeak::ONE, QValue::new(theta as i64, 0));
            let spikes: u64 = steps
                .iter()
                .map(|&i| lif_step(&mut lif, QValue::new(i as i64, 0)) as u64)
                .sum();
            assert_eq!(group.q, spikes);
        }
    }

    #[test]
    fn relative_error_against_rational_oracle() {
        // |q_hat - A/B| <= 2*delta + A*2^n/(B*(B-2^n)) for B >= 2^(n+1),
        // checked exactly in integer arithmetic on 10^5 random pairs.
        let c = cfg(4, 4);
        let n = c.shift_n();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100_000 {
            let b: u128 = rng.random_range((1u64 << (n + 1))..(1u64 << 30)) as u128;
            let a: u128 = rng.random_range(0..=b as u64) as u128;
            let theta = (b >> n) as u64;
            let q = run_unbounded(&train(spread_currents(a as u64, 4)), theta, &c).unwrap() as u128;
            let two_n = 1u128 << n;
            let lhs = q * b;
            let rhs = a * two_n;
            let diff = lhs.abs_diff(rhs);
            // |q*B - A*2^n| * (B - 2^n) <= 2*B*(B - 2^n) + A*2^(2n)
            let bound = 2 * b * (b - two_n) + a * two_n * two_n;
            assert!(diff * (b - two_n) <= bound, "a={a} b={b}");
        }
    }

    #[test]
    fn scaled_divide_keeps_relative_error_within_two_delta() {
        let c = cfg(16, 256);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20_000 {
            let b: u64 = rng.random_range(1 << 20..1u64 << 40);
            let a: u64 = rng.random_range(1..1u64 << 40);
            let num = SpikeTrain::from_currents(spread_currents(a, 16), QValue::new(1, 0));
            let den = SpikeTrain::from_currents(spread_currents(b, 16), QValue::new(1, 0));
            let out = divide(&num, &den, &c).unwrap();
            let theta = out.theta as f64;
            // Error against the post-calibration target A/(theta*2^n); theta
            // quantization is accounted separately by the calibration bound.
            let target = a as f64 / (theta * (c.shift_n() as f64).exp2());
            let got = out.value.to_f64();
            let rel = (got - target).abs() / target;
            assert!(rel <= 2.0 * c.delta(), "a={a} b={b} rel={rel}");
            assert!((1u64 << (c.shift_n() - 1)..1u64 << c.shift_n()).contains(&out.q));
        }
    }

    proptest! {
        #[test]
        fn count_is_monotone_in_numerator(a1 in 0u64..4096, a2 in 0u64..4096, theta in 1u64..64) {
            let c = cfg(4, 4);
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let q_lo = run_unbounded(&train(spread_currents(lo, 4)), theta, &c).unwrap();
            let q_hi = run_unbounded(&train(spread_currents(hi, 4)), theta, &c).unwrap();
            prop_assert!(q_lo <= q_hi);
        }

        #[test]
        fn calibration_ignores_temporal_distribution(total in 16u64..100_000, seed in 0u64..500) {
            use rand::seq::SliceRandom;
            let c = cfg(4, 4);
            let mut steps = spread_currents(total, 4);
            let base = calibrate(&train(steps.clone()), &c).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            steps.shuffle(&mut rng);
            prop_assert_eq!(calibrate(&train(steps), &c).unwrap(), base);
        }
    }
}
