//! Rate-coded spike trains and the discrete-time LIF neuron step.
//!
//! A value is carried as nonnegative integer currents over a window of `T`
//! timesteps; the decoded value is `(sum of currents) * theta`. Binary trains
//! (currents in {0,1}) are the constrained special case produced by
//! [`encode_rate`]; the division group consumes general multi-count trains.

use crate::fixedq::QValue;

/// Length-`T` sequence of nonnegative integer currents plus the threshold
/// scale `theta` that fixes the grid the counts live on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    steps: Vec<u64>,
    theta: QValue,
}

impl SpikeTrain {
    /// General constructor for multi-count currents. `theta.raw` must be
    /// positive; the train length is exactly `steps.len()`.
    pub fn from_currents(steps: Vec<u64>, theta: QValue) -> Self {
        assert!(theta.raw > 0, "spike train threshold must be positive");
        Self { steps, theta }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn theta(&self) -> QValue {
        self.theta
    }

    pub fn total(&self) -> u64 {
        self.steps.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub train: SpikeTrain,
    pub saturated: bool,
}

/// Rate-encode a nonnegative value as a binary train: `round(v/theta)` ones,
/// front-loaded, clipped to the window length (clipping sets the flag).
pub fn encode_rate(v: QValue, t_len: usize, theta: QValue) -> Encoded {
    assert!(t_len >= 1);
    assert!(theta.raw > 0);
    assert!(v.raw >= 0, "rate codes carry nonnegative values");
    let count = div_round_nearest(align(v, theta), theta.raw as u128);
    let (count, saturated) = if count > t_len as u128 {
        (t_len as u128, true)
    } else {
        (count, false)
    };
    let steps = (0..t_len).map(|t| u64::from((t as u128) < count)).collect();
    Encoded { train: SpikeTrain::from_currents(steps, theta), saturated }
}

/// Spread an integer total over `t_len` steps, heavier at the front.
/// Used when a precomputed integer drives the division group; decoding is
/// distribution-invariant so the shape is free.
pub fn spread_currents(total: u64, t_len: usize) -> Vec<u64> {
    let t = t_len as u64;
    let base = total / t;
    let rem = total % t;
    (0..t).map(|i| base + u64::from(i < rem)).collect()
}

/// `(sum of currents) * theta`.
pub fn decode_rate(tr: &SpikeTrain) -> QValue {
    let total = tr.total() as i64;
    QValue::new(tr.theta.raw * total, tr.theta.scale_exp)
}

fn align(v: QValue, theta: QValue) -> u128 {
    // Express v on theta's grid; exact because we only ever widen.
    if v.scale_exp >= theta.scale_exp {
        (v.raw as u128) << (v.scale_exp - theta.scale_exp) as u32
    } else {
        panic!("encode_rate input must not be finer than its threshold grid");
    }
}

fn div_round_nearest(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Leak factor restricted to dyadic rationals `num / 2^log2_den` so the decay
/// is a pure shift-add.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicLeak {
    pub num: u32,
    pub log2_den: u32,
}

impl DyadicLeak {
    pub const ONE: Self = Self { num: 1, log2_den: 0 };

    pub const fn new(num: u32, log2_den: u32) -> Self {
        assert!(num as u64 <= 1u64 << log2_den, "leak factor must be <= 1");
        assert!(num > 0);
        Self { num, log2_den }
    }

    fn apply(self, v: i64) -> i64 {
        (v * self.num as i64) >> self.log2_den
    }
}

/// Membrane state of one LIF neuron. `v`, `theta` and the inputs must share
/// a grid; all updates stay on that grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifState {
    pub v: QValue,
    pub lambda: DyadicLeak,
    pub theta: QValue,
}

impl LifState {
    pub fn resting(lambda: DyadicLeak, theta: QValue) -> Self {
        assert!(theta.raw > 0);
        Self { v: QValue::zero(theta.scale_exp), lambda, theta }
    }
}

/// One accumulate–threshold–reset step: `v' = lambda*v + I`, spike when
/// `v' >= theta`, subtractive reset on spike.
pub fn lif_step(st: &mut LifState, input: QValue) -> u8 {
    debug_assert_eq!(input.scale_exp, st.v.scale_exp);
    let mut v = st.lambda.apply(st.v.raw) + input.raw;
    let spike = v >= st.theta.raw;
    if spike {
        v -= st.theta.raw;
    }
    st.v = QValue::new(v, st.v.scale_exp);
    u8::from(spike)
}
