//! High-precision float oracles for the three target functions and the
//! comparison approximators they are benchmarked against.
//!
//! Every baseline is a deterministic, total function of its inputs (the
//! XNOR-style SiLU additionally reads one batch statistic). These run in
//! `f64`; the point of the integer kernels is to be measured against them.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("baseline `{kind}` does not approximate operator `{operator}`")]
    UnsupportedPairing { kind: &'static str, operator: &'static str },
}

/// Comparison approximators from quantized/efficient-inference practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Oracle,
    Hardmax,
    Pade22,
    PwlExp16,
    PwlSigmoid16,
    PwlSigmoid64,
    BlockwiseRms32,
    BlockwiseRms64,
    Relu,
    Hardswish,
    Dorefa4b,
    Xnor,
}

impl BaselineKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Hardmax => "hardmax",
            Self::Pade22 => "pade22",
            Self::PwlExp16 => "pwl_exp16",
            Self::PwlSigmoid16 => "pwl_sigmoid16",
            Self::PwlSigmoid64 => "pwl_sigmoid64",
            Self::BlockwiseRms32 => "blockwise_rms32",
            Self::BlockwiseRms64 => "blockwise_rms64",
            Self::Relu => "relu",
            Self::Hardswish => "hardswish",
            Self::Dorefa4b => "dorefa4b",
            Self::Xnor => "xnor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::Oracle,
            Self::Hardmax,
            Self::Pade22,
            Self::PwlExp16,
            Self::PwlSigmoid16,
            Self::PwlSigmoid64,
            Self::BlockwiseRms32,
            Self::BlockwiseRms64,
            Self::Relu,
            Self::Hardswish,
            Self::Dorefa4b,
            Self::Xnor,
        ]
        .into_iter()
        .find(|k| k.tag() == s)
    }

    /// The comparison set benchmarked for each operator.
    pub fn for_operator(operator: &str) -> Vec<Self> {
        match operator {
            "softmax" => vec![Self::Hardmax, Self::Pade22, Self::PwlExp16],
            "silu" => vec![
                Self::Relu,
                Self::Hardswish,
                Self::PwlSigmoid16,
                Self::PwlSigmoid64,
                Self::Dorefa4b,
                Self::Xnor,
            ],
            "rmsnorm" => vec![Self::BlockwiseRms32, Self::BlockwiseRms64],
            _ => vec![],
        }
    }
}

// ---------------------------------------------------------------------------
// oracles

/// Max-stabilized softmax in `f64`.
pub fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn oracle_silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn oracle_rmsnorm(x: &[f64], eps: f64) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let r = (ms + eps).sqrt();
    x.iter().map(|v| v / r).collect()
}

// ---------------------------------------------------------------------------
// softmax baselines

/// One-hot at the argmax (first index on ties).
pub fn hardmax(z: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    (0..z.len()).map(|i| f64::from(i == best)).collect()
}

/// Diagonal Pade [2/2] of `e^x`: `(1 + x/2 + x^2/12) / (1 - x/2 + x^2/12)`.
fn pade22_exp(x: f64) -> f64 {
    let q = x * x / 12.0;
    (1.0 + x / 2.0 + q) / (1.0 - x / 2.0 + q)
}

/// Softmax with the exponential replaced by its Pade [2/2] form after the
/// usual max shift.
pub fn pade22_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| pade22_exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Endpoint-interpolated `e^x` on `[-h, h]` with `segments` pieces, zero
/// below `-h`, clamped above `h`.
fn pwl_exp(x: f64, h: f64, segments: u32) -> f64 {
    if x < -h {
        return 0.0;
    }
    let xc = x.min(h);
    let gamma = 2.0 * h / segments as f64;
    let i = (((xc + h) / gamma).floor() as i64).clamp(0, segments as i64 - 1) as f64;
    let x0 = -h + gamma * i;
    let x1 = x0 + gamma;
    let a = (x1.exp() - x0.exp()) / gamma;
    a * (xc - x0) + x0.exp()
}

/// Softmax through a 16-segment PWL exponential, mirroring the kernel's
/// stabilization (`z - max + h`).
pub fn pwl_exp16_softmax(z: &[f64], h: f64) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| pwl_exp(v - max + h, h, 16)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------------
// silu baselines

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Endpoint-interpolated sigmoid on `[-h, h]`, clamped outside.
fn pwl_sigmoid(x: f64, h: f64, segments: u32) -> f64 {
    let xc = x.clamp(-h, h);
    let gamma = 2.0 * h / segments as f64;
    let i = (((xc + h) / gamma).floor() as i64).clamp(0, segments as i64 - 1) as f64;
    let x0 = -h + gamma * i;
    let x1 = x0 + gamma;
    let a = (sigmoid(x1) - sigmoid(x0)) / gamma;
    a * (xc - x0) + sigmoid(x0)
}

pub fn pwl_sigmoid_silu(x: f64, h: f64, segments: u32) -> f64 {
    x * pwl_sigmoid(x, h, segments)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn hardswish(x: f64) -> f64 {
    x * ((x + 3.0).clamp(0.0, 6.0)) / 6.0
}

/// Uniform symmetric 4-bit quantization of the float SiLU output over
/// `[-h, h]`: 7 positive levels, 7 negative, zero preserved.
pub fn dorefa4b_silu(x: f64, h: f64) -> f64 {
    let step = h / 7.0;
    let y = oracle_silu(x);
    (y / step).round().clamp(-7.0, 7.0) * step
}

/// XNOR-style binary thresholding: `sign(x) * mean(|x|)` over the batch.
pub fn xnor_silu(x: f64, batch_mean_abs: f64) -> f64 {
    x.signum() * batch_mean_abs
}

// ---------------------------------------------------------------------------
// rmsnorm baselines

/// Contiguous blockwise RMS normalization with a fixed reduction width: the
/// mean square always divides by the nominal block size (a trailing partial
/// block is implicitly zero-padded), the way a fixed-width reduction unit
/// with a baked-in shift divisor behaves. Exact when `d` equals the block
/// size; increasingly off as the tail block empties.
pub fn blockwise_rmsnorm(x: &[f64], eps: f64, block: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for chunk in x.chunks(block) {
        let ms = chunk.iter().map(|v| v * v).sum::<f64>() / block as f64;
        let r = (ms + eps).sqrt();
        out.extend(chunk.iter().map(|v| v / r));
    }
    out
}

/// Batch statistic consumed by the XNOR-style SiLU surrogate.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchStats {
    pub mean_abs: f64,
}

/// Dispatch for vector operators (softmax, rmsnorm).
pub fn baseline_eval_vector(
    kind: BaselineKind,
    operator: &'static str,
    input: &[f64],
    eps: f64,
    h: f64,
) -> Result<Vec<f64>, BaselineError> {
    match (operator, kind) {
        ("softmax", BaselineKind::Oracle) => Ok(oracle_softmax(input)),
        ("softmax", BaselineKind::Hardmax) => Ok(hardmax(input)),
        ("softmax", BaselineKind::Pade22) => Ok(pade22_softmax(input)),
        ("softmax", BaselineKind::PwlExp16) => Ok(pwl_exp16_softmax(input, h)),
        ("rmsnorm", BaselineKind::Oracle) => Ok(oracle_rmsnorm(input, eps)),
        ("rmsnorm", BaselineKind::BlockwiseRms32) => Ok(blockwise_rmsnorm(input, eps, 32)),
        ("rmsnorm", BaselineKind::BlockwiseRms64) => Ok(blockwise_rmsnorm(input, eps, 64)),
        _ => Err(BaselineError::UnsupportedPairing { kind: kind.tag(), operator }),
    }
}

/// Dispatch for the scalar operator (silu).
pub fn baseline_eval_silu(
    kind: BaselineKind,
    x: f64,
    h: f64,
    stats: BatchStats,
) -> Result<f64, BaselineError> {
    match kind {
        BaselineKind::Oracle => Ok(oracle_silu(x)),
        BaselineKind::Relu => Ok(relu(x)),
        BaselineKind::Hardswish => Ok(hardswish(x)),
        BaselineKind::PwlSigmoid16 => Ok(pwl_sigmoid_silu(x, h, 16)),
        BaselineKind::PwlSigmoid64 => Ok(pwl_sigmoid_silu(x, h, 64)),
        BaselineKind::Dorefa4b => Ok(dorefa4b_silu(x, h)),
        BaselineKind::Xnor => Ok(xnor_silu(x, stats.mean_abs)),
        _ => Err(BaselineError::UnsupportedPairing { kind: kind.tag(), operator: "silu" }),
    }
}
