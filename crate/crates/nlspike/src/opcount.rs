//! MAC/AC/shift operation counting for the NLS operators.
//!
//! Cost taxonomy: `shift` covers every power-of-two scaling and every
//! shifted-operand accumulate (CORDIC micro-rotations, LUT mantissa
//! multiplies as their shift-add expansions, threshold derivation, decode
//! scaling); `ac` covers plain accumulates and compares on the data path;
//! `mac` counts general multiply-accumulates, which the NLS datapaths never
//! execute. The temporal structure follows the operators' execution
//! patterns: SiLU runs its entire datapath at every timestep, while Softmax
//! and RMSNorm run their shift cores once per window and only accumulate
//! across timesteps (accumulating `T` currents costs `T - 1` additions).

use serde::Serialize;

use crate::analysis::Operator;
use crate::fixedq::{quantize, QGrid, QValue};
use crate::nlsops::{self, NlsConfig};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counter {
    pub macs: u64,
    pub acs: u64,
    pub shifts: u64,
}

impl Counter {
    fn shift(&mut self, n: u64) {
        self.shifts += n;
    }

    fn ac(&mut self, n: u64) {
        self.acs += n;
    }
}

/// LUT datapath per evaluation: input alignment (2), the reciprocal-of-gamma
/// index multiply (8), the 8-bit slope mantissa multiply (8), and output
/// alignment (2); plus the offset subtract, intercept add and one boundary
/// compare as plain accumulates.
const PWL_EVAL_SHIFTS: u64 = 20;
const PWL_EVAL_ACS: u64 = 3;
/// Per division run: normalization select + apply, and the decode scaling.
const DIV_RUN_SHIFTS: u64 = 3;
/// 16-bit sqrt(d) constant multiplier as a shift-add chain.
const SQRTD_MULT_SHIFTS: u64 = 16;
/// 32-bit inverse-gain constant multiplier as a shift-add chain.
const GAIN_MULT_SHIFTS: u64 = 32;

fn charge_pwl_eval(c: &mut Counter) {
    c.shift(PWL_EVAL_SHIFTS);
    c.ac(PWL_EVAL_ACS);
}

fn charge_cordic_merge(c: &mut Counter, n_iters: u32) {
    // two shifted-operand accumulates per micro-rotation, then the gain
    c.shift(2 * (n_iters as u64 + 1) + GAIN_MULT_SHIFTS);
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct OpCountReport {
    pub operator: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: u32,
    pub macs: u64,
    pub acs: u64,
    pub shifts: u64,
}

pub const OPCOUNT_CSV_HEADER: &str = "operator,d,T,macs,acs,shifts";

impl OpCountReport {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{}", self.operator, self.d, self.t, self.macs, self.acs, self.shifts)
    }
}

/// Tally one operator evaluation at dimension `d` over a `T`-step window.
/// The kernel itself runs once on a canonical input (the counts describe
/// that evaluation's datapath schedule).
pub fn count_ops(op: Operator, d: usize, t: u32, template: &NlsConfig) -> OpCountReport {
    assert!(d >= 1);
    let cfg = NlsConfig::new(
        template.h,
        template.exp_table.k(),
        t,
        template.div.l_size(),
        template.cordic.n_iters(),
    )
    .expect("count configuration is valid");
    let mut c = Counter::default();
    match op {
        Operator::Softmax => {
            let grid = cfg.input_grid();
            let z: Vec<QValue> =
                (0..d).map(|i| quantize((i % 7) as f64 * 0.5 - 1.5, grid).value).collect();
            nlsops::nls_softmax(&z, &cfg).expect("canonical softmax evaluates");
            // shift core, once per window
            for _ in 0..d {
                charge_pwl_eval(&mut c);
            }
            c.ac(d as u64 - 1); // running max
            c.ac(d as u64); // stabilizing subtract
            c.shift(1); // threshold calibration
            c.shift(DIV_RUN_SHIFTS * d as u64);
            // temporal accumulation: shared denominator window and the
            // per-class division potentials
            for _step in 1..t {
                c.ac(d as u64);
                c.ac(d as u64);
            }
        }
        Operator::Silu => {
            let grid = cfg.input_grid();
            let x = quantize(1.25f64.min(cfg.h * 0.5), grid).value;
            nlsops::nls_silu(x, &cfg).expect("canonical silu evaluates");
            // time-dependent form: the whole datapath fires every step
            for _elem in 0..d {
                for _step in 0..t {
                    c.ac(1); // spike accumulate
                    charge_pwl_eval(&mut c);
                    c.shift(1); // threshold refresh
                    c.ac(1); // division potential
                    c.shift(DIV_RUN_SHIFTS);
                }
            }
        }
        Operator::Rmsnorm => {
            let grid = QGrid::signed(8, -5);
            let x: Vec<QValue> =
                (0..d).map(|i| quantize((i % 5) as f64 * 0.4 + 0.2, grid).value).collect();
            nlsops::nls_rmsnorm(&x, crate::analysis::DEFAULT_RMS_EPS, &cfg)
                .expect("canonical rmsnorm evaluates");
            // shift core, once per window
            c.shift(SQRTD_MULT_SHIFTS * d as u64);
            c.shift(d as u64 + 1); // block normalization of inputs + augment
            let padded = (d + 1).next_power_of_two() as u64;
            for _ in 0..padded - 1 {
                charge_cordic_merge(&mut c, cfg.cordic.n_iters());
            }
            c.shift(1); // threshold calibration
            c.shift(DIV_RUN_SHIFTS * d as u64);
            // temporal accumulation: input windows and division potentials
            for _step in 1..t {
                c.ac(d as u64);
                c.ac(d as u64);
            }
        }
    }
    OpCountReport { operator: op.tag().to_string(), d, t, macs: c.macs, acs: c.acs, shifts: c.shifts }
}
