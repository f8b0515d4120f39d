//! Error metrics, seeded sweep runners and bound-vs-empirical verification.
//!
//! All sampling happens behind one shared front end: inputs are drawn,
//! clipped to the operator's domain, and quantized to an 8-bit grid before
//! either the integer kernels or the float oracle sees them, so reported
//! errors isolate the approximation itself. Every cell derives its RNG
//! stream deterministically from the master seed, and parallel execution
//! reduces in a fixed order, so reports are reproducible byte for byte.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{self, BaselineKind, BatchStats};
use crate::fixedq::{quantize, QGrid, QValue};
use crate::nlsops::{
    self, bound_rms, bound_silu, bound_softmax, input_grid, slack_rms, slack_silu_per_unit,
    slack_softmax, NlsConfig,
};

/// Epsilon used by the RMSNorm experiments.
pub const DEFAULT_RMS_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Softmax,
    Silu,
    Rmsnorm,
}

impl Operator {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Softmax => "softmax",
            Self::Silu => "silu",
            Self::Rmsnorm => "rmsnorm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax" => Some(Self::Softmax),
            "silu" => Some(Self::Silu),
            "rmsnorm" => Some(Self::Rmsnorm),
            _ => None,
        }
    }
}

/// One row of an error sweep. Field order matches the CSV schema.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ErrorReport {
    pub operator: String,
    pub kind: String,
    pub d: usize,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "T")]
    pub t: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub samples: usize,
    pub seed: u64,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub mean_rel: f64,
    pub max_rel: f64,
    pub bound: Option<f64>,
    pub slack: Option<f64>,
    pub pass: bool,
}

pub const CSV_HEADER: &str =
    "operator,kind,d,H,K,T,L,samples,seed,mean_abs,max_abs,mean_rel,max_rel,bound,slack,pass";

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.operator,
            self.kind,
            self.d,
            self.h,
            self.k,
            self.t,
            self.l,
            self.samples,
            self.seed,
            self.mean_abs,
            self.max_abs,
            self.mean_rel,
            self.max_rel,
            opt(self.bound),
            opt(self.slack),
            self.pass
        )
    }
}

pub fn reports_to_csv(rows: &[ErrorReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn reports_to_json(rows: &[ErrorReport]) -> String {
    serde_json::to_string_pretty(rows).expect("reports are serializable")
}

// ---------------------------------------------------------------------------
// deterministic sampling

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn cell_seed(master: u64, tag: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    splitmix64(h ^ master)
}

fn cell_rng(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cell_seed(master, tag))
}

/// Box-Muller standard normal; self-contained so streams never depend on
/// distribution-crate internals.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn quantized_normal(rng: &mut ChaCha8Rng, sigma: f64, clip: f64, grid: QGrid) -> f64 {
    let v = (sigma * normal(rng)).clamp(-clip, clip);
    quantize(v, grid).value.to_f64()
}

/// Logit vectors for the bound checks: standard normal clipped to the
/// theorem's domain `[-H, H]`, on the 8-bit input grid.
pub fn sample_softmax_batch(d: usize, samples: usize, seed: u64, h: f64) -> Vec<Vec<f64>> {
    let grid = input_grid(h);
    let mut rng = cell_rng(seed, &format!("softmax/{d}"));
    (0..samples)
        .map(|_| (0..d).map(|_| quantized_normal(&mut rng, 1.0, h, grid)).collect())
        .collect()
}

/// Wide logits (sigma = 3, unclipped) for the H-sensitivity sweep, where the
/// point is to measure what clipping at small H destroys.
pub fn sample_softmax_batch_wide(d: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let grid = QGrid::signed(8, -3);
    let mut rng = cell_rng(seed, &format!("softmax-wide/{d}"));
    (0..samples)
        .map(|_| (0..d).map(|_| quantized_normal(&mut rng, 3.0, 15.0, grid)).collect())
        .collect()
}

pub fn sample_silu_batch(samples: usize, seed: u64, h: f64) -> Vec<f64> {
    let grid = input_grid(h.max(5.0));
    let mut rng = cell_rng(seed, "silu");
    (0..samples).map(|_| quantized_normal(&mut rng, 1.0, 5.0f64.min(h), grid)).collect()
}

/// Activation vectors with every coordinate nonzero on the grid, honoring
/// the `|x_i| >= sqrt(eps)` precondition of the RMSNorm bound.
pub fn sample_rms_batch(d: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let grid = QGrid::signed(8, -5);
    let mut rng = cell_rng(seed, &format!("rmsnorm/{d}"));
    (0..samples)
        .map(|_| {
            (0..d)
                .map(|_| loop {
                    let v = quantized_normal(&mut rng, 1.0, 3.9, grid);
                    if v != 0.0 {
                        break v;
                    }
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// error aggregation

#[derive(Debug, Default, Clone, Copy)]
struct ErrAgg {
    n: u64,
    n_rel: u64,
    sum_abs: f64,
    max_abs: f64,
    sum_rel: f64,
    max_rel: f64,
}

impl ErrAgg {
    fn update(&mut self, got: f64, want: f64) {
        let abs = (got - want).abs();
        self.n += 1;
        self.sum_abs += abs;
        self.max_abs = self.max_abs.max(abs);
        if want.abs() > 1e-12 {
            let rel = abs / want.abs();
            self.n_rel += 1;
            self.sum_rel += rel;
            self.max_rel = self.max_rel.max(rel);
        }
    }

    fn mean_abs(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_abs / self.n as f64
        }
    }

    fn mean_rel(&self) -> f64 {
        if self.n_rel == 0 {
            0.0
        } else {
            self.sum_rel / self.n_rel as f64
        }
    }
}

fn quantize_on(values: &[f64], grid: QGrid) -> Vec<QValue> {
    values.iter().map(|&v| quantize(v, grid).value).collect()
}

// ---------------------------------------------------------------------------
// sweep runners

/// Run one operator across dimensions and approximator kinds. The `nls`
/// kernel row always comes first per dimension, measured on the same seeded
/// batch as every baseline row.
pub fn run_error_sweep(
    op: Operator,
    kinds: &[BaselineKind],
    dims: &[usize],
    samples: usize,
    seed: u64,
    cfg: &NlsConfig,
) -> Vec<ErrorReport> {
    let dims: Vec<usize> = if op == Operator::Silu { vec![1] } else { dims.to_vec() };
    let cells: Vec<usize> = dims.clone();
    let rows_per_cell = map_parallel(&cells, |&d| sweep_cell(op, kinds, d, samples, seed, cfg));
    rows_per_cell.into_iter().flatten().collect()
}

fn sweep_cell(
    op: Operator,
    kinds: &[BaselineKind],
    d: usize,
    samples: usize,
    seed: u64,
    cfg: &NlsConfig,
) -> Vec<ErrorReport> {
    let base = ErrorReport {
        operator: op.tag().to_string(),
        kind: "nls".to_string(),
        d,
        h: cfg.h,
        k: cfg.exp_table.k(),
        t: cfg.div.t_len(),
        l: cfg.div.l_size(),
        samples,
        seed,
        mean_abs: 0.0,
        max_abs: 0.0,
        mean_rel: 0.0,
        max_rel: 0.0,
        bound: None,
        slack: None,
        pass: true,
    };
    let mut rows = Vec::new();
    match op {
        Operator::Softmax => {
            let batch = sample_softmax_batch(d, samples, seed, cfg.h);
            let grid = input_grid(cfg.h);
            let mut agg = ErrAgg::default();
            for z in &batch {
                let want = baselines::oracle_softmax(z);
                let got = nlsops::nls_softmax(&quantize_on(z, grid), cfg)
                    .expect("softmax kernel cannot fail on sampled inputs");
                for i in 0..d {
                    agg.update(got[i].to_f64(), want[i]);
                }
            }
            let bound = bound_softmax(cfg);
            let slack = slack_softmax(cfg);
            rows.push(finish_row(base.clone(), agg, Some(bound), Some(slack), agg.max_rel <= bound + slack));
            for &kind in kinds {
                let mut agg = ErrAgg::default();
                for z in &batch {
                    let want = baselines::oracle_softmax(z);
                    let got = baselines::baseline_eval_vector(kind, "softmax", z, 0.0, cfg.h)
                        .expect("kind filtered for operator");
                    for i in 0..d {
                        agg.update(got[i], want[i]);
                    }
                }
                rows.push(finish_row(
                    ErrorReport { kind: kind.tag().to_string(), ..base.clone() },
                    agg,
                    None,
                    None,
                    true,
                ));
            }
        }
        Operator::Silu => {
            let batch = sample_silu_batch(samples, seed, cfg.h);
            let grid = input_grid(cfg.h.max(5.0));
            let stats = BatchStats {
                mean_abs: batch.iter().map(|x| x.abs()).sum::<f64>() / batch.len().max(1) as f64,
            };
            let mut agg = ErrAgg::default();
            let per_unit = 2.0 * cfg.eps_exp() / (1.0 - cfg.eps_exp()) + cfg.delta();
            let slack_unit = slack_silu_per_unit(cfg);
            let mut all_ok = true;
            for &x in &batch {
                let xq = quantize(x, grid).value;
                let want = baselines::oracle_silu(x);
                let got = nlsops::nls_silu(xq, cfg).expect("silu kernel total on its domain").to_f64();
                agg.update(got, want);
                if (got - want).abs() > (per_unit + slack_unit) * x.abs() + 1e-15 {
                    all_ok = false;
                }
            }
            rows.push(finish_row(
                base.clone(),
                agg,
                Some(bound_silu(cfg.h, cfg)),
                Some(slack_unit * cfg.h),
                all_ok,
            ));
            for &kind in kinds {
                let mut agg = ErrAgg::default();
                for &x in &batch {
                    let want = baselines::oracle_silu(x);
                    let got = baselines::baseline_eval_silu(kind, x, cfg.h, stats)
                        .expect("kind filtered for operator");
                    agg.update(got, want);
                }
                rows.push(finish_row(
                    ErrorReport { kind: kind.tag().to_string(), ..base.clone() },
                    agg,
                    None,
                    None,
                    true,
                ));
            }
        }
        Operator::Rmsnorm => {
            let batch = sample_rms_batch(d, samples, seed);
            let grid = QGrid::signed(8, -5);
            let mut agg = ErrAgg::default();
            for x in &batch {
                let want = baselines::oracle_rmsnorm(x, DEFAULT_RMS_EPS);
                let got = nlsops::nls_rmsnorm(&quantize_on(x, grid), DEFAULT_RMS_EPS, cfg)
                    .expect("rmsnorm kernel cannot underflow on nonzero batches");
                for i in 0..d {
                    agg.update(got[i].to_f64(), want[i]);
                }
            }
            let bound = bound_rms(d, cfg);
            let slack = slack_rms(d, DEFAULT_RMS_EPS, cfg);
            rows.push(finish_row(base.clone(), agg, Some(bound), Some(slack), agg.max_rel <= bound + slack));
            for &kind in kinds {
                let mut agg = ErrAgg::default();
                for x in &batch {
                    let want = baselines::oracle_rmsnorm(x, DEFAULT_RMS_EPS);
                    let got =
                        baselines::baseline_eval_vector(kind, "rmsnorm", x, DEFAULT_RMS_EPS, cfg.h)
                            .expect("kind filtered for operator");
                    for i in 0..d {
                        agg.update(got[i], want[i]);
                    }
                }
                rows.push(finish_row(
                    ErrorReport { kind: kind.tag().to_string(), ..base.clone() },
                    agg,
                    None,
                    None,
                    true,
                ));
            }
        }
    }
    rows
}

fn finish_row(
    mut row: ErrorReport,
    agg: ErrAgg,
    bound: Option<f64>,
    slack: Option<f64>,
    pass: bool,
) -> ErrorReport {
    row.mean_abs = agg.mean_abs();
    row.max_abs = agg.max_abs;
    row.mean_rel = agg.mean_rel();
    row.max_rel = agg.max_rel;
    row.bound = bound;
    row.slack = slack;
    row.pass = pass;
    row
}

/// Sensitivity of one operator to the half-interval `H`. SiLU is evaluated
/// on a fixed `[-5, 5]` sample set while the table's H varies; Softmax
/// (d = 64) uses wide logits so small H actually clips.
pub fn run_h_sensitivity(
    op: Operator,
    h_values: &[f64],
    samples: usize,
    seed: u64,
    template: &NlsConfig,
) -> Vec<ErrorReport> {
    assert!(!h_values.is_empty());
    assert!(matches!(op, Operator::Silu | Operator::Softmax));
    let cells: Vec<f64> = h_values.to_vec();
    map_parallel(&cells, |&h| {
        let cfg = NlsConfig::new(
            h,
            template.exp_table.k(),
            template.div.t_len(),
            template.div.l_size(),
            template.cordic.n_iters(),
        )
        .expect("sweep configuration is valid");
        let mut agg = ErrAgg::default();
        let d = if op == Operator::Silu { 1 } else { 64 };
        match op {
            Operator::Silu => {
                // fixed evaluation range [-5, 5] shared by all H cells
                let batch = sample_silu_batch(samples, seed, 5.0);
                let grid = input_grid(5.0f64.max(h));
                for &x in &batch {
                    let xq = quantize(x, grid).value;
                    let got = nlsops::nls_silu(xq, &cfg).expect("total on domain").to_f64();
                    agg.update(got, baselines::oracle_silu(xq.to_f64()));
                }
            }
            Operator::Softmax => {
                let batch = sample_softmax_batch_wide(d, samples, seed);
                let grid = QGrid::signed(8, -3);
                for z in &batch {
                    let want = baselines::oracle_softmax(z);
                    let got = nlsops::nls_softmax(&quantize_on(z, grid), &cfg)
                        .expect("softmax kernel cannot fail on sampled inputs");
                    for i in 0..d {
                        agg.update(got[i].to_f64(), want[i]);
                    }
                }
            }
            Operator::Rmsnorm => unreachable!(),
        }
        finish_row(
            ErrorReport {
                operator: op.tag().to_string(),
                kind: "nls".to_string(),
                d,
                h,
                k: cfg.exp_table.k(),
                t: cfg.div.t_len(),
                l: cfg.div.l_size(),
                samples,
                seed,
                mean_abs: 0.0,
                max_abs: 0.0,
                mean_rel: 0.0,
                max_rel: 0.0,
                bound: None,
                slack: None,
                pass: true,
            },
            agg,
            None,
            None,
            true,
        )
    })
}

// ---------------------------------------------------------------------------
// bound verification

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckRow {
    pub operator: String,
    pub d: usize,
    pub bound: f64,
    pub empirical_max: f64,
    pub slack: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Master check of the three per-operator bounds on seeded samples.
/// SiLU is reported per unit `|x|` so one row covers the pointwise check.
pub fn verify_bounds(
    cfg: &NlsConfig,
    dims: &[usize],
    samples: usize,
    seed: u64,
) -> Vec<BoundCheckRow> {
    #[derive(Clone, Copy)]
    enum Cell {
        Softmax(usize),
        Silu,
        Rms(usize),
    }
    let mut cells = Vec::new();
    for &d in dims {
        cells.push(Cell::Softmax(d));
    }
    cells.push(Cell::Silu);
    for &d in dims {
        cells.push(Cell::Rms(d));
    }

    map_parallel(&cells, |cell| match *cell {
        Cell::Softmax(d) => {
            let batch = sample_softmax_batch(d, samples, seed, cfg.h);
            let grid = input_grid(cfg.h);
            let mut worst: f64 = 0.0;
            for z in &batch {
                let want = baselines::oracle_softmax(z);
                let got = nlsops::nls_softmax(&quantize_on(z, grid), cfg).expect("total");
                for i in 0..d {
                    worst = worst.max((got[i].to_f64() - want[i]).abs() / want[i]);
                }
            }
            row("softmax", d, bound_softmax(cfg), slack_softmax(cfg), worst)
        }
        Cell::Silu => {
            let batch = sample_silu_batch(samples, seed, cfg.h);
            let grid = input_grid(cfg.h.max(5.0));
            let mut worst: f64 = 0.0;
            for &x in &batch {
                if x == 0.0 {
                    continue;
                }
                let xq = quantize(x, grid).value;
                let got = nlsops::nls_silu(xq, cfg).expect("total").to_f64();
                worst = worst.max((got - baselines::oracle_silu(x)).abs() / x.abs());
            }
            let e = cfg.eps_exp();
            let per_unit = 2.0 * e / (1.0 - e) + cfg.delta();
            row("silu", 1, per_unit, slack_silu_per_unit(cfg), worst)
        }
        Cell::Rms(d) => {
            let batch = sample_rms_batch(d, samples, seed);
            let grid = QGrid::signed(8, -5);
            let mut worst: f64 = 0.0;
            for x in &batch {
                let want = baselines::oracle_rmsnorm(x, DEFAULT_RMS_EPS);
                let got =
                    nlsops::nls_rmsnorm(&quantize_on(x, grid), DEFAULT_RMS_EPS, cfg).expect("total");
                for i in 0..d {
                    worst = worst.max((got[i].to_f64() - want[i]).abs() / want[i].abs());
                }
            }
            row("rmsnorm", d, bound_rms(d, cfg), slack_rms(d, DEFAULT_RMS_EPS, cfg), worst)
        }
    })
}

fn row(operator: &str, d: usize, bound: f64, slack: f64, empirical_max: f64) -> BoundCheckRow {
    BoundCheckRow {
        operator: operator.to_string(),
        d,
        bound,
        empirical_max,
        slack,
        margin: bound + slack - empirical_max,
        pass: empirical_max <= bound + slack,
    }
}

// ---------------------------------------------------------------------------
// bounded parallel map with deterministic reduction order

fn thread_cap() -> usize {
    std::env::var("NLSPIKE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn map_parallel<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let workers = thread_cap().min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let f = &f;
                let next = &next;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= items.len() {
                            break;
                        }
                        local.push((i, f(&items[i])));
                    }
                    local
                })
            })
            .collect();
        for handle in handles {
            for (i, v) in handle.join().expect("sweep worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every cell computed")).collect()
}
