//! Command-line experiment runner and artifact emitter.
//!
//! Exit codes: 0 success / all bounds pass, 1 bound failure, 2 usage error,
//! 3 I/O error. `NLSPIKE_THREADS` caps sweep parallelism.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    self, reports_to_csv, reports_to_json, BoundCheckRow, ErrorReport, Operator,
};
use crate::baselines::BaselineKind;
use crate::nlsops::NlsConfig;
use crate::opcount::{count_ops, OpCountReport, OPCOUNT_CSV_HEADER};
use crate::pwlexp::{BelowRangePolicy, PwlExpTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BOUND_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "nlspike",
    version,
    about = "Integer-only spiking approximations of Softmax, SiLU and RMSNorm: benchmarks, bound checks, op counts and LUT artifacts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Benchmark one operator against its baselines across dimensions
    BenchOp(BenchOpArgs),
    /// Sweep the clipping half-interval H for one operator
    SweepH(SweepHArgs),
    /// Verify the per-operator error bounds on seeded samples
    VerifyBounds(VerifyBoundsArgs),
    /// Count MAC/AC/shift operations per operator and window length
    Opcount(OpcountArgs),
    /// Emit (or inspect) the exponential lookup table binary
    EmitLut(EmitLutArgs),
}

/// Kernel configuration shared by every command; defaults are the
/// recommended setting.
#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Clipping half-interval H
    #[arg(long, default_value_t = 5.0)]
    pub h: f64,
    /// Exponential table segment count K (power of two)
    #[arg(long, default_value_t = 64)]
    pub k: u32,
    /// Temporal window length T (power of two)
    #[arg(long, default_value_t = 16)]
    pub t: u32,
    /// Division population size L (power of two)
    #[arg(long, default_value_t = 256)]
    pub l: u32,
    /// CORDIC iteration count
    #[arg(long = "n-cordic", default_value_t = 8)]
    pub n_cordic: u32,
    /// Samples per sweep cell
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Master seed; every cell derives its own stream from it
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

impl KernelArgs {
    fn config(&self) -> Result<NlsConfig, String> {
        NlsConfig::new(self.h, self.k, self.t, self.l, self.n_cordic).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Args, Debug)]
pub struct BenchOpArgs {
    /// Operator to benchmark: softmax | silu | rmsnorm
    #[arg(long)]
    pub operator: String,
    /// Comma-separated dimensions
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128, 256])]
    pub dims: Vec<usize>,
    /// Baseline kinds to include (defaults to the operator's standard set)
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Args, Debug)]
pub struct SweepHArgs {
    /// Operator to sweep: silu | softmax
    #[arg(long)]
    pub operator: String,
    /// Half-interval values to sweep
    #[arg(long, value_delimiter = ',', default_values_t = [3.0f64, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])]
    pub h_values: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Args, Debug)]
pub struct VerifyBoundsArgs {
    /// Dimensions checked for softmax and rmsnorm
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128, 256])]
    pub dims: Vec<usize>,
    /// Write the verification table as CSV
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Negative-control hook: corrupt one table entry before verifying
    #[arg(long, hide = true)]
    pub tamper_table: bool,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Args, Debug)]
pub struct OpcountArgs {
    /// Operator to count (default: all three)
    #[arg(long)]
    pub operator: Option<String>,
    /// Window lengths to tabulate
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4])]
    pub t_values: Vec<u32>,
    /// Dimension of the counted evaluation
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Args, Debug)]
pub struct EmitLutArgs {
    /// Destination file for the table binary
    #[arg(long)]
    pub output: PathBuf,
    /// After writing, load the file back, check it is bit-identical, and
    /// print the header and knots
    #[arg(long)]
    pub inspect: bool,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

/// Entry point used by both the binary and the integration tests.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::BenchOp(args) => cmd_bench_op(args),
        Command::SweepH(args) => cmd_sweep_h(args),
        Command::VerifyBounds(args) => cmd_verify_bounds(args),
        Command::Opcount(args) => cmd_opcount(args),
        Command::EmitLut(args) => cmd_emit_lut(args),
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn write_output(path: Option<&PathBuf>, payload: &str) -> i32 {
    match path {
        Some(p) => match std::fs::write(p, payload) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", p.display());
                EXIT_IO
            }
        },
        None => {
            print!("{payload}");
            EXIT_OK
        }
    }
}

fn parse_kinds(op: Operator, names: Option<&[String]>) -> Result<Vec<BaselineKind>, String> {
    match names {
        None => Ok(BaselineKind::for_operator(op.tag())),
        Some(names) => names
            .iter()
            .map(|n| BaselineKind::parse(n).ok_or_else(|| format!("unknown baseline kind `{n}`")))
            .collect(),
    }
}

fn cmd_bench_op(args: BenchOpArgs) -> i32 {
    let Some(op) = Operator::parse(&args.operator) else {
        return usage_error(&format!("unknown operator `{}`", args.operator));
    };
    let kinds = match parse_kinds(op, args.kinds.as_deref()) {
        Ok(k) => k,
        Err(e) => return usage_error(&e),
    };
    let cfg = match args.kernel.config() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    if args.dims.is_empty() {
        return usage_error("at least one dimension is required");
    }
    let rows = analysis::run_error_sweep(op, &kinds, &args.dims, args.kernel.samples, args.kernel.seed, &cfg);
    let payload = match args.format {
        OutputFormat::Csv => reports_to_csv(&rows),
        OutputFormat::Json => reports_to_json(&rows),
        OutputFormat::Svg => render_error_svg(&rows, "d"),
    };
    let code = write_output(args.output.as_ref(), &payload);
    if code != EXIT_OK {
        return code;
    }
    for r in rows.iter().filter(|r| r.kind == "nls" && !r.pass) {
        eprintln!(
            "bound violated: operator={} d={} max_rel={} bound={} slack={}",
            r.operator,
            r.d,
            r.max_rel,
            r.bound.unwrap_or(f64::NAN),
            r.slack.unwrap_or(f64::NAN)
        );
        return EXIT_BOUND_FAILURE;
    }
    EXIT_OK
}

fn cmd_sweep_h(args: SweepHArgs) -> i32 {
    let Some(op) = Operator::parse(&args.operator) else {
        return usage_error(&format!("unknown operator `{}`", args.operator));
    };
    if op == Operator::Rmsnorm {
        return usage_error("the H sweep applies to silu and softmax");
    }
    if args.h_values.is_empty() {
        return usage_error("at least one H value is required");
    }
    let cfg = match args.kernel.config() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let rows =
        analysis::run_h_sensitivity(op, &args.h_values, args.kernel.samples, args.kernel.seed, &cfg);
    let payload = match args.format {
        OutputFormat::Csv => reports_to_csv(&rows),
        OutputFormat::Json => reports_to_json(&rows),
        OutputFormat::Svg => render_error_svg(&rows, "H"),
    };
    write_output(args.output.as_ref(), &payload)
}

fn cmd_verify_bounds(args: VerifyBoundsArgs) -> i32 {
    let mut cfg = match args.kernel.config() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    if args.tamper_table {
        cfg.exp_table.perturb_intercept(40, 4000);
    }
    if args.dims.is_empty() {
        return usage_error("at least one dimension is required");
    }
    let rows = analysis::verify_bounds(&cfg, &args.dims, args.kernel.samples, args.kernel.seed);
    println!("{:<9} {:>5} {:>13} {:>13} {:>13} {:>13}  result", "operator", "d", "bound", "empirical", "slack", "margin");
    for r in &rows {
        println!(
            "{:<9} {:>5} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e}  {}",
            r.operator,
            r.d,
            r.bound,
            r.empirical_max,
            r.slack,
            r.margin,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(path) = args.output.as_ref() {
        let mut csv = String::from("operator,d,bound,empirical_max,slack,margin,pass\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.operator, r.d, r.bound, r.empirical_max, r.slack, r.margin, r.pass
            ));
        }
        let code = write_output(Some(path), &csv);
        if code != EXIT_OK {
            return code;
        }
    }
    if rows.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_BOUND_FAILURE
    }
}

fn cmd_opcount(args: OpcountArgs) -> i32 {
    let ops: Vec<Operator> = match args.operator.as_deref() {
        None => vec![Operator::Rmsnorm, Operator::Silu, Operator::Softmax],
        Some(name) => match Operator::parse(name) {
            Some(op) => vec![op],
            None => return usage_error(&format!("unknown operator `{name}`")),
        },
    };
    let cfg = match args.kernel.config() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    if args.t_values.iter().any(|t| !t.is_power_of_two()) {
        return usage_error("window lengths must be powers of two");
    }
    let mut rows: Vec<OpCountReport> = Vec::new();
    for op in ops {
        for &t in &args.t_values {
            rows.push(count_ops(op, args.d, t, &cfg));
        }
    }
    let payload = match args.format {
        OutputFormat::Csv => {
            let mut out = String::from(OPCOUNT_CSV_HEADER);
            out.push('\n');
            for r in &rows {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
            out
        }
        OutputFormat::Json => serde_json::to_string_pretty(&rows).expect("serializable"),
        OutputFormat::Svg => return usage_error("opcount supports csv or json output"),
    };
    write_output(args.output.as_ref(), &payload)
}

fn cmd_emit_lut(args: EmitLutArgs) -> i32 {
    let table = match PwlExpTable::build(args.kernel.h, args.kernel.k, BelowRangePolicy::Zero) {
        Ok(t) => t,
        Err(e) => return usage_error(&e.to_string()),
    };
    let bytes = table.to_bytes();
    if let Err(e) = std::fs::write(&args.output, &bytes) {
        eprintln!("error: cannot write {}: {e}", args.output.display());
        return EXIT_IO;
    }
    if args.inspect {
        let loaded = match std::fs::read(&args.output) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("error: cannot read back {}: {e}", args.output.display());
                return EXIT_IO;
            }
        };
        if loaded != bytes {
            eprintln!("error: file does not round-trip bit-exactly");
            return EXIT_IO;
        }
        let reparsed = PwlExpTable::from_bytes(&loaded, BelowRangePolicy::Zero)
            .expect("just-written table parses");
        println!(
            "H={} K={} gamma={} bytes={}",
            reparsed.h(),
            reparsed.k(),
            reparsed.gamma(),
            bytes.len()
        );
        for i in 0..=reparsed.k() {
            println!("knot[{i}] = {}", reparsed.knot(i));
        }
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// svg rendering (diagnostic line charts, log10 error axis)

fn render_error_svg(rows: &[ErrorReport], x_field: &str) -> String {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let x = if x_field == "H" { r.h } else { r.d as f64 };
        let y = r.mean_abs.max(1e-12).log10();
        match series.iter_mut().find(|(name, _)| *name == r.kind) {
            Some((_, pts)) => pts.push((x, y)),
            None => series.push((r.kind.clone(), vec![(x, y)])),
        }
    }
    let title = rows
        .first()
        .map(|r| format!("{} mean absolute error vs {}", r.operator, x_field))
        .unwrap_or_else(|| "error sweep".to_string());
    svg_line_chart(&title, x_field, "log10(mean_abs)", &series)
}

const SVG_COLORS: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

fn svg_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let (w, h, ml, mb, mt, mr) = (640.0, 420.0, 70.0, 50.0, 40.0, 170.0);
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if (x1 - x0).abs() < 1e-12 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mb - mt);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        (ml + w - mr) / 2.0,
        title
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));
    for tick in 0..=4 {
        let xv = x0 + (x1 - x0) * tick as f64 / 4.0;
        let yv = y0 + (y1 - y0) * tick as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
            sx(xv),
            h - mb + 16.0,
            xv
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.2}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        ));
    }
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = SVG_COLORS[si % SVG_COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                sx(*x),
                sy(*y)
            ));
        }
        let ly = mt + 14.0 * si as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"11\">{name}</text>\n",
            w - mr + 10.0,
            ly,
            w - mr + 26.0,
            ly + 9.0
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_renderer_emits_series() {
        let rows = vec![ErrorReport {
            operator: "silu".into(),
            kind: "nls".into(),
            d: 1,
            h: 5.0,
            k: 64,
            t: 16,
            l: 256,
            samples: 10,
            seed: 7,
            mean_abs: 1e-3,
            max_abs: 2e-3,
            mean_rel: 0.0,
            max_rel: 0.0,
            bound: None,
            slack: None,
            pass: true,
        }];
        let svg = render_error_svg(&rows, "H");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("nls"));
    }
}
