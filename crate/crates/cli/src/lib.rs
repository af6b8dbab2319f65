//! Command-line front-end. [`run`] parses arguments, writes the report and
//! returns the process exit code: 0 on success, 1 when a verification check
//! or a computation fails, 2 on usage errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rkhs_stability::exact::rational_string;
use rkhs_stability::gram::{self, GramSpec};
use rkhs_stability::kernels::{self, KernelHandle, PChoice};
use rkhs_stability::lambda_bounds::{self, SearchOptions, SEARCH_K_CAP};
use rkhs_stability::sign_matrix::{self, SignMatrixSpec};
use rkhs_stability::stability::{self, ProbePoint, ReportDepth};
use rkhs_stability::verify::{self, VerifyHooks, VerifyOptions};
use rkhs_stability::{BigRational, Error};
use serde_json::{json, Value};

/// Largest `p` accepted by the tabulating commands.
pub const P_MAX_CAP: u32 = 1024;
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "rkhs-stability", version, about = "Norms of sign matrices, Gram matrices and kernel stability probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Add exact rational columns as `num/den`.
    #[arg(long)]
    exact: bool,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelName {
    CounterexampleV,
    CounterexampleS,
    StableSpline,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BlockSize {
    /// `p(h) = h`
    H,
    /// `p(h) = h²`
    H2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the verification suite.
    Verify {
        #[arg(long)]
        fail_fast: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Norms of the sign matrices V(n), n = 2^(2p+1).
    Norms {
        #[arg(long, default_value_t = 10)]
        p_max: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Norms of the Gram matrices M(n) = V Vᵀ.
    Gram {
        #[arg(long, default_value_t = 10)]
        p_max: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Upper bounds on λ(k).
    Lambda {
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        /// Random samples per k.
        #[arg(long, alias = "budget", default_value_t = lambda_bounds::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Tabulate the Gram-family bounds λ(n(p)) instead.
        #[arg(long)]
        evidence: bool,
        #[arg(long, default_value_t = 100)]
        p_max: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// The bound sqrt(π)/sqrt(2 log2 n − 2) against the exact Gram ratio.
    Fig1 {
        #[arg(long, default_value_t = 30)]
        p_max: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Finite-horizon stability report for an infinite kernel matrix.
    KernelProbe {
        #[arg(value_enum)]
        kernel: KernelName,
        #[arg(long, default_value_t = 10)]
        blocks: u64,
        #[arg(long = "T", default_value_t = 800)]
        t: u64,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Block size schedule of the counterexample kernels.
        #[arg(long, value_enum, default_value = "h")]
        p_of_h: BlockSize,
        #[arg(long, default_value_t = stability::DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Formats like C's `%g` with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp) as usize, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rows sharing one column set, rendered as CSV or one JSON object per row.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write(&self, format: Format, w: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => {
                writeln!(w, "{}", self.columns.join(","))?;
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(csv_cell).collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
            Format::JsonLines => {
                for r in &self.rows {
                    let obj: serde_json::Map<String, Value> =
                        self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect();
                    writeln!(w, "{}", Value::Object(obj))?;
                }
            }
        }
        Ok(())
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => fmt_g(f),
            _ => n.to_string(),
        },
        Value::String(s) => csv_field(s),
        other => csv_field(&other.to_string()),
    }
}

fn float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn rational(x: &BigRational) -> Value {
    Value::String(rational_string(x))
}

fn big(x: impl ToString) -> Value {
    let s = x.to_string();
    match s.parse::<u64>() {
        Ok(v) => json!(v),
        Err(_) => Value::String(s),
    }
}

fn open_output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> std::result::Result<Box<dyn Write + 'a>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn check_p_max(p_max: u32) -> Outcome {
    if p_max == 0 || p_max > P_MAX_CAP {
        return Err(Failure::Usage(format!("--p-max must lie in 1..={P_MAX_CAP}")));
    }
    Ok(())
}

fn emit(table: &Table, out: &OutputArgs, stdout: &mut dyn Write) -> Outcome {
    let mut w = open_output(&out.output, stdout)?;
    table.write(out.format, &mut *w)?;
    w.flush()?;
    Ok(())
}

fn cmd_norms(p_max: u32, out: &OutputArgs, stdout: &mut dyn Write) -> Outcome {
    check_p_max(p_max)?;
    let mut cols = vec!["p", "n", "m", "l1_entrywise", "opnorm_inf1", "opnorm_asymptotic", "relative_error"];
    if out.exact {
        cols.push("ratio_exact");
    }
    let mut t = Table::new(cols);
    for p in 1..=p_max {
        let spec = SignMatrixSpec::new(p)?;
        let l1 = sign_matrix::entrywise_l1(&spec);
        let op = sign_matrix::opnorm_inf1_closed(&spec);
        let asym = sign_matrix::opnorm_inf1_asymptotic(&spec);
        let mut row = vec![
            json!(p),
            big(spec.rows_big()),
            json!(spec.m()),
            big(&l1),
            big(&op),
            asym.value.map(float).unwrap_or(Value::Null),
            float(sign_matrix::asymptotic_relative_error(&spec)),
        ];
        if out.exact {
            row.push(rational(&rkhs_stability::exact::ratio(&op, &l1)));
        }
        t.push(row);
    }
    emit(&t, out, stdout)
}

fn cmd_gram(p_max: u32, out: &OutputArgs, stdout: &mut dyn Write) -> Outcome {
    check_p_max(p_max)?;
    let mut cols = vec!["p", "n", "l1", "opnorm_inf1", "ratio", "ratio_asymptotic", "relative_deviation"];
    if out.exact {
        cols.push("ratio_exact");
    }
    let mut t = Table::new(cols);
    for p in 1..=p_max {
        let g = GramSpec::from_p(p)?;
        let r = gram::ratio(&g);
        let mut row = vec![
            json!(p),
            big(g.base().rows_big()),
            big(gram::l1_closed(&g)),
            big(gram::opnorm_inf1_value(&g)),
            float(r.value),
            float(r.asymptotic),
            float(r.relative_deviation),
        ];
        if out.exact {
            row.push(rational(&r.exact));
        }
        t.push(row);
    }
    emit(&t, out, stdout)
}

fn cmd_fig1(p_max: u32, out: &OutputArgs, stdout: &mut dyn Write) -> Outcome {
    check_p_max(p_max)?;
    let mut cols = vec!["p", "n", "fig1_bound", "gram_ratio_exact"];
    if out.exact {
        cols.push("gram_ratio_rational");
    }
    let mut t = Table::new(cols);
    for r in lambda_bounds::fig1_curve(p_max)? {
        let mut row = vec![json!(r.p), big(&r.n), float(r.bound), float(r.gram_ratio_value)];
        if out.exact {
            row.push(rational(&r.gram_ratio));
        }
        t.push(row);
    }
    emit(&t, out, stdout)
}

fn cmd_lambda(
    k_max: usize,
    samples: usize,
    seed: u64,
    evidence: Option<u32>,
    out: &OutputArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    if let Some(p_max) = evidence {
        check_p_max(p_max)?;
        if p_max < 3 {
            return Err(Failure::Usage("--p-max must be at least 3 with --evidence".into()));
        }
        let rep = lambda_bounds::lambda_vanishes_evidence(p_max)?;
        let mut cols = vec!["p", "n", "upper_bound"];
        if out.exact {
            cols.push("upper_bound_exact");
        }
        let mut t = Table::new(cols);
        for (p, exact, value) in &rep.rows {
            let mut row = vec![json!(p), big(SignMatrixSpec::new(*p)?.rows_big()), float(*value)];
            if out.exact {
                row.push(rational(exact));
            }
            t.push(row);
        }
        emit(&t, out, stdout)?;
        writeln!(
            stderr,
            "monotone non-increasing: {}; first p below 0.1: {}; first p below 0.01: {}",
            rep.monotone_non_increasing, rep.first_below_tenth, rep.first_below_hundredth
        )?;
        return Ok(());
    }
    if k_max == 0 || k_max > SEARCH_K_CAP {
        return Err(Failure::Usage(format!("--k-max must lie in 1..={SEARCH_K_CAP}")));
    }
    if samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let mut cols = vec!["k", "upper_bound", "method", "witness"];
    if out.exact {
        cols.push("upper_bound_exact");
    }
    let mut t = Table::new(cols);
    let opts = SearchOptions { samples, seed };
    for k in 1..=k_max {
        let r = lambda_bounds::lambda_upper_search(k, opts)?;
        let mut row = vec![
            json!(k),
            float(r.value()),
            json!(r.method.as_str()),
            json!(r.witness.family.describe()),
        ];
        if out.exact {
            row.push(rational(&r.upper_bound));
        }
        t.push(row);
    }
    emit(&t, out, stdout)
}

fn point_value(p: &ProbePoint, exact: bool) -> (Value, Value) {
    let e = if exact {
        p.exact.as_ref().map(rational).unwrap_or(Value::Null)
    } else {
        Value::Null
    };
    (float(p.value), e)
}

#[allow(clippy::too_many_arguments)]
fn cmd_kernel_probe(
    kernel: KernelName,
    blocks: u64,
    t: u64,
    alpha: f64,
    c: f64,
    p_of_h: BlockSize,
    seed: u64,
    out: &OutputArgs,
    stdout: &mut dyn Write,
) -> Outcome {
    let p_choice = match p_of_h {
        BlockSize::H => PChoice::Linear,
        BlockSize::H2 => PChoice::Quadratic,
    };
    let k: KernelHandle = match kernel {
        KernelName::CounterexampleV => kernels::counterexample_v(p_choice),
        KernelName::CounterexampleS => kernels::counterexample_s(p_choice),
        KernelName::StableSpline => kernels::stable_spline(alpha)?,
        KernelName::Constant => kernels::constant_kernel(c)?,
    };
    if blocks == 0 || blocks > 64 {
        return Err(Failure::Usage("--blocks must lie in 1..=64".into()));
    }
    if t == 0 || t > 1 << 16 {
        return Err(Failure::Usage("--T must lie in 1..=65536".into()));
    }
    let r = stability::stability_report(&k, ReportDepth { t_max: t, blocks, seed })?;

    let mut w = open_output(&out.output, stdout)?;
    match out.format {
        Format::Csv => {
            let mut tab = Table::new(vec!["series", "input", "index_kind", "index", "value", "exact"]);
            let mut series = |name: &str, input: &str, kind: &str, pts: &[ProbePoint]| {
                for p in pts {
                    let (v, e) = point_value(p, out.exact);
                    tab.push(vec![json!(name), json!(input), json!(kind), json!(p.index), v, e]);
                }
            };
            series("l1_partial", "", r.l1_kind.as_str(), &r.l1_partial);
            series("opnorm_partial", "", r.opnorm_kind.as_str(), &r.opnorm_partial);
            for ws in &r.witness_growth {
                series("witness", &ws.input, "T", &ws.points);
            }
            tab.push(vec![
                json!("verdict"),
                Value::Null,
                Value::Null,
                Value::Null,
                json!(r.verdict.as_str()),
                Value::Null,
            ]);
            tab.write(Format::Csv, &mut *w)?;
        }
        Format::JsonLines => {
            let params: serde_json::Map<String, Value> =
                r.params.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            writeln!(w, "{}", json!({"record": "kernel", "name": r.kernel, "params": params}))?;
            let mut points = |record: &str, input: Option<&str>, kind: &str, pts: &[ProbePoint]| -> io::Result<()> {
                for p in pts {
                    let (v, e) = point_value(p, true);
                    writeln!(
                        w,
                        "{}",
                        json!({"record": record, "input": input, "index_kind": kind, "index": p.index, "value": v, "exact": e})
                    )?;
                }
                Ok(())
            };
            points("l1_partial", None, r.l1_kind.as_str(), &r.l1_partial)?;
            points("opnorm_partial", None, r.opnorm_kind.as_str(), &r.opnorm_partial)?;
            for ws in &r.witness_growth {
                points("witness", Some(&ws.input), "T", &ws.points)?;
            }
            let witness_growth: Vec<Value> = r
                .witness_growth
                .iter()
                .map(|ws| json!({"input": ws.input, "class": ws.fit.class.as_str()}))
                .collect();
            writeln!(
                w,
                "{}",
                json!({
                    "record": "verdict",
                    "verdict": r.verdict.as_str(),
                    "l1_growth": r.l1_fit.class.as_str(),
                    "witness_growth": witness_growth,
                    "tail_bound": r.tail_bound.map(float),
                    "increment_exponent": r.increment_fit.map(|f| float(f.slope)),
                    "notes": r.notes,
                })
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(
    fail_fast: bool,
    seed: Option<u64>,
    output: &Option<PathBuf>,
    hooks: VerifyHooks,
    stdout: &mut dyn Write,
) -> Outcome {
    let mut w = open_output(output, stdout)?;
    let s = verify::run(VerifyOptions { fail_fast, hooks, seed });
    for l in &s.lines {
        writeln!(w, "{l}")?;
    }
    let passed = s.lines.iter().filter(|l| l.passed).count();
    write!(w, "{passed}/{} checks passed", s.lines.len() + s.skipped)?;
    if s.skipped > 0 {
        write!(w, ", {} skipped", s.skipped)?;
    }
    writeln!(w)?;
    w.flush()?;
    if s.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

/// Runs the command line `args` (including the program name) with the given
/// verification hooks.
pub fn run_with<I, S>(args: I, hooks: VerifyHooks, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Verify {
            fail_fast,
            seed,
            output,
        } => cmd_verify(*fail_fast, *seed, output, hooks, stdout),
        Command::Norms { p_max, out } => cmd_norms(*p_max, out, stdout),
        Command::Gram { p_max, out } => cmd_gram(*p_max, out, stdout),
        Command::Fig1 { p_max, out } => cmd_fig1(*p_max, out, stdout),
        Command::Lambda {
            k_max,
            samples,
            seed,
            evidence,
            p_max,
            out,
        } => cmd_lambda(*k_max, *samples, *seed, evidence.then_some(*p_max), out, stdout, stderr),
        Command::KernelProbe {
            kernel,
            blocks,
            t,
            alpha,
            c,
            p_of_h,
            seed,
            out,
        } => cmd_kernel_probe(*kernel, *blocks, *t, *alpha, *c, *p_of_h, *seed, out, stdout),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Verification) => 1,
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(args, VerifyHooks::default(), stdout, stderr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_formatting() {
        assert_eq!(fmt_g(0.886_226_925_452_758), "0.886227");
        assert_eq!(fmt_g(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_g(8.0 / 15.0), "0.533333");
        assert_eq!(fmt_g(171.0), "171");
        assert_eq!(fmt_g(9.999_999_9), "10");
        assert_eq!(fmt_g(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g(0.000_012_345_67), "1.23457e-05");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(0.0), "0");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("zero_padded(1,gram(p=1))"), "\"zero_padded(1,gram(p=1))\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
