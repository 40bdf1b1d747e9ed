//! `mart-lab`: batch front end for the exact engines.
//!
//! Exit codes: 0 pass, 1 usage or parse error, 2 verdict mismatch,
//! 3 indeterminate tail, 4 construction not applicable.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use martlab_core::analysis::{evaluate_example, witness_gap, AnalysisConfig, ExampleReport, GapReport, StoppingFamilyGenerator};
use martlab_core::examples::{ExampleDescriptor, ExampleName, ExampleParams};
use martlab_core::measure::{ExpectationPolicy, ExpectationResult};
use martlab_core::query::{run_query, ExpectQuery, ProcessSpec, QueryOptions, QueryOutput, QueryReport, Target, Value as QValue};
use martlab_core::rational::{fmt_rational, to_f64, Dual, Rational};
use martlab_core::report::Envelope;
use martlab_core::Error;

use config::{parse_grid, parse_q, pick, DepthFlag, FileConfig, Format, OutputFlags};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;
pub const EXIT_INAPPLICABLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mart-lab", version, about = "Exact optional-sampling laboratory")]
pub struct Cli {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an example and reproduce its expected verdict table
    Example(ExampleArgs),
    /// Evaluate expectations from query files or --process/--target
    Expect(ExpectArgs),
    /// Build the separating pair of stopping times on a process
    Witness(WitnessArgs),
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    /// cherny, cherny_randomized, random_walk, two_atom_nonadapted or nonnegative_control
    pub name: String,
    #[command(flatten)]
    pub depth: DepthFlag,
    /// Levels m of the uniform grid [default: 10000]
    #[arg(long)]
    pub levels: Option<u64>,
    /// Horizon H of generative examples [default: 1000]
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Divergence threshold for partial-sum certificates [default: 1000]
    #[arg(long)]
    pub threshold: Option<String>,
    /// Falsifier time grid, comma-separated [default: 0,1,2,3,5,8,13,21,34,50]
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<String>>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct ExpectArgs {
    /// JSON query files, each {"process": {...}, "target": {...}}
    pub specs: Vec<PathBuf>,
    /// Process: an example name or constant:VALUE
    #[arg(long, requires = "target", conflicts_with = "specs")]
    pub process: Option<String>,
    /// Target: value_at:T, abs_value_at:T, limit, limit_abs, liminf_abs,
    /// partial_sums:N1,N2, blowup:M1,M2, stopped:JSON or stopped_abs:JSON
    #[arg(long, requires = "process")]
    pub target: Option<String>,
    #[command(flatten)]
    pub depth: DepthFlag,
    /// Levels m of the uniform grid [default: 10000]
    #[arg(long)]
    pub levels: Option<u64>,
    /// Horizon H of generative examples [default: 1000]
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Divergence threshold for partial-sum certificates [default: 1000]
    #[arg(long)]
    pub threshold: Option<String>,
    /// Monte Carlo seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replications; 0 disables sampling [default: 0]
    #[arg(long)]
    pub reps: Option<u64>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    /// Process: an example name, constant:VALUE, or a JSON process file
    pub process: String,
    /// Epsilon in (0, 1) [default: 2/5]
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Horizon H for generative processes [default: 10000]
    #[arg(long)]
    pub horizon: Option<u64>,
    #[command(flatten)]
    pub depth: DepthFlag,
    /// Levels m of the uniform grid [default: 10000]
    #[arg(long)]
    pub levels: Option<u64>,
    /// Divergence threshold for partial-sum certificates [default: 1000]
    #[arg(long)]
    pub threshold: Option<String>,
    #[command(flatten)]
    pub output: OutputFlags,
}

/// Resolved settings echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub subject: Value,
    pub depth: u64,
    pub levels: u64,
    pub horizon: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Dual>,
    pub threshold: Dual,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    pub format: Format,
}

/// A finished command: report text, human summary, exit code.
struct Outcome {
    report: String,
    summary: Vec<String>,
    code: i32,
}

struct Failure {
    code: i32,
    message: String,
    /// Error report for indeterminate or inapplicable outcomes.
    report: Option<String>,
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure { code: EXIT_USAGE, message, report: None }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::UnknownAtom(_) => EXIT_USAGE,
        Error::IndeterminateTail(_) | Error::ZeroMassBlock(_) => EXIT_INDETERMINATE,
        Error::NotApplicable(_)
        | Error::PreconditionFailed(_)
        | Error::NotTerminating
        | Error::MissingUniform
        | Error::Unsupported(_) => EXIT_INAPPLICABLE,
    }
}

#[derive(Serialize)]
struct ErrorResult {
    status: &'static str,
    message: String,
}

fn fail(e: Error, cfg: &RunConfig) -> Failure {
    let code = exit_code(&e);
    let message = e.to_string();
    let report = (code != EXIT_USAGE).then(|| render(cfg, &ErrorResult { status: e.kind(), message: message.clone() }, None));
    Failure { code, message, report: report.and_then(Result::ok) }
}

fn render<T: Serialize>(cfg: &RunConfig, result: &T, csv: Option<Result<String, String>>) -> Result<String, String> {
    match cfg.format {
        Format::Json => Envelope::new(cfg.command, cfg, result).to_json().map_err(|e| e.to_string()),
        Format::Csv => match csv {
            Some(table) => table,
            None => {
                let v = serde_json::to_value(result).map_err(|e| e.to_string())?;
                output::csv_table(&["field", "exact", "approx"], &output::flatten(&v))
            }
        },
    }
}

/// Parses `args` and runs the command, writing the report to `--out` or
/// `stdout` and the summary to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            if code == EXIT_PASS {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let (out, result) = match &cli.command {
        Command::Example(a) => (pick(a.output.out.clone(), file.out.clone(), PathBuf::new()), cmd_example(a, &file)),
        Command::Expect(a) => (pick(a.output.out.clone(), file.out.clone(), PathBuf::new()), cmd_expect(a, &file)),
        Command::Witness(a) => (pick(a.output.out.clone(), file.out.clone(), PathBuf::new()), cmd_witness(a, &file)),
    };
    let (report, summary, code) = match result {
        Ok(o) => (Some(o.report), o.summary, o.code),
        Err(f) => (f.report, vec![format!("error: {}", f.message)], f.code),
    };
    if let Some(report) = report {
        let written = if out.as_os_str().is_empty() {
            stdout.write_all(report.as_bytes())
        } else {
            output::write_atomic(&out, report.as_bytes())
        };
        if let Err(e) = written {
            let _ = writeln!(stderr, "error: cannot write report: {e}");
            return EXIT_USAGE;
        }
    }
    for line in summary {
        let _ = writeln!(stderr, "{line}");
    }
    code
}

fn threshold(flag: &Option<String>, file: &FileConfig) -> Result<Rational, String> {
    let s = pick(flag.clone(), file.threshold.clone(), config::DEFAULT_THRESHOLD.to_string());
    let t = parse_q("threshold", &s)?;
    if t <= Rational::from_integer(0.into()) {
        return Err("--threshold must be positive".into());
    }
    Ok(t)
}

fn params(depth: Option<u64>, levels: Option<u64>, horizon: Option<u64>, file: &FileConfig, default_h: u64) -> ExampleParams {
    ExampleParams {
        depth: pick(depth, file.depth, config::DEFAULT_DEPTH),
        levels: pick(levels, file.levels, config::DEFAULT_LEVELS),
        horizon: pick(horizon, file.horizon, default_h),
        ..ExampleParams::default()
    }
}

fn cmd_example(a: &ExampleArgs, file: &FileConfig) -> Result<Outcome, Failure> {
    let format = pick(a.output.format, file.format, Format::Json);
    let name: ExampleName = a.name.parse().map_err(|e: Error| e.to_string())?;
    let p = params(a.depth.depth, a.levels, a.horizon, file, config::DEFAULT_HORIZON);
    let thr = threshold(&a.threshold, file)?;
    let mut analysis = AnalysisConfig { policy: ExpectationPolicy::with_threshold(thr.clone()), ..AnalysisConfig::default() };
    let grid_items = a.grid.clone().or(file.grid.clone());
    if let Some(items) = &grid_items {
        analysis.generator = StoppingFamilyGenerator { grid: parse_grid(items)?, ..analysis.generator };
    }
    let cfg = RunConfig {
        command: "example",
        subject: Value::String(name.to_string()),
        depth: p.depth,
        levels: p.levels,
        horizon: p.horizon,
        epsilon: None,
        threshold: Dual::from(&thr),
        grid: Some(analysis.generator.grid.iter().map(fmt_rational).collect()),
        seed: None,
        reps: None,
        format,
    };
    let desc = ExampleDescriptor::with_params(name, p);
    desc.validate().map_err(|e| fail(e, &cfg))?;
    let report = evaluate_example(&desc, &analysis).map_err(|e| fail(e, &cfg))?;
    let summary = example_summary(&report);
    let csv = example_csv(&report);
    let text = render(&cfg, &report, Some(csv))?;
    Ok(Outcome { report: text, summary, code: if report.passed() { EXIT_PASS } else { EXIT_MISMATCH } })
}

fn example_summary(r: &ExampleReport) -> Vec<String> {
    let mut lines: Vec<String> = r.verdicts.iter().map(|v| format!("{}:{}", v.statement, v.verdict)).collect();
    if r.mismatches.is_empty() {
        lines.push(format!("{}: all expected verdicts reproduced", r.descriptor.name));
    } else {
        let m: Vec<String> = r.mismatches.iter().map(|s| s.to_string()).collect();
        lines.push(format!("{}: mismatch on {}", r.descriptor.name, m.join(", ")));
    }
    lines
}

fn example_csv(r: &ExampleReport) -> Result<String, String> {
    let rows: Vec<Vec<String>> = r
        .verdicts
        .iter()
        .map(|v| {
            let expected = r.expected.iter().find(|(s, _)| *s == v.statement).map(|(_, e)| e.to_string()).unwrap_or_default();
            let witness = v
                .witness
                .as_ref()
                .and_then(|w| serde_json::to_value(w).ok())
                .and_then(|w| w.get("kind").and_then(Value::as_str).map(str::to_string))
                .unwrap_or_default();
            vec![v.statement.to_string(), v.verdict.to_string(), expected, witness, v.suite.size.to_string()]
        })
        .collect();
    output::csv_table(&["statement", "verdict", "expected", "witness", "suite_size"], &rows)
}

fn cmd_expect(a: &ExpectArgs, file: &FileConfig) -> Result<Outcome, Failure> {
    let format = pick(a.output.format, file.format, Format::Json);
    let p = params(a.depth.depth, a.levels, a.horizon, file, config::DEFAULT_HORIZON);
    let thr = threshold(&a.threshold, file)?;
    let seed = pick(a.seed, file.seed, config::DEFAULT_SEED);
    let reps = pick(a.reps, file.reps, config::DEFAULT_REPS);
    let (queries, subject) = match (&a.process, &a.target) {
        (Some(proc_), Some(target)) => {
            let q = ExpectQuery {
                process: ProcessSpec::parse_short(proc_, &p).map_err(|e| e.to_string())?,
                target: Target::parse_short(target).map_err(|e| e.to_string())?,
            };
            (vec![q], serde_json::json!({"process": proc_, "target": target}))
        }
        _ if a.specs.is_empty() => return Err("give query files or --process with --target".to_string().into()),
        _ => {
            let mut qs = Vec::new();
            for path in &a.specs {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let q: ExpectQuery = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                qs.push(q);
            }
            (qs, Value::Array(a.specs.iter().map(|p| Value::String(p.display().to_string())).collect()))
        }
    };
    let cfg = RunConfig {
        command: "expect",
        subject,
        depth: p.depth,
        levels: p.levels,
        horizon: p.horizon,
        epsilon: None,
        threshold: Dual::from(&thr),
        grid: None,
        seed: Some(seed),
        reps: Some(reps),
        format,
    };
    let opts = QueryOptions { policy: ExpectationPolicy::with_threshold(thr), reps, seed };
    let reports: Vec<QueryReport> = queries.iter().map(|q| run_query(q, &opts)).collect::<Result<_, _>>().map_err(|e| fail(e, &cfg))?;
    let summary = reports.iter().enumerate().map(|(i, r)| format!("query {i}: {}", describe_output(&r.output))).collect();
    let csv = if format == Format::Csv { Some(expect_csv(&reports)) } else { None };
    let text = render(&cfg, &reports, csv)?;
    Ok(Outcome { report: text, summary, code: EXIT_PASS })
}

fn describe_output(o: &QueryOutput) -> String {
    match o {
        QueryOutput::Expectation { result, .. } => match result {
            ExpectationResult::Exact(v) => fmt_rational(v),
            ExpectationResult::Truncated { value, tail_bound } => {
                format!("{} (tail bound {})", fmt_rational(value), fmt_rational(tail_bound))
            }
            ExpectationResult::Divergent(c) => {
                format!("divergent: N={}, S={}", c.depth, to_f64(&c.partial_sum))
            }
        },
        QueryOutput::PartialSums { rows, .. } => {
            rows.iter().map(|r| format!("S_{}={}", r.n, fmt_rational(&r.partial_sum))).collect::<Vec<_>>().join(", ")
        }
        QueryOutput::Blowup { curve, .. } => format!("slope {:.4} over {} grid sizes", curve.slope, curve.points.len()),
        QueryOutput::WalkStopped(s) => format!("E[X_(tau^H)] = {} at H={}", qvalue(&s.truncated_mean), s.horizon),
    }
}

fn qvalue(v: &QValue) -> String {
    match v {
        QValue::Exact(d) => d.exact.clone(),
        QValue::Float(x) => x.to_string(),
    }
}

fn qapprox(v: &QValue) -> String {
    match v {
        QValue::Exact(d) => d.approx.to_string(),
        QValue::Float(x) => x.to_string(),
    }
}

fn output_kind(o: &QueryOutput) -> &'static str {
    match o {
        QueryOutput::Expectation { .. } => "expectation",
        QueryOutput::PartialSums { .. } => "partial_sums",
        QueryOutput::Blowup { .. } => "blowup",
        QueryOutput::WalkStopped(_) => "walk_stopped",
    }
}

fn expect_csv(reports: &[QueryReport]) -> Result<String, String> {
    let kinds: std::collections::BTreeSet<&str> = reports.iter().map(|r| output_kind(&r.output)).collect();
    if kinds.len() > 1 {
        return Err("csv output needs queries of one kind; use --format json".into());
    }
    let mut rows = Vec::new();
    let mut header: &[&str] = &[];
    for (i, r) in reports.iter().enumerate() {
        let q = i.to_string();
        match &r.output {
            QueryOutput::Expectation { result, engine } => {
                header = &["query", "engine", "kind", "n", "exact", "approx", "bound"];
                match result {
                    ExpectationResult::Exact(v) => {
                        rows.push(vec![q.clone(), engine.to_string(), "exact".into(), String::new(), fmt_rational(v), to_f64(v).to_string(), String::new()])
                    }
                    ExpectationResult::Truncated { value, tail_bound } => rows.push(vec![
                        q.clone(),
                        engine.to_string(),
                        "truncated".into(),
                        String::new(),
                        fmt_rational(value),
                        to_f64(value).to_string(),
                        fmt_rational(tail_bound),
                    ]),
                    ExpectationResult::Divergent(c) => {
                        for (n, s) in &c.growth_samples {
                            rows.push(vec![q.clone(), engine.to_string(), "divergent".into(), n.to_string(), fmt_rational(s), to_f64(s).to_string(), fmt_rational(&c.threshold)]);
                        }
                    }
                }
                if let Some(mc) = &r.monte_carlo {
                    rows.push(vec![
                        q.clone(),
                        mc.engine.to_string(),
                        "estimate".into(),
                        mc.estimate.n.to_string(),
                        String::new(),
                        mc.estimate.mean.to_string(),
                        mc.estimate.half_width.to_string(),
                    ]);
                }
            }
            QueryOutput::PartialSums { rows: sums, .. } => {
                header = &["query", "n", "partial_sum", "approx"];
                for s in sums {
                    rows.push(vec![q.clone(), s.n.to_string(), fmt_rational(&s.partial_sum), to_f64(&s.partial_sum).to_string()]);
                }
            }
            QueryOutput::Blowup { curve, .. } => {
                header = &["query", "m", "value", "approx", "ln_m", "slope"];
                for p in &curve.points {
                    let v = p.value.point();
                    rows.push(vec![q.clone(), p.m.to_string(), fmt_rational(v), to_f64(v).to_string(), p.ln_m.to_string(), curve.slope.to_string()]);
                }
            }
            QueryOutput::WalkStopped(s) => {
                header = &["query", "engine", "horizon", "stopped_mass", "stopped_mean", "truncated_mean", "truncated_mean_approx"];
                rows.push(vec![
                    q.clone(),
                    s.engine.to_string(),
                    s.horizon.to_string(),
                    qvalue(&s.stopped_mass),
                    qvalue(&s.stopped_mean),
                    qvalue(&s.truncated_mean),
                    qapprox(&s.truncated_mean),
                ]);
            }
        }
    }
    output::csv_table(header, &rows)
}

fn cmd_witness(a: &WitnessArgs, file: &FileConfig) -> Result<Outcome, Failure> {
    let format = pick(a.output.format, file.format, Format::Json);
    let p = params(a.depth.depth, a.levels, a.horizon, file, config::DEFAULT_WITNESS_HORIZON);
    let thr = threshold(&a.threshold, file)?;
    let eps_text = pick(a.epsilon.clone(), file.epsilon.clone(), config::DEFAULT_EPSILON.to_string());
    let eps = parse_q("epsilon", &eps_text)?;
    let spec = if std::path::Path::new(&a.process).is_file() {
        let text = std::fs::read_to_string(&a.process).map_err(|e| format!("{}: {e}", a.process))?;
        serde_json::from_str::<ProcessSpec>(&text).map_err(|e| format!("{}: {e}", a.process))?
    } else {
        ProcessSpec::parse_short(&a.process, &p).map_err(|e| e.to_string())?
    };
    let cfg = RunConfig {
        command: "witness",
        subject: Value::String(a.process.clone()),
        depth: p.depth,
        levels: p.levels,
        horizon: p.horizon,
        epsilon: Some(Dual::from(&eps)),
        threshold: Dual::from(&thr),
        grid: None,
        seed: None,
        reps: None,
        format,
    };
    let (model, _) = spec.build().map_err(|e| fail(e, &cfg))?;
    let policy = ExpectationPolicy::with_threshold(thr);
    let report: GapReport = witness_gap(&model, &eps, p.horizon, &policy).map_err(|e| fail(e, &cfg))?;
    let summary = vec![format!(
        "E[M_tau]={} E[M_sigma2]={} gap={} bound={} success={}",
        quantity(&report.e_m_tau),
        quantity(&report.e_m_sigma2),
        quantity(&report.gap),
        fmt_rational(&report.bound),
        report.success
    )];
    let text = render(&cfg, &report, None)?;
    Ok(Outcome { report: text, summary, code: if report.success { EXIT_PASS } else { EXIT_MISMATCH } })
}

fn quantity(q: &martlab_core::Quantity) -> String {
    match q {
        martlab_core::Quantity::Exact(r) => fmt_rational(r.point()),
        martlab_core::Quantity::Float { value, .. } => format!("{value:.6}"),
    }
}
