use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use prefix_universal::attention::{
    assemble_prefix_tokens, build_universal_head, classical_head, default_m, export_prefix, import_prefix, lift,
    project, PrefixTokens,
};
use prefix_universal::bounds::{normalized_head_parameters, DimensionMode, SmoothnessSpec};
use prefix_universal::prefix::{approximate, sup_error_estimate, ApproximationReport, TargetFunction, BUILTIN_TARGETS};
use prefix_universal::rng;
use prefix_universal::seq2seq::{
    aggregate_r, build_seq2seq_transformer, psi_encode, reference_seq2seq, truncate, BuildMode, DigitConfig,
    SeqFunction, SequenceSample,
};
use prefix_universal::verify::{run_verify, Faults, Suite};
use prefix_universal::Error;

const APPROX_CSV_HELP: &str = "\
CSV columns: name,m,lambda,N,sup_error,mean_error,samples,seed,wall_time_ms
  sup_error and mean_error are the max and mean of |f(x) - head(x)| over
  `samples` uniform points; wall_time_ms is 0 unless --timing is given, so
  output is byte-identical for a given config and seed.";

const BOUNDS_CSV_HELP: &str = "\
CSV columns: epsilon,lambda,log10_N,m,L,C_H,C_R,f_sup,sigma,log10_lambda,permissive
  lambda is the kernel concentration and N the prefix length sufficient for
  accuracy epsilon with the normalized head; N is reported in log10 because
  it overflows any machine number.";

const SEQ_CSV_HELP: &str = "\
CSV columns: sample,stage,position,component,value
  stages: input, truncated, psi, contribution, r, r_ternary, output, reference.
  position and component are empty where they do not apply; r_ternary holds
  the exact aggregated scalar as a ternary digit string.";

#[derive(Parser)]
#[command(name = "prefix-ua", version, about = "Prefix-tuned universal attention heads: experiments and checks")]
struct Cli {
    /// Worker threads for data-parallel evaluation.
    #[arg(long, global = true, env = "PREFIX_UA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one prefix and report its approximation error.
    #[command(after_help = APPROX_CSV_HELP)]
    Approximate(ExperimentArgs),
    /// Grid of (lambda, N) runs, one CSV row each, sorted by (lambda, N).
    #[command(after_help = APPROX_CSV_HELP)]
    Sweep(ExperimentArgs),
    /// Table of sufficient (lambda, N) for a list of accuracies.
    #[command(after_help = BOUNDS_CSV_HELP)]
    Bounds(BoundsArgs),
    /// Run invariant suites and print a JSON summary.
    Verify(VerifyArgs),
    /// Evaluate the sequence-to-sequence construction and dump every stage.
    #[command(after_help = SEQ_CSV_HELP)]
    Seq2seqDemo(SeqArgs),
    /// Synthesize a prefix and write it as a JSON artifact.
    ExportPrefix(ExportArgs),
    /// Validate an artifact and optionally measure its error on a target.
    #[command(after_help = APPROX_CSV_HELP)]
    ImportPrefix(ImportArgs),
}

/// Experiment record; every field can also be set by a flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentConfig {
    target: Option<String>,
    m: usize,
    lambdas: Vec<f64>,
    ns: Vec<usize>,
    samples: usize,
    seed: u64,
    augmented: bool,
    timing: bool,
    out: Option<PathBuf>,
    prefix_out: Option<PathBuf>,
    report_out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            target: None,
            m: 2,
            lambdas: vec![32.0],
            ns: vec![1024],
            samples: 2048,
            seed: 0,
            augmented: true,
            timing: false,
            out: None,
            prefix_out: None,
            report_out: None,
        }
    }
}

#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin target: constant, identity, linear, vmf-bump, coordinate-max.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Kernel concentration(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Prefix length(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plain (non-augmented) head for exported prefixes.
    #[arg(long)]
    plain: bool,
    /// Record wall-clock time in the CSV.
    #[arg(long)]
    timing: bool,
    /// CSV output path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the synthesized prefix as a JSON artifact (approximate only).
    #[arg(long)]
    prefix_out: Option<PathBuf>,
    /// Write the reports as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Accuracies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.1,0.01,0.001,0.0001")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Take L and sup|f| from a builtin target instead of --l and --f-sup.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Harmonic-component constant; defaults to sup|f|.
    #[arg(long)]
    c_h: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_r: f64,
    #[arg(long, default_value_t = 1.0)]
    f_sup: f64,
    /// Allow m < 8 (results are flagged).
    #[arg(long)]
    permissive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    EigenvalueSign,
}

#[derive(Args)]
struct VerifyArgs {
    /// kernel, bounds, attention, prefix, seq2seq or all.
    #[arg(default_value = "all", value_parser = parse_suite)]
    suite: Suite,
    /// Deliberately break a quantity to check that the suites notice.
    #[arg(long)]
    inject_fault: Option<Fault>,
    /// Also write the JSON summary here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hybrid,
    Full,
}

#[derive(Args)]
struct SeqArgs {
    /// identity, mean or causal-mean.
    #[arg(long, default_value = "mean")]
    function: String,
    #[arg(long, default_value_t = 2)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    digits: usize,
    #[arg(long, value_enum, default_value = "hybrid")]
    mode: Mode,
    /// Prefix length of each synthesized head (full mode).
    #[arg(long, default_value_t = 8192)]
    n: usize,
    /// Kernel concentration of each synthesized head (full mode).
    #[arg(long, default_value_t = 2e4)]
    lambda: f64,
    /// Explicit sequence: elements separated by ';', coordinates by ','.
    #[arg(long)]
    sequence: Option<String>,
    /// Number of random sequences when --sequence is absent.
    #[arg(long, default_value_t = 4)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct ImportArgs {
    path: PathBuf,
    /// Measure the imported head's error on this builtin target.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 2048)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

type Res<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Schema(_) | Error::Encoding(_) => 2,
            Error::DegenerateInput(_)
            | Error::PoleSingularity
            | Error::NumericalFailure(_)
            | Error::PrecisionBudgetExceeded(_)
            | Error::InstanceTooLarge(_) => 3,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        usage(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        usage(format!("csv: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let r = match cli.command {
        Command::Approximate(a) => run_approximate(&a, false),
        Command::Sweep(a) => run_approximate(&a, true),
        Command::Bounds(a) => run_bounds(&a),
        Command::Verify(a) => run_verify_cmd(&a),
        Command::Seq2seqDemo(a) => run_seq2seq(&a),
        Command::ExportPrefix(a) => run_export(&a.exp),
        Command::ImportPrefix(a) => run_import(&a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(a: &ExperimentArgs) -> Res<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if a.target.is_some() {
        c.target = a.target.clone();
    }
    if let Some(m) = a.m {
        c.m = m;
    }
    if let Some(l) = &a.lambda {
        c.lambdas = l.clone();
    }
    if let Some(n) = &a.n {
        c.ns = n.clone();
    }
    if let Some(s) = a.samples {
        c.samples = s;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.augmented &= !a.plain;
    c.timing |= a.timing;
    for (dst, src) in [(&mut c.out, &a.out), (&mut c.prefix_out, &a.prefix_out), (&mut c.report_out, &a.report_out)] {
        if src.is_some() {
            *dst = src.clone();
        }
    }
    if c.lambdas.is_empty() || c.ns.is_empty() {
        return Err(usage("lambda and N lists must be non-empty"));
    }
    if c.samples < 1 {
        return Err(usage("samples must be >= 1"));
    }
    Ok(c)
}

fn target(name: Option<&str>, m: usize) -> Res<TargetFunction> {
    let name = name.ok_or_else(|| usage(format!("no target given; builtins: {}", BUILTIN_TARGETS.join(", "))))?;
    Ok(TargetFunction::builtin(name, m)?)
}

fn sink(path: Option<&Path>) -> Res<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Res<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn tokens_for(cp: &prefix_universal::attention::ControlPoints, augmented: bool) -> Res<(PrefixTokens, String)> {
    let tok = assemble_prefix_tokens(cp, default_m(cp.lambda, cp.len()), augmented)?;
    let head = build_universal_head(cp.m, tok.m_const, augmented)?;
    let json = export_prefix(&tok, &head)?;
    Ok((tok, json))
}

fn run_approximate(a: &ExperimentArgs, sweep: bool) -> Res<()> {
    let c = load_config(a)?;
    let f = target(c.target.as_deref(), c.m)?;
    let mut grid: Vec<(f64, usize)> = if sweep {
        c.lambdas.iter().flat_map(|&l| c.ns.iter().map(move |&n| (l, n))).collect()
    } else {
        vec![(c.lambdas[0], c.ns[0])]
    };
    grid.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    grid.dedup();

    let mut reports = Vec::new();
    let mut last = None;
    for (lambda, n) in grid {
        let (cp, mut r) = approximate(&f, n, lambda, c.samples, c.seed)?;
        if !c.timing {
            r.wall_time_ms = 0;
        }
        reports.push(r);
        last = Some(cp);
    }
    if let (Some(p), Some(cp), false) = (&c.prefix_out, &last, sweep) {
        fs::write(p, tokens_for(cp, c.augmented)?.1).map_err(|e| usage(format!("{}: {e}", p.display())))?;
    }
    let mut w = csv::Writer::from_writer(sink(c.out.as_deref())?);
    w.write_record(ApproximationReport::CSV_HEADER)?;
    for r in &reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    if let Some(p) = &c.report_out {
        write_json(p, &reports)?;
    }
    Ok(())
}

fn run_bounds(a: &BoundsArgs) -> Res<()> {
    let (l, f_sup) = match &a.target {
        Some(name) => {
            let f = TargetFunction::builtin(name, a.m)?;
            (f.spec.l, f.spec.f_sup)
        }
        None => (a.l, a.f_sup),
    };
    let spec = SmoothnessSpec::new(l, a.c_h.unwrap_or(if f_sup > 0.0 { f_sup } else { 1.0 }), a.c_r, f_sup)?;
    let mode = if a.permissive { DimensionMode::Permissive } else { DimensionMode::Strict };
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record([
        "epsilon",
        "lambda",
        "log10_N",
        "m",
        "L",
        "C_H",
        "C_R",
        "f_sup",
        "sigma",
        "log10_lambda",
        "permissive",
    ])?;
    for &eps in &a.eps {
        let p = normalized_head_parameters(eps, &spec, a.m, mode)?;
        w.write_record([
            format!("{eps:e}"),
            format!("{:e}", p.lambda.value),
            format!("{}", p.n.log10()),
            a.m.to_string(),
            format!("{:e}", spec.l),
            format!("{:e}", spec.c_h),
            format!("{:e}", spec.c_r),
            format!("{:e}", spec.f_sup),
            format!("{:e}", p.sigma),
            format!("{}", p.lambda.log10()),
            (p.n.permissive || p.lambda.permissive).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_verify_cmd(a: &VerifyArgs) -> Res<()> {
    let faults = Faults { eigenvalue_sign: matches!(a.inject_fault, Some(Fault::EigenvalueSign)) };
    let report = run_verify(a.suite, &faults);
    let text = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
    println!("{text}");
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure { code: 4, msg: format!("{} check(s) failed: {}", names.len(), names.join(", ")) })
    }
}

fn parse_sequence(s: &str, m: usize) -> Res<SequenceSample> {
    let elements = s
        .split(';')
        .map(|e| {
            e.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|err| usage(format!("bad coordinate {v:?}: {err}"))))
                .collect::<Res<Vec<f64>>>()
        })
        .collect::<Res<Vec<_>>>()?;
    Ok(SequenceSample::new(m, elements)?)
}

fn run_seq2seq(a: &SeqArgs) -> Res<()> {
    use rand::Rng;
    let cfg = DigitConfig::new(a.digits)?;
    let f = SeqFunction::builtin(&a.function, a.m)?;
    let mode = match a.mode {
        Mode::Hybrid => BuildMode::Hybrid,
        Mode::Full => BuildMode::Full,
    };
    let samples = match &a.sequence {
        Some(s) => vec![parse_sequence(s, a.m)?],
        None => {
            let mut r = rng::rng(rng::stage(a.seed, "sequences"));
            (0..a.count)
                .map(|_| {
                    SequenceSample::new(a.m, (0..a.t).map(|_| (0..=a.m).map(|_| r.gen::<f64>()).collect()).collect())
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let t = samples[0].t;
    let stack = build_seq2seq_transformer(&f, t, a.m, &cfg, a.n, a.lambda, mode)?;

    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(["sample", "stage", "position", "component", "value"])?;
    for (si, s) in samples.iter().enumerate() {
        let mut row = |stage: &str, pos: Option<usize>, comp: Option<usize>, value: String| {
            let o = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
            w.write_record([si.to_string(), stage.to_string(), o(pos), o(comp), value])
        };
        for (i, e) in s.elements.iter().enumerate() {
            for (p, &x) in e.iter().enumerate() {
                row("input", Some(i), Some(p), format!("{x:e}"))?;
                row("truncated", Some(i), Some(p), format!("{:e}", truncate(x, &cfg)?))?;
                row("psi", Some(i), Some(p), format!("{:e}", psi_encode(x, &cfg)?))?;
            }
        }
        let trace = stack.trace(s)?;
        for (i, v) in trace.contributions.iter().enumerate() {
            row("contribution", Some(i), None, format!("{v:e}"))?;
        }
        for (i, v) in trace.r.iter().enumerate() {
            row("r", Some(i), None, format!("{v:e}"))?;
        }
        row("r_ternary", None, None, aggregate_r(s, &cfg)?.ternary_string())?;
        for (i, o) in trace.outputs.iter().enumerate() {
            for (c, v) in o.iter().enumerate() {
                row("output", Some(i), Some(c), format!("{v:e}"))?;
            }
        }
        for (i, o) in reference_seq2seq(&f, s, &cfg)?.iter().enumerate() {
            for (c, v) in o.iter().enumerate() {
                row("reference", Some(i), Some(c), format!("{v:e}"))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_export(a: &ExperimentArgs) -> Res<()> {
    let c = load_config(a)?;
    let out = c.out.clone().or(c.prefix_out.clone()).ok_or_else(|| usage("export-prefix needs --out"))?;
    let f = target(c.target.as_deref(), c.m)?;
    let (cp, _) = approximate(&f, c.ns[0], c.lambdas[0], 1, c.seed)?;
    fs::write(&out, tokens_for(&cp, c.augmented)?.1).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct ImportSummary {
    d: usize,
    m: usize,
    lambda: f64,
    #[serde(rename = "N")]
    n: usize,
    m_const: f64,
    augmented: bool,
}

fn run_import(a: &ImportArgs) -> Res<()> {
    let text = fs::read_to_string(&a.path).map_err(|e| usage(format!("{}: {e}", a.path.display())))?;
    let (tok, head) = import_prefix(&text)?;
    let Some(name) = &a.target else {
        let s = ImportSummary {
            d: tok.d,
            m: tok.m,
            lambda: tok.lambda,
            n: tok.len(),
            m_const: tok.m_const,
            augmented: tok.augmented,
        };
        println!("{}", serde_json::to_string_pretty(&s).map_err(|e| usage(e.to_string()))?);
        return Ok(());
    };
    let f = target(Some(name), tok.m)?;
    let (sup, mean) = sup_error_estimate(
        &f,
        |x| classical_head(&[lift(x, tok.augmented)], &tok, &head).and_then(|o| project(&o[0])),
        a.samples,
        rng::stage(a.seed, "eval"),
    )?;
    let r = ApproximationReport {
        name: f.name.clone(),
        m: tok.m,
        lambda: tok.lambda,
        n: tok.len(),
        sup_error: sup,
        mean_error: mean,
        samples: a.samples,
        seed: a.seed,
        wall_time_ms: 0,
    };
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(ApproximationReport::CSV_HEADER)?;
    w.write_record(r.csv_record())?;
    w.flush()?;
    Ok(())
}
