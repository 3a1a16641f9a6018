//! `dartsketch`: constants, predictions and Monte Carlo experiments for
//! dartboard sketches.
//!
//! Exit codes: 0 success, 1 experiment failure (merge counterexample or a
//! table row outside tolerance), 2 usage error.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dartsketch::analysis::{
    arv_factor, kappa_curtain, kappa_loglog, kappa_pcsa, mvp_curtain, mvp_table, predict, MvpUnit,
    Scheme,
};
use dartsketch::harness::{
    empirical_kappa, merge_check, run_table3, run_trials, ExperimentConfig, HistogramSpec,
    SplitMode, TrialStats,
};
use dartsketch::Error;
use output::{num, opt, Format, Records};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "dartsketch", version, about = "Dartboard cardinality sketches: constants, predictions and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// κ, asymptotic relative variance factor and MVP for base q
    Constants {
        #[arg(long, default_value = "2.91", value_parser = parse_q)]
        q: f64,
        #[arg(long, default_value_t = 2)]
        a: u32,
        #[arg(long, default_value_t = 1)]
        h: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Predicted relative variance and standard error for m columns
    Predict {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        m: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo run: estimate statistics over independent trials
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// λ times the mean final free area, for λ elements per column
    KappaEmpirical {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Elements per column
        #[arg(long, default_value = "200", value_parser = parse_positive)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        smoothing: Option<bool>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sketch shards of a stream, merge them, compare with the whole stream
    MergeCheck {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        shards: usize,
        #[arg(long, default_value = "10000", value_parser = parse_count)]
        lambda: u64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, value_enum, default_value_t = Split::Random)]
        split: Split,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "DARTSKETCH_THREADS")]
        threads: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Histogram of λ̂/λ over the trials
    Distribution {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Limiting memory-variance products of well-known sketches
    Table1 {
        /// log2 of the universe size
        #[arg(long, default_value_t = 64)]
        log2u: u32,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// HLL, Martingale LogLog and Martingale Curtain at 128 and 1200 bits
    Table3 {
        #[arg(long, default_value = "100000", value_parser = parse_count)]
        lambda: u64,
        #[arg(long, default_value = "10000", value_parser = parse_count)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Allowed relative deviation from the reference variances; defaults
        /// to 0.15 at 10^4 trials, widened by sqrt(10^4/trials) below that
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, env = "DARTSKETCH_THREADS")]
        threads: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeName {
    Hll,
    #[value(alias = "mpcsa")]
    Pcsa,
    #[value(alias = "mll", alias = "mloglog")]
    Loglog,
    #[value(alias = "mmincount")]
    Mincount,
    #[value(alias = "mcurtain")]
    Curtain,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, value_enum)]
    scheme: SchemeName,
    /// Base; accepts `e`. Defaults to 2, or 2.91 for Curtain
    #[arg(long, value_parser = parse_q)]
    q: Option<f64>,
    #[arg(long, default_value_t = 2)]
    a: u32,
    #[arg(long, default_value_t = 1)]
    h: u32,
    /// Hash values kept per MinCount bucket
    #[arg(long, default_value_t = 1)]
    k: u32,
}

impl SchemeArgs {
    fn scheme(&self) -> Scheme {
        match self.scheme {
            SchemeName::Hll => Scheme::Hll,
            SchemeName::Pcsa => Scheme::MartingalePcsa { q: self.q.unwrap_or(2.0) },
            SchemeName::Loglog => Scheme::MartingaleLogLog { q: self.q.unwrap_or(2.0) },
            SchemeName::Mincount => Scheme::MartingaleMinCount { k: self.k },
            SchemeName::Curtain => Scheme::MartingaleCurtain {
                q: self.q.unwrap_or(2.91),
                a: self.a,
                h: self.h,
            },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    m: usize,
    #[arg(long, value_parser = parse_count)]
    lambda: u64,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sketch bit budget; keeps martingale estimates in a 14-bit float
    #[arg(long)]
    budget_bits: Option<u32>,
    /// Force column offsets on or off (default: on iff q >= 3)
    #[arg(long)]
    smoothing: Option<bool>,
    /// Insert every element this many times
    #[arg(long, default_value_t = 1)]
    copies: u32,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    #[arg(long, default_value_t = 0.0)]
    hist_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    hist_hi: f64,
    #[arg(long, env = "DARTSKETCH_THREADS")]
    threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            budget_bits: self.budget_bits,
            smoothing: self.smoothing,
            copies: self.copies,
            histogram: HistogramSpec {
                lo: self.hist_lo,
                hi: self.hist_hi,
                bins: self.bins,
            },
            threads: self.threads,
            ..ExperimentConfig::new(self.scheme.scheme(), self.m, self.lambda, self.trials, self.seed)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Random,
    RoundRobin,
}

fn parse_q(s: &str) -> Result<f64, String> {
    let q = if s == "e" {
        std::f64::consts::E
    } else {
        s.parse::<f64>().map_err(|e| e.to_string())?
    };
    if q > 1.0 && q.is_finite() {
        Ok(q)
    } else {
        Err(format!("base q must be a finite real > 1, got {s}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err(format!("expected a positive number, got {s}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Non-negative integer, also written like `1e5`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) => Ok(x as u64),
        _ => Err(format!("expected a non-negative integer, got {s}")),
    }
}

enum Failure {
    Usage(String),
    Experiment(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) | Error::Mismatch(_) => Failure::Usage(e.to_string()),
            other => Failure::Experiment(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Experiment(format!("cannot write output: {e}"))
    }
}

fn scheme_values(s: Scheme) -> Vec<Value> {
    let (q, a, h, k) = match s {
        Scheme::Hll => (Some(2.0), None, None, None),
        Scheme::MartingalePcsa { q } | Scheme::MartingaleLogLog { q } => (Some(q), None, None, None),
        Scheme::MartingaleMinCount { k } => (None, None, None, Some(k)),
        Scheme::MartingaleCurtain { q, a, h } => (Some(q), Some(a), Some(h), None),
    };
    vec![
        Value::from(s.name()),
        opt(q),
        a.map_or(Value::Null, Value::from),
        h.map_or(Value::Null, Value::from),
        k.map_or(Value::Null, Value::from),
    ]
}

const SCHEME_COLUMNS: [&str; 5] = ["scheme", "q", "a", "h", "k"];

fn columns(extra: &[&'static str]) -> Vec<&'static str> {
    SCHEME_COLUMNS.iter().chain(extra).copied().collect()
}

fn stats_records(s: &TrialStats) -> Records {
    let mut r = Records::new(&columns(&[
        "m",
        "lambda",
        "trials",
        "quantized",
        "mean_estimate",
        "mean_ratio",
        "mean_ratio_sigma",
        "relvar",
        "stderr",
        "predicted_relvar",
        "v_mean",
        "v_ratio",
    ]));
    let mut row = scheme_values(s.scheme);
    row.extend([
        Value::from(s.m),
        Value::from(s.lambda),
        Value::from(s.trials),
        Value::from(s.quantized),
        num(s.mean_estimate),
        opt(s.mean_ratio),
        opt(s.mean_ratio_sigma),
        opt(s.relvar),
        opt(s.stderr),
        num(s.predicted_relvar),
        opt(s.v_mean),
        opt(s.v_ratio),
    ]);
    r.push(row);
    r
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (records, out, failure) = match cli.command {
        Command::Constants { q, a, h, out } => {
            // validates a and h
            dartsketch::sketches::CurtainParams::new(q, a, h, 1)?;
            let mut r = Records::new(&[
                "q",
                "a",
                "h",
                "kappa_pcsa",
                "kappa_loglog",
                "kappa_curtain",
                "arv_pcsa",
                "arv_loglog",
                "arv_curtain",
                "mvp_curtain",
            ]);
            let (kp, kl, kc) = (kappa_pcsa(q), kappa_loglog(q), kappa_curtain(q, a, h));
            r.push(vec![
                num(q),
                Value::from(a),
                Value::from(h),
                num(kp),
                num(kl),
                num(kc),
                num(arv_factor(kp)),
                num(arv_factor(kl)),
                num(arv_factor(kc)),
                num(mvp_curtain(q, a, h)),
            ]);
            (r, out, None)
        }
        Command::Predict { scheme, m, out } => {
            let s = scheme.scheme();
            let p = predict(s, m)?;
            let mut r = Records::new(&columns(&["m", "relvar", "stderr"]));
            let mut row = scheme_values(s);
            row.extend([Value::from(m), num(p.relvar), num(p.stderr)]);
            r.push(row);
            (r, out, None)
        }
        Command::Simulate { run, out } => {
            let stats = run_trials(&run.config())?;
            eprintln!("finished {} trials in {:.2}s", stats.trials, stats.wall_time_secs);
            (stats_records(&stats), out, None)
        }
        Command::Distribution { run, out } => {
            let stats = run_trials(&run.config())?;
            let mut r = Records::new(&["bin_left", "bin_right", "count"]);
            match &stats.histogram {
                Some(h) => {
                    for (i, c) in h.counts.iter().enumerate() {
                        let (lo, hi) = h.bin_edges(i);
                        r.push(vec![num(lo), num(hi), Value::from(*c)]);
                    }
                }
                None => return Err(Failure::Usage("λ must be at least 1 for a distribution".into())),
            }
            (r, out, None)
        }
        Command::KappaEmpirical {
            scheme,
            m,
            lambda,
            trials,
            seed,
            smoothing,
            out,
        } => {
            let s = scheme.scheme();
            let k = empirical_kappa(s, m, lambda, trials, seed, smoothing)?;
            let mut r = Records::new(&columns(&["m", "lambda_per_column", "trials", "kappa", "sigma", "closed_form"]));
            let mut row = scheme_values(s);
            let closed = match s {
                Scheme::MartingaleMinCount { k } => Some(k as f64 * lambda / (lambda + 1.0)),
                Scheme::Hll => Some(kappa_loglog(2.0)),
                other => other.kappa(),
            };
            row.extend([Value::from(m), num(lambda), Value::from(trials), num(k.kappa), num(k.sigma), opt(closed)]);
            r.push(row);
            (r, out, None)
        }
        Command::MergeCheck {
            scheme,
            m,
            shards,
            lambda,
            trials,
            split,
            seed,
            threads,
            out,
        } => {
            let s = scheme.scheme();
            let split = match split {
                Split::Random => SplitMode::Random,
                Split::RoundRobin => SplitMode::RoundRobin,
            };
            let report = in_threads(threads, || merge_check(s, m, shards, lambda, trials, split, seed))??;
            let mut r = Records::new(&columns(&["m", "shards", "split", "trials", "passed", "counterexample"]));
            let mut row = scheme_values(s);
            row.extend([
                Value::from(m),
                Value::from(shards),
                Value::from(match split {
                    SplitMode::Random => "random",
                    SplitMode::RoundRobin => "round-robin",
                }),
                Value::from(report.trials),
                Value::from(report.passed),
                report.counterexample.clone().map_or(Value::Null, Value::from),
            ]);
            r.push(row);
            let failure = report.counterexample.map(|c| format!("merge counterexample: {c}"));
            (r, out, failure)
        }
        Command::Table1 { log2u, out } => {
            let mut r = Records::new(&["sketch", "mergeable", "coefficient", "unit", "mvp"]);
            for e in mvp_table(log2u)? {
                let unit = match e.unit {
                    MvpUnit::LogU => "log2 U",
                    MvpUnit::LogLogU => "log2 log2 U",
                    MvpUnit::Constant => "1",
                };
                r.push(vec![
                    Value::from(e.sketch),
                    Value::from(e.mergeable),
                    num(e.coefficient),
                    Value::from(unit),
                    num(e.value),
                ]);
            }
            (r, out, None)
        }
        Command::Table3 {
            lambda,
            trials,
            seed,
            tolerance,
            threads,
            out,
        } => {
            if trials == 0 {
                return Err(Failure::Usage("trials must be at least 1".into()));
            }
            let tol = tolerance.unwrap_or_else(|| 0.15 * (1e4 / trials as f64).sqrt().max(1.0));
            let results = run_table3(lambda, trials, seed, threads)?;
            let mut r = Records::new(&columns(&[
                "budget_bits",
                "m",
                "lambda",
                "trials",
                "relvar",
                "reference_relvar",
                "relative_deviation",
                "predicted_relvar",
                "reference_prediction",
                "stderr",
                "mean_ratio",
                "within_tolerance",
            ]));
            let mut outside = Vec::new();
            for t in &results {
                let ok = t.relative_deviation.abs() <= tol;
                if !ok {
                    outside.push(format!("{}(m={})", t.row.scheme.name(), t.row.m));
                }
                let mut row = scheme_values(t.row.scheme);
                row.extend([
                    Value::from(t.row.budget_bits),
                    Value::from(t.row.m),
                    Value::from(lambda),
                    Value::from(trials),
                    opt(t.stats.relvar),
                    num(t.row.reference_relvar),
                    num(t.relative_deviation),
                    num(t.stats.predicted_relvar),
                    num(t.row.reference_prediction),
                    opt(t.stats.stderr),
                    opt(t.stats.mean_ratio),
                    Value::from(ok),
                ]);
                r.push(row);
            }
            let failure = (!outside.is_empty())
                .then(|| format!("outside ±{:.0}% of the reference: {}", 100.0 * tol, outside.join(", ")));
            (r, out, failure)
        }
    };
    output::write(&records.render(out.format), out.output.as_deref())?;
    match failure {
        Some(msg) => Err(Failure::Experiment(msg)),
        None => Ok(()),
    }
}

fn in_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(job()),
        Some(n) => rayon_pool(n).map(|p| p.install(job)),
    }
}

fn rayon_pool(n: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Experiment(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
