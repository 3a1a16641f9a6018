//! Monte Carlo experiments: repeated trials over fresh hash seeds,
//! deterministic aggregation, empirical `κ` and merge checks.
//!
//! Trial `t` of an experiment hashes with seed `trial_seed(master_seed, t)`
//! and streams the integers `1..=λ`. Results are collected in trial order
//! and reduced sequentially, so the statistics are bit-identical for any
//! number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::analysis::Scheme;
use crate::analysis::{alpha_m, predict};
use crate::dartboard::{mix64, Dartboard, OffsetVector, PartitionParams};
use crate::error::{invalid, Error, Result};
use crate::martingale::MartingaleSketch;
use crate::sketches::{
    CurtainParams, CurtainSketch, LogLogSketch, Mergeable, MinCountSketch, PcsaSketch, Sketch,
};

/// Seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    mix64(master ^ mix64(trial.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Fixed-range histogram; values outside `[lo, hi)` land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || bins == 0 {
            return Err(invalid("histogram needs lo < hi and at least one bin"));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    pub fn add(&mut self, x: f64) {
        let n = self.counts.len();
        let pos = ((x - self.lo) / (self.hi - self.lo) * n as f64).floor();
        let bin = if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(n - 1)
        };
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + bin as f64 * w, self.lo + (bin + 1) as f64 * w)
    }

    /// `bin_left,bin_right,count` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let (l, r) = self.bin_edges(i);
            out.push_str(&format!("{l},{r},{c}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 2.0,
            bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub m: usize,
    pub lambda: u64,
    pub trials: u64,
    pub master_seed: u64,
    /// Register budget of the experiment; when set, martingale estimates
    /// are kept in a 14-bit float.
    pub budget_bits: Option<u32>,
    /// Overrides the default (smoothing iff `q >= 3`).
    pub smoothing: Option<bool>,
    /// Each element is inserted this many times in a row (1 = distinct stream).
    pub copies: u32,
    pub histogram: HistogramSpec,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme, m: usize, lambda: u64, trials: u64, master_seed: u64) -> Self {
        Self {
            scheme,
            m,
            lambda,
            trials,
            master_seed,
            budget_bits: None,
            smoothing: None,
            copies: 1,
            histogram: HistogramSpec::default(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.copies == 0 {
            return Err(invalid("copies must be at least 1"));
        }
        if self.scheme == Scheme::Hll && self.m < 2 {
            return Err(invalid("HLL needs m >= 2"));
        }
        if let Scheme::MartingaleCurtain { q, a, h } = self.scheme {
            CurtainParams::new(q, a, h, self.m)?;
        }
        HistogramSpec::validate(&self.histogram)
    }

    fn quantized(&self) -> bool {
        self.budget_bits.is_some()
    }
}

impl HistogramSpec {
    fn validate(&self) -> Result<()> {
        Histogram::new(self.lo, self.hi, self.bins).map(|_| ())
    }
}

/// Final estimate and retrospective variance of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub estimate: f64,
    /// `None` for HLL.
    pub variance_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialStats {
    pub scheme: Scheme,
    pub m: usize,
    pub lambda: u64,
    pub trials: u64,
    pub quantized: bool,
    pub mean_estimate: f64,
    /// Ratio statistics are `None` when `λ = 0`.
    pub mean_ratio: Option<f64>,
    /// `Var(λ̂)/λ²` (sample variance).
    pub relvar: Option<f64>,
    pub stderr: Option<f64>,
    /// Standard error of `mean_ratio`, `stderr/√trials`.
    pub mean_ratio_sigma: Option<f64>,
    /// Mean of `V/λ²`; `None` for HLL.
    pub v_mean: Option<f64>,
    /// `v_mean / relvar`.
    pub v_ratio: Option<f64>,
    /// Predicted relative variance for this scheme and `m`.
    pub predicted_relvar: f64,
    pub histogram: Option<Histogram>,
    /// Not serialized and ignored by equality, so identical runs compare equal.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PartialEq for TrialStats {
    fn eq(&self, o: &Self) -> bool {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        self.scheme == o.scheme
            && self.m == o.m
            && self.lambda == o.lambda
            && self.trials == o.trials
            && self.quantized == o.quantized
            && self.mean_estimate.to_bits() == o.mean_estimate.to_bits()
            && bits(self.mean_ratio) == bits(o.mean_ratio)
            && bits(self.relvar) == bits(o.relvar)
            && bits(self.v_mean) == bits(o.v_mean)
            && self.histogram == o.histogram
    }
}

/// Neumaier-compensated sum.
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Sample mean and (n-1) variance by two compensated passes.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, var)
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn smoothing_default(q: f64, over: Option<bool>) -> bool {
    over.unwrap_or(q >= 3.0)
}

fn board(q: f64, m: usize, smoothing: bool, seed: u64) -> Result<Dartboard> {
    let params = PartitionParams::new(q, m)?;
    let offsets = if smoothing {
        OffsetVector::uniform(m)?
    } else {
        OffsetVector::zeros(m)
    };
    Dartboard::new(params, offsets, seed)
}

fn curtain_params(q: f64, a: u32, h: u32, m: usize, smoothing: Option<bool>) -> Result<CurtainParams> {
    Ok(CurtainParams::new(q, a, h, m)?.with_smoothing(smoothing_default(q, smoothing)))
}

#[inline]
fn feed<S: Sketch>(s: &mut MartingaleSketch<S>, lambda: u64, copies: u32) {
    for e in 1..=lambda {
        for _ in 0..copies {
            s.insert(e);
        }
    }
}

fn martingale_trial<S: Sketch>(inner: S, cfg: &ExperimentConfig, seed: u64) -> TrialOutcome {
    let mut s = if cfg.quantized() {
        MartingaleSketch::quantized(inner, seed ^ 0x5851_f42d_4c95_7f2d)
    } else {
        MartingaleSketch::new(inner)
    };
    feed(&mut s, cfg.lambda, cfg.copies);
    TrialOutcome {
        estimate: s.estimate(),
        variance_estimate: Some(s.variance_estimate()),
    }
}

/// Runs one trial with the given hash seed.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64, alpha: f64) -> Result<TrialOutcome> {
    let m = cfg.m;
    Ok(match cfg.scheme {
        Scheme::Hll => {
            let mut s = LogLogSketch::new(board(2.0, m, false, seed)?);
            for e in 1..=cfg.lambda {
                for _ in 0..cfg.copies {
                    s.insert(e);
                }
            }
            TrialOutcome {
                estimate: s.hll_estimate(alpha)?,
                variance_estimate: None,
            }
        }
        Scheme::MartingalePcsa { q } => {
            let b = board(q, m, smoothing_default(q, cfg.smoothing), seed)?;
            martingale_trial(PcsaSketch::new(b), cfg, seed)
        }
        Scheme::MartingaleLogLog { q } => {
            let b = board(q, m, smoothing_default(q, cfg.smoothing), seed)?;
            martingale_trial(LogLogSketch::new(b), cfg, seed)
        }
        Scheme::MartingaleMinCount { k } => {
            martingale_trial(MinCountSketch::new(m, k as usize, seed)?, cfg, seed)
        }
        Scheme::MartingaleCurtain { q, a, h } => {
            let p = curtain_params(q, a, h, m, cfg.smoothing)?;
            martingale_trial(CurtainSketch::new(p, seed), cfg, seed)
        }
    })
}

/// All trial outcomes in trial order.
pub fn run_outcomes(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let alpha = if cfg.scheme == Scheme::Hll { alpha_m(cfg.m)? } else { 0.0 };
    in_pool(cfg.threads, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, trial_seed(cfg.master_seed, t), alpha))
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialStats> {
    let start = Instant::now();
    let outcomes = run_outcomes(cfg)?;
    let mut stats = summarize(cfg, &outcomes)?;
    stats.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(stats)
}

/// Aggregates outcomes (in trial order) into [`TrialStats`].
pub fn summarize(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Result<TrialStats> {
    let estimates: Vec<f64> = outcomes.iter().map(|o| o.estimate).collect();
    let (mean, var) = mean_and_variance(&estimates);
    let lambda = cfg.lambda as f64;
    let n = outcomes.len() as f64;
    let vs: Option<Vec<f64>> = outcomes.iter().map(|o| o.variance_estimate).collect();

    let (mut mean_ratio, mut relvar, mut stderr, mut sigma, mut v_mean, mut v_ratio, mut hist) =
        (None, None, None, None, None, None, None);
    if cfg.lambda > 0 {
        let rv = var / (lambda * lambda);
        mean_ratio = Some(mean / lambda);
        relvar = Some(rv);
        stderr = Some(rv.sqrt());
        sigma = Some((rv / n).sqrt());
        if let Some(vs) = &vs {
            let vm = sum(vs.iter().copied()) / n / (lambda * lambda);
            v_mean = Some(vm);
            v_ratio = Some(vm / rv);
        }
        let spec = cfg.histogram;
        let mut h = Histogram::new(spec.lo, spec.hi, spec.bins)?;
        for e in &estimates {
            h.add(e / lambda);
        }
        hist = Some(h);
    }
    Ok(TrialStats {
        scheme: cfg.scheme,
        m: cfg.m,
        lambda: cfg.lambda,
        trials: cfg.trials,
        quantized: cfg.quantized(),
        mean_estimate: mean,
        mean_ratio,
        relvar,
        stderr,
        mean_ratio_sigma: sigma,
        v_mean,
        v_ratio,
        predicted_relvar: predict(cfg.scheme, cfg.m)?.relvar,
        histogram: hist,
        wall_time_secs: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalKappa {
    pub kappa: f64,
    /// Standard error of `kappa` over the trials.
    pub sigma: f64,
    pub trials: u64,
}

/// Inserts `round(λ m)` distinct elements into the sketch underlying
/// `scheme` and returns `λ` times the mean final free area.
pub fn empirical_kappa(
    scheme: Scheme,
    m: usize,
    lambda_per_column: f64,
    trials: u64,
    master_seed: u64,
    smoothing: Option<bool>,
) -> Result<EmpiricalKappa> {
    scheme.validate()?;
    if m == 0 || trials == 0 || !(lambda_per_column > 0.0) {
        return Err(invalid("need m >= 1, trials >= 1 and λ > 0"));
    }
    let n = (lambda_per_column * m as f64).round() as u64;
    let free_after = |seed: u64| -> Result<f64> {
        fn fill<S: Sketch>(mut s: S, n: u64) -> f64 {
            for e in 1..=n {
                s.insert(e);
            }
            s.free_area()
        }
        Ok(match scheme {
            Scheme::Hll => fill(LogLogSketch::new(board(2.0, m, false, seed)?), n),
            Scheme::MartingalePcsa { q } => {
                fill(PcsaSketch::new(board(q, m, smoothing_default(q, smoothing), seed)?), n)
            }
            Scheme::MartingaleLogLog { q } => {
                fill(LogLogSketch::new(board(q, m, smoothing_default(q, smoothing), seed)?), n)
            }
            Scheme::MartingaleMinCount { k } => fill(MinCountSketch::new(m, k as usize, seed)?, n),
            Scheme::MartingaleCurtain { q, a, h } => {
                fill(CurtainSketch::new(curtain_params(q, a, h, m, smoothing)?, seed), n)
            }
        })
    };
    let frees = (0..trials)
        .into_par_iter()
        .map(|t| free_after(trial_seed(master_seed, t)))
        .collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = frees.iter().map(|p| p * lambda_per_column).collect();
    let (mean, var) = mean_and_variance(&scaled);
    Ok(EmpiricalKappa {
        kappa: mean,
        sigma: (var / trials as f64).sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Element `e` goes to shard `e mod shards`.
    RoundRobin,
    /// Shard chosen by a hash of the element and the trial seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub scheme: Scheme,
    pub shards: usize,
    pub split: SplitMode,
    pub trials: u64,
    pub passed: u64,
    /// Description of the first failing trial.
    pub counterexample: Option<String>,
}

impl MergeReport {
    pub fn ok(&self) -> bool {
        self.passed == self.trials
    }
}

fn check_split<S>(make: impl Fn() -> S, shards: usize, lambda: u64, split: SplitMode, seed: u64) -> Result<Option<String>>
where
    S: Sketch + Mergeable + PartialEq,
{
    let mut parts: Vec<S> = (0..shards).map(|_| make()).collect();
    let mut whole = make();
    for e in 1..=lambda {
        let shard = match split {
            SplitMode::RoundRobin => (e % shards as u64) as usize,
            SplitMode::Random => (mix64(e ^ seed.rotate_left(17)) % shards as u64) as usize,
        };
        parts[shard].insert(e);
        whole.insert(e);
    }
    let mut merged = parts.pop().expect("at least one shard");
    for p in parts.iter().rev() {
        merged = p.merge(&merged)?;
    }
    if merged != whole || merged.to_bytes() != whole.to_bytes() {
        return Ok(Some(format!(
            "hash seed {seed:#x}: merged sketch differs from single-stream sketch"
        )));
    }
    if (merged.free_area() - whole.free_area()).abs() > 1e-12 {
        return Ok(Some(format!("hash seed {seed:#x}: free areas differ")));
    }
    Ok(None)
}

/// Sketches each trial's stream in `shards` pieces under one seed, merges,
/// and compares with the sketch of the whole stream. Martingale schemes are
/// checked through their (mergeable) underlying sketch.
pub fn merge_check(
    scheme: Scheme,
    m: usize,
    shards: usize,
    lambda: u64,
    trials: u64,
    split: SplitMode,
    master_seed: u64,
) -> Result<MergeReport> {
    scheme.validate()?;
    if shards == 0 || m == 0 {
        return Err(invalid("need at least one shard and one column"));
    }
    let one = |t: u64| -> Result<Option<String>> {
        let seed = trial_seed(master_seed, t);
        match scheme {
            Scheme::Hll => check_split(|| LogLogSketch::new(board(2.0, m, false, seed).unwrap()), shards, lambda, split, seed),
            Scheme::MartingalePcsa { q } => {
                board(q, m, false, seed)?;
                check_split(|| PcsaSketch::new(board(q, m, q >= 3.0, seed).unwrap()), shards, lambda, split, seed)
            }
            Scheme::MartingaleLogLog { q } => {
                board(q, m, false, seed)?;
                check_split(|| LogLogSketch::new(board(q, m, q >= 3.0, seed).unwrap()), shards, lambda, split, seed)
            }
            Scheme::MartingaleMinCount { k } => {
                MinCountSketch::new(m, k as usize, seed)?;
                check_split(|| MinCountSketch::new(m, k as usize, seed).unwrap(), shards, lambda, split, seed)
            }
            Scheme::MartingaleCurtain { q, a, h } => {
                let p = curtain_params(q, a, h, m, None)?;
                check_split(|| CurtainSketch::new(p, seed), shards, lambda, split, seed)
            }
        }
        .map(|r| r.map(|msg| format!("trial {t}, {msg}")))
    };
    let results = (0..trials).into_par_iter().map(one).collect::<Result<Vec<_>>>()?;
    let counterexample = results.iter().flatten().next().cloned();
    Ok(MergeReport {
        scheme,
        shards,
        split,
        trials,
        passed: results.iter().filter(|r| r.is_none()).count() as u64,
        counterexample,
    })
}

/// One row of the small-budget experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub budget_bits: u32,
    pub scheme: Scheme,
    pub m: usize,
    /// Relative variance measured in the reference experiment.
    pub reference_relvar: f64,
    /// Prediction printed alongside the reference experiment.
    pub reference_prediction: f64,
}

/// The six configurations: HLL, Martingale LogLog and Martingale Curtain
/// at 128 and 1200 bits.
pub fn table3_rows() -> Vec<Table3Row> {
    let mll = Scheme::MartingaleLogLog { q: 2.0 };
    let mc = Scheme::MartingaleCurtain { q: 2.91, a: 2, h: 1 };
    let row = |budget_bits, scheme, m, reference_relvar, reference_prediction| Table3Row {
        budget_bits,
        scheme,
        m,
        reference_relvar,
        reference_prediction,
    };
    vec![
        row(128, Scheme::Hll, 21, 0.0573, 0.0549),
        row(128, mll, 19, 0.0348, 0.0365),
        row(128, mc, 37, 0.0211, 0.0208),
        row(1200, Scheme::Hll, 200, 0.00541, 0.00539),
        row(1200, mll, 200, 0.00350, 0.00347),
        row(1200, mc, 400, 0.00189, 0.00193),
    ]
}

impl Table3Row {
    pub fn config(&self, lambda: u64, trials: u64, master_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            budget_bits: Some(self.budget_bits),
            ..ExperimentConfig::new(self.scheme, self.m, lambda, trials, master_seed)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table3Result {
    pub row: Table3Row,
    pub stats: TrialStats,
    /// `relvar / reference_relvar - 1`.
    pub relative_deviation: f64,
}

/// Runs all six configurations.
pub fn run_table3(lambda: u64, trials: u64, master_seed: u64, threads: Option<usize>) -> Result<Vec<Table3Result>> {
    if lambda == 0 {
        return Err(invalid("λ must be at least 1"));
    }
    table3_rows()
        .into_iter()
        .map(|row| {
            let mut cfg = row.config(lambda, trials, master_seed);
            cfg.threads = threads;
            let stats = run_trials(&cfg)?;
            let relvar = stats.relvar.ok_or_else(|| Error::InvalidParams("λ = 0".into()))?;
            Ok(Table3Result {
                relative_deviation: relvar / row.reference_relvar - 1.0,
                row,
                stats,
            })
        })
        .collect()
}
