//! Constants governing the variance of martingale estimators.
//!
//! A sketch is scale-invariant with constant `κ` when `λ` times its free
//! area converges to `κ`. The martingale estimator over such a sketch has
//! asymptotic relative variance `1/(2κ m)`, so `1/(2κ)` is its ARV factor
//! and the memory-variance product (MVP) is bits per column times that
//! factor.

pub mod quadrature;

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use quadrature::{integrate_breaks, integrate_to_infinity, Integral};

/// Absolute tolerance used for the `κ` integrals.
pub const KAPPA_TOLERANCE: f64 = 1e-9;

/// Estimator plus sketch combinations the crate can analyse and simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    /// Binary LogLog registers read by the HyperLogLog estimator.
    Hll,
    MartingalePcsa { q: f64 },
    MartingaleLogLog { q: f64 },
    MartingaleMinCount { k: u32 },
    MartingaleCurtain { q: f64, a: u32, h: u32 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Hll => "hll",
            Scheme::MartingalePcsa { .. } => "martingale-pcsa",
            Scheme::MartingaleLogLog { .. } => "martingale-loglog",
            Scheme::MartingaleMinCount { .. } => "martingale-mincount",
            Scheme::MartingaleCurtain { .. } => "martingale-curtain",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_q = |q: f64| {
            if q.is_finite() && q > 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("base q must be a finite real > 1, got {q}")))
            }
        };
        match *self {
            Scheme::Hll => Ok(()),
            Scheme::MartingalePcsa { q } | Scheme::MartingaleLogLog { q } => check_q(q),
            Scheme::MartingaleMinCount { k } => {
                if k == 0 {
                    Err(invalid("k must be at least 1"))
                } else {
                    Ok(())
                }
            }
            Scheme::MartingaleCurtain { q, a, h } => {
                crate::sketches::CurtainParams::new(q, a, h, 1).map(|_| ())
            }
        }
    }

    /// Closed-form `κ` of the underlying sketch; `None` for HLL, whose
    /// estimator does not use the free area.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            Scheme::Hll => None,
            Scheme::MartingalePcsa { q } => Some(kappa_pcsa(q)),
            Scheme::MartingaleLogLog { q } => Some(kappa_loglog(q)),
            Scheme::MartingaleMinCount { k } => Some(k as f64),
            Scheme::MartingaleCurtain { q, a, h } => Some(kappa_curtain(q, a, h)),
        }
    }
}

/// `κ` of base-q PCSA: `1/ln q`.
pub fn kappa_pcsa(q: f64) -> f64 {
    1.0 / q.ln()
}

/// `κ` of base-q LogLog: `(q - 1)/(q ln q)`.
pub fn kappa_loglog(q: f64) -> f64 {
    (q - 1.0) / (q * q.ln())
}

/// Rate `c` in `E(Z) = exp(-c λ/q^t)` for Curtain: the mass (in units of
/// `λ/q^t`) of cells that are free for a column whose curtain sits at `t`.
fn curtain_rate(q: f64, a: u32, h: u32) -> f64 {
    let h = h as f64;
    (q - 1.0) / q + 2.0 / (q.powf(h) * (q.powf(a as f64 - 0.5) - 1.0)) + q.powf(-(h + 1.0))
}

/// `κ` of Curtain:
/// `(1/ln q) ((q-1)/q) / ((q-1)/q + 2/(q^h (q^(a-1/2) - 1)) + 1/q^(h+1))`.
pub fn kappa_curtain(q: f64, a: u32, h: u32) -> f64 {
    (1.0 / q.ln()) * ((q - 1.0) / q) / curtain_rate(q, a, h)
}

/// `1/(2κ)`.
pub fn arv_factor(kappa: f64) -> f64 {
    1.0 / (2.0 * kappa)
}

/// `(log2(2a) + h) / (2 κ_curtain)`.
pub fn mvp_curtain(q: f64, a: u32, h: u32) -> f64 {
    ((2.0 * a as f64).log2() + h as f64) * arv_factor(kappa_curtain(q, a, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaScheme {
    Pcsa,
    LogLog,
    Curtain,
}

/// `E(Z_{t,λ})`: probability that the cell at height `t` (one with area
/// proportional to `q^-t - q^-(t+1)`) is still free after a Poisson(λ)
/// number of darts.
pub fn expected_free_indicator(scheme: KappaScheme, q: f64, a: u32, h: u32, t: f64, lambda: f64) -> f64 {
    let rate = match scheme {
        KappaScheme::Pcsa => (q - 1.0) / q,
        KappaScheme::LogLog => 1.0,
        KappaScheme::Curtain => curtain_rate(q, a, h),
    };
    (-rate * lambda * q.powf(-t)).exp()
}

/// `κ_λ = λ ∫ (q^-t - q^-(t+1)) E(Z_{t,λ}) dt` over the real line,
/// integrated in `w = λ/q^t`.
pub fn kappa_numeric(scheme: KappaScheme, q: f64, a: u32, h: u32, lambda: f64) -> Result<Integral> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("λ must be positive, got {lambda}")));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(invalid(format!("base q must be a finite real > 1, got {q}")));
    }
    let ln_q = q.ln();
    let ln_lambda = lambda.ln();
    let integrand = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let t = (ln_lambda - w.ln()) / ln_q;
        let density = lambda * (q.powf(-t) - q.powf(-t - 1.0));
        density * expected_free_indicator(scheme, q, a, h, t, lambda) / (w * ln_q)
    };
    integrate_to_infinity(integrand, 0.0, KAPPA_TOLERANCE, 0.0)
}

/// `H0 = 1/ln 2 + Σ_{k>=1} log2(1 + 1/k)/k`.
///
/// The first million terms are summed smallest first; the tail uses
/// `ln(1 + 1/k)/k = 1/k^2 - 1/(2k^3) + O(k^-4)` with `Σ_{k>K} 1/k^2`
/// taken as `π²/6` minus the partial sum and `Σ_{k>K} 1/k^3 ≈ 1/(2K^2)`.
pub fn h0() -> f64 {
    const K: u32 = 1_000_000;
    let mut head = 0.0;
    let mut squares = 0.0;
    for k in (1..=K).rev() {
        let k = k as f64;
        head += (1.0 / k).ln_1p() / k;
        squares += 1.0 / (k * k);
    }
    let kk = K as f64;
    let tail = (PI * PI / 6.0 - squares) - 1.0 / (4.0 * kk * kk);
    (1.0 + head + tail) / LN_2
}

/// `I0 = ζ(2) = π²/6`.
pub fn i0() -> f64 {
    PI * PI / 6.0
}

/// HyperLogLog bias constant
/// `α_m = 1 / (m ∫_0^∞ log2((2+u)/(1+u))^m du)`, computed as
/// `1 / (m ∫_0^1 log2(1+x)^m / x² dx)` after `x = 1/(1+u)`.
pub fn alpha_m(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(invalid(format!("α_m needs m >= 2, got {m}")));
    }
    let mf = m as f64;
    let f = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            (mf * (x.ln_1p() / LN_2).ln()).exp() / (x * x)
        }
    };
    // The integrand concentrates within ~1/m of x = 1; geometric
    // breakpoints towards 1 keep the first pass from missing it.
    let mut breaks = vec![0.0, 0.5];
    let mut gap = 0.5;
    while gap > 1.0 / (64.0 * mf) {
        gap /= 2.0;
        breaks.push(1.0 - gap);
    }
    breaks.push(1.0);
    let integral = integrate_breaks(f, &breaks, 0.0, 1e-11)?;
    Ok(1.0 / (mf * integral.value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub kappa: f64,
    pub arv_factor: f64,
    pub bits_per_column: f64,
    pub mvp: f64,
}

impl SchemeConstants {
    pub fn new(kappa: f64, bits_per_column: f64) -> Self {
        let arv = arv_factor(kappa);
        Self {
            kappa,
            arv_factor: arv,
            bits_per_column,
            mvp: bits_per_column * arv,
        }
    }

    pub fn curtain(q: f64, a: u32, h: u32) -> Self {
        Self::new(kappa_curtain(q, a, h), (2.0 * a as f64).log2() + h as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub relvar: f64,
    pub stderr: f64,
}

/// Standard error coefficient of HyperLogLog as `m → ∞`.
pub const HLL_STDERR_COEFFICIENT: f64 = 1.04;

/// Predicted relative variance `Var(λ̂)/λ²` with `m` columns (buckets).
///
/// Martingale schemes use `arv_factor(κ)/m`; HLL uses the asymptotic
/// `1.04²/m`, which slightly understates the variance at small `m`.
pub fn predict(scheme: Scheme, m: usize) -> Result<Prediction> {
    scheme.validate()?;
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    let relvar = match scheme.kappa() {
        None => HLL_STDERR_COEFFICIENT * HLL_STDERR_COEFFICIENT / m as f64,
        Some(kappa) => arv_factor(kappa) / m as f64,
    };
    Ok(Prediction {
        relvar,
        stderr: relvar.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MvpUnit {
    /// Multiplied by `log2 U`.
    LogU,
    /// Multiplied by `log2 log2 U`.
    LogLogU,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpEntry {
    pub sketch: &'static str,
    pub mergeable: bool,
    pub coefficient: f64,
    pub unit: MvpUnit,
    pub value: f64,
}

/// Limiting MVP of well-known sketches for a universe of `2^log2_universe`
/// elements. MinCount is taken with one hash value per bucket.
pub fn mvp_table(log2_universe: u32) -> Result<Vec<MvpEntry>> {
    if log2_universe < 2 {
        return Err(invalid("log2 of the universe size must be at least 2"));
    }
    let h0 = h0();
    let rows: [(&'static str, bool, f64, MvpUnit); 10] = [
        // 0.78/sqrt(m) standard error over log U bits per column
        ("pcsa", true, 0.78 * 0.78, MvpUnit::LogU),
        // 1.298/sqrt(m) over log log U bits per register
        ("loglog", true, 1.298 * 1.298, MvpUnit::LogLogU),
        ("mincount", true, 1.0, MvpUnit::LogU),
        ("hyperloglog", true, 1.08, MvpUnit::LogLogU),
        ("fishmonger", true, h0 / i0(), MvpUnit::Constant),
        ("martingale-pcsa", false, 0.35, MvpUnit::LogU),
        ("martingale-loglog", false, LN_2, MvpUnit::LogLogU),
        ("martingale-mincount", false, 0.5, MvpUnit::LogU),
        ("martingale-fishmonger", false, h0 / 2.0, MvpUnit::Constant),
        ("martingale-curtain", false, mvp_curtain(2.91, 2, 1), MvpUnit::Constant),
    ];
    let log_u = log2_universe as f64;
    Ok(rows
        .into_iter()
        .map(|(sketch, mergeable, coefficient, unit)| MvpEntry {
            sketch,
            mergeable,
            coefficient,
            unit,
            value: coefficient
                * match unit {
                    MvpUnit::LogU => log_u,
                    MvpUnit::LogLogU => log_u.log2(),
                    MvpUnit::Constant => 1.0,
                },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurtainOptimum {
    pub q: f64,
    pub a: u32,
    pub h: u32,
    pub mvp: f64,
}

/// Minimises `mvp_curtain` over `q = q_lo + step, q_lo + 2 step, ..., <= q_hi`
/// and the given `a` and `h` values.
pub fn curtain_grid_search(q_lo: f64, q_hi: f64, step: f64, a_values: &[u32], h_values: &[u32]) -> Result<CurtainOptimum> {
    if !(q_lo >= 1.0 && q_hi > q_lo && step > 0.0) {
        return Err(invalid("need 1 <= q_lo < q_hi and a positive step"));
    }
    let mut best: Option<CurtainOptimum> = None;
    let n = ((q_hi - q_lo) / step + 1e-9).floor() as usize;
    for i in 1..=n {
        let q = q_lo + i as f64 * step;
        for &a in a_values {
            for &h in h_values {
                let mvp = mvp_curtain(q, a, h);
                if best.map_or(true, |b| mvp < b.mvp) {
                    best = Some(CurtainOptimum { q, a, h, mvp });
                }
            }
        }
    }
    best.ok_or_else(|| invalid("empty search grid"))
}
