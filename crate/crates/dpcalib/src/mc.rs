//! Seeded Monte-Carlo reference samplers: the CRP Bernoulli-sum count
//! sampler, the prior-predictive count sampler, and stick-breaking samplers
//! for w1 and the co-clustering index ρ.
//!
//! These are deliberately independent of the closed-form and quadrature
//! paths so they can serve as oracles for them. Streams are reproducible
//! given (seed, stream id).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::GammaHyperprior;

/// Monte-Carlo run configuration.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub draws: usize,
    pub seed: u64,
    /// Stick-breaking truncation: stop once the remaining mass falls below
    /// this tail. The truncation bias of ρ is at most tail² per draw.
    pub stick_truncation_tail: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            draws: 100_000,
            seed: 12345,
            stick_truncation_tail: 1e-12,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidInput("draws must be >= 1".into()));
        }
        let tail = self.stick_truncation_tail;
        if !tail.is_finite() || tail <= 0.0 || tail > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "stick truncation tail must lie in (0, 1e-6], got {}",
                self.stick_truncation_tail
            )));
        }
        Ok(())
    }
}

/// Point estimate with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Deterministic RNG for (seed, stream): distinct streams are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// rand_distr uses shape-scale; our rate b gives scale 1/b. A validated
// hyperprior always yields valid sampler parameters.
fn gamma_sampler(hyper: &GammaHyperprior) -> Gamma<f64> {
    Gamma::new(hyper.a, 1.0 / hyper.b).expect("hyperprior validated at construction")
}

/// One draw of K_J | alpha via the independent new-table indicators:
/// K = 1 + Σ_{i=2}^J Bernoulli(α/(α+i−1)). Same law as full CRP seating.
pub fn sample_k_crp<R: Rng>(j: usize, alpha: f64, rng: &mut R) -> usize {
    debug_assert!(j >= 1 && alpha > 0.0);
    let mut k = 1usize;
    for i in 2..=j {
        let u: f64 = rng.random();
        if u * (alpha + (i - 1) as f64) < alpha {
            k += 1;
        }
    }
    k
}

/// Histogram of prior-predictive draws of K_J under α ~ Gamma(a, b);
/// `hist[k-1]` counts draws with K_J = k. Deterministic given cfg.seed.
pub fn sample_prior_predictive_k(
    j: usize,
    hyper: &GammaHyperprior,
    cfg: &McConfig,
) -> Result<Vec<u64>> {
    cfg.validate()?;
    if j < 1 {
        return Err(Error::Domain("prior-predictive sampling requires J >= 1".into()));
    }
    let gamma = gamma_sampler(hyper);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut hist = vec![0u64; j];
    for _ in 0..cfg.draws {
        let alpha = gamma.sample(&mut rng);
        let k = sample_k_crp(j, alpha, &mut rng);
        hist[k - 1] += 1;
    }
    Ok(hist)
}

/// One draw of the first stick-breaking weight: α ~ Gamma(a, b), then
/// w1 = 1 − U^{1/α} (inverse CDF of Beta(1, α)).
pub fn sample_w1<R: Rng>(hyper: &GammaHyperprior, rng: &mut R) -> f64 {
    let alpha = gamma_sampler(hyper).sample(rng);
    sample_beta_one(alpha, rng)
}

// Beta(1, alpha) via -expm1(ln(U)/alpha), which keeps precision at both
// extremes of alpha.
fn sample_beta_one<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let v = -(u.ln() / alpha).exp_m1();
    v.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)
}

/// One draw of ρ = Σ_h w_h² by stick breaking, truncated once the remaining
/// mass drops below the configured tail; the squared remainder is added so
/// the truncation bias stays below tail².
pub fn sample_rho<R: Rng>(hyper: &GammaHyperprior, cfg: &McConfig, rng: &mut R) -> Result<f64> {
    sample_rho_with(cfg, &gamma_sampler(hyper), rng)
}

fn sample_rho_with<R: Rng>(cfg: &McConfig, gamma: &Gamma<f64>, rng: &mut R) -> Result<f64> {
    const STICK_CAP: usize = 1_000_000;
    let alpha = gamma.sample(rng);
    let mut remaining = 1.0f64;
    let mut acc = 0.0f64;
    for _ in 0..STICK_CAP {
        let v = sample_beta_one(alpha, rng);
        let w = v * remaining;
        acc += w * w;
        remaining *= 1.0 - v;
        if remaining < cfg.stick_truncation_tail {
            return Ok(acc + remaining * remaining);
        }
    }
    Err(Error::Convergence(format!(
        "stick-breaking draw exceeded {STICK_CAP} sticks at alpha = {alpha}"
    )))
}

/// Mean and standard error of a sample.
pub fn summarize_mean(xs: &[f64]) -> McSummary {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n as f64 - 1.0).max(1.0);
    McSummary {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        draws: n,
    }
}

/// Sample variance and its standard error (via the fourth central moment).
pub fn summarize_variance(xs: &[f64]) -> McSummary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for x in xs {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    let var = m2 * n / (n - 1.0).max(1.0);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    McSummary {
        estimate: var,
        std_error: se,
        draws: xs.len(),
    }
}

/// Mean/variance summaries of a K-histogram over support 1..=J.
pub fn histogram_summaries(hist: &[u64]) -> (McSummary, McSummary) {
    let n: u64 = hist.iter().sum();
    let nf = n as f64;
    let mut mean = 0.0;
    for (idx, &c) in hist.iter().enumerate() {
        mean += (idx as f64 + 1.0) * c as f64;
    }
    mean /= nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for (idx, &c) in hist.iter().enumerate() {
        let d = idx as f64 + 1.0 - mean;
        m2 += c as f64 * d * d;
        m4 += c as f64 * d * d * d * d;
    }
    m2 /= nf;
    m4 /= nf;
    let mean_summary = McSummary {
        estimate: mean,
        std_error: (m2 / nf).sqrt(),
        draws: n as usize,
    };
    let var_summary = McSummary {
        estimate: m2 * nf / (nf - 1.0).max(1.0),
        std_error: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        draws: n as usize,
    };
    (mean_summary, var_summary)
}

/// Monte-Carlo tail probability Pr(w1 > t) with binomial standard error.
pub fn w1_tail_mc(hyper: &GammaHyperprior, t: f64, cfg: &McConfig, stream: u64) -> Result<McSummary> {
    cfg.validate()?;
    let gamma = gamma_sampler(hyper);
    let mut rng = stream_rng(cfg.seed, stream);
    let mut hits = 0usize;
    for _ in 0..cfg.draws {
        let alpha = gamma.sample(&mut rng);
        if sample_beta_one(alpha, &mut rng) > t {
            hits += 1;
        }
    }
    let p = hits as f64 / cfg.draws as f64;
    Ok(McSummary {
        estimate: p,
        std_error: (p * (1.0 - p) / cfg.draws as f64).sqrt(),
        draws: cfg.draws,
    })
}

/// Monte-Carlo draws of ρ; returns the raw sample for moment summaries.
pub fn rho_sample(hyper: &GammaHyperprior, cfg: &McConfig, stream: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let gamma = gamma_sampler(hyper);
    let mut rng = stream_rng(cfg.seed, stream);
    let mut draws = Vec::with_capacity(cfg.draws);
    for _ in 0..cfg.draws {
        draws.push(sample_rho_with(cfg, &gamma, &mut rng)?);
    }
    Ok(draws)
}

/// Monte-Carlo draws of w1; returns the raw sample for quantile checks.
pub fn w1_sample(hyper: &GammaHyperprior, cfg: &McConfig, stream: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let gamma = gamma_sampler(hyper);
    let mut rng = stream_rng(cfg.seed, stream);
    let mut draws = Vec::with_capacity(cfg.draws);
    for _ in 0..cfg.draws {
        let alpha = gamma.sample(&mut rng);
        draws.push(sample_beta_one(alpha, &mut rng));
    }
    Ok(draws)
}
