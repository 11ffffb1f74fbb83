//! Simulation drivers for finite-sample properties of the statistics: null
//! means and normal-test sizes, sampling moments under a chain, and the
//! spread of permutation distributions.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{normal_reject, sigma2, z_upper};
use crate::chain::{simulate_trials, ChainSpec};
use crate::error::{range, Result};
use crate::rng::{self, TAG_PERM, TAG_SIM};
use crate::sequence::{counts_up_to, proportion, BinarySequence, Boundary, StatKind, Statistic};

/// Sample moments of a simulated statistic over the draws where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n_defined: usize,
    pub n_draws: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central moment.
    pub m4: f64,
}

impl Moments {
    pub fn from_values(values: &[f64], n_draws: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n_defined: 0,
                n_draws,
                mean: f64::NAN,
                variance: f64::NAN,
                m4: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
        Self {
            n_defined: n,
            n_draws,
            mean,
            variance: if n > 1 { ss / (n - 1) as f64 } else { 0.0 },
            m4,
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the mean.
    pub fn se_mean(&self) -> f64 {
        (self.variance / self.n_defined as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_variance(&self) -> f64 {
        ((self.m4 - self.variance.powi(2)).max(0.0) / self.n_defined as f64).sqrt()
    }

    /// Moments of `scale · X`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            mean: self.mean * scale,
            variance: self.variance * scale * scale,
            m4: self.m4 * scale.powi(4),
            ..*self
        }
    }
}

fn evaluate_all(trials: &[u8], kinds: &[StatKind], boundary: Boundary) -> Vec<Option<f64>> {
    let k_max = kinds.iter().map(|k| k.k).max().unwrap_or(1);
    let counts = counts_up_to(trials, k_max, boundary);
    let p = proportion(trials);
    kinds.iter().map(|kind| kind.evaluate(&counts[kind.k - 1], p)).collect()
}

fn check_kinds(kinds: &[StatKind], n: usize) -> Result<()> {
    if kinds.is_empty() {
        return range("need at least one statistic");
    }
    if let Some(k) = kinds.iter().find(|k| k.k == 0 || k.k >= n) {
        return range(format!("streak length {} must lie in 1..{n}", k.k));
    }
    Ok(())
}

/// Simulates `draws` sequences of length `n` from `chain` (draw `i` uses its
/// own stream under `seed`) and returns every statistic's value per draw.
pub fn simulate_statistics(
    chain: &ChainSpec,
    n: usize,
    kinds: &[StatKind],
    draws: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<Vec<Vec<Option<f64>>>> {
    check_kinds(kinds, n)?;
    (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[TAG_SIM, i]);
            let trials = simulate_trials(chain, n, 0, &mut rng)?;
            Ok(evaluate_all(&trials, kinds, boundary))
        })
        .collect()
}

/// Moments of each statistic over `draws` sequences simulated from `chain`.
pub fn simulated_moments(
    chain: &ChainSpec,
    n: usize,
    kinds: &[StatKind],
    draws: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<Vec<Moments>> {
    let per_draw = simulate_statistics(chain, n, kinds, draws, seed, boundary)?;
    Ok((0..kinds.len())
        .map(|j| {
            let vals: Vec<f64> = per_draw.iter().filter_map(|d| d[j]).collect();
            Moments::from_values(&vals, draws)
        })
        .collect())
}

/// One row of the null finite-sample table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullRow {
    pub k: usize,
    /// Mean of P̂ₙ,ₖ − p̂ over draws where it is defined.
    pub mean_p: f64,
    pub mean_d: f64,
    pub se_mean_p: f64,
    pub se_mean_d: f64,
    /// Rejection rate of the uncorrected one-sided normal test.
    pub rate_p: f64,
    pub rate_d: f64,
    pub defined_p: usize,
    pub defined_d: usize,
}

/// Settings for [`null_table`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullTableConfig {
    pub draws: usize,
    pub n: usize,
    pub k_max: usize,
    pub p: f64,
    pub alpha: f64,
    pub boundary: Boundary,
    pub seed: u64,
}

impl Default for NullTableConfig {
    fn default() -> Self {
        Self {
            draws: 100_000,
            n: 100,
            k_max: 4,
            p: 0.5,
            alpha: 0.05,
            boundary: Boundary::Successor,
            seed: 0,
        }
    }
}

/// Draws i.i.d. Bernoulli(p) sequences and, for each k, records the mean of
/// P̂ₙ,ₖ − p̂ and D̂ₙ,ₖ and the rejection rate of the normal test that uses the
/// null variance at the true p. Means and rates are over draws where the
/// statistic is defined.
pub fn null_table(cfg: &NullTableConfig) -> Result<Vec<NullRow>> {
    if cfg.draws == 0 {
        return range("draws must be positive");
    }
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return range("p must lie in (0, 1)");
    }
    let kinds: Vec<StatKind> = (1..=cfg.k_max)
        .flat_map(|k| [StatKind::p(k), StatKind::d(k)])
        .collect();
    check_kinds(&kinds, cfg.n)?;
    let z = z_upper(cfg.alpha)?;
    let sigmas: Vec<f64> = kinds
        .iter()
        .map(|&kind| sigma2(kind, cfg.p).map(f64::sqrt))
        .collect::<Result<_>>()?;
    let per_draw: Vec<Vec<Option<f64>>> = (0..cfg.draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, &[TAG_SIM, i]);
            let trials: Vec<u8> = (0..cfg.n).map(|_| u8::from(rng.random_bool(cfg.p))).collect();
            evaluate_all(&trials, &kinds, cfg.boundary)
        })
        .collect();
    let summary: Vec<(Moments, f64)> = kinds
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let vals: Vec<f64> = per_draw.iter().filter_map(|d| d[j]).collect();
            let rejects = vals
                .iter()
                .filter(|&&t| normal_reject(t, cfg.n, sigmas[j], z))
                .count();
            let rate = rejects as f64 / vals.len().max(1) as f64;
            (Moments::from_values(&vals, cfg.draws), rate)
        })
        .collect();
    Ok((1..=cfg.k_max)
        .map(|k| {
            let (mp, rp) = summary[2 * (k - 1)];
            let (md, rd) = summary[2 * (k - 1) + 1];
            NullRow {
                k,
                mean_p: mp.mean,
                mean_d: md.mean,
                se_mean_p: mp.se_mean(),
                se_mean_d: md.se_mean(),
                rate_p: rp,
                rate_d: rd,
                defined_p: mp.n_defined,
                defined_d: md.n_defined,
            }
        })
        .collect())
}

/// Moments of √n·T over `resamples` random permutations of `seq`.
pub fn permutation_moments(
    seq: &BinarySequence,
    kind: StatKind,
    resamples: usize,
    seed: u64,
    boundary: Boundary,
) -> Result<Moments> {
    check_kinds(&[kind], seq.len())?;
    let scale = (seq.len() as f64).sqrt();
    let vals: Vec<Option<f64>> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[TAG_PERM, b]);
            let mut t = seq.trials().to_vec();
            t.shuffle(&mut rng);
            evaluate_all(&t, &[kind], boundary)[0]
        })
        .collect();
    let vals: Vec<f64> = vals.into_iter().flatten().collect();
    Ok(Moments::from_values(&vals, resamples).scaled(scale))
}

/// Which statistic a [`Moments`] list entry refers to; convenience for
/// callers building kind lists.
pub fn kinds_for(stat: Statistic, ks: &[usize]) -> Result<Vec<StatKind>> {
    ks.iter().map(|&k| StatKind::new(stat, k)).collect()
}
