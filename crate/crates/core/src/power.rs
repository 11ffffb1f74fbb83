//! Power of the permutation tests against the Markov chain streaky alternative.
//!
//! Local asymptotic power is `1 − Φ(z₁₋α − φ_T(k, m, h))` with `h = ε√n` for
//! an individual test and `1 − Φ(z₁₋α − ζ·φ_T(k, m, h))` with `h = ε√(ns)` for
//! the stratified test of the average. `φ_T` is linear in `h`; its slope is
//! the derivative at ε = 0 of the chain's exact θ parameter divided by the
//! null standard deviation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{norm_cdf, sigma2, z_upper};
use crate::chain::{build_chain, simulate_population, theta_exact, StreakyModel};
use crate::error::{domain, range, Error, Result};
use crate::perm::{stratified_perm_test_many, PermConfig};
use crate::rng::{self, TAG_PERM, TAG_REPLICATION};
use crate::sequence::{StatKind, Statistic};

/// Closed-form slope of φ_D in `h`: 2·2^(−(k−1)/2)·2^(−max(m−k, 0)).
pub fn phi_d_slope(k: usize, m: usize) -> f64 {
    let decay = m.saturating_sub(k) as i32;
    2.0 * 2f64.powf(-((k as f64) - 1.0) / 2.0) * 2f64.powi(-decay)
}

/// φ_D(k, m, h).
pub fn phi_d(k: usize, m: usize, h: f64) -> f64 {
    phi_d_slope(k, m) * h
}

const STEP: f64 = 1e-5;

fn theta_of(stat: Statistic, k: usize, m: usize, eps: f64) -> Result<f64> {
    let th = theta_exact(&build_chain(m, eps, 0.5)?, k)?;
    Ok(match stat {
        Statistic::PHat => th.p,
        Statistic::DHat => th.d,
    })
}

fn central_difference(stat: Statistic, k: usize, m: usize, h: f64) -> Result<f64> {
    Ok((theta_of(stat, k, m, h)? - theta_of(stat, k, m, -h)?) / (2.0 * h))
}

/// Slope of φ_T in `h`, by Richardson-extrapolated central differences of
/// the exact stationary θ parameter at ε = 0, divided by σ_T(1/2, k).
pub fn phi_numeric(stat: Statistic, k: usize, m: usize) -> Result<f64> {
    if k == 0 {
        return range("streak length k must be at least 1");
    }
    let coarse = central_difference(stat, k, m, STEP)?;
    let fine = central_difference(stat, k, m, STEP / 2.0)?;
    let slope = (4.0 * fine - coarse) / 3.0;
    let sigma = sigma2(StatKind::new(stat, k)?, 0.5)?.sqrt();
    let phi = slope / sigma;
    if !phi.is_finite() {
        return Err(Error::Numerical(format!(
            "derivative not finite for {stat}{k}, m={m}: coarse={coarse:e}, fine={fine:e}"
        )));
    }
    Ok(phi)
}

/// Slope of φ_T used by the analytic power formulas: closed form for D̂,
/// numerical derivative for P̂.
pub fn phi_slope(stat: Statistic, k: usize, m: usize) -> Result<f64> {
    match stat {
        Statistic::DHat => Ok(phi_d_slope(k, m)),
        Statistic::PHat => phi_numeric(stat, k, m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum PowerMethod {
    Analytic,
    MonteCarlo {
        replications: usize,
        perms: usize,
        seed: u64,
    },
}

/// A power question: a `stat` test with streak length `k` against the
/// `(m, ε, ζ)` alternative with `s` sequences of `n` trials at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub stat: Statistic,
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub zeta: f64,
    pub n: usize,
    pub s: usize,
    pub alpha: f64,
    pub method: PowerMethod,
}

impl PowerQuery {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return range(format!("alpha={} must lie in (0, 1)", self.alpha));
        }
        if self.epsilon < 0.0 {
            return range("epsilon must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return range("zeta must lie in [0, 1]");
        }
        if self.n == 0 || self.s == 0 || self.k == 0 || self.m == 0 {
            return range("n, s, k and m must all be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub power: f64,
    pub method: PowerMethod,
    /// Binomial standard error; present only for Monte Carlo estimates.
    pub mc_se: Option<f64>,
}

/// 1 − Φ(z₁₋α − slope·ε·√(total)·ζ) for a known slope.
pub fn local_power(slope: f64, epsilon: f64, zeta: f64, total_trials: f64, alpha: f64) -> Result<f64> {
    let z = z_upper(alpha)?;
    Ok(1.0 - norm_cdf(z - slope * epsilon * total_trials.sqrt() * zeta))
}

/// Analytic power of the stratified test with `total_trials` in place of
/// `ns`; for unequal lengths pass `s` times the mean length.
pub fn analytic_joint_power(
    stat: Statistic,
    k: usize,
    m: usize,
    epsilon: f64,
    zeta: f64,
    total_trials: f64,
    alpha: f64,
) -> Result<f64> {
    local_power(phi_slope(stat, k, m)?, epsilon, zeta, total_trials, alpha)
}

/// Limiting power of the individual permutation test.
pub fn power_individual(query: &PowerQuery) -> Result<PowerResult> {
    query.validate()?;
    let power = local_power(
        phi_slope(query.stat, query.k, query.m)?,
        query.epsilon,
        1.0,
        query.n as f64,
        query.alpha,
    )?;
    Ok(PowerResult {
        power,
        method: PowerMethod::Analytic,
        mc_se: None,
    })
}

/// Limiting power of the stratified permutation test of the average.
pub fn power_joint(query: &PowerQuery) -> Result<PowerResult> {
    query.validate()?;
    let power = analytic_joint_power(
        query.stat,
        query.k,
        query.m,
        query.epsilon,
        query.zeta,
        (query.n * query.s) as f64,
        query.alpha,
    )?;
    Ok(PowerResult {
        power,
        method: PowerMethod::Analytic,
        mc_se: None,
    })
}

/// Total trials `ns` needed for power `beta` with the D̄₁ test when m = 1:
/// ((z₁₋α − z₁₋β)/(2ζε))². Callers round up.
pub fn sample_size(alpha: f64, beta: f64, zeta: f64, epsilon: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < beta && beta < 1.0) {
        return range(format!("need 0 < alpha < beta < 1 (alpha={alpha}, beta={beta})"));
    }
    if !(zeta * epsilon > 0.0) {
        return domain("zeta * epsilon must be positive");
    }
    let numer = z_upper(alpha)? - z_upper(beta)?;
    Ok((numer / (2.0 * zeta * epsilon)).powi(2))
}

/// Rejection counts of one Monte Carlo power experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub kind: StatKind,
    pub rejections: usize,
    pub replications: usize,
}

impl McEstimate {
    pub fn power(&self) -> f64 {
        self.rejections as f64 / self.replications as f64
    }

    pub fn se(&self) -> f64 {
        let p = self.power();
        (p * (1.0 - p) / self.replications as f64).sqrt()
    }
}

/// Settings shared by Monte Carlo power runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n: usize,
    pub s: usize,
    pub alpha: f64,
    pub replications: usize,
    pub perms: usize,
    pub seed: u64,
}

/// Simulates `replications` populations from `model` and runs the
/// stratified permutation test of every kind on each (with one sequence
/// this is the individual test). A replicate rejects when its p-value is at
/// most α; an undefined observed statistic counts as no rejection.
pub fn mc_rejections(
    model: &StreakyModel,
    kinds: &[StatKind],
    settings: &McSettings,
    cfg: &PermConfig,
) -> Result<Vec<McEstimate>> {
    if settings.replications == 0 || settings.perms == 0 {
        return range("replications and permutations must be positive");
    }
    let per_rep: Vec<Vec<bool>> = (0..settings.replications)
        .into_par_iter()
        .map(|r| {
            let sim_seed = rng::derive_seed(settings.seed, &[TAG_REPLICATION, r as u64]);
            let perm_seed = rng::derive_seed(settings.seed, &[TAG_PERM, r as u64]);
            let pop = simulate_population(model, settings.n, settings.s, sim_seed)?;
            let results =
                stratified_perm_test_many(&pop.set, kinds, settings.perms, perm_seed, cfg)?;
            Ok(results
                .iter()
                .map(|r| r.as_ref().is_some_and(|r| r.p_value <= settings.alpha))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| McEstimate {
            kind,
            rejections: per_rep.iter().filter(|r| r[j]).count(),
            replications: settings.replications,
        })
        .collect())
}

/// Monte Carlo power for a query with [`PowerMethod::MonteCarlo`]; uses the
/// individual test when `s = 1`.
pub fn mc_power(query: &PowerQuery) -> Result<PowerResult> {
    query.validate()?;
    let PowerMethod::MonteCarlo {
        replications,
        perms,
        seed,
    } = query.method
    else {
        return range("mc_power needs a Monte Carlo method");
    };
    let model = StreakyModel::symmetric(query.m, query.epsilon, query.zeta)?;
    let settings = McSettings {
        n: query.n,
        s: query.s,
        alpha: query.alpha,
        replications,
        perms,
        seed,
    };
    let est = mc_rejections(
        &model,
        &[StatKind::new(query.stat, query.k)?],
        &settings,
        &PermConfig::default(),
    )?[0];
    Ok(PowerResult {
        power: est.power(),
        method: query.method,
        mc_se: Some(est.se()),
    })
}

/// Dispatches on the query's method: analytic individual power when `s = 1`,
/// analytic joint power otherwise, or Monte Carlo.
pub fn power(query: &PowerQuery) -> Result<PowerResult> {
    match query.method {
        PowerMethod::Analytic if query.s == 1 => power_individual(query),
        PowerMethod::Analytic => power_joint(query),
        PowerMethod::MonteCarlo { .. } => mc_power(query),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    /// Reference 4×4 table of φ_D(k, m, h)/h, rows k, columns m.
    fn table2(k: usize, m: usize) -> f64 {
        const T: [[f64; 4]; 4] = [
            [2.0, 1.0, 0.5, 0.25],
            [SQRT_2, SQRT_2, 1.0 / SQRT_2, 1.0 / (2.0 * SQRT_2)],
            [1.0, 1.0, 1.0, 0.5],
            [1.0 / SQRT_2, 1.0 / SQRT_2, 1.0 / SQRT_2, 1.0 / SQRT_2],
        ];
        T[k - 1][m - 1]
    }

    fn query(epsilon: f64, zeta: f64, n: usize, s: usize) -> PowerQuery {
        PowerQuery {
            stat: Statistic::DHat,
            k: 1,
            m: 1,
            epsilon,
            zeta,
            n,
            s,
            alpha: 0.05,
            method: PowerMethod::Analytic,
        }
    }

    #[test]
    fn closed_form_matches_table() {
        for k in 1..=4 {
            for m in 1..=4 {
                assert!((phi_d_slope(k, m) - table2(k, m)).abs() < 1e-15, "k={k} m={m}");
            }
        }
        assert!((phi_d(1, 1, 0.7) - 1.4).abs() < 1e-15);
        assert!((phi_d(2, 4, 1.0) - 1.0 / (2.0 * SQRT_2)).abs() < 1e-15);
        assert!((phi_d(3, 2, 1.3) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn numeric_phi_examples() {
        assert!((phi_numeric(Statistic::DHat, 1, 1).unwrap() - 2.0).abs() < 1e-6);
        assert!((phi_numeric(Statistic::DHat, 2, 3).unwrap() - 1.0 / SQRT_2).abs() < 1e-6);
        assert!((phi_numeric(Statistic::DHat, 1, 4).unwrap() - 0.25).abs() < 1e-6);
        // m = k = 1: the P̂ test has the same drift.
        assert!((phi_numeric(Statistic::PHat, 1, 1).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn numeric_phi_validates_closed_form_to_six() {
        for k in 1..=6 {
            for m in 1..=6 {
                let num = phi_numeric(Statistic::DHat, k, m).unwrap();
                assert!((num - phi_d_slope(k, m)).abs() < 1e-6, "k={k} m={m} num={num}");
            }
        }
    }

    #[test]
    fn analytic_power_examples() {
        assert!((power_individual(&query(0.0, 1.0, 100, 1)).unwrap().power - 0.05).abs() < 1e-12);
        let z = z_upper(0.05).unwrap();
        let eps = z / (2.0 * 10.0);
        assert!((power_individual(&query(eps, 1.0, 100, 1)).unwrap().power - 0.5).abs() < 1e-12);
        let p = power_individual(&query(0.15, 1.0, 100, 1)).unwrap().power;
        assert!((p - (1.0 - norm_cdf(z - 3.0))).abs() < 1e-12);
        assert!((p - 0.912).abs() < 5e-4);

        assert!((power_joint(&query(0.1, 0.0, 100, 26)).unwrap().power - 0.05).abs() < 1e-12);
        let a = power_joint(&query(0.07, 1.0, 100, 1)).unwrap().power;
        let b = power_individual(&query(0.07, 1.0, 100, 1)).unwrap().power;
        assert!((a - b).abs() < 1e-15);
        let j = power_joint(&query(0.038, 0.5, 100, 26)).unwrap().power;
        let expect = 1.0 - norm_cdf(z - 2.0 * 0.5 * 0.038 * 2600f64.sqrt());
        assert!((j - expect).abs() < 1e-12);
        assert!((j - 0.615).abs() < 2e-3, "j={j}");
    }

    #[test]
    fn analytic_power_monotone() {
        let mut last = 0.0;
        for i in 0..30 {
            let p = power_joint(&query(i as f64 * 0.005, 0.5, 100, 26)).unwrap().power;
            assert!(p >= last);
            last = p;
        }
        for (zeta, n, s) in [(0.1, 50, 5), (0.2, 60, 6), (0.5, 80, 10), (1.0, 100, 30)] {
            let p = power_joint(&query(0.03, zeta, n, s)).unwrap().power;
            assert!(p >= last || last > 0.99 || p > 0.0);
        }
        let grid: Vec<f64> = [0.1, 0.3, 0.6, 1.0]
            .iter()
            .map(|&z| power_joint(&query(0.03, z, 100, 26)).unwrap().power)
            .collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        let grid: Vec<f64> = [10, 50, 100, 500]
            .iter()
            .map(|&n| power_joint(&query(0.03, 0.5, n, 26)).unwrap().power)
            .collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        let grid: Vec<f64> = [1, 5, 26, 100]
            .iter()
            .map(|&s| power_joint(&query(0.03, 0.5, 100, s)).unwrap().power)
            .collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sample_size_examples() {
        let ns = sample_size(0.05, 0.8, 0.5, 0.038).unwrap();
        let direct = ((1.6448536269514722 + 0.8416212335729143) / (2.0 * 0.5 * 0.038f64)).powi(2);
        assert!((ns - direct).abs() < 1e-6);
        assert!((ns - 4281.0).abs() < 1.0, "ns={ns}");
        let back = analytic_joint_power(Statistic::DHat, 1, 1, 0.038, 0.5, ns, 0.05).unwrap();
        assert!((back - 0.8).abs() < 1e-9);
        let quarter = sample_size(0.05, 0.8, 1.0, 0.038).unwrap();
        assert!((quarter * 4.0 - ns).abs() < 1e-6);
        assert!(matches!(sample_size(0.05, 0.8, 0.0, 0.038), Err(Error::Domain(_))));
        assert!(matches!(sample_size(0.8, 0.05, 0.5, 0.038), Err(Error::Range(_))));
    }

    #[test]
    fn monte_carlo_needs_method() {
        assert!(mc_power(&query(0.1, 1.0, 100, 1)).is_err());
    }

    #[test]
    fn monte_carlo_small_run_is_deterministic() {
        let mut q = query(0.2, 1.0, 60, 1);
        q.method = PowerMethod::MonteCarlo {
            replications: 40,
            perms: 99,
            seed: 5,
        };
        let a = mc_power(&q).unwrap();
        assert_eq!(a, mc_power(&q).unwrap());
        assert!(a.mc_se.is_some());
        assert!(a.power > 0.3);
        assert_eq!(power(&q).unwrap(), a);
    }
}
