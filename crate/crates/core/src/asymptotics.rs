//! Null asymptotics of the streak statistics, their second-order small-sample
//! biases, the uncorrected normal-approximation test, and Gaussian utilities.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{domain, range, Result};
use crate::sequence::{p_hat, statistic, BinarySequence, Boundary, StatKind, Statistic};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps on [`norm_cdf`].
pub fn norm_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return range(format!("quantile level {u} must lie in (0, 1)"));
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * u);
    for _ in 0..2 {
        let d = norm_pdf(x);
        if d < 1e-300 {
            break;
        }
        x -= (norm_cdf(x) - u) / d;
    }
    Ok(x)
}

/// z₁₋α, the upper-α point of the standard normal.
pub fn z_upper(alpha: f64) -> Result<f64> {
    norm_quantile(1.0 - alpha)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return range(format!("success probability {p} must lie in (0, 1)"));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return range("streak length k must be at least 1");
    }
    Ok(())
}

/// Limiting null variance of √n(P̂ₙ,ₖ − p̂): p^(1−k)(1−p)(1−p^k).
pub fn sigma2_p(p: f64, k: usize) -> Result<f64> {
    check_p(p)?;
    check_k(k)?;
    let k = k as f64;
    Ok(p.powf(1.0 - k) * (1.0 - p) * (1.0 - p.powf(k)))
}

/// Limiting null variance of √n·D̂ₙ,ₖ: (p(1−p))^(1−k)((1−p)^k + p^k).
pub fn sigma2_d(p: f64, k: usize) -> Result<f64> {
    check_p(p)?;
    check_k(k)?;
    let k = k as f64;
    Ok((p * (1.0 - p)).powf(1.0 - k) * ((1.0 - p).powf(k) + p.powf(k)))
}

pub fn sigma2(kind: StatKind, p: f64) -> Result<f64> {
    match kind.stat {
        Statistic::PHat => sigma2_p(p, kind.k),
        Statistic::DHat => sigma2_d(p, kind.k),
    }
}

/// Both limiting null variances at `(p, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullAsymptotics {
    pub p: f64,
    pub k: usize,
    pub var_p: f64,
    pub var_d: f64,
}

impl NullAsymptotics {
    pub fn new(p: f64, k: usize) -> Result<Self> {
        Ok(Self {
            p,
            k,
            var_p: sigma2_p(p, k)?,
            var_d: sigma2_d(p, k)?,
        })
    }
}

/// Second-order approximation n⁻¹p(1 − p^(−k)) to E[P̂ₙ,ₖ − p̂] under the null.
pub fn bias2_p(n: usize, k: usize, p: f64) -> Result<f64> {
    if n < 2 {
        return range("n must be at least 2");
    }
    check_p(p)?;
    Ok(p * (1.0 - p.powi(-(k as i32))) / n as f64)
}

/// Second-order approximation n⁻¹(1 − (1−p)^(1−k) − p^(1−k)) to E[D̂ₙ,ₖ] under the null.
pub fn bias2_d(n: usize, k: usize, p: f64) -> Result<f64> {
    if n < 2 {
        return range("n must be at least 2");
    }
    check_p(p)?;
    let e = 1 - k as i32;
    Ok((1.0 - (1.0 - p).powi(e) - p.powi(e)) / n as f64)
}

/// Where the null variance in [`normal_test`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceAt {
    /// At the sequence's own success rate p̂.
    PlugIn,
    /// At a known success probability.
    Known(f64),
}

/// Uncorrected one-sided normal test: rejects when √n·T exceeds z₁₋α·σ_T.
pub fn normal_test(
    seq: &BinarySequence,
    kind: StatKind,
    alpha: f64,
    variance: VarianceAt,
    boundary: Boundary,
) -> Result<bool> {
    let Some(t) = statistic(seq, kind, boundary)? else {
        return domain(format!(
            "statistic {kind} is undefined on sequence `{}`",
            seq.id()
        ));
    };
    let p = match variance {
        VarianceAt::PlugIn => p_hat(seq),
        VarianceAt::Known(p) => p,
    };
    // A degenerate plug-in rate only arises for constant sequences, where T = 0.
    if matches!(variance, VarianceAt::PlugIn) && (p <= 0.0 || p >= 1.0) {
        return Ok(false);
    }
    let z = z_upper(alpha)?;
    Ok(normal_reject(t, seq.len(), sigma2(kind, p)?.sqrt(), z))
}

#[inline]
pub(crate) fn normal_reject(t: f64, n: usize, sigma: f64, z: f64) -> bool {
    (n as f64).sqrt() * t > z * sigma
}
