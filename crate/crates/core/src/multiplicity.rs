//! Simultaneous tests of the individual hypotheses with familywise error control.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{range, Result};
use crate::perm::{perm_test_many, PermConfig, PermMode};
use crate::rng::{self, TAG_PERM, TAG_SIM};
use crate::sequence::{BinarySequence, StatKind};

/// Šidák critical value for rank `i` (1-based) among `s` hypotheses.
pub fn sidak_critical(alpha: f64, i: usize, s: usize) -> f64 {
    1.0 - (1.0 - alpha).powf(1.0 / (s - i + 1) as f64)
}

/// Output of [`sidak_stepdown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepdownResult {
    pub alpha: f64,
    /// Input indices sorted by increasing p-value (ties keep input order).
    pub order: Vec<usize>,
    /// p-values in sorted order.
    pub sorted_p: Vec<f64>,
    /// Critical values α₁ ≤ … ≤ αₛ = α.
    pub critical: Vec<f64>,
    /// Number of ranks rejected; the first `n_rejected` entries of `order`.
    pub n_rejected: usize,
}

impl StepdownResult {
    /// Input indices of rejected hypotheses, in rank order.
    pub fn rejected(&self) -> &[usize] {
        &self.order[..self.n_rejected]
    }

    /// Rejection flag for each input index.
    pub fn rejected_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.order.len()];
        for &i in self.rejected() {
            mask[i] = true;
        }
        mask
    }
}

/// Šidák stepdown: with sorted p-values ρ₍₁₎ ≤ … ≤ ρ₍ₛ₎, rejects ranks
/// `1..=r` for the largest `r` with ρ₍ᵢ₎ < αᵢ for every `i ≤ r`.
pub fn sidak_stepdown(p_values: &[f64], alpha: f64) -> Result<StepdownResult> {
    if p_values.is_empty() {
        return range("stepdown needs at least one p-value");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return range(format!("alpha={alpha} must lie in (0, 1)"));
    }
    if let Some(p) = p_values.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return range(format!("p-value {p} is outside (0, 1]"));
    }
    let s = p_values.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let sorted_p: Vec<f64> = order.iter().map(|&i| p_values[i]).collect();
    let mut critical: Vec<f64> = (1..=s).map(|i| sidak_critical(alpha, i, s)).collect();
    critical[s - 1] = alpha;
    let n_rejected = sorted_p
        .iter()
        .zip(&critical)
        .take_while(|(p, c)| p < c)
        .count();
    Ok(StepdownResult {
        alpha,
        order,
        sorted_p,
        critical,
        n_rejected,
    })
}

/// Where null p-values come from in [`fwer_simulation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum PValueSource {
    /// Sampled permutation tests of `kind` on i.i.d. Bernoulli(1/2)
    /// sequences of length `n`. An undefined statistic yields p = 1.
    Permutation { kind: StatKind, n: usize, perms: usize },
    /// Exact Uniform(0, 1] p-values, as from a continuous test of exact size.
    Uniform,
}

/// Familywise error rates under the complete null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwerEstimate {
    pub s: usize,
    pub alpha: f64,
    pub replications: usize,
    /// Replications where the stepdown rejected anything.
    pub stepdown_any: usize,
    /// Replications where some p-value was at most α.
    pub uncorrected_any: usize,
}

impl FwerEstimate {
    pub fn stepdown_rate(&self) -> f64 {
        self.stepdown_any as f64 / self.replications as f64
    }

    pub fn uncorrected_rate(&self) -> f64 {
        self.uncorrected_any as f64 / self.replications as f64
    }

    /// Binomial standard error of a rate near `p`.
    pub fn se(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.replications as f64).sqrt()
    }
}

fn null_p_values(s: usize, source: PValueSource, seed: u64, rep: u64) -> Result<Vec<f64>> {
    (0..s)
        .map(|i| {
            let mut rng = rng::stream(seed, &[TAG_SIM, rep, i as u64]);
            match source {
                PValueSource::Uniform => Ok(1.0 - rng.random::<f64>()),
                PValueSource::Permutation { kind, n, perms } => {
                    let trials: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
                    let seq = BinarySequence::new("null", trials)?;
                    let perm_seed = rng::derive_seed(seed, &[TAG_PERM, rep, i as u64]);
                    let res = perm_test_many(
                        &seq,
                        &[kind],
                        PermMode::Sampled { resamples: perms },
                        perm_seed,
                        &PermConfig::default(),
                    )?;
                    Ok(res[0].as_ref().map_or(1.0, |r| r.p_value))
                }
            }
        })
        .collect()
}

/// Simulates `replications` families of `s` true null hypotheses and counts
/// how often the Šidák stepdown, and separately per-test level-α testing,
/// produce at least one rejection.
pub fn fwer_simulation(
    s: usize,
    alpha: f64,
    replications: usize,
    source: PValueSource,
    seed: u64,
) -> Result<FwerEstimate> {
    if s == 0 || replications == 0 {
        return range("s and replications must be positive");
    }
    if let PValueSource::Permutation { kind, n, perms } = source {
        if perms == 0 || kind.k >= n {
            return range("need perms >= 1 and k < n");
        }
    }
    let flags: Vec<(bool, bool)> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let p = null_p_values(s, source, seed, rep)?;
            let step = sidak_stepdown(&p, alpha)?.n_rejected > 0;
            let unc = p.iter().any(|&v| v <= alpha);
            Ok((step, unc))
        })
        .collect::<Result<_>>()?;
    Ok(FwerEstimate {
        s,
        alpha,
        replications,
        stepdown_any: flags.iter().filter(|f| f.0).count(),
        uncorrected_any: flags.iter().filter(|f| f.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_hypothesis() {
        let r = sidak_stepdown(&[0.049], 0.05).unwrap();
        assert_eq!(r.critical, vec![0.05]);
        assert_eq!(r.rejected(), &[0]);
        assert_eq!(sidak_stepdown(&[0.05], 0.05).unwrap().n_rejected, 0);
        assert_eq!(sidak_stepdown(&[0.3], 0.05).unwrap().n_rejected, 0);
    }

    #[test]
    fn nothing_rejected_at_one() {
        let r = sidak_stepdown(&[1.0; 7], 0.05).unwrap();
        assert!(r.rejected().is_empty());
    }

    #[test]
    fn twenty_six_shooters() {
        let mut p = vec![0.5; 26];
        p[17] = 0.0001;
        p[3] = 0.01;
        let r = sidak_stepdown(&p, 0.05).unwrap();
        let a1 = 1.0 - 0.95f64.powf(1.0 / 26.0);
        assert!((r.critical[0] - a1).abs() < 1e-15);
        assert!((a1 - 0.001_970_874_286_549).abs() < 1e-12);
        assert_eq!(r.rejected(), &[17]);
        assert_eq!(r.rejected_mask().iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn critical_values_formula() {
        let r = sidak_stepdown(&[0.2, 0.1, 0.3, 0.4], 0.1).unwrap();
        for i in 1..=4 {
            let exact = 1.0 - 0.9f64.powf(1.0 / (4 - i + 1) as f64);
            assert!((r.critical[i - 1] - exact).abs() < 1e-15);
        }
        assert_eq!(r.order, vec![1, 0, 2, 3]);
    }

    #[test]
    fn bad_input() {
        assert!(sidak_stepdown(&[], 0.05).is_err());
        assert!(sidak_stepdown(&[0.0], 0.05).is_err());
        assert!(sidak_stepdown(&[1.2], 0.05).is_err());
        assert!(sidak_stepdown(&[0.5], 1.0).is_err());
    }

    #[test]
    fn single_family_is_per_test_size() {
        let est = fwer_simulation(1, 0.05, 4000, PValueSource::Uniform, 11).unwrap();
        assert!((est.stepdown_rate() - 0.05).abs() < 4.0 * est.se(0.05));
        assert!(est.uncorrected_any >= est.stepdown_any);
    }

    #[test]
    fn permutation_source_is_deterministic() {
        let src = PValueSource::Permutation {
            kind: StatKind::d(1),
            n: 30,
            perms: 49,
        };
        let a = fwer_simulation(3, 0.05, 20, src, 9).unwrap();
        assert_eq!(a, fwer_simulation(3, 0.05, 20, src, 9).unwrap());
    }

    proptest! {
        #[test]
        fn rejections_form_a_prefix_and_critical_values_increase(
            p in prop::collection::vec(1e-6f64..=1.0, 1..30),
            alpha in 0.001f64..0.5,
        ) {
            let r = sidak_stepdown(&p, alpha).unwrap();
            prop_assert!(r.critical.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*r.critical.last().unwrap(), alpha);
            for i in 0..r.n_rejected {
                prop_assert!(r.sorted_p[i] < r.critical[i]);
            }
            if r.n_rejected < p.len() {
                prop_assert!(r.sorted_p[r.n_rejected] >= r.critical[r.n_rejected]);
            }
        }

        #[test]
        fn lowering_p_values_keeps_rejections(
            p in prop::collection::vec(1e-6f64..=1.0, 1..20),
            shrink in prop::collection::vec(0.01f64..=1.0, 20),
            alpha in 0.001f64..0.5,
        ) {
            let before = sidak_stepdown(&p, alpha).unwrap();
            let q: Vec<f64> = p.iter().zip(&shrink).map(|(a, b)| a * b).collect();
            let after = sidak_stepdown(&q, alpha).unwrap().rejected_mask();
            for &i in before.rejected() {
                prop_assert!(after[i]);
            }
        }

        #[test]
        fn raising_an_unrejected_p_value_keeps_rejections(
            p in prop::collection::vec(1e-6f64..=1.0, 2..20),
            pick in 0usize..20,
            lift in 0.0f64..1.0,
            alpha in 0.001f64..0.5,
        ) {
            let before = sidak_stepdown(&p, alpha).unwrap();
            let mask = before.rejected_mask();
            let Some(j) = (0..p.len()).cycle().skip(pick).take(p.len()).find(|&i| !mask[i]) else {
                return Ok(());
            };
            let mut q = p.clone();
            q[j] = q[j] + (1.0 - q[j]) * lift;
            let after = sidak_stepdown(&q, alpha).unwrap();
            prop_assert_eq!(after.rejected_mask(), mask);
        }

        #[test]
        fn appending_a_hypothesis_can_only_shrink_the_critical_values(
            p in prop::collection::vec(1e-6f64..=1.0, 1..20),
            alpha in 0.001f64..0.5,
        ) {
            let a = sidak_stepdown(&p, alpha).unwrap();
            let mut q = p.clone();
            q.push(1.0);
            let b = sidak_stepdown(&q, alpha).unwrap();
            for i in 0..p.len() {
                prop_assert!(b.critical[i] <= a.critical[i] + 1e-15);
            }
        }
    }
}
