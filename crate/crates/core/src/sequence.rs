//! Binary sequences, streak-window tallies and the plug-in streak statistics.
//!
//! A streak window of length `k` is a block of `k` consecutive identical
//! outcomes. Under the default [`Boundary::Successor`] convention a window is
//! only counted when the trial after it exists, so every counted window has an
//! observable "next shot".

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, range, Result};

/// One sequence of ordered 0/1 trial outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySequence {
    id: String,
    trials: Vec<u8>,
}

impl BinarySequence {
    /// Builds a sequence, rejecting empty input and any value other than 0 or 1.
    pub fn new(id: impl Into<String>, trials: Vec<u8>) -> Result<Self> {
        let id = id.into();
        if trials.is_empty() {
            return range(format!("sequence `{id}` has no trials"));
        }
        if let Some(pos) = trials.iter().position(|&t| t > 1) {
            return range(format!(
                "sequence `{id}` has non-binary value {} at trial {}",
                trials[pos],
                pos + 1
            ));
        }
        Ok(Self { id, trials })
    }

    pub fn from_bools(id: impl Into<String>, trials: &[bool]) -> Result<Self> {
        Self::new(id, trials.iter().map(|&b| u8::from(b)).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn trials(&self) -> &[u8] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    /// Always false; sequences hold at least one trial.
    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_ones(&self) -> usize {
        self.trials.iter().map(|&t| t as usize).sum()
    }

    /// Global 0↔1 relabeling.
    pub fn flipped(&self) -> Self {
        Self {
            id: self.id.clone(),
            trials: self.trials.iter().map(|&t| 1 - t).collect(),
        }
    }
}

/// An ordered collection of sequences with unique ids. Lengths may differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSet {
    sequences: Vec<BinarySequence>,
}

impl SequenceSet {
    pub fn new(sequences: Vec<BinarySequence>) -> Result<Self> {
        if sequences.is_empty() {
            return range("a sequence set needs at least one sequence");
        }
        let mut seen = HashSet::with_capacity(sequences.len());
        for seq in &sequences {
            if !seen.insert(seq.id()) {
                return range(format!("duplicate sequence id `{}`", seq.id()));
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[BinarySequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BinarySequence> {
        self.sequences.iter()
    }

    /// Mean sequence length, used wherever a common `n` is needed for unequal lengths.
    pub fn mean_len(&self) -> f64 {
        let total: usize = self.sequences.iter().map(BinarySequence::len).sum();
        total as f64 / self.sequences.len() as f64
    }

    pub fn total_trials(&self) -> usize {
        self.sequences.iter().map(BinarySequence::len).sum()
    }

    pub fn into_inner(self) -> Vec<BinarySequence> {
        self.sequences
    }
}

impl<'a> IntoIterator for &'a SequenceSet {
    type Item = &'a BinarySequence;
    type IntoIter = std::slice::Iter<'a, BinarySequence>;

    fn into_iter(self) -> Self::IntoIter {
        self.sequences.iter()
    }
}

/// Which conditioning windows enter the denominators of the streak ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Only windows followed by another trial (`j + k <= n`).
    #[default]
    Successor,
    /// Every window of `k` identical outcomes, including one that ends at the
    /// last trial. Numerators are unchanged, so the ratio is biased towards 0.
    LiteralEq4,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Successor => f.write_str("successor"),
            Boundary::LiteralEq4 => f.write_str("literal-eq4"),
        }
    }
}

/// Window tallies for streak length `k`.
///
/// `n_make_windows` (N₁) counts windows of `k` ones, `n_make_hits` (M₁) those
/// followed by a one; `n_miss_windows` (N₀) and `n_miss_hits` (M₀) are the
/// same for windows of `k` zeros, where a hit is again a following one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreakCounts {
    pub k: usize,
    pub n_make_windows: u32,
    pub n_make_hits: u32,
    pub n_miss_windows: u32,
    pub n_miss_hits: u32,
}

impl StreakCounts {
    /// M₁/N₁, the success rate after `k` successes.
    pub fn make_rate(&self) -> Option<f64> {
        (self.n_make_windows > 0).then(|| self.n_make_hits as f64 / self.n_make_windows as f64)
    }

    /// M₀/N₀, the success rate after `k` failures.
    pub fn miss_rate(&self) -> Option<f64> {
        (self.n_miss_windows > 0).then(|| self.n_miss_hits as f64 / self.n_miss_windows as f64)
    }
}

/// Which plug-in statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// Success rate after `k` successes minus the overall success rate.
    PHat,
    /// Success rate after `k` successes minus the success rate after `k` failures.
    DHat,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::PHat => f.write_str("p"),
            Statistic::DHat => f.write_str("d"),
        }
    }
}

/// A statistic together with its streak length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatKind {
    pub stat: Statistic,
    pub k: usize,
}

impl StatKind {
    pub fn new(stat: Statistic, k: usize) -> Result<Self> {
        if k == 0 {
            return range("streak length k must be at least 1");
        }
        Ok(Self { stat, k })
    }

    pub fn p(k: usize) -> Self {
        Self::new(Statistic::PHat, k).expect("k >= 1")
    }

    pub fn d(k: usize) -> Self {
        Self::new(Statistic::DHat, k).expect("k >= 1")
    }

    /// Evaluates the statistic from precomputed tallies; `None` when undefined.
    pub fn evaluate(&self, counts: &StreakCounts, p_hat: f64) -> Option<f64> {
        debug_assert_eq!(counts.k, self.k);
        match self.stat {
            Statistic::PHat => counts.make_rate().map(|r| r - p_hat),
            Statistic::DHat => Some(counts.make_rate()? - counts.miss_rate()?),
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.stat, self.k)
    }
}

/// Tallies for every `k` in `1..=k_max` from one pass over the runs of `trials`.
///
/// Works directly on raw 0/1 slices so permutation loops avoid allocation
/// other than the returned vector.
pub fn counts_up_to(trials: &[u8], k_max: usize, boundary: Boundary) -> Vec<StreakCounts> {
    let mut out: Vec<StreakCounts> = (1..=k_max)
        .map(|k| StreakCounts {
            k,
            ..StreakCounts::default()
        })
        .collect();
    for_each_run(trials, |value, len, is_last| {
        for c in out.iter_mut() {
            add_run(c, value, len, is_last, boundary);
        }
    });
    out
}

/// Tallies for a single `k` on a raw slice. No range check.
pub fn counts_for(trials: &[u8], k: usize, boundary: Boundary) -> StreakCounts {
    let mut c = StreakCounts {
        k,
        ..StreakCounts::default()
    };
    for_each_run(trials, |value, len, is_last| {
        add_run(&mut c, value, len, is_last, boundary)
    });
    c
}

fn for_each_run(trials: &[u8], mut f: impl FnMut(u8, usize, bool)) {
    let n = trials.len();
    let mut start = 0;
    while start < n {
        let value = trials[start];
        let mut end = start + 1;
        while end < n && trials[end] == value {
            end += 1;
        }
        f(value, end - start, end == n);
        start = end;
    }
}

// A maximal run of `len` equal outcomes holds `len - k + 1` windows of length k.
// Inside the run every window but the last is followed by the same value; the
// last one is followed by the opposite value, or by nothing if the run ends the
// sequence.
#[inline]
fn add_run(c: &mut StreakCounts, value: u8, len: usize, is_last: bool, boundary: Boundary) {
    let k = c.k;
    if len < k {
        return;
    }
    let all = (len - k + 1) as u32;
    let windows = match boundary {
        Boundary::Successor if is_last => all - 1,
        _ => all,
    };
    if value == 1 {
        c.n_make_windows += windows;
        c.n_make_hits += (len - k) as u32;
    } else {
        c.n_miss_windows += windows;
        if !is_last {
            c.n_miss_hits += 1;
        }
    }
}

/// Proportion of ones on a raw slice.
pub fn proportion(trials: &[u8]) -> f64 {
    trials.iter().map(|&t| t as u32).sum::<u32>() as f64 / trials.len() as f64
}

/// Statistic value on a raw slice; `None` when undefined.
pub fn statistic_on(trials: &[u8], kind: StatKind, boundary: Boundary) -> Option<f64> {
    let counts = counts_for(trials, kind.k, boundary);
    kind.evaluate(&counts, proportion(trials))
}

fn check_k(seq: &BinarySequence, k: usize) -> Result<()> {
    if k == 0 || k >= seq.len() {
        return range(format!(
            "streak length k={k} must satisfy 1 <= k <= n-1 (n={} for `{}`)",
            seq.len(),
            seq.id()
        ));
    }
    Ok(())
}

/// Window tallies under the successor convention.
pub fn streak_counts(seq: &BinarySequence, k: usize) -> Result<StreakCounts> {
    streak_counts_with(seq, k, Boundary::Successor)
}

pub fn streak_counts_with(
    seq: &BinarySequence,
    k: usize,
    boundary: Boundary,
) -> Result<StreakCounts> {
    check_k(seq, k)?;
    Ok(counts_for(seq.trials(), k, boundary))
}

/// Observed success proportion.
pub fn p_hat(seq: &BinarySequence) -> f64 {
    proportion(seq.trials())
}

/// P̂ₙ,ₖ − p̂, or `None` when no window of `k` ones has a successor.
pub fn stat_p(seq: &BinarySequence, k: usize) -> Result<Option<f64>> {
    statistic(seq, StatKind::new(Statistic::PHat, k)?, Boundary::Successor)
}

/// D̂ₙ,ₖ, or `None` when either conditioning event never occurs.
pub fn stat_d(seq: &BinarySequence, k: usize) -> Result<Option<f64>> {
    statistic(seq, StatKind::new(Statistic::DHat, k)?, Boundary::Successor)
}

pub fn statistic(
    seq: &BinarySequence,
    kind: StatKind,
    boundary: Boundary,
) -> Result<Option<f64>> {
    check_k(seq, kind.k)?;
    Ok(statistic_on(seq.trials(), kind, boundary))
}

/// A cross-sequence average that skipped undefined entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAverage {
    pub value: f64,
    pub n_defined: usize,
    pub n_skipped: usize,
}

/// Averages already-evaluated per-sequence values, skipping `None`.
pub fn average_defined<I>(values: I) -> Result<JointAverage>
where
    I: IntoIterator<Item = Option<f64>>,
{
    let (mut sum, mut n_defined, mut n_skipped) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n_defined += 1;
            }
            None => n_skipped += 1,
        }
    }
    if n_defined == 0 {
        return domain("statistic is undefined for every sequence");
    }
    Ok(JointAverage {
        value: sum / n_defined as f64,
        n_defined,
        n_skipped,
    })
}

/// Mean of the statistic over the sequences where it is defined.
pub fn joint_avg(set: &SequenceSet, kind: StatKind) -> Result<JointAverage> {
    joint_avg_with(set, kind, Boundary::Successor)
}

pub fn joint_avg_with(
    set: &SequenceSet,
    kind: StatKind,
    boundary: Boundary,
) -> Result<JointAverage> {
    let values = set
        .iter()
        .map(|s| statistic(s, kind, boundary))
        .collect::<Result<Vec<_>>>()?;
    average_defined(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(bits: &[u8]) -> BinarySequence {
        BinarySequence::new("x", bits.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    // Independent oracle: literal window scan.
    fn naive_counts(t: &[u8], k: usize, boundary: Boundary) -> StreakCounts {
        let n = t.len();
        let mut c = StreakCounts {
            k,
            ..Default::default()
        };
        for j in 0..=(n - k) {
            let w = &t[j..j + k];
            let next = t.get(j + k).copied();
            if next.is_none() && boundary == Boundary::Successor {
                continue;
            }
            if w.iter().all(|&x| x == 1) {
                c.n_make_windows += 1;
                if next == Some(1) {
                    c.n_make_hits += 1;
                }
            }
            if w.iter().all(|&x| x == 0) {
                c.n_miss_windows += 1;
                if next == Some(1) {
                    c.n_miss_hits += 1;
                }
            }
        }
        c
    }

    #[test]
    fn counts_hand_enumerated() {
        let s = seq(&[1, 1, 0, 1, 1, 1, 0, 0]);
        let c = streak_counts(&s, 1).unwrap();
        assert_eq!(
            (c.n_make_windows, c.n_make_hits, c.n_miss_windows, c.n_miss_hits),
            (5, 3, 2, 1)
        );
        let c = streak_counts(&s, 2).unwrap();
        assert_eq!(
            (c.n_make_windows, c.n_make_hits, c.n_miss_windows, c.n_miss_hits),
            (3, 1, 0, 0)
        );
        let c = streak_counts(&seq(&[1, 1, 1, 1, 1]), 2).unwrap();
        assert_eq!(
            (c.n_make_windows, c.n_make_hits, c.n_miss_windows, c.n_miss_hits),
            (3, 3, 0, 0)
        );
    }

    #[test]
    fn k_out_of_range() {
        let s = seq(&[1, 0, 1]);
        assert!(matches!(streak_counts(&s, 0), Err(crate::Error::Range(_))));
        assert!(matches!(streak_counts(&s, 3), Err(crate::Error::Range(_))));
        assert!(streak_counts(&s, 2).is_ok());
    }

    #[test]
    fn invalid_sequences_rejected() {
        assert!(BinarySequence::new("a", vec![]).is_err());
        assert!(BinarySequence::new("a", vec![0, 2]).is_err());
        let a = seq(&[1]);
        assert!(SequenceSet::new(vec![a.clone(), a]).is_err());
        assert!(SequenceSet::new(vec![]).is_err());
    }

    #[test]
    fn p_hat_examples() {
        assert_eq!(p_hat(&seq(&[1, 1, 0, 1])), 0.75);
        assert_eq!(p_hat(&seq(&[0; 10])), 0.0);
        assert_eq!(p_hat(&seq(&[1, 0, 1, 0, 1, 0])), 0.5);
    }

    #[test]
    fn stat_p_examples() {
        let s = seq(&[1, 1, 0, 1, 1, 1, 0, 0]);
        assert!(close(stat_p(&s, 1).unwrap().unwrap(), -0.025));
        assert_eq!(stat_p(&seq(&[1; 9]), 1).unwrap(), Some(0.0));
        assert_eq!(stat_p(&seq(&[0, 0, 0, 1]), 2).unwrap(), None);
    }

    #[test]
    fn stat_d_examples() {
        let s = seq(&[1, 1, 0, 1, 1, 1, 0, 0]);
        assert!(close(stat_d(&s, 1).unwrap().unwrap(), 0.1));
        assert_eq!(stat_d(&seq(&[1, 0, 1, 0, 1, 0, 1, 0]), 1).unwrap(), Some(-1.0));
        assert_eq!(stat_d(&s, 2).unwrap(), None);
    }

    #[test]
    fn joint_average_skips_undefined() {
        let a = BinarySequence::new("a", vec![1, 1, 0, 1, 1, 1, 0, 0]).unwrap();
        let b = BinarySequence::new("b", vec![1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        let c = BinarySequence::new("c", vec![1, 1, 1, 1, 1, 1, 1, 1]).unwrap();

        let set = SequenceSet::new(vec![a.clone(), b]).unwrap();
        let avg = joint_avg(&set, StatKind::d(1)).unwrap();
        assert!(close(avg.value, -0.45));

        let set = SequenceSet::new(vec![a.clone(), c.clone()]).unwrap();
        let avg = joint_avg(&set, StatKind::d(1)).unwrap();
        assert!(close(avg.value, 0.1));
        assert_eq!((avg.n_defined, avg.n_skipped), (1, 1));

        let set = SequenceSet::new(vec![a]).unwrap();
        assert!(close(joint_avg(&set, StatKind::d(1)).unwrap().value, 0.1));

        let set = SequenceSet::new(vec![c]).unwrap();
        assert!(matches!(
            joint_avg(&set, StatKind::d(1)),
            Err(crate::Error::Domain(_))
        ));
    }

    #[test]
    fn literal_boundary_counts_final_window() {
        // 1,1,0,1,1,1,0,0 with k=2: the trailing 0,0 pair now counts as a miss window.
        let s = seq(&[1, 1, 0, 1, 1, 1, 0, 0]);
        let c = streak_counts_with(&s, 2, Boundary::LiteralEq4).unwrap();
        assert_eq!(
            (c.n_make_windows, c.n_make_hits, c.n_miss_windows, c.n_miss_hits),
            (3, 1, 1, 0)
        );
    }

    #[test]
    fn brute_force_oracle_all_short_sequences() {
        for n in 2..=12usize {
            for code in 0u32..(1 << n) {
                let t: Vec<u8> = (0..n).map(|i| ((code >> i) & 1) as u8).collect();
                let k_max = 3.min(n - 1);
                for boundary in [Boundary::Successor, Boundary::LiteralEq4] {
                    let all = counts_up_to(&t, k_max, boundary);
                    for k in 1..=k_max {
                        let expect = naive_counts(&t, k, boundary);
                        assert_eq!(all[k - 1], expect, "t={t:?} k={k} {boundary}");
                        assert_eq!(counts_for(&t, k, boundary), expect);
                    }
                }
            }
        }
    }

    fn bits(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..=1, 2..max_len)
    }

    proptest! {
        #[test]
        fn count_invariants(t in bits(80), k in 1usize..6) {
            prop_assume!(k < t.len());
            let c = counts_for(&t, k, Boundary::Successor);
            let bound = (t.len() - k) as u32;
            prop_assert!(c.n_make_hits <= c.n_make_windows);
            prop_assert!(c.n_miss_hits <= c.n_miss_windows);
            prop_assert!(c.n_make_windows + c.n_miss_windows <= bound);
        }

        #[test]
        fn d_is_relabeling_invariant(t in bits(80), k in 1usize..5) {
            prop_assume!(k < t.len());
            let s = BinarySequence::new("x", t).unwrap();
            let a = stat_d(&s, k).unwrap();
            let b = stat_d(&s.flipped(), k).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => prop_assert!(false, "definedness differs"),
            }
        }

        #[test]
        fn statistics_consistent_with_rates(t in bits(80), k in 1usize..5) {
            prop_assume!(k < t.len());
            let s = BinarySequence::new("x", t).unwrap();
            let c = streak_counts(&s, k).unwrap();
            if let Some(p) = stat_p(&s, k).unwrap() {
                prop_assert!((p + p_hat(&s) - c.make_rate().unwrap()).abs() < 1e-12);
            }
            if let Some(d) = stat_d(&s, k).unwrap() {
                prop_assert!((-1.0..=1.0).contains(&d));
                prop_assert!((d - (c.make_rate().unwrap() - c.miss_rate().unwrap())).abs() < 1e-12);
            }
        }
    }
}
