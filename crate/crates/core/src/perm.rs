//! Individual and stratified permutation tests, and the permutation-mean
//! bias correction.
//!
//! All tests are one-sided (large values reject). Resamples whose statistic is
//! undefined are dropped from both the tail count and the total; the number of
//! defined resamples is reported alongside every result.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, range, Result};
use crate::rng::{self, StreamRng, TAG_PERM};
use crate::sequence::{
    average_defined, counts_up_to, proportion, BinarySequence, Boundary, JointAverage,
    SequenceSet, StatKind,
};

/// Default largest `n` for which exhaustive enumeration is allowed.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 12;

// Resamples per deterministic work unit. Fixed so floating-point sums are
// formed in the same order for any pool size.
const CHUNK: usize = 256;

/// How the permutation distribution is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermMode {
    /// `resamples` uniformly random permutations; add-one p-value.
    Sampled { resamples: usize },
    /// Every distinct arrangement of the observed ones and zeros.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermConfig {
    pub boundary: Boundary,
    pub exhaustive_cap: usize,
}

impl Default for PermConfig {
    fn default() -> Self {
        Self {
            boundary: Boundary::Successor,
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }
}

/// Outcome of a single-sequence permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub kind: StatKind,
    pub observed: f64,
    pub p_value: f64,
    /// Resamples drawn, or distinct arrangements enumerated.
    pub n_perms: u64,
    /// Mean of the defined resampled statistics.
    pub perm_mean: f64,
    pub n_defined_perms: u64,
    /// Defined resamples with statistic at least the observed value.
    pub n_at_least: u64,
    pub seed: u64,
    pub exhaustive: bool,
}

impl PermTestResult {
    /// Observed value minus the permutation mean.
    pub fn bias_corrected(&self) -> f64 {
        self.observed - self.perm_mean
    }
}

/// Outcome of a stratified (per-sequence) permutation test of a cross-sequence average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPermResult {
    pub kind: StatKind,
    pub observed: f64,
    /// Sequences entering the observed average.
    pub n_sequences_defined: usize,
    pub p_value: f64,
    pub n_perms: u64,
    pub perm_mean: f64,
    pub n_defined_perms: u64,
    pub n_at_least: u64,
    pub seed: u64,
    /// For each sequence, the number of resamples in which its statistic was defined.
    pub per_sequence_defined: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n_defined: u64,
    n_at_least: u64,
    sum: f64,
}

impl Tally {
    fn record(&mut self, value: Option<f64>, observed: f64) {
        if let Some(v) = value {
            self.n_defined += 1;
            self.sum += v;
            if at_least(v, observed) {
                self.n_at_least += 1;
            }
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.n_defined += other.n_defined;
        self.n_at_least += other.n_at_least;
        self.sum += other.sum;
    }
}

// Resampled values that equal the observed one in exact arithmetic can differ
// in the last bits when reached through different counts.
#[inline]
fn at_least(value: f64, observed: f64) -> bool {
    value >= observed - 1e-12 * observed.abs().max(1.0)
}

fn k_max(kinds: &[StatKind]) -> usize {
    kinds.iter().map(|k| k.k).max().unwrap_or(1)
}

fn eval_all(trials: &[u8], kinds: &[StatKind], boundary: Boundary, out: &mut [Option<f64>]) {
    let counts = counts_up_to(trials, k_max(kinds), boundary);
    let p = proportion(trials);
    for (slot, kind) in out.iter_mut().zip(kinds) {
        *slot = kind.evaluate(&counts[kind.k - 1], p);
    }
}

/// A source of resampled statistic vectors.
trait Resampler: Sync {
    type Scratch;
    fn scratch(&self) -> Self::Scratch;
    fn draw(&self, rng: &mut StreamRng, scratch: &mut Self::Scratch, out: &mut [Option<f64>]);
}

struct SingleSequence<'a> {
    trials: &'a [u8],
    kinds: &'a [StatKind],
    boundary: Boundary,
}

impl Resampler for SingleSequence<'_> {
    type Scratch = Vec<u8>;

    fn scratch(&self) -> Vec<u8> {
        self.trials.to_vec()
    }

    fn draw(&self, rng: &mut StreamRng, buf: &mut Vec<u8>, out: &mut [Option<f64>]) {
        buf.copy_from_slice(self.trials);
        buf.shuffle(rng);
        eval_all(buf, self.kinds, self.boundary, out);
    }
}

struct Stratified<'a> {
    sequences: &'a [BinarySequence],
    kinds: &'a [StatKind],
    boundary: Boundary,
}

struct StratifiedScratch {
    buffers: Vec<Vec<u8>>,
    values: Vec<Option<f64>>,
    sums: Vec<f64>,
    defined: Vec<usize>,
    /// Per sequence and kind: was the statistic defined in this resample.
    seq_defined: Vec<bool>,
}

impl Resampler for Stratified<'_> {
    type Scratch = StratifiedScratch;

    fn scratch(&self) -> StratifiedScratch {
        StratifiedScratch {
            buffers: self.sequences.iter().map(|s| s.trials().to_vec()).collect(),
            values: vec![None; self.kinds.len()],
            sums: vec![0.0; self.kinds.len()],
            defined: vec![0; self.kinds.len()],
            seq_defined: vec![false; self.kinds.len() * self.sequences.len()],
        }
    }

    fn draw(&self, rng: &mut StreamRng, sc: &mut StratifiedScratch, out: &mut [Option<f64>]) {
        sc.sums.iter_mut().for_each(|s| *s = 0.0);
        sc.defined.iter_mut().for_each(|d| *d = 0);
        let nk = self.kinds.len();
        for (i, (seq, buf)) in self.sequences.iter().zip(sc.buffers.iter_mut()).enumerate() {
            buf.copy_from_slice(seq.trials());
            buf.shuffle(rng);
            eval_all(buf, self.kinds, self.boundary, &mut sc.values);
            for (j, v) in sc.values.iter().enumerate() {
                sc.seq_defined[i * nk + j] = v.is_some();
                if let Some(v) = v {
                    sc.sums[j] += v;
                    sc.defined[j] += 1;
                }
            }
        }
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = (sc.defined[j] > 0).then(|| sc.sums[j] / sc.defined[j] as f64);
        }
    }
}

struct ChunkResult {
    tallies: Vec<Tally>,
    /// Flattened per-sequence × kind definedness counts (stratified only).
    seq_defined: Vec<u64>,
}

fn run_sampled<R: Resampler<Scratch = S>, S: SeqDefined>(
    resampler: &R,
    resamples: usize,
    seed: u64,
    observed: &[f64],
    seq_defined_len: usize,
) -> (Vec<Tally>, Vec<u64>) {
    let n_chunks = resamples.div_ceil(CHUNK);
    let chunks: Vec<ChunkResult> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = resampler.scratch();
            let mut out = vec![None; observed.len()];
            let mut tallies = vec![Tally::default(); observed.len()];
            let mut seq_defined = vec![0u64; seq_defined_len];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(resamples);
            for i in lo..hi {
                let mut rng = rng::stream(seed, &[TAG_PERM, i as u64]);
                resampler.draw(&mut rng, &mut scratch, &mut out);
                for ((t, v), &obs) in tallies.iter_mut().zip(&out).zip(observed) {
                    t.record(*v, obs);
                }
                scratch.add_defined(&mut seq_defined);
            }
            ChunkResult {
                tallies,
                seq_defined,
            }
        })
        .collect();
    let mut tallies = vec![Tally::default(); observed.len()];
    let mut seq_defined = vec![0u64; seq_defined_len];
    for chunk in &chunks {
        for (t, c) in tallies.iter_mut().zip(&chunk.tallies) {
            t.merge(c);
        }
        for (a, b) in seq_defined.iter_mut().zip(&chunk.seq_defined) {
            *a += b;
        }
    }
    (tallies, seq_defined)
}

trait SeqDefined {
    fn add_defined(&self, acc: &mut [u64]);
}

impl SeqDefined for Vec<u8> {
    fn add_defined(&self, _acc: &mut [u64]) {}
}

impl SeqDefined for StratifiedScratch {
    fn add_defined(&self, acc: &mut [u64]) {
        for (a, &d) in acc.iter_mut().zip(&self.seq_defined) {
            *a += u64::from(d);
        }
    }
}

/// Calls `f` with every arrangement of `n_ones` ones among `n` positions.
fn for_each_arrangement(n: usize, n_ones: usize, mut f: impl FnMut(&[u8])) {
    let mut buf = vec![0u8; n];
    if n_ones == 0 || n_ones == n {
        buf.iter_mut().for_each(|b| *b = u8::from(n_ones == n));
        f(&buf);
        return;
    }
    // Gosper's hack over n-bit masks with `n_ones` bits set.
    let limit: u64 = 1 << n;
    let mut mask: u64 = (1 << n_ones) - 1;
    while mask < limit {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = ((mask >> i) & 1) as u8;
        }
        f(&buf);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
}

fn finish(t: &Tally, exhaustive: bool) -> (f64, f64) {
    let p_value = if exhaustive {
        t.n_at_least as f64 / t.n_defined as f64
    } else {
        (1 + t.n_at_least) as f64 / (t.n_defined + 1) as f64
    };
    let mean = if t.n_defined > 0 {
        t.sum / t.n_defined as f64
    } else {
        f64::NAN
    };
    (p_value, mean)
}

fn validate_mode(seq: &BinarySequence, mode: PermMode, cfg: &PermConfig) -> Result<()> {
    match mode {
        PermMode::Sampled { resamples: 0 } => range("number of permutations B must be >= 1"),
        PermMode::Exhaustive if seq.len() > cfg.exhaustive_cap.min(62) => range(format!(
            "exhaustive enumeration needs n <= {} (sequence `{}` has n={})",
            cfg.exhaustive_cap.min(62),
            seq.id(),
            seq.len()
        )),
        _ => Ok(()),
    }
}

fn check_kinds(seq: &BinarySequence, kinds: &[StatKind]) -> Result<()> {
    for kind in kinds {
        if kind.k >= seq.len() {
            return range(format!(
                "streak length k={} must be < n={} for `{}`",
                kind.k,
                seq.len(),
                seq.id()
            ));
        }
    }
    Ok(())
}

/// Runs one permutation test per kind over a shared set of permutations.
///
/// Entries are `None` where the observed statistic is undefined.
pub fn perm_test_many(
    seq: &BinarySequence,
    kinds: &[StatKind],
    mode: PermMode,
    seed: u64,
    cfg: &PermConfig,
) -> Result<Vec<Option<PermTestResult>>> {
    validate_mode(seq, mode, cfg)?;
    check_kinds(seq, kinds)?;
    let mut observed = vec![None; kinds.len()];
    eval_all(seq.trials(), kinds, cfg.boundary, &mut observed);
    let active: Vec<usize> = (0..kinds.len()).filter(|&i| observed[i].is_some()).collect();
    let act_kinds: Vec<StatKind> = active.iter().map(|&i| kinds[i]).collect();
    let act_obs: Vec<f64> = active.iter().map(|&i| observed[i].unwrap()).collect();

    let (tallies, n_perms, exhaustive) = match mode {
        PermMode::Sampled { resamples } => {
            let r = SingleSequence {
                trials: seq.trials(),
                kinds: &act_kinds,
                boundary: cfg.boundary,
            };
            let (t, _) = run_sampled(&r, resamples, seed, &act_obs, 0);
            (t, resamples as u64, false)
        }
        PermMode::Exhaustive => {
            let mut tallies = vec![Tally::default(); act_kinds.len()];
            let mut out = vec![None; act_kinds.len()];
            let mut total = 0u64;
            for_each_arrangement(seq.len(), seq.n_ones(), |arr| {
                total += 1;
                eval_all(arr, &act_kinds, cfg.boundary, &mut out);
                for ((t, v), &obs) in tallies.iter_mut().zip(&out).zip(&act_obs) {
                    t.record(*v, obs);
                }
            });
            (tallies, total, true)
        }
    };

    let mut results = vec![None; kinds.len()];
    for ((&slot, t), &obs) in active.iter().zip(&tallies).zip(&act_obs) {
        let (p_value, perm_mean) = finish(t, exhaustive);
        results[slot] = Some(PermTestResult {
            kind: kinds[slot],
            observed: obs,
            p_value,
            n_perms,
            perm_mean,
            n_defined_perms: t.n_defined,
            n_at_least: t.n_at_least,
            seed,
            exhaustive,
        });
    }
    Ok(results)
}

/// One-sided permutation test of the i.i.d. hypothesis for one sequence.
pub fn perm_test(
    seq: &BinarySequence,
    kind: StatKind,
    mode: PermMode,
    seed: u64,
) -> Result<PermTestResult> {
    perm_test_with(seq, kind, mode, seed, &PermConfig::default())
}

pub fn perm_test_with(
    seq: &BinarySequence,
    kind: StatKind,
    mode: PermMode,
    seed: u64,
    cfg: &PermConfig,
) -> Result<PermTestResult> {
    match perm_test_many(seq, &[kind], mode, seed, cfg)?.pop().flatten() {
        Some(r) => Ok(r),
        None => domain(format!(
            "statistic {kind} is undefined on sequence `{}`; exclude it or choose a smaller k",
            seq.id()
        )),
    }
}

/// Stratified permutation tests of the cross-sequence averages, one per kind,
/// sharing the permutations. Entries are `None` where the observed average is
/// undefined for every sequence. A sequence with at most `k` trials never
/// defines the statistic and simply drops out of the averages.
pub fn stratified_perm_test_many(
    set: &SequenceSet,
    kinds: &[StatKind],
    resamples: usize,
    seed: u64,
    cfg: &PermConfig,
) -> Result<Vec<Option<JointPermResult>>> {
    if resamples == 0 {
        return range("number of permutations B must be >= 1");
    }
    let mut observed: Vec<Option<JointAverage>> = Vec::with_capacity(kinds.len());
    let mut values = vec![None; kinds.len()];
    let mut per_seq: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(set.len()); kinds.len()];
    for seq in set {
        eval_all(seq.trials(), kinds, cfg.boundary, &mut values);
        for (j, v) in values.iter().enumerate() {
            per_seq[j].push(*v);
        }
    }
    for vals in per_seq {
        observed.push(average_defined(vals).ok());
    }
    let active: Vec<usize> = (0..kinds.len()).filter(|&i| observed[i].is_some()).collect();
    let act_kinds: Vec<StatKind> = active.iter().map(|&i| kinds[i]).collect();
    let act_obs: Vec<f64> = active.iter().map(|&i| observed[i].unwrap().value).collect();

    let r = Stratified {
        sequences: set.sequences(),
        kinds: &act_kinds,
        boundary: cfg.boundary,
    };
    let nk = act_kinds.len();
    let (tallies, seq_defined) = run_sampled(&r, resamples, seed, &act_obs, nk * set.len());

    let mut results = vec![None; kinds.len()];
    for (j, ((&slot, t), &obs)) in active.iter().zip(&tallies).zip(&act_obs).enumerate() {
        let (p_value, perm_mean) = finish(t, false);
        results[slot] = Some(JointPermResult {
            kind: kinds[slot],
            observed: obs,
            n_sequences_defined: observed[slot].unwrap().n_defined,
            p_value,
            n_perms: resamples as u64,
            perm_mean,
            n_defined_perms: t.n_defined,
            n_at_least: t.n_at_least,
            seed,
            per_sequence_defined: (0..set.len()).map(|i| seq_defined[i * nk + j]).collect(),
        });
    }
    Ok(results)
}

/// Stratified permutation test: every sequence is permuted separately and the
/// average over defined sequences is recomputed.
pub fn stratified_perm_test(
    set: &SequenceSet,
    kind: StatKind,
    resamples: usize,
    seed: u64,
) -> Result<JointPermResult> {
    stratified_perm_test_with(set, kind, resamples, seed, &PermConfig::default())
}

pub fn stratified_perm_test_with(
    set: &SequenceSet,
    kind: StatKind,
    resamples: usize,
    seed: u64,
    cfg: &PermConfig,
) -> Result<JointPermResult> {
    match stratified_perm_test_many(set, &[kind], resamples, seed, cfg)?
        .pop()
        .flatten()
    {
        Some(r) => Ok(r),
        None => domain(format!("statistic {kind} is undefined for every sequence")),
    }
}

/// Exhaustive when `n` is within the cap, otherwise `resamples` random permutations.
pub fn auto_mode(seq: &BinarySequence, resamples: usize, cfg: &PermConfig) -> PermMode {
    if seq.len() <= cfg.exhaustive_cap {
        PermMode::Exhaustive
    } else {
        PermMode::Sampled { resamples }
    }
}

/// Seed used for sequence `index` of a set under a master seed.
pub fn sequence_seed(master: u64, index: usize) -> u64 {
    rng::derive_seed(master, &[index as u64])
}

/// Observed statistic minus the mean of its permutation distribution.
pub fn bias_corrected(
    seq: &BinarySequence,
    kind: StatKind,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    bias_corrected_with(seq, kind, resamples, seed, &PermConfig::default())
}

pub fn bias_corrected_with(
    seq: &BinarySequence,
    kind: StatKind,
    resamples: usize,
    seed: u64,
    cfg: &PermConfig,
) -> Result<f64> {
    let mode = auto_mode(seq, resamples, cfg);
    Ok(perm_test_with(seq, kind, mode, seed, cfg)?.bias_corrected())
}

/// Average of the per-sequence bias-corrected estimates over sequences where
/// the statistic is defined. Sequence `i` uses [`sequence_seed`]`(seed, i)`.
pub fn bias_corrected_avg(
    set: &SequenceSet,
    kind: StatKind,
    resamples: usize,
    seed: u64,
) -> Result<JointAverage> {
    bias_corrected_avg_with(set, kind, resamples, seed, &PermConfig::default())
}

pub fn bias_corrected_avg_with(
    set: &SequenceSet,
    kind: StatKind,
    resamples: usize,
    seed: u64,
    cfg: &PermConfig,
) -> Result<JointAverage> {
    let mut estimates = Vec::with_capacity(set.len());
    for (i, seq) in set.iter().enumerate() {
        let mode = auto_mode(seq, resamples, cfg);
        let r = perm_test_many(seq, &[kind], mode, sequence_seed(seed, i), cfg)?;
        estimates.push(r[0].as_ref().map(PermTestResult::bias_corrected));
    }
    average_defined(estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::statistic_on;

    fn seq(id: &str, bits: &[u8]) -> BinarySequence {
        BinarySequence::new(id, bits.to_vec()).unwrap()
    }

    #[test]
    fn arrangements_enumerated_once() {
        let mut seen = std::collections::HashSet::new();
        for_each_arrangement(6, 3, |a| {
            assert_eq!(a.iter().filter(|&&b| b == 1).count(), 3);
            assert!(seen.insert(a.to_vec()));
        });
        assert_eq!(seen.len(), 20);
        let mut count = 0;
        for_each_arrangement(4, 0, |a| {
            assert_eq!(a, &[0, 0, 0, 0]);
            count += 1;
        });
        assert_eq!(count, 1);
    }

    #[test]
    fn exhaustive_three_trials() {
        // Arrangements 110, 101, 011 give −1/6, −2/3, 1/3.
        let s = seq("a", &[1, 1, 0]);
        let r = perm_test(&s, StatKind::p(1), PermMode::Exhaustive, 0).unwrap();
        assert!((r.observed + 1.0 / 6.0).abs() < 1e-12);
        assert!((r.p_value - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.n_perms, 3);
        assert!((r.perm_mean + 1.0 / 6.0).abs() < 1e-12);
        assert!(r.bias_corrected().abs() < 1e-12);
    }

    #[test]
    fn constant_sequence() {
        let s = seq("a", &[1; 10]);
        let r = perm_test(&s, StatKind::p(1), PermMode::Exhaustive, 0).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = perm_test(&s, StatKind::p(2), PermMode::Sampled { resamples: 50 }, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(matches!(
            perm_test(&s, StatKind::d(1), PermMode::Exhaustive, 0),
            Err(crate::Error::Domain(_))
        ));
        assert!(matches!(
            bias_corrected(&s, StatKind::d(1), 100, 0),
            Err(crate::Error::Domain(_))
        ));
    }

    #[test]
    fn maximum_observed_gives_tie_multiplicity() {
        // 111000 maximises D̂₁ among arrangements of three ones in six.
        let s = seq("a", &[1, 1, 1, 0, 0, 0]);
        let r = perm_test(&s, StatKind::d(1), PermMode::Exhaustive, 0).unwrap();
        let mut values = Vec::new();
        for_each_arrangement(6, 3, |a| {
            values.push(statistic_on(a, StatKind::d(1), Boundary::Successor))
        });
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        let max = defined.iter().cloned().fold(f64::MIN, f64::max);
        assert!((r.observed - max).abs() < 1e-12);
        let ties = defined.iter().filter(|&&v| (v - max).abs() < 1e-12).count();
        assert!((r.p_value - ties as f64 / defined.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn bad_arguments() {
        let s = seq("a", &[1, 0, 1, 1, 0]);
        assert!(matches!(
            perm_test(&s, StatKind::d(1), PermMode::Sampled { resamples: 0 }, 0),
            Err(crate::Error::Range(_))
        ));
        let long = seq("b", &[1, 0].repeat(10));
        assert!(matches!(
            perm_test(&long, StatKind::d(1), PermMode::Exhaustive, 0),
            Err(crate::Error::Range(_))
        ));
    }

    #[test]
    fn sampled_is_seed_deterministic() {
        let s = seq("a", &[1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 0]);
        let a = perm_test(&s, StatKind::d(1), PermMode::Sampled { resamples: 999 }, 11).unwrap();
        let b = perm_test(&s, StatKind::d(1), PermMode::Sampled { resamples: 999 }, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let bits: Vec<u8> = (0..60).map(|i| ((i * 7 + i / 3) % 3 == 0) as u8).collect();
        let s = seq("a", &bits);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    perm_test_many(
                        &s,
                        &[StatKind::d(1), StatKind::p(2)],
                        PermMode::Sampled { resamples: 3000 },
                        5,
                        &PermConfig::default(),
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn stratified_single_stratum_matches_individual() {
        let s = seq("a", &[1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 0]);
        let ind = perm_test(&s, StatKind::d(1), PermMode::Sampled { resamples: 500 }, 9).unwrap();
        let set = SequenceSet::new(vec![s]).unwrap();
        let joint = stratified_perm_test(&set, StatKind::d(1), 500, 9).unwrap();
        assert_eq!(ind.p_value, joint.p_value);
        assert_eq!(ind.perm_mean, joint.perm_mean);
        assert_eq!(ind.n_defined_perms, joint.n_defined_perms);
    }

    #[test]
    fn stratified_constant_sequences() {
        let set = SequenceSet::new(vec![seq("a", &[1; 8]), seq("b", &[0; 8])]).unwrap();
        let r = stratified_perm_test(&set, StatKind::p(1), 200, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_sequences_defined, 1);
        assert_eq!(r.per_sequence_defined, vec![200, 0]);
    }

    #[test]
    fn bias_corrected_average() {
        let a = seq("a", &[1, 1, 0, 1, 0, 0, 1, 1, 1, 0]);
        let b = seq("b", &[0, 1, 1, 0, 1, 0, 0, 0, 1, 1]);
        let ea = bias_corrected(&a, StatKind::d(1), 100, 0).unwrap();
        let set = SequenceSet::new(vec![a.clone()]).unwrap();
        assert!((bias_corrected_avg(&set, StatKind::d(1), 100, 0).unwrap().value - ea).abs() < 1e-15);
        let eb = bias_corrected(&b, StatKind::d(1), 100, 0).unwrap();
        let set = SequenceSet::new(vec![a, b]).unwrap();
        let avg = bias_corrected_avg(&set, StatKind::d(1), 100, 0).unwrap();
        assert!((avg.value - (ea + eb) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_resamples_are_dropped() {
        // D̂₂ on 1,1,0,0,1,0,1,0: some arrangements have no 00 window with a successor.
        let s = seq("a", &[1, 1, 0, 0, 1, 0, 1, 0]);
        let r = perm_test(&s, StatKind::d(2), PermMode::Exhaustive, 0).unwrap();
        assert!(r.n_defined_perms < r.n_perms);
        assert_eq!(r.n_perms, 70);
    }
}
