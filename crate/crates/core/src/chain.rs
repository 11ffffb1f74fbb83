//! The order-`m` Markov chain streaky alternative.
//!
//! States are the last `m` outcomes packed into an integer with the most
//! recent trial in the low bit, so state `s` moves to `((s << 1) | y) & mask`
//! after outcome `y`. The all-ones state is `mask`, the all-zeros state is 0.
//! After `m` straight successes the success probability is `p + ε`; after `m`
//! straight failures it is `p − ε`; every other state uses `p`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, range, Error, Result};
use crate::rng::{self, StreamRng, TAG_PREVALENCE, TAG_SIM};
use crate::sequence::{BinarySequence, SequenceSet};

/// Largest supported trigger length (4096 states).
pub const MAX_ORDER: usize = 12;

/// Parameters of the mixed population: each individual is streaky with
/// probability `zeta`, in which case it follows the order-`m` chain with
/// deviation `epsilon`; otherwise it is i.i.d. Bernoulli(`p`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreakyModel {
    pub m: usize,
    pub epsilon: f64,
    pub zeta: f64,
    pub p: f64,
}

impl StreakyModel {
    pub fn new(m: usize, epsilon: f64, zeta: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&zeta) {
            return range(format!("prevalence zeta={zeta} must lie in [0, 1]"));
        }
        if epsilon < 0.0 {
            return range(format!("epsilon={epsilon} must be non-negative"));
        }
        check_params(m, epsilon, p)?;
        Ok(Self {
            m,
            epsilon,
            zeta,
            p,
        })
    }

    /// `p = 1/2`.
    pub fn symmetric(m: usize, epsilon: f64, zeta: f64) -> Result<Self> {
        Self::new(m, epsilon, zeta, 0.5)
    }

    pub fn streaky_chain(&self) -> Result<ChainSpec> {
        build_chain(self.m, self.epsilon, self.p)
    }

    pub fn null_chain(&self) -> Result<ChainSpec> {
        build_chain(self.m, 0.0, self.p)
    }
}

fn check_params(m: usize, epsilon: f64, p: f64) -> Result<()> {
    if m == 0 || m > MAX_ORDER {
        return range(format!("trigger length m={m} must lie in 1..={MAX_ORDER}"));
    }
    if !(p > 0.0 && p < 1.0) {
        return range(format!("success probability p={p} must lie in (0, 1)"));
    }
    let bound = p.min(1.0 - p);
    if !(epsilon.abs() < bound) {
        return range(format!(
            "|epsilon|={} must be below min(p, 1-p)={bound}",
            epsilon.abs()
        ));
    }
    Ok(())
}

/// A fully specified chain: per-state success probabilities and the
/// stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    m: usize,
    p: f64,
    epsilon: f64,
    success: Vec<f64>,
    stationary: Vec<f64>,
}

impl ChainSpec {
    pub fn order(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_states(&self) -> usize {
        1 << self.m
    }

    fn mask(&self) -> usize {
        self.n_states() - 1
    }

    /// Probability that the next trial is a success from `state`.
    pub fn success_prob(&self, state: usize) -> f64 {
        self.success[state]
    }

    pub fn next_state(&self, state: usize, outcome: u8) -> usize {
        ((state << 1) | outcome as usize) & self.mask()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Dense row-stochastic transition matrix.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut t = DMatrix::zeros(n, n);
        for s in 0..n {
            let q = self.success[s];
            t[(s, self.next_state(s, 1))] += q;
            t[(s, self.next_state(s, 0))] += 1.0 - q;
        }
        t
    }

    fn draw_initial_state(&self, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, &w) in self.stationary.iter().enumerate() {
            acc += w;
            if u < acc {
                return s;
            }
        }
        self.stationary.len() - 1
    }
}

/// Builds the order-`m` chain. Negative `epsilon` gives the anti-streaky
/// mirror image, which numerical differentiation at 0 needs.
pub fn build_chain(m: usize, epsilon: f64, p: f64) -> Result<ChainSpec> {
    check_params(m, epsilon, p)?;
    let n = 1usize << m;
    let mut success = vec![p; n];
    success[n - 1] = p + epsilon;
    success[0] = p - epsilon;
    let mut chain = ChainSpec {
        m,
        p,
        epsilon,
        success,
        stationary: Vec::new(),
    };
    chain.stationary = solve_stationary(&chain.transition_matrix())?;
    Ok(chain)
}

/// Stationary distribution of the chain.
pub fn stationary_dist(chain: &ChainSpec) -> Vec<f64> {
    chain.stationary.clone()
}

/// Left fixed vector of a row-stochastic matrix: solves πP = π with the last
/// balance equation replaced by Σπ = 1.
pub fn solve_stationary(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return range("transition matrix must be square and non-empty");
    }
    let mut a = matrix.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular balance system; chain is reducible".into()))?;
    let residual = (pi.transpose() * matrix - pi.transpose()).amax();
    if !(residual <= 1e-10) || pi.iter().any(|&x| x < -1e-12) {
        return Err(Error::Numerical(format!(
            "stationary solve residual {residual:e} (min entry {:e})",
            pi.min()
        )));
    }
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

/// Simulates `n` trials from stationarity. Deterministic in `seed`.
pub fn simulate(chain: &ChainSpec, n: usize, seed: u64) -> Result<BinarySequence> {
    let mut rng = rng::stream(seed, &[TAG_SIM]);
    BinarySequence::new("sim", simulate_trials(chain, n, 0, &mut rng)?)
}

/// Simulates `n` trials, discarding `burn_in` transitions after the
/// stationary start. The first `m` emitted trials are the initial state,
/// oldest first.
pub fn simulate_trials(
    chain: &ChainSpec,
    n: usize,
    burn_in: usize,
    rng: &mut StreamRng,
) -> Result<Vec<u8>> {
    let m = chain.order();
    if n < m {
        return range(format!("cannot simulate n={n} trials with chain order m={m}"));
    }
    let mut state = chain.draw_initial_state(rng);
    for _ in 0..burn_in {
        let y = u8::from(rng.random::<f64>() < chain.success[state]);
        state = chain.next_state(state, y);
    }
    let mut out = Vec::with_capacity(n);
    out.extend((0..m).rev().map(|b| ((state >> b) & 1) as u8));
    for _ in m..n {
        let y = u8::from(rng.random::<f64>() < chain.success[state]);
        out.push(y);
        state = chain.next_state(state, y);
    }
    Ok(out)
}

/// A simulated population with its latent streaky flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub set: SequenceSet,
    pub streaky: Vec<bool>,
}

/// Id given to simulated sequence `index` (0-based) of `s`.
pub fn sequence_id(index: usize, s: usize) -> String {
    let width = s.to_string().len();
    format!("s{:0width$}", index + 1)
}

/// Draws `s` sequences of length `n`. Sequence `i` is streaky with
/// probability ζ; its flag and its trials use separate streams so the
/// trials of an i.i.d. individual do not depend on ζ.
pub fn simulate_population(
    model: &StreakyModel,
    n: usize,
    s: usize,
    seed: u64,
) -> Result<Population> {
    if s == 0 {
        return range("population size s must be at least 1");
    }
    let streaky_chain = model.streaky_chain()?;
    let null_chain = model.null_chain()?;
    let mut sequences = Vec::with_capacity(s);
    let mut streaky = Vec::with_capacity(s);
    for i in 0..s {
        let mut flag_rng = rng::stream(seed, &[TAG_PREVALENCE, i as u64]);
        let is_streaky = flag_rng.random::<f64>() < model.zeta;
        let chain = if is_streaky { &streaky_chain } else { &null_chain };
        let mut sim_rng = rng::stream(seed, &[TAG_SIM, i as u64]);
        let trials = simulate_trials(chain, n, 0, &mut sim_rng)?;
        sequences.push(BinarySequence::new(sequence_id(i, s), trials)?);
        streaky.push(is_streaky);
    }
    Ok(Population {
        set: SequenceSet::new(sequences)?,
        streaky,
    })
}

/// Population streak parameters of a stationary chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub k: usize,
    /// Pr(1 | k ones) − Pr(1).
    pub p: f64,
    /// Pr(1 | k ones) − Pr(1 | k zeros).
    pub d: f64,
    /// Pr(1) under stationarity.
    pub marginal: f64,
}

// Pr(next `len` trials all equal `value`) from the stationary start.
fn run_probability(chain: &ChainSpec, value: u8, len: usize) -> f64 {
    chain
        .stationary
        .iter()
        .enumerate()
        .map(|(s0, &w)| {
            let mut prob = w;
            let mut s = s0;
            for _ in 0..len {
                let q = chain.success[s];
                prob *= if value == 1 { q } else { 1.0 - q };
                s = chain.next_state(s, value);
            }
            prob
        })
        .sum()
}

// Pr(k trials equal to `value`, then a success).
fn run_then_success(chain: &ChainSpec, value: u8, k: usize) -> f64 {
    chain
        .stationary
        .iter()
        .enumerate()
        .map(|(s0, &w)| {
            let mut prob = w;
            let mut s = s0;
            for _ in 0..k {
                let q = chain.success[s];
                prob *= if value == 1 { q } else { 1.0 - q };
                s = chain.next_state(s, value);
            }
            prob * chain.success[s]
        })
        .sum()
}

/// Exact θ parameters at streak length `k` by summing path probabilities
/// from the stationary distribution.
pub fn theta_exact(chain: &ChainSpec, k: usize) -> Result<Theta> {
    if k == 0 {
        return range("streak length k must be at least 1");
    }
    let ones = run_probability(chain, 1, k);
    let zeros = run_probability(chain, 0, k);
    if ones <= 0.0 || zeros <= 0.0 {
        return domain(format!("conditioning event of length {k} has probability zero"));
    }
    let after_ones = run_then_success(chain, 1, k) / ones;
    let after_zeros = run_then_success(chain, 0, k) / zeros;
    let marginal: f64 = chain
        .stationary
        .iter()
        .zip(&chain.success)
        .map(|(w, q)| w * q)
        .sum();
    Ok(Theta {
        k,
        p: after_ones - marginal,
        d: after_ones - after_zeros,
        marginal,
    })
}
