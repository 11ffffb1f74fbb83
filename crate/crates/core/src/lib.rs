//! Tests of the i.i.d. hypothesis for collections of Bernoulli sequences
//! against "streaky" alternatives.
//!
//! The crate is organised bottom-up:
//!
//! * [`sequence`]: sequences, streak-window tallies and the plug-in statistics.
//! * [`perm`]: individual and stratified permutation tests, bias-corrected estimators.
//! * [`asymptotics`]: closed-form null variances, second-order biases, normal approximations.
//! * [`chain`]: the order-`m` Markov chain streaky alternative.
//! * [`power`]: local asymptotic power, the φ coefficients, sample sizes and Monte Carlo power.
//! * [`multiplicity`]: Šidák stepdown and familywise error simulation.
//! * [`studies`]: simulation drivers for null moments, test sizes and permutation moments.
//!
//! Every stochastic routine takes an explicit 64-bit seed. Random streams are
//! attached to task indices (resample, replication, sequence), never to worker
//! threads, so results are bit-identical for any rayon pool size.

pub mod asymptotics;
pub mod chain;
mod error;
pub mod multiplicity;
pub mod perm;
pub mod power;
pub mod rng;
pub mod sequence;
pub mod studies;

pub use error::{Error, Result};
pub use sequence::{
    BinarySequence, Boundary, JointAverage, SequenceSet, StatKind, Statistic, StreakCounts,
};
