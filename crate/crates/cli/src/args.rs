use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use streakiness::{Boundary, Statistic};

#[derive(Debug, Clone, Parser)]
#[command(name = "streakiness", version, about = "Permutation tests and power analysis for streaks in Bernoulli sequences")]
pub struct Cli {
    /// Master seed; required by every command that draws random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Directory for results.json and CSV tables.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// How windows at the end of a sequence are counted.
    #[arg(long, global = true, value_enum, default_value_t = BoundaryArg::Successor)]
    pub boundary: BoundaryArg,
    /// Test level.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Individual and stratified permutation tests with stepdown and bias-corrected estimates.
    Test(TestArgs),
    /// Null means of the statistics and sizes of the uncorrected normal test.
    Table1(Table1Args),
    /// Analytic (optionally Monte Carlo) power grids.
    Power(PowerArgs),
    /// Total trials needed for a target power of the D̄₁ test.
    Samplesize(SampleSizeArgs),
    /// Simulate a population from the Markov streaky model.
    Simulate(SimulateArgs),
    /// Šidák stepdown over a file of `id,p_value` rows.
    Stepdown(StepdownArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryArg {
    Successor,
    LiteralEq4,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Successor => Boundary::Successor,
            BoundaryArg::LiteralEq4 => Boundary::LiteralEq4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StatArg {
    P,
    D,
}

impl From<StatArg> for Statistic {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::P => Statistic::PHat,
            StatArg::D => Statistic::DHat,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    /// Sequence CSV with header `id,outcome`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StatArg::P, StatArg::D])]
    pub stat: Vec<StatArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
    pub k: Vec<usize>,
    /// Random permutations per test (sequences of at most 12 trials are enumerated).
    #[arg(long, default_value_t = 100_000)]
    pub perms: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Table1Args {
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
    pub k: Vec<usize>,
    /// Success probability of the simulated i.i.d. sequences.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Individual D̂ tests, n = 100, m = 1, ε from 0 to 0.2.
    Individual,
    /// Joint D̄ tests at the sizes of four shooting experiments, m = k.
    Shooting,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StatArg::D])]
    pub stat: Vec<StatArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize])]
    pub k: Vec<usize>,
    /// Trigger length of the alternative; defaults to each k.
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma list or `start:stop:step`.
    #[arg(long, default_value = "0:0.2:0.01")]
    pub epsilon: String,
    #[arg(long, default_value = "1")]
    pub zeta: String,
    /// Trials per sequence; may be fractional (a mean length).
    #[arg(long, default_value = "100")]
    pub n: String,
    #[arg(long, default_value = "1")]
    pub s: String,
    /// Monte Carlo replications per grid node; 0 skips simulation.
    #[arg(long, default_value_t = 0)]
    pub mc_reps: usize,
    /// Permutations per Monte Carlo test.
    #[arg(long, default_value_t = 999)]
    pub perms: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleSizeArgs {
    /// Target power.
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    #[arg(long)]
    pub zeta: f64,
    #[arg(long)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StepdownArgs {
    /// CSV with header `id,p_value`.
    #[arg(long)]
    pub input: PathBuf,
}

/// Parses `a,b,c` or an inclusive `start:stop:step` range.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number"))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(format!("range `{text}` must be start:stop:step"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(format!("range `{text}` needs step > 0 and stop >= start"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|i| a + i as f64 * step).collect())
    } else {
        text.split(',').map(num).collect()
    }
}
