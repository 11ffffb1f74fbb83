use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use streakiness::asymptotics::z_upper;
use streakiness::chain::{simulate_population, theta_exact, StreakyModel};
use streakiness::multiplicity::{sidak_stepdown, StepdownResult};
use streakiness::perm::{
    auto_mode, perm_test_many, sequence_seed, stratified_perm_test_many, PermConfig,
    PermTestResult,
};
use streakiness::power::{analytic_joint_power, mc_rejections, sample_size, McSettings};
use streakiness::rng::derive_seed;
use streakiness::sequence::average_defined;
use streakiness::studies::{null_table, NullTableConfig};
use streakiness::{Boundary, SequenceSet, StatKind, Statistic};

use crate::args::{
    parse_grid, Cli, PowerArgs, Preset, SampleSizeArgs, SimulateArgs, StatArg, StepdownArgs,
    Table1Args, TestArgs,
};
use crate::error::CliError;
use crate::ingest;

pub const SCHEMA_VERSION: u32 = 1;

// Stream index of the joint test, kept apart from the per-sequence indices.
const JOINT_STREAM: u64 = u64::MAX;

/// Everything a command produced; serialized to `results.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
}

impl ResultDocument {
    fn new(command: &'static str, config: serde_json::Value, results: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            results,
        }
    }
}

/// Settings shared by all subcommands. Worker count and output directory are
/// deliberately left out of the echoed config.
#[derive(Debug, Clone, Serialize)]
struct Common {
    seed: Option<u64>,
    alpha: f64,
    boundary: Boundary,
}

impl Common {
    fn from_cli(cli: &Cli) -> Self {
        Self {
            seed: cli.seed,
            alpha: cli.alpha,
            boundary: cli.boundary.into(),
        }
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("this command needs --seed".into()))
    }

    fn perm_config(&self) -> PermConfig {
        PermConfig {
            boundary: self.boundary,
            ..PermConfig::default()
        }
    }
}

fn config_echo<T: Serialize>(common: &Common, args: &T) -> Result<serde_json::Value, CliError> {
    Ok(json!({ "common": common, "args": args }))
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

fn kinds(stats: &[StatArg], ks: &[usize]) -> Result<Vec<StatKind>, CliError> {
    if ks.is_empty() || stats.is_empty() {
        return Err(CliError::Usage("need at least one statistic and one k".into()));
    }
    let mut out = Vec::new();
    for &s in stats {
        for &k in ks {
            out.push(StatKind::new(Statistic::from(s), k)?);
        }
    }
    Ok(out)
}

/// Runs the parsed command in a pool of the requested size and writes
/// `results.json` into the output directory.
pub fn run(cli: &Cli) -> Result<ResultDocument, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cli.workers)))?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let doc = pool.install(|| dispatch(cli))?;
    let path = cli.out_dir.join("results.json");
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(doc)
}

fn dispatch(cli: &Cli) -> Result<ResultDocument, CliError> {
    use crate::args::Command;
    let common = Common::from_cli(cli);
    let dir = cli.out_dir.as_path();
    match &cli.command {
        Command::Test(a) => cmd_test(&common, a, dir),
        Command::Table1(a) => cmd_table1(&common, a, dir),
        Command::Power(a) => cmd_power(&common, a, dir),
        Command::Samplesize(a) => cmd_samplesize(&common, a),
        Command::Simulate(a) => cmd_simulate(&common, a, dir),
        Command::Stepdown(a) => cmd_stepdown(&common, a, dir),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndividualRow {
    pub id: String,
    pub kind: String,
    pub status: &'static str,
    pub n: usize,
    pub observed: Option<f64>,
    pub p_value: Option<f64>,
    pub perm_mean: Option<f64>,
    pub bias_corrected: Option<f64>,
    pub n_perms: Option<u64>,
    pub exhaustive: Option<bool>,
    pub stepdown_reject: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JointRow {
    pub kind: String,
    pub status: &'static str,
    pub observed: Option<f64>,
    pub p_value: Option<f64>,
    pub n_sequences_defined: usize,
    pub n_perms: u64,
    pub bias_corrected_avg: Option<f64>,
    pub stepdown_rejections: usize,
}

#[derive(Debug, Clone, Serialize)]
struct StepdownReport {
    kind: String,
    tested: usize,
    undefined: Vec<String>,
    rejected: Vec<String>,
    critical: Vec<f64>,
}

/// Per-sequence permutation tests of every kind, for sequences in set order.
/// Kinds with `k >= n` are undefined for that sequence.
pub fn individual_tests(
    set: &SequenceSet,
    kinds: &[StatKind],
    perms: usize,
    seed: u64,
    cfg: &PermConfig,
) -> Result<Vec<Vec<Option<PermTestResult>>>, CliError> {
    let mut out = Vec::with_capacity(set.len());
    for (i, seq) in set.iter().enumerate() {
        let usable: Vec<StatKind> = kinds.iter().copied().filter(|k| k.k < seq.len()).collect();
        let mut row = vec![None; kinds.len()];
        if !usable.is_empty() {
            let mode = auto_mode(seq, perms, cfg);
            let res = perm_test_many(seq, &usable, mode, sequence_seed(seed, i), cfg)?;
            for r in res.into_iter().flatten() {
                let slot = kinds.iter().position(|k| *k == r.kind).expect("kind present");
                row[slot] = Some(r);
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn cmd_test(common: &Common, a: &TestArgs, dir: &Path) -> Result<ResultDocument, CliError> {
    let seed = common.seed()?;
    if a.perms == 0 {
        return Err(CliError::Usage("--perms must be at least 1".into()));
    }
    let set = ingest::read_sequences(&a.input)?;
    let kinds = kinds(&a.stat, &a.k)?;
    let cfg = common.perm_config();

    let indiv = individual_tests(&set, &kinds, a.perms, seed, &cfg)?;
    let joint = stratified_perm_test_many(
        &set,
        &kinds,
        a.perms,
        derive_seed(seed, &[JOINT_STREAM]),
        &cfg,
    )?;

    let mut rows = Vec::new();
    let mut joint_rows = Vec::new();
    let mut reports = Vec::new();
    let mut reject_flags = vec![vec![None; kinds.len()]; set.len()];
    for (j, kind) in kinds.iter().enumerate() {
        let defined: Vec<(usize, f64)> = indiv
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r[j].as_ref().map(|r| (i, r.p_value)))
            .collect();
        let undefined: Vec<String> = indiv
            .iter()
            .zip(set.iter())
            .filter(|(r, _)| r[j].is_none())
            .map(|(_, s)| s.id().to_string())
            .collect();
        let step: Option<StepdownResult> = if defined.is_empty() {
            None
        } else {
            let p: Vec<f64> = defined.iter().map(|d| d.1).collect();
            Some(sidak_stepdown(&p, common.alpha)?)
        };
        let mut rejected = Vec::new();
        if let Some(step) = &step {
            let mask = step.rejected_mask();
            for (pos, &(i, _)) in defined.iter().enumerate() {
                reject_flags[i][j] = Some(mask[pos]);
            }
            rejected = step
                .rejected()
                .iter()
                .map(|&pos| set.sequences()[defined[pos].0].id().to_string())
                .collect();
        }
        let bc = average_defined(
            indiv
                .iter()
                .map(|r| r[j].as_ref().map(PermTestResult::bias_corrected)),
        )
        .ok();
        joint_rows.push(match &joint[j] {
            Some(r) => JointRow {
                kind: kind.to_string(),
                status: "ok",
                observed: Some(r.observed),
                p_value: Some(r.p_value),
                n_sequences_defined: r.n_sequences_defined,
                n_perms: r.n_perms,
                bias_corrected_avg: bc.map(|b| b.value),
                stepdown_rejections: rejected.len(),
            },
            None => JointRow {
                kind: kind.to_string(),
                status: "undefined",
                observed: None,
                p_value: None,
                n_sequences_defined: 0,
                n_perms: a.perms as u64,
                bias_corrected_avg: None,
                stepdown_rejections: 0,
            },
        });
        reports.push(StepdownReport {
            kind: kind.to_string(),
            tested: defined.len(),
            undefined,
            rejected,
            critical: step.map(|s| s.critical).unwrap_or_default(),
        });
    }
    for (i, seq) in set.iter().enumerate() {
        for (j, kind) in kinds.iter().enumerate() {
            rows.push(match &indiv[i][j] {
                Some(r) => IndividualRow {
                    id: seq.id().to_string(),
                    kind: kind.to_string(),
                    status: "ok",
                    n: seq.len(),
                    observed: Some(r.observed),
                    p_value: Some(r.p_value),
                    perm_mean: Some(r.perm_mean),
                    bias_corrected: Some(r.bias_corrected()),
                    n_perms: Some(r.n_perms),
                    exhaustive: Some(r.exhaustive),
                    stepdown_reject: reject_flags[i][j],
                },
                None => IndividualRow {
                    id: seq.id().to_string(),
                    kind: kind.to_string(),
                    status: "undefined",
                    n: seq.len(),
                    observed: None,
                    p_value: None,
                    perm_mean: None,
                    bias_corrected: None,
                    n_perms: None,
                    exhaustive: None,
                    stepdown_reject: None,
                },
            });
        }
    }
    write_csv(dir, "individual.csv", &rows)?;
    write_csv(dir, "joint.csv", &joint_rows)?;
    Ok(ResultDocument::new(
        "test",
        config_echo(common, a)?,
        json!({
            "n_sequences": set.len(),
            "total_trials": set.total_trials(),
            "individual": rows,
            "joint": joint_rows,
            "stepdown": reports,
        }),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub k: usize,
    pub mean_p: f64,
    pub mean_d: f64,
    pub rate_p: f64,
    pub rate_d: f64,
    pub se_mean_p: f64,
    pub se_mean_d: f64,
    pub defined_p: usize,
    pub defined_d: usize,
}

fn cmd_table1(common: &Common, a: &Table1Args, dir: &Path) -> Result<ResultDocument, CliError> {
    let seed = common.seed()?;
    let k_max = a.k.iter().copied().max().unwrap_or(0);
    if k_max == 0 || a.k.contains(&0) {
        return Err(CliError::Usage("--k values must be at least 1".into()));
    }
    let table = null_table(&NullTableConfig {
        draws: a.draws,
        n: a.n,
        k_max,
        p: a.p,
        alpha: common.alpha,
        boundary: common.boundary,
        seed,
    })?;
    let rows: Vec<Table1Row> = table
        .iter()
        .filter(|r| a.k.contains(&r.k))
        .map(|r| Table1Row {
            k: r.k,
            mean_p: r.mean_p,
            mean_d: r.mean_d,
            rate_p: r.rate_p,
            rate_d: r.rate_d,
            se_mean_p: r.se_mean_p,
            se_mean_d: r.se_mean_d,
            defined_p: r.defined_p,
            defined_d: r.defined_d,
        })
        .collect();
    write_csv(dir, "table1.csv", &rows)?;
    Ok(ResultDocument::new(
        "table1",
        config_echo(common, a)?,
        json!({ "rows": rows }),
    ))
}

/// One node of a power grid, in the long format written to `power_grid.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub study: String,
    pub stat: Statistic,
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub zeta: f64,
    pub n: f64,
    pub s: usize,
    pub power: f64,
    pub mc_power: Option<f64>,
    pub mc_se: Option<f64>,
}

struct Study {
    name: &'static str,
    s: usize,
    total: f64,
}

const SHOOTING_STUDIES: [Study; 4] = [
    Study { name: "GVT", s: 26, total: 2515.0 },
    Study { name: "MS", s: 10, total: 8400.0 },
    Study { name: "JNI", s: 6, total: 3240.0 },
    Study { name: "3PT", s: 34, total: 34.0 * 166.0 },
];

/// ε values marked on joint power plots.
pub const EPSILON_MARKERS: [f64; 2] = [0.024, 0.038];

fn grid_usize(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    parse_grid(text)
        .map_err(|e| CliError::Usage(format!("--{flag}: {e}")))?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Usage(format!("--{flag}: {v} is not a positive integer")))
            }
        })
        .collect()
}

fn grid_f64(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    parse_grid(text).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

/// Builds the analytic part of the grid requested by `a`.
pub fn power_grid(a: &PowerArgs, alpha: f64) -> Result<Vec<GridRow>, CliError> {
    let mut rows = Vec::new();
    let mut push = |study: &str, stat, k, m, epsilon, zeta, n: f64, s: usize| -> Result<(), CliError> {
        let power = analytic_joint_power(stat, k, m, epsilon, zeta, n * s as f64, alpha)?;
        rows.push(GridRow {
            study: study.to_string(),
            stat,
            k,
            m,
            epsilon,
            zeta,
            n,
            s,
            power,
            mc_power: None,
            mc_se: None,
        });
        Ok(())
    };
    match a.preset {
        Some(Preset::Individual) => {
            for k in 1..=4 {
                for eps in parse_grid("0:0.2:0.01").expect("static grid") {
                    push("", Statistic::DHat, k, 1, eps, 1.0, 100.0, 1)?;
                }
            }
        }
        Some(Preset::Shooting) => {
            for study in &SHOOTING_STUDIES {
                for zeta in [0.25, 0.5] {
                    for k in 1..=4 {
                        for eps in parse_grid("0:0.1:0.002").expect("static grid") {
                            let n = study.total / study.s as f64;
                            push(study.name, Statistic::DHat, k, k, eps, zeta, n, study.s)?;
                        }
                    }
                }
            }
        }
        None => {
            let eps = grid_f64(&a.epsilon, "epsilon")?;
            let zetas = grid_f64(&a.zeta, "zeta")?;
            let ns = grid_f64(&a.n, "n")?;
            let ss = grid_usize(&a.s, "s")?;
            for kind in kinds(&a.stat, &a.k)? {
                let m = a.m.unwrap_or(kind.k);
                for &s in &ss {
                    for &n in &ns {
                        for &z in &zetas {
                            for &e in &eps {
                                push("", kind.stat, kind.k, m, e, z, n, s)?;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn cmd_power(common: &Common, a: &PowerArgs, dir: &Path) -> Result<ResultDocument, CliError> {
    let mut rows = power_grid(a, common.alpha)?;
    if a.mc_reps > 0 {
        let seed = common.seed()?;
        for (node, row) in rows.iter_mut().enumerate() {
            if row.n.fract() != 0.0 {
                return Err(CliError::Usage(format!(
                    "Monte Carlo power needs whole trial counts; got n={}",
                    row.n
                )));
            }
            let model = StreakyModel::symmetric(row.m, row.epsilon, row.zeta)?;
            let est = mc_rejections(
                &model,
                &[StatKind::new(row.stat, row.k)?],
                &McSettings {
                    n: row.n as usize,
                    s: row.s,
                    alpha: common.alpha,
                    replications: a.mc_reps,
                    perms: a.perms,
                    seed: derive_seed(seed, &[node as u64]),
                },
                &common.perm_config(),
            )?[0];
            row.mc_power = Some(est.power());
            row.mc_se = Some(est.se());
        }
    }
    write_csv(dir, "power_grid.csv", &rows)?;
    let markers: &[f64] = if a.preset == Some(Preset::Shooting) {
        &EPSILON_MARKERS
    } else {
        &[]
    };
    Ok(ResultDocument::new(
        "power",
        config_echo(common, a)?,
        json!({ "z": z_upper(common.alpha)?, "epsilon_markers": markers, "grid": rows }),
    ))
}

fn cmd_samplesize(common: &Common, a: &SampleSizeArgs) -> Result<ResultDocument, CliError> {
    let ns = sample_size(common.alpha, a.beta, a.zeta, a.epsilon)?;
    println!("required total trials ns = {ns:.2} (round up to {})", ns.ceil());
    Ok(ResultDocument::new(
        "samplesize",
        config_echo(common, a)?,
        json!({ "ns": ns, "ns_ceil": ns.ceil() }),
    ))
}

#[derive(Debug, Clone, Serialize)]
struct FlagRow<'a> {
    id: &'a str,
    streaky: u8,
}

fn cmd_simulate(common: &Common, a: &SimulateArgs, dir: &Path) -> Result<ResultDocument, CliError> {
    let seed = common.seed()?;
    let model = StreakyModel::new(a.m, a.epsilon, a.zeta, a.p)?;
    let pop = simulate_population(&model, a.n, a.s, seed)?;
    let path = dir.join("sequences.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    ingest::write_sequences(&pop.set, std::io::BufWriter::new(file))?;
    let flags: Vec<FlagRow> = pop
        .set
        .iter()
        .zip(&pop.streaky)
        .map(|(s, &f)| FlagRow {
            id: s.id(),
            streaky: u8::from(f),
        })
        .collect();
    write_csv(dir, "streaky.csv", &flags)?;
    let theta = theta_exact(&model.streaky_chain()?, a.m)?;
    Ok(ResultDocument::new(
        "simulate",
        config_echo(common, a)?,
        json!({
            "n_streaky": pop.streaky.iter().filter(|&&f| f).count(),
            "streaky_theta": theta,
            "files": ["sequences.csv", "streaky.csv"],
        }),
    ))
}

#[derive(Debug, Clone, Serialize)]
struct StepdownRow {
    id: String,
    p_value: f64,
    rank: usize,
    critical: f64,
    reject: bool,
}

fn cmd_stepdown(common: &Common, a: &StepdownArgs, dir: &Path) -> Result<ResultDocument, CliError> {
    let rows = ingest::read_p_values(&a.input)?;
    let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let res = sidak_stepdown(&p, common.alpha)?;
    let out: Vec<StepdownRow> = res
        .order
        .iter()
        .enumerate()
        .map(|(rank, &i)| StepdownRow {
            id: rows[i].0.clone(),
            p_value: rows[i].1,
            rank: rank + 1,
            critical: res.critical[rank],
            reject: rank < res.n_rejected,
        })
        .collect();
    write_csv(dir, "stepdown.csv", &out)?;
    Ok(ResultDocument::new(
        "stepdown",
        config_echo(common, a)?,
        json!({ "n_rejected": res.n_rejected, "rows": out }),
    ))
}
