//! Batch runner: expands a scenario into (cell, seed) runs, executes them in
//! parallel and writes CSV results.
//!
//! Output layout under the chosen directory:
//!
//! * `runs.csv`: one row per (cell, seed);
//! * `series/cell{c}_seed{s}.csv`: the 1 Hz metric series of each run;
//! * `snapshots/cell{c}_seed{s}.csv`: position snapshots, when requested.
//!
//! Every file depends only on its (cell, seed), so the thread count never
//! changes a byte of output.

mod config;
mod output;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{Cell, Scenario, ScenarioKind, KEYS};
pub use output::{runs_header, runs_row, series_csv, snapshots_csv, wire_dump, RunRow, RunStatus};

use crate::sim::{RunOutput, SimError, Simulation};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key {key:?}; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("invalid value {value:?} for {key}: {msg}")]
    InvalidValue { key: String, value: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("run cell {cell} seed {seed}: {source}")]
    Run {
        cell: usize,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl HarnessError {
    fn value(key: &str, value: &str, msg: &str) -> Self {
        Self::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            msg: msg.to_string(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short stable identifier for the error line printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Syntax { .. } => "syntax",
            Self::UnknownKey { .. } => "unknown_key",
            Self::MissingKey(_) => "missing_key",
            Self::InvalidValue { .. } => "invalid_value",
            Self::Usage(_) => "usage",
            Self::Run { .. } => "run_failed",
            Self::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seeds: u64,
    /// Run only this seed in every cell instead of `seeds` consecutive ones.
    pub only_seed: Option<u64>,
    pub snapshot_every: Option<f64>,
    pub dump_wire: Option<PathBuf>,
    /// 0 lets rayon choose.
    pub threads: usize,
    pub shuffle_order: bool,
}

/// One (cell, seed) pair. Jobs are listed in `runs.csv` order.
#[derive(Debug, Clone)]
pub struct Job {
    pub cell: usize,
    pub seed: u64,
}

pub fn jobs(scenario: &Scenario, opts: &RunOptions) -> Vec<Job> {
    let seeds: Vec<u64> = match opts.only_seed {
        Some(s) => vec![s],
        None => (0..opts.seeds).map(|k| scenario.base_seed + k).collect(),
    };
    scenario
        .cells
        .iter()
        .flat_map(|c| seeds.iter().map(move |&seed| Job { cell: c.index, seed }))
        .collect()
}

fn wire_path(base: &Path, job: &Job, single: bool) -> PathBuf {
    if single {
        return base.to_path_buf();
    }
    let mut name = base.as_os_str().to_owned();
    name.push(format!(".cell{}_seed{}", job.cell, job.seed));
    PathBuf::from(name)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn execute(scenario: &Scenario, job: &Job, opts: &RunOptions, single: bool) -> Result<RunRow, HarnessError> {
    let cell = &scenario.cells[job.cell];
    let mut cfg = cell.sim.clone();
    cfg.world.seed = job.seed;
    cfg.snapshot_every = opts.snapshot_every;
    cfg.record_wire = opts.dump_wire.is_some();
    cfg.shuffle_order = opts.shuffle_order;

    let out: RunOutput = match Simulation::new(cfg.clone()) {
        Ok(sim) => sim.run().map_err(|source| HarnessError::Run {
            cell: job.cell,
            seed: job.seed,
            source,
        })?,
        Err(SimError::World(e)) => return Ok(RunRow::skipped(job, &cfg, e.to_string())),
        Err(source) => {
            return Err(HarnessError::Run {
                cell: job.cell,
                seed: job.seed,
                source,
            })
        }
    };

    let stem = format!("cell{}_seed{}.csv", job.cell, job.seed);
    write(&opts.out_dir.join("series").join(&stem), series_csv(&out).as_bytes())?;
    if opts.snapshot_every.is_some() {
        write(&opts.out_dir.join("snapshots").join(&stem), snapshots_csv(&out).as_bytes())?;
    }
    if let Some(base) = &opts.dump_wire {
        write(&wire_path(base, job, single), &wire_dump(&out.wire))?;
    }
    Ok(RunRow::completed(job, &cfg, &out))
}

/// Runs every (cell, seed) pair and writes all outputs. Returns the rows of
/// `runs.csv`.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<RunRow>, HarnessError> {
    for dir in [opts.out_dir.clone(), opts.out_dir.join("series"), opts.out_dir.join("snapshots")] {
        if dir.ends_with("snapshots") && opts.snapshot_every.is_none() {
            continue;
        }
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    }
    let jobs = jobs(scenario, opts);
    let single = jobs.len() == 1;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| HarnessError::Usage(format!("thread pool: {e}")))?;
    let rows: Vec<RunRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| execute(scenario, job, opts, single))
            .collect::<Result<_, _>>()
    })?;

    let mut csv = runs_header();
    for row in &rows {
        csv.push_str(&runs_row(row));
    }
    write(&opts.out_dir.join("runs.csv"), csv.as_bytes())?;
    Ok(rows)
}
