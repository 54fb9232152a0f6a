use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsa_core::harness::{run_scenario, HarnessError, RunOptions, RunStatus, Scenario};

#[derive(Parser)]
#[command(name = "dsa", version, about = "Distributed spatial awareness swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-cell scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run every cell of a parameter grid.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
    /// Re-run one seed of every cell.
    Replay {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write position snapshots every S simulated seconds.
    #[arg(long, value_name = "S")]
    snapshot_every: Option<f64>,
    /// Write encoded messages, length-prefixed, to PATH (suffixed per run
    /// when there is more than one).
    #[arg(long, value_name = "PATH")]
    dump_wire: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Debug: visit robots in a random order each tick.
    #[arg(long)]
    shuffle_order: bool,
}

fn load(path: &PathBuf) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    Scenario::parse(&text)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (config, common, seeds, only_seed, single) = match cli.command {
        Command::Run { config, common, seeds } => (config, common, seeds, None, true),
        Command::Sweep { config, common, seeds } => (config, common, seeds, None, false),
        Command::Replay { config, common, seed } => (config, common, 1, Some(seed), false),
    };
    let scenario = load(&config)?;
    if single && scenario.cells.len() != 1 {
        return Err(HarnessError::Usage(format!(
            "run expects a single cell but the config defines {}; use sweep",
            scenario.cells.len()
        )));
    }
    if let Some(s) = common.snapshot_every {
        if !(s.is_finite() && s > 0.0) {
            return Err(HarnessError::Usage(format!("--snapshot-every must be positive, got {s}")));
        }
    }
    let opts = RunOptions {
        out_dir: common.out,
        seeds,
        only_seed,
        snapshot_every: common.snapshot_every,
        dump_wire: common.dump_wire,
        threads: common.threads,
        shuffle_order: common.shuffle_order,
    };
    let rows = run_scenario(&scenario, &opts)?;
    let skipped = rows.iter().filter(|r| r.status == RunStatus::Skipped).count();
    println!(
        "{} runs ({} skipped) written to {}",
        rows.len(),
        skipped,
        opts.out_dir.display()
    );
    Ok(())
}

/// `error<TAB>code<TAB>message` on one line.
fn error_line(e: &HarnessError) -> String {
    format!("error\t{}\t{}", e.code(), e.to_string().replace('\n', " "))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn cli(dir: &Path, args: &[&str]) -> Result<(), HarnessError> {
        let args: Vec<String> = std::iter::once("dsa".to_string())
            .chain(args.iter().map(|a| {
                // Relative paths are taken from the test directory.
                if a.ends_with(".cfg") || a.starts_with("o") {
                    dir.join(a).to_string_lossy().into_owned()
                } else {
                    a.to_string()
                }
            }))
            .collect();
        execute(Cli::try_parse_from(args).expect("valid arguments"))
    }

    fn write_cfg(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn read(dir: &Path, rel: &str) -> Vec<u8> {
        std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }

    const SHAPE: &str = "# demo\nscenario = shape_formation\nn_robots = 12\narena_side = 3\nshape = disk, hline\nshape_period_s = 10\nduration = 20\n";

    #[test]
    fn run_writes_series_snapshots_and_wire() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write_cfg(d, "shape.cfg", SHAPE);
        cli(d, &["run", "shape.cfg", "--seeds", "1", "--snapshot-every", "1.0", "--out", "o", "--dump-wire", "o/wire.bin"]).unwrap();

        let runs = String::from_utf8(read(d, "o/runs.csv")).unwrap();
        assert_eq!(runs.lines().count(), 2);
        assert!(runs.lines().nth(1).unwrap().starts_with("0,0,12,3,0,sf,"));

        let snaps = String::from_utf8(read(d, "o/snapshots/cell0_seed0.csv")).unwrap();
        assert_eq!(snaps.lines().next(), Some("t,kind,id,x,y,est_x,est_y"));
        // 21 frames (t = 0..=20) of 12 robots; origin rows follow once localized.
        let robot_rows = snaps.lines().filter(|l| l.split(',').nth(1) == Some("robot")).count();
        assert_eq!(robot_rows, 21 * 12);

        let series = String::from_utf8(read(d, "o/series/cell0_seed0.csv")).unwrap();
        assert_eq!(series.lines().next(), Some("t,r_error,s_error,flops_s,bytes_s,in_shape"));
        assert_eq!(series.lines().count(), 21);

        // A single run writes the wire dump to the path as given.
        let wire = read(d, "o/wire.bin");
        let mut at = 0;
        let mut records = 0;
        while at < wire.len() {
            let len = u32::from_le_bytes(wire[at..at + 4].try_into().unwrap()) as usize;
            assert!(len >= 12);
            at += 4 + len;
            records += 1;
        }
        assert_eq!(at, wire.len());
        assert!(records > 0);
    }

    #[test]
    fn sweep_emits_row_per_cell_and_seed_and_is_repeatable() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write_cfg(d, "conv.cfg", "scenario = converge_sweep\nn_robots = 4, 6\ndensity = 0.4\nduration = 30\n");
        cli(d, &["sweep", "conv.cfg", "--seeds", "3", "--out", "oa", "--threads", "1", "--dump-wire", "oa/w"]).unwrap();
        cli(d, &["sweep", "conv.cfg", "--seeds", "3", "--out", "ob", "--threads", "3", "--dump-wire", "ob/w"]).unwrap();
        let ra = read(d, "oa/runs.csv");
        assert_eq!(ra, read(d, "ob/runs.csv"));
        let text = String::from_utf8(ra).unwrap();
        let keys: Vec<(String, String)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].to_string())
            })
            .collect();
        let expected: Vec<(String, String)> = (0..2)
            .flat_map(|c| (0..3).map(move |s| (c.to_string(), s.to_string())))
            .collect();
        assert_eq!(keys, expected);
        for c in 0..2 {
            for s in 0..3 {
                let name = format!("series/cell{c}_seed{s}.csv");
                assert_eq!(read(&d.join("oa"), &name), read(&d.join("ob"), &name));
                let wire = format!("w.cell{c}_seed{s}");
                assert_eq!(read(&d.join("oa"), &wire), read(&d.join("ob"), &wire));
            }
        }
    }

    #[test]
    fn replay_matches_the_sweep_run() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write_cfg(d, "shape.cfg", SHAPE);
        cli(d, &["sweep", "shape.cfg", "--seeds", "3", "--out", "os"]).unwrap();
        cli(d, &["replay", "shape.cfg", "--seed", "2", "--out", "or", "--shuffle-order"]).unwrap();
        assert_eq!(read(d, "os/series/cell0_seed2.csv"), read(d, "or/series/cell0_seed2.csv"));
        let replayed = String::from_utf8(read(d, "or/runs.csv")).unwrap();
        assert!(replayed.lines().nth(1).unwrap().starts_with("0,2,"));
    }

    #[test]
    fn spawn_infeasibility_is_a_skipped_row() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write_cfg(d, "dense.cfg", "scenario = beta_calibration\nn_robots = 200\narena_side = 2\nduration = 5\n");
        cli(d, &["sweep", "dense.cfg", "--seeds", "2", "--out", "o"]).unwrap();
        let runs = String::from_utf8(read(d, "o/runs.csv")).unwrap();
        assert_eq!(runs.lines().skip(1).filter(|l| l.contains(",skipped,")).count(), 2);
    }

    #[test]
    fn errors_carry_stable_codes() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        let cases = [
            ("unknown.cfg", "scenario = logistics\nn_robots = 4\narena_side = 3\nduration = 5\nspeed = 3\n", "unknown_key"),
            ("missing.cfg", "scenario = logistics\narena_side = 3\nduration = 5\n", "missing_key"),
            ("bad.cfg", "scenario = logistics\nn_robots = four\narena_side = 3\nduration = 5\n", "invalid_value"),
            ("syntax.cfg", "scenario logistics\n", "syntax"),
            ("period.cfg", "scenario = logistics\nn_robots = 4\narena_side = 3\nduration = 5\nt_message = 0.11\n", "run_failed"),
            ("grid.cfg", "scenario = logistics\nn_robots = 4,5\narena_side = 3\nduration = 5\n", "usage"),
        ];
        for (name, body, code) in cases {
            write_cfg(d, name, body);
            let cmd = if code == "usage" { "run" } else { "sweep" };
            let err = cli(d, &[cmd, name, "--seeds", "1", "--out", "o"]).unwrap_err();
            let line = error_line(&err);
            assert!(line.starts_with(&format!("error\t{code}\t")), "{name}: {line}");
            assert_eq!(line.lines().count(), 1);
        }
        let err = cli(d, &["sweep", "unknown.cfg"]).unwrap_err();
        assert!(error_line(&err).contains("valid keys: scenario,n_robots,"));
        let err = cli(d, &["run", "nope.cfg"]).unwrap_err();
        assert_eq!(err.code(), "io");
        write_cfg(d, "ok.cfg", SHAPE);
        let err = cli(d, &["run", "ok.cfg", "--snapshot-every=-1"]).unwrap_err();
        assert_eq!(err.code(), "usage");
    }
}
