//! Flat `key = value` scenario files.
//!
//! `#` starts a comment. A comma-separated value on any key except `shape`
//! and `scenario` turns that key into a grid axis; the scenario runs every
//! combination. `shape` takes a comma list of shapes cycled every
//! `shape_period_s` seconds from `shape_start_s` on.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::behaviors::ShapeKind;
use crate::sim::{Behaviour, SimConfig};
use crate::world::WorldConfig;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    ConvergeSweep,
    BetaCalibration,
    ShapeFormation,
    Logistics,
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converge_sweep" => Ok(Self::ConvergeSweep),
            "beta_calibration" => Ok(Self::BetaCalibration),
            "shape_formation" => Ok(Self::ShapeFormation),
            "logistics" => Ok(Self::Logistics),
            other => Err(format!(
                "unknown scenario {other:?} (expected converge_sweep, beta_calibration, shape_formation or logistics)"
            )),
        }
    }
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::ConvergeSweep => "converge_sweep",
            Self::BetaCalibration => "beta_calibration",
            Self::ShapeFormation => "shape_formation",
            Self::Logistics => "logistics",
        }
    }

    /// Convergence studies stop a run once the frame has converged and
    /// every robot has met half the swarm.
    fn stops_early(self) -> bool {
        matches!(self, Self::ConvergeSweep | Self::BetaCalibration)
    }
}

/// Every accepted key, in the order grid axes are expanded.
pub const KEYS: &[&str] = &[
    "scenario",
    "n_robots",
    "arena_side",
    "density",
    "n_carriers",
    "behaviour",
    "shape",
    "shape_period_s",
    "shape_start_s",
    "duration",
    "seed",
    "n_window",
    "t_node",
    "t_message",
    "r_sense",
    "sigma_velocity",
    "sigma_position",
    "v_fast",
    "v_slow",
    "v_c_agg",
    "r_damp",
    "beta",
];

const REQUIRED: &[&str] = &["scenario", "n_robots", "duration"];

const NOT_GRIDDABLE: &[&str] = &["scenario", "shape"];

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Seed of the first run in every cell; later runs count up from it.
    pub base_seed: u64,
    pub cells: Vec<Cell>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut raw: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Syntax {
                    line: n + 1,
                    msg: "expected key = value".into(),
                });
            };
            let key = key.trim();
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(HarnessError::UnknownKey {
                    key: key.to_string(),
                    valid: KEYS.join(","),
                });
            };
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(HarnessError::Syntax {
                    line: n + 1,
                    msg: format!("empty value for {key}"),
                });
            }
            if values.len() > 1 && known == "scenario" {
                return Err(HarnessError::value(known, value.trim(), "takes a single value"));
            }
            if raw.insert(known, values).is_some() {
                return Err(HarnessError::Syntax {
                    line: n + 1,
                    msg: format!("duplicate key {key}"),
                });
            }
        }
        for &k in REQUIRED {
            if !raw.contains_key(k) {
                return Err(HarnessError::MissingKey(k.to_string()));
            }
        }
        if raw.contains_key("arena_side") == raw.contains_key("density") {
            return Err(HarnessError::MissingKey("exactly one of arena_side, density".into()));
        }

        let kind: ScenarioKind = parse_one("scenario", &raw["scenario"][0])?;
        let shapes = match raw.get("shape") {
            Some(list) => list.iter().map(|s| parse_one("shape", s)).collect::<Result<Vec<ShapeKind>, _>>()?,
            None => vec![ShapeKind::Disk],
        };
        let base_seed = match raw.get("seed") {
            Some(v) if v.len() == 1 => parse_one("seed", &v[0])?,
            Some(v) => return Err(HarnessError::value("seed", &v.join(","), "takes a single value")),
            None => 0,
        };

        // Cartesian product over the griddable keys, first key slowest.
        let axes: Vec<(&str, &Vec<String>)> = KEYS
            .iter()
            .filter(|k| !NOT_GRIDDABLE.contains(k) && **k != "seed")
            .filter_map(|&k| raw.get(k).map(|v| (k, v)))
            .collect();
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut cells = Vec::with_capacity(total);
        for index in 0..total {
            let mut sim = SimConfig {
                world: WorldConfig {
                    seed: base_seed,
                    ..WorldConfig::default()
                },
                behaviour: if kind == ScenarioKind::ShapeFormation {
                    Behaviour::ShapeFormation
                } else {
                    Behaviour::RandomWalk
                },
                shapes: shapes.clone(),
                stop_when_converged: kind.stops_early(),
                ..SimConfig::default()
            };
            let mut density = None;
            let mut rest = index;
            let mut picks = Vec::with_capacity(axes.len());
            for (key, values) in axes.iter().rev() {
                picks.push((*key, values[rest % values.len()].as_str()));
                rest /= values.len();
            }
            for (key, value) in picks.into_iter().rev() {
                if key == "density" {
                    density = Some(parse_positive(key, value)?);
                } else {
                    apply(&mut sim, key, value)?;
                }
            }
            if let Some(d) = density {
                sim.world.arena_side = (sim.world.n_robots as f64 / d).sqrt();
            }
            cells.push(Cell { index, sim });
        }
        Ok(Self { kind, base_seed, cells })
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| HarnessError::value(key, value, &e.to_string()))
}

fn parse_positive(key: &str, value: &str) -> Result<f64, HarnessError> {
    let v: f64 = parse_one(key, value)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(HarnessError::value(key, value, "must be positive and finite"))
    }
}

fn parse_non_negative(key: &str, value: &str) -> Result<f64, HarnessError> {
    let v: f64 = parse_one(key, value)?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(HarnessError::value(key, value, "must be non-negative and finite"))
    }
}

fn apply(sim: &mut SimConfig, key: &str, value: &str) -> Result<(), HarnessError> {
    let w = &mut sim.world;
    match key {
        "n_robots" => w.n_robots = parse_one(key, value)?,
        "arena_side" => w.arena_side = parse_positive(key, value)?,
        "n_carriers" => w.n_carriers = parse_one(key, value)?,
        "behaviour" => sim.behaviour = parse_one(key, value)?,
        "shape_period_s" => sim.shape_period = parse_positive(key, value)?,
        "shape_start_s" => sim.shape_start = parse_non_negative(key, value)?,
        "duration" => sim.duration = parse_positive(key, value)?,
        "n_window" => {
            w.n_window = parse_one(key, value)?;
            if w.n_window == 0 {
                return Err(HarnessError::value(key, value, "must be at least 1"));
            }
        }
        "t_node" => w.t_node = parse_positive(key, value)?,
        "t_message" => w.t_message = parse_positive(key, value)?,
        "r_sense" => w.r_sense = parse_positive(key, value)?,
        "sigma_velocity" => w.sigma_velocity = parse_non_negative(key, value)?,
        "sigma_position" => w.sigma_position = parse_positive(key, value)?,
        "v_fast" => w.v_fast = parse_non_negative(key, value)?,
        "v_slow" => w.v_slow = parse_non_negative(key, value)?,
        "v_c_agg" => w.v_c_agg = parse_non_negative(key, value)?,
        "r_damp" => {
            w.r_damp = parse_non_negative(key, value)?;
            if w.r_damp >= 1.0 {
                return Err(HarnessError::value(key, value, "must be below 1"));
            }
        }
        "beta" => w.beta = parse_positive(key, value)?,
        _ => unreachable!("{key} is validated against KEYS"),
    }
    Ok(())
}
