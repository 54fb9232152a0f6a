//! The per-tick simulation loop.
//!
//! Each 60 Hz tick runs, in this order:
//!
//! 1. physics and carrier motion;
//! 2. per robot: senses, odometry integration, encounter bookkeeping,
//!    carrier sightings (once the proxy gate has opened) and the controller;
//! 3. on node ticks (every `t_node`): per robot, a new timestep and an
//!    outward factor for every robot in range;
//! 4. on message ticks (every `t_message`): per robot, one local factor sweep
//!    and a partner choice, then the request/response exchanges and carrier
//!    knowledge merges in ascending requester id;
//! 5. on whole seconds: metrics.
//!
//! Steps 2 to 4 touch only the robot's own state and random stream, so the
//! order robots are visited in them does not affect results. The exchanges
//! mutate two robots at once and always run in id order.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::behaviors::{dsa_ke, dsa_rw, dsa_sf, in_shape, CarrierKnowledge, EncounterTracker, RwState, Shape, ShapeKind};
use crate::metrics::{detect_convergence, r_error, s_error, RunMetrics, Sample};
use crate::swarm_graph::{GraphParams, Observation, RobotGraph};
use crate::wire::{exchange, WireError};
use crate::world::{stream_rng, Detected, RawSenses, World, WorldConfig, WorldError, DT, TICK_HZ};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behaviour {
    RandomWalk,
    ShapeFormation,
    KnowledgeEnhancement,
}

impl std::str::FromStr for Behaviour {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rw" | "dsa-rw" => Ok(Self::RandomWalk),
            "sf" | "dsa-sf" => Ok(Self::ShapeFormation),
            "ke" | "dsa-ke" => Ok(Self::KnowledgeEnhancement),
            other => Err(format!("unknown behaviour {other:?} (expected rw, sf or ke)")),
        }
    }
}

impl Behaviour {
    pub fn name(self) -> &'static str {
        match self {
            Self::RandomWalk => "rw",
            Self::ShapeFormation => "sf",
            Self::KnowledgeEnhancement => "ke",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub behaviour: Behaviour,
    /// Shapes cycled through every `shape_period` seconds, starting at
    /// `shape_start`. Shape-formation robots random-walk before that, giving
    /// the frame time to settle.
    pub shapes: Vec<ShapeKind>,
    pub shape_period: f64,
    pub shape_start: f64,
    pub duration: f64,
    /// End the run once the frame has converged and every robot has met
    /// half the swarm.
    pub stop_when_converged: bool,
    pub snapshot_every: Option<f64>,
    pub record_wire: bool,
    /// Visit robots in a freshly shuffled order in the per-robot phases.
    pub shuffle_order: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            behaviour: Behaviour::RandomWalk,
            shapes: vec![ShapeKind::Disk],
            shape_period: 120.0,
            shape_start: 0.0,
            duration: 100.0,
            stop_when_converged: false,
            snapshot_every: None,
            record_wire: false,
            shuffle_order: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Robot,
    Carrier,
    Origin,
}

impl SnapshotKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Robot => "robot",
            Self::Carrier => "carrier",
            Self::Origin => "origin",
        }
    }
}

/// One row of a position snapshot. Robot rows carry the robot's own pose
/// estimate; origin rows give each robot's origin in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRow {
    pub t: f64,
    pub kind: SnapshotKind,
    pub id: u32,
    pub pos: Vec2,
    pub est: Option<Vec2>,
}

/// One encoded message as it crossed the air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRecord {
    pub tick: u64,
    pub from: u32,
    pub to: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
struct Agent {
    graph: RobotGraph,
    rng: ChaCha8Rng,
    rw: RwState,
    encounters: EncounterTracker,
    knowledge: CarrierKnowledge,
    senses: RawSenses,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub snapshots: Vec<SnapshotRow>,
    pub wire: Vec<WireRecord>,
    /// Bytes transmitted plus received by all robots over the run.
    pub total_bytes: u64,
    pub end_time: f64,
}

pub struct Simulation {
    cfg: SimConfig,
    world: World,
    agents: Vec<Agent>,
    node_ticks: u64,
    message_ticks: u64,
    order: Vec<usize>,
    order_rng: ChaCha8Rng,
    out: RunOutput,
    r_series: Vec<(f64, f64)>,
}

fn ticks_of(period: f64, name: &str) -> Result<u64, SimError> {
    let ticks = (period * f64::from(TICK_HZ)).round();
    if ticks < 1.0 || (ticks / f64::from(TICK_HZ) - period).abs() > 1e-9 {
        return Err(SimError::Config(format!("{name} = {period} is not a positive multiple of 1/{TICK_HZ} s")));
    }
    Ok(ticks as u64)
}

/// Mutable references to two distinct elements.
fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let node_ticks = ticks_of(cfg.world.t_node, "t_node")?;
        let message_ticks = ticks_of(cfg.world.t_message, "t_message")?;
        if cfg.shapes.is_empty() {
            return Err(SimError::Config("at least one shape is required".into()));
        }
        let world = World::spawn(cfg.world.clone())?;
        let w = &cfg.world;
        let params = GraphParams {
            n_window: w.n_window,
            sigma_velocity: w.sigma_velocity,
            sigma_position: w.sigma_position,
            r_sense: w.r_sense,
            r_damp: w.r_damp,
            ..GraphParams::default()
        };
        let agents = (0..w.n_robots)
            .map(|i| {
                let mut graph = RobotGraph::new(i as u32, params);
                graph.advance_timestep();
                Agent {
                    graph,
                    rng: stream_rng(w.seed, i as u64 + 1),
                    rw: RwState::default(),
                    encounters: EncounterTracker::default(),
                    knowledge: CarrierKnowledge::new(w.n_carriers),
                    senses: RawSenses::default(),
                }
            })
            .collect();
        Ok(Self {
            order: (0..w.n_robots).collect(),
            order_rng: stream_rng(w.seed, u64::MAX),
            node_ticks,
            message_ticks,
            world,
            agents,
            out: RunOutput::default(),
            r_series: Vec::new(),
            cfg,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn time(&self) -> f64 {
        self.world.time()
    }

    pub fn graph(&self, id: usize) -> &RobotGraph {
        &self.agents[id].graph
    }

    pub fn shape_at(&self, t: f64) -> Shape {
        let since = (t - self.cfg.shape_start).max(0.0);
        let k = (since / self.cfg.shape_period).floor() as usize % self.cfg.shapes.len();
        self.cfg.shapes[k].for_arena(self.cfg.world.arena_side)
    }

    /// Runs to the configured duration (or earlier convergence stop).
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let total = (self.cfg.duration * f64::from(TICK_HZ)).round() as u64;
        self.snapshot();
        while self.world.tick < total {
            self.tick()?;
            if self.cfg.stop_when_converged && self.done() {
                break;
            }
        }
        self.out.metrics.t_met_half = self.agents.iter().map(|a| a.encounters.t_met_half).collect();
        self.out.metrics.t_conv = detect_convergence(&self.r_series, self.cfg.world.sigma_position);
        self.out.end_time = self.time();
        Ok(self.out)
    }

    fn done(&self) -> bool {
        detect_convergence(&self.r_series, self.cfg.world.sigma_position).is_some()
            && self.agents.iter().all(|a| a.encounters.t_met_half.is_some())
    }

    pub fn tick(&mut self) -> Result<(), SimError> {
        self.world.step();
        let t = self.time();
        let tick = self.world.tick;
        if self.cfg.shuffle_order {
            self.order.shuffle(&mut self.order_rng);
        }
        let shape = self.shape_at(t);
        let n_robots = self.agents.len();
        let cfg = &self.cfg;
        let w = &cfg.world;

        for &i in &self.order {
            let a = &mut self.agents[i];
            // Collisions are ballistic: a heading that runs into a wall or another
            // robot bounces off it.
            a.rw.reflect(self.world.robots[i].contact);
            let mut senses = std::mem::take(&mut a.senses);
            self.world.sense_into(i, &mut a.rng, &mut senses);
            a.graph.integrate_velocity(senses.v_sense, DT);
            a.encounters.update(
                senses.sightings.iter().filter_map(|s| match s.object {
                    Detected::Robot(id) => Some(id),
                    Detected::Carrier(_) => None,
                }),
                t,
                n_robots,
                w.beta,
            );
            let gate = a.encounters.converged(t);
            let pose = a.graph.current_pose().ok().filter(|_| gate);
            if let Some(p) = pose {
                let var = a.graph.pose_variance().unwrap_or(0.0);
                for s in &senses.sightings {
                    if let Detected::Carrier(c) = s.object {
                        a.knowledge.observe(c as usize, p, var, w.sigma_position, s.rel, t);
                    }
                }
            }
            let behaviour = match cfg.behaviour {
                Behaviour::ShapeFormation if t < cfg.shape_start => Behaviour::RandomWalk,
                b => b,
            };
            let cmd = match (behaviour, pose) {
                (Behaviour::ShapeFormation, Some(p)) => {
                    let neighbours: Vec<Vec2> = senses
                        .sightings
                        .iter()
                        .filter(|s| matches!(s.object, Detected::Robot(_)))
                        .map(|s| s.rel)
                        .collect();
                    dsa_sf(p, &neighbours, shape, &mut a.rw, &mut a.rng, DT, w.v_fast, w.v_slow)
                }
                (Behaviour::KnowledgeEnhancement, Some(p)) => {
                    dsa_ke(p, &a.knowledge, &mut a.rw, &mut a.rng, DT, w.v_fast)
                }
                _ => dsa_rw(&mut a.rw, &mut a.rng, DT, w.v_fast),
            };
            self.world.robots[i].commanded = cmd;
            a.senses = senses;
        }

        if tick.is_multiple_of(self.node_ticks) {
            for &i in &self.order {
                let a = &mut self.agents[i];
                a.graph.advance_timestep();
                let ts = a.graph.current_ts().expect("graph started at construction");
                for s in &a.senses.sightings {
                    if let Detected::Robot(remote_id) = s.object {
                        a.graph.record_observation(Observation {
                            remote_id,
                            p_object: s.rel,
                            ts,
                        });
                    }
                }
            }
        }

        if tick.is_multiple_of(self.message_ticks) {
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for &i in &self.order {
                let a = &mut self.agents[i];
                a.graph.sweep_random_factor(&mut a.rng);
                if let Some(j) = self.world.choose_partner(i, &mut a.rng) {
                    pairs.push((i, j as usize));
                }
            }
            pairs.sort_unstable();
            for (i, j) in pairs {
                let (a, b) = pair_mut(&mut self.agents, i, j);
                let bytes = exchange(&mut a.graph, &mut b.graph)?;
                a.knowledge.exchange(&mut b.knowledge);
                if self.cfg.record_wire {
                    self.out.wire.push(WireRecord {
                        tick,
                        from: i as u32,
                        to: j as u32,
                        bytes: bytes.request,
                    });
                    self.out.wire.push(WireRecord {
                        tick,
                        from: j as u32,
                        to: i as u32,
                        bytes: bytes.response,
                    });
                }
            }
        }

        if tick.is_multiple_of(u64::from(TICK_HZ)) {
            self.sample(t, shape);
        }
        if let Some(every) = self.cfg.snapshot_every {
            let k = (every * f64::from(TICK_HZ)).round().max(1.0) as u64;
            if tick.is_multiple_of(k) {
                self.snapshot();
            }
        }
        Ok(())
    }

    fn origins(&self) -> Option<Vec<Vec2>> {
        self.agents
            .iter()
            .zip(&self.world.robots)
            .map(|(a, body)| a.graph.local_origin(body.position).ok())
            .collect()
    }

    fn sample(&mut self, t: f64, shape: Shape) {
        let origins = self.origins();
        let r = origins.as_deref().map(r_error);
        if let Some(e) = r {
            self.r_series.push((t, e));
        }
        let s = origins.as_deref().and_then(|o| {
            let gt: Vec<Vec2> = self.world.carriers.iter().map(|c| c.position).collect();
            let ks: Vec<&CarrierKnowledge> = self.agents.iter().map(|a| &a.knowledge).collect();
            s_error(&gt, &ks, o)
        });
        let in_shape_fraction = (self.cfg.behaviour == Behaviour::ShapeFormation).then(|| self.in_shape_fraction(shape));
        let n = self.agents.len().max(1) as f64;
        let mut flops = 0u64;
        let mut bytes = 0u64;
        for a in &mut self.agents {
            let c = a.graph.counters_mut();
            flops += c.flops;
            bytes += c.bytes();
            self.out.total_bytes += c.bytes();
            c.reset();
        }
        self.out.metrics.samples.push(Sample {
            t,
            r_error: r,
            s_error: s,
            flops_s: flops as f64 / n,
            bytes_s: bytes as f64 / n,
            in_shape: in_shape_fraction,
        });
    }

    /// Fraction of robots whose true position, expressed in the swarm frame
    /// (mean of the localized robots' origins), lies in `shape`.
    pub fn in_shape_fraction(&self, shape: Shape) -> f64 {
        let origins: Vec<Vec2> = self
            .agents
            .iter()
            .zip(&self.world.robots)
            .filter_map(|(a, body)| a.graph.local_origin(body.position).ok())
            .collect();
        if origins.is_empty() {
            return 0.0;
        }
        let frame = origins.iter().sum::<Vec2>() / origins.len() as f64;
        let inside = self
            .world
            .robots
            .iter()
            .filter(|b| in_shape(b.position - frame, shape))
            .count();
        inside as f64 / self.world.robots.len().max(1) as f64
    }

    fn snapshot(&mut self) {
        if self.cfg.snapshot_every.is_none() {
            return;
        }
        let t = self.time();
        for (a, body) in self.agents.iter().zip(&self.world.robots) {
            self.out.snapshots.push(SnapshotRow {
                t,
                kind: SnapshotKind::Robot,
                id: body.id,
                pos: body.position,
                est: a.graph.current_pose().ok(),
            });
        }
        for c in &self.world.carriers {
            self.out.snapshots.push(SnapshotRow {
                t,
                kind: SnapshotKind::Carrier,
                id: c.id,
                pos: c.position,
                est: None,
            });
        }
        for (a, body) in self.agents.iter().zip(&self.world.robots) {
            if let Ok(o) = a.graph.local_origin(body.position) {
                self.out.snapshots.push(SnapshotRow {
                    t,
                    kind: SnapshotKind::Origin,
                    id: body.id,
                    pos: o,
                    est: None,
                });
            }
        }
    }
}

/// Convenience wrapper: build and run.
pub fn run(cfg: SimConfig) -> Result<RunOutput, SimError> {
    Simulation::new(cfg)?.run()
}
