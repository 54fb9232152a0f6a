//! Deterministic 2D arena: disk robots under proportional velocity control,
//! wall and robot contacts, carriers and noisy senses.
//!
//! The arena spans `[0, arena_side]²` in world coordinates. Every robot has
//! its own random stream (stream `id + 1` of the master seed) and the world
//! uses stream 0, so results do not depend on the order robots are visited.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::Vec2;

pub const TICK_HZ: u32 = 60;
pub const DT: f64 = 1.0 / TICK_HZ as f64;
pub const ROBOT_RADIUS: f64 = 0.125;
pub const ROBOT_MASS: f64 = 2.0;
pub const V_MAX: f64 = 1.0;
pub const K_P: f64 = 10.0;
pub const F_MAX: f64 = 20.0;
/// Footprint used when placing carriers. Carriers do not take part in contacts.
pub const CARRIER_RADIUS: f64 = 0.125;
pub const CARRIER_MOVE_DISTANCE: f64 = 1.0;
const SPAWN_RETRIES: usize = 10_000;
const CONTACT_PASSES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub arena_side: f64,
    pub n_robots: usize,
    pub n_carriers: usize,
    pub sigma_velocity: f64,
    pub sigma_position: f64,
    pub r_sense: f64,
    pub t_node: f64,
    pub t_message: f64,
    pub n_window: usize,
    pub v_fast: f64,
    pub v_slow: f64,
    pub v_c_agg: f64,
    pub r_damp: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena_side: 5.0,
            n_robots: 10,
            n_carriers: 0,
            sigma_velocity: 0.1,
            sigma_position: 0.02,
            r_sense: 0.5,
            t_node: 0.5,
            t_message: 0.1,
            n_window: 10,
            v_fast: 0.5,
            v_slow: 0.05,
            v_c_agg: 0.0,
            r_damp: 0.8,
            beta: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("infeasible density: could not place object {placed} of {total} after {SPAWN_RETRIES} attempts")]
    InfeasibleDensity { placed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotBody {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub commanded: Vec2,
    /// Actual displacement over the last step divided by the step length.
    /// Differs from `velocity` while contacts push the robot around.
    pub track_velocity: Vec2,
    /// Sum of the normals, pointing away from each obstacle, of every wall
    /// and robot touched during the last step. Zero when nothing was touched.
    pub contact: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarrierMotion {
    Idle,
    Moving { target: Vec2, speed: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Carrier {
    pub id: u32,
    pub position: Vec2,
    pub motion: CarrierMotion,
}

/// What a robot perceives of one nearby object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detected {
    Robot(u32),
    Carrier(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub object: Detected,
    /// Noisy position relative to the observer (m).
    pub rel: Vec2,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSenses {
    pub v_sense: Vec2,
    pub sightings: Vec<Sighting>,
}

/// Random stream `stream` of the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub robots: Vec<RobotBody>,
    pub carriers: Vec<Carrier>,
    pub tick: u64,
    rng: ChaCha8Rng,
    /// Total distance carriers have been moved (m).
    pub carrier_path: f64,
}

impl World {
    /// Places robots and carriers uniformly at random without overlap.
    pub fn spawn(config: WorldConfig) -> Result<Self, WorldError> {
        if !(config.arena_side > 2.0 * ROBOT_RADIUS) {
            return Err(WorldError::InvalidConfig(format!("arena_side {} too small", config.arena_side)));
        }
        let mut rng = stream_rng(config.seed, 0);
        let total = config.n_robots + config.n_carriers;
        let mut placed: Vec<(Vec2, f64)> = Vec::with_capacity(total);
        for k in 0..total {
            let r = if k < config.n_robots { ROBOT_RADIUS } else { CARRIER_RADIUS };
            let mut ok = false;
            for _ in 0..SPAWN_RETRIES {
                let p = Vec2::new(
                    rng.random_range(r..config.arena_side - r),
                    rng.random_range(r..config.arena_side - r),
                );
                if placed.iter().all(|&(q, rq)| (p - q).norm() >= r + rq) {
                    placed.push((p, r));
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(WorldError::InfeasibleDensity { placed: k, total });
            }
        }
        let robots = placed[..config.n_robots]
            .iter()
            .enumerate()
            .map(|(i, &(p, _))| RobotBody {
                id: i as u32,
                position: p,
                velocity: Vec2::zeros(),
                commanded: Vec2::zeros(),
                track_velocity: Vec2::zeros(),
                contact: Vec2::zeros(),
            })
            .collect();
        let carriers = placed[config.n_robots..]
            .iter()
            .enumerate()
            .map(|(i, &(p, _))| Carrier {
                id: i as u32,
                position: p,
                motion: CarrierMotion::Idle,
            })
            .collect();
        let mut world = Self {
            config,
            robots,
            carriers,
            tick: 0,
            rng,
            carrier_path: 0.0,
        };
        world.carrier_scheduler();
        Ok(world)
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * DT
    }

    /// Advances physics and carriers by one tick.
    pub fn step(&mut self) {
        let side = self.config.arena_side;
        let before: Vec<Vec2> = self.robots.iter().map(|b| b.position).collect();
        for body in &mut self.robots {
            body.contact = Vec2::zeros();
            let force = K_P * (body.commanded - body.velocity) * ROBOT_MASS;
            let force = cap_norm(force, F_MAX);
            body.velocity = cap_norm(body.velocity + force / ROBOT_MASS * DT, V_MAX);
            body.position += body.velocity * DT;
        }
        for _ in 0..CONTACT_PASSES {
            if !self.resolve_contacts(side) {
                break;
            }
        }
        for (body, p0) in self.robots.iter_mut().zip(before) {
            body.track_velocity = (body.position - p0) / DT;
        }
        self.advance_carriers();
        self.carrier_scheduler();
        self.tick += 1;
    }

    /// One projection pass. Returns whether any contact was found.
    fn resolve_contacts(&mut self, side: f64) -> bool {
        let mut any = false;
        let n = self.robots.len();
        for i in 0..n {
            for j in i + 1..n {
                let d = self.robots[j].position - self.robots[i].position;
                let dist = d.norm();
                if dist >= 2.0 * ROBOT_RADIUS {
                    continue;
                }
                any = true;
                let normal = if dist > 1e-12 { d / dist } else { Vec2::new(1.0, 0.0) };
                let push = 0.5 * (2.0 * ROBOT_RADIUS - dist);
                self.robots[i].position -= normal * push;
                self.robots[j].position += normal * push;
                // Equal masses: an elastic contact swaps normal components.
                let vi = self.robots[i].velocity.dot(&normal);
                let vj = self.robots[j].velocity.dot(&normal);
                if vi - vj > 0.0 {
                    self.robots[i].velocity += normal * (vj - vi);
                    self.robots[j].velocity += normal * (vi - vj);
                    self.robots[i].velocity = cap_norm(self.robots[i].velocity, V_MAX);
                    self.robots[j].velocity = cap_norm(self.robots[j].velocity, V_MAX);
                }
                self.robots[i].contact -= normal;
                self.robots[j].contact += normal;
            }
        }
        let lo = ROBOT_RADIUS;
        let hi = side - ROBOT_RADIUS;
        for body in &mut self.robots {
            for k in 0..2 {
                if body.position[k] < lo {
                    body.position[k] = lo;
                    body.velocity[k] = body.velocity[k].abs();
                    body.contact[k] += 1.0;
                    any = true;
                } else if body.position[k] > hi {
                    body.position[k] = hi;
                    body.velocity[k] = -body.velocity[k].abs();
                    body.contact[k] -= 1.0;
                    any = true;
                }
            }
        }
        any
    }

    fn advance_carriers(&mut self) {
        for c in &mut self.carriers {
            if let CarrierMotion::Moving { target, speed } = c.motion {
                let d = target - c.position;
                let step = speed * DT;
                if d.norm() <= step {
                    self.carrier_path += d.norm();
                    c.position = target;
                    c.motion = CarrierMotion::Idle;
                } else {
                    self.carrier_path += step;
                    c.position += d.normalize() * step;
                }
            }
        }
    }

    /// Starts the next carrier move when none is in progress.
    pub fn carrier_scheduler(&mut self) {
        if self.config.v_c_agg <= 0.0 || self.carriers.is_empty() {
            return;
        }
        if self.carriers.iter().any(|c| matches!(c.motion, CarrierMotion::Moving { .. })) {
            return;
        }
        let side = self.config.arena_side;
        let speed = self.config.v_c_agg * self.carriers.len() as f64;
        let k = self.rng.random_range(0..self.carriers.len());
        let from = self.carriers[k].position;
        let inside = |p: Vec2| (0..2).all(|i| p[i] >= CARRIER_RADIUS && p[i] <= side - CARRIER_RADIUS);
        // In an arena narrower than the move distance a target may not exist.
        for _ in 0..SPAWN_RETRIES {
            let theta = self.rng.random_range(0.0..std::f64::consts::TAU);
            let target = from + CARRIER_MOVE_DISTANCE * Vec2::new(theta.cos(), theta.sin());
            if inside(target) {
                self.carriers[k].motion = CarrierMotion::Moving { target, speed };
                return;
            }
        }
    }

    /// Senses of robot `id`: velocity scaled by one draw from N(1, σ_v²) and
    /// every object within `r_sense` with independent N(0, σ_p²) noise per axis.
    pub fn sense<R: Rng + ?Sized>(&self, id: usize, rng: &mut R) -> RawSenses {
        let mut out = RawSenses::default();
        self.sense_into(id, rng, &mut out);
        out
    }

    /// As [`World::sense`], reusing `out`'s allocation.
    pub fn sense_into<R: Rng + ?Sized>(&self, id: usize, rng: &mut R, out: &mut RawSenses) {
        let cfg = &self.config;
        let body = &self.robots[id];
        let scale: f64 = Normal::new(1.0, cfg.sigma_velocity).expect("finite σ").sample(rng);
        out.v_sense = body.track_velocity * scale;
        out.sightings.clear();
        let noisy = |rel: Vec2, rng: &mut R| {
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            rel + cfg.sigma_position * Vec2::new(nx, ny)
        };
        for other in &self.robots {
            let rel = other.position - body.position;
            if other.id != body.id && rel.norm() <= cfg.r_sense {
                out.sightings.push(Sighting {
                    object: Detected::Robot(other.id),
                    rel: noisy(rel, rng),
                });
            }
        }
        for c in &self.carriers {
            let rel = c.position - body.position;
            if rel.norm() <= cfg.r_sense {
                out.sightings.push(Sighting {
                    object: Detected::Carrier(c.id),
                    rel: noisy(rel, rng),
                });
            }
        }
    }

    /// Uniform choice among the robots in range of `id` (ground truth).
    pub fn choose_partner<R: Rng + ?Sized>(&self, id: usize, rng: &mut R) -> Option<u32> {
        let me = self.robots[id].position;
        let in_range: Vec<u32> = self
            .robots
            .iter()
            .filter(|o| o.id as usize != id && (o.position - me).norm() <= self.config.r_sense)
            .map(|o| o.id)
            .collect();
        in_range.choose(rng).copied()
    }
}

fn cap_norm(v: Vec2, max: f64) -> Vec2 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(n_robots: usize, side: f64) -> World {
        World::spawn(WorldConfig {
            n_robots,
            arena_side: side,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn reaches_commanded_velocity() {
        let mut w = world(1, 5.0);
        w.robots[0].position = Vec2::new(1.0, 2.5);
        w.robots[0].commanded = Vec2::new(0.5, 0.0);
        for _ in 0..30 {
            w.step();
        }
        assert!((w.robots[0].velocity - Vec2::new(0.5, 0.0)).norm() < 0.01);
    }

    #[test]
    fn head_on_contact_reverses_normal_velocity() {
        let mut w = world(2, 5.0);
        w.robots[0].position = Vec2::new(2.0, 2.5);
        w.robots[1].position = Vec2::new(2.6, 2.5);
        w.robots[0].velocity = Vec2::new(0.5, 0.0);
        w.robots[1].velocity = Vec2::new(-0.5, 0.0);
        w.robots[0].commanded = Vec2::new(0.5, 0.0);
        w.robots[1].commanded = Vec2::new(-0.5, 0.0);
        let mut bounced = false;
        for _ in 0..60 {
            w.step();
            let gap = (w.robots[1].position - w.robots[0].position).norm();
            assert!(gap >= 2.0 * ROBOT_RADIUS * 0.9);
            if w.robots[0].velocity.x < 0.0 && w.robots[1].velocity.x > 0.0 {
                bounced = true;
                // Each robot is told the normal pointing away from the other.
                assert!(w.robots[0].contact.x < 0.0 && w.robots[0].contact.y.abs() < 1e-9);
                assert!(w.robots[1].contact.x > 0.0);
                break;
            }
        }
        assert!(bounced);
    }

    #[test]
    fn wall_contains_robot() {
        let mut w = world(1, 5.0);
        w.robots[0].commanded = Vec2::new(1.0, 0.0);
        for _ in 0..600 {
            w.step();
        }
        let x = w.robots[0].position.x;
        assert!(x <= 5.0 - ROBOT_RADIUS && x > 5.0 - ROBOT_RADIUS - 0.01, "x {x}");
        assert!(w.robots[0].contact.x < 0.0);
    }

    #[test]
    fn spawn_feasibility_and_determinism() {
        for seed in 0..20 {
            let cfg = WorldConfig {
                seed,
                ..WorldConfig::default()
            };
            let a = World::spawn(cfg.clone()).unwrap();
            let b = World::spawn(cfg).unwrap();
            assert_eq!(a.robots, b.robots);
        }
        let err = World::spawn(WorldConfig {
            n_robots: 100,
            arena_side: 2.0,
            ..WorldConfig::default()
        });
        assert!(matches!(err, Err(WorldError::InfeasibleDensity { .. })));
    }

    #[test]
    fn zero_noise_and_stationary_senses() {
        let mut w = world(3, 5.0);
        w.config.sigma_velocity = 0.0;
        w.robots[0].track_velocity = Vec2::new(0.3, -0.2);
        let mut rng = stream_rng(1, 1);
        assert_eq!(w.sense(0, &mut rng).v_sense, Vec2::new(0.3, -0.2));
        w.config.sigma_velocity = 0.1;
        assert_eq!(w.sense(1, &mut rng).v_sense, Vec2::zeros());
    }

    #[test]
    fn position_noise_statistics() {
        let mut w = world(2, 5.0);
        w.robots[0].position = Vec2::new(2.0, 2.0);
        w.robots[1].position = Vec2::new(2.3, 2.0);
        let mut rng = stream_rng(7, 1);
        let n = 100_000;
        let (mut sx, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let s = w.sense(0, &mut rng);
            let e = s.sightings[0].rel.x - 0.3;
            sx += e;
            sxx += e * e;
        }
        let mean = sx / n as f64;
        let std = (sxx / n as f64 - mean * mean).sqrt();
        assert!((std - 0.02).abs() < 0.001, "std {std}");
    }

    #[test]
    fn carrier_moves_follow_aggregate_rate() {
        let mut w = World::spawn(WorldConfig {
            n_robots: 0,
            n_carriers: 5,
            v_c_agg: 0.01,
            ..WorldConfig::default()
        })
        .unwrap();
        let moving = w
            .carriers
            .iter()
            .filter_map(|c| match c.motion {
                CarrierMotion::Moving { speed, .. } => Some(speed),
                CarrierMotion::Idle => None,
            })
            .collect::<Vec<_>>();
        assert_eq!(moving.len(), 1);
        assert!((moving[0] - 0.05).abs() < 1e-12);
        for _ in 0..1000 * TICK_HZ {
            w.step();
        }
        assert!((w.carrier_path - 50.0).abs() <= 1.0, "path {}", w.carrier_path);
    }

    #[test]
    fn idle_carriers_without_velocity() {
        let mut w = World::spawn(WorldConfig {
            n_carriers: 5,
            ..WorldConfig::default()
        })
        .unwrap();
        let before: Vec<_> = w.carriers.iter().map(|c| c.position).collect();
        for _ in 0..600 {
            w.step();
        }
        let after: Vec<_> = w.carriers.iter().map(|c| c.position).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn speed_bounded_and_no_tunnelling() {
        let mut w = world(30, 4.0);
        let mut rng = stream_rng(3, 0);
        for t in 0..3000 {
            if t % 60 == 0 {
                for b in &mut w.robots {
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    b.commanded = Vec2::new(th.cos(), th.sin());
                }
            }
            w.step();
            for (i, a) in w.robots.iter().enumerate() {
                assert!(a.velocity.norm() <= V_MAX * 1.05);
                for b in &w.robots[i + 1..] {
                    assert!((a.position - b.position).norm() >= 2.0 * ROBOT_RADIUS - 0.1 * ROBOT_RADIUS);
                }
            }
        }
    }
}
