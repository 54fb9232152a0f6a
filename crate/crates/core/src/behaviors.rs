//! Robot controllers and the per-robot state they depend on.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::Vec2;

/// Random-walk leg: heading and time left on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwState {
    pub direction: Vec2,
    pub remaining: f64,
}

impl Default for RwState {
    /// An expired leg, so the first call draws a fresh one.
    fn default() -> Self {
        Self {
            direction: Vec2::new(1.0, 0.0),
            remaining: 0.0,
        }
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec2 {
    let theta = rng.random_range(0.0..TAU);
    Vec2::new(theta.cos(), theta.sin())
}

/// Leg duration max(0.1, N(2, 1)) s.
pub fn rw_duration<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let d: f64 = Normal::new(2.0, 1.0).expect("unit σ").sample(rng);
    d.max(0.1)
}

impl RwState {
    /// Bounces the heading off a surface with outward normal `normal` if it
    /// points into it.
    pub fn reflect(&mut self, normal: Vec2) {
        let n = normal.norm();
        if n < 1e-12 {
            return;
        }
        let n = normal / n;
        let into = self.direction.dot(&n);
        if into < 0.0 {
            self.direction -= 2.0 * into * n;
        }
    }

    /// Counts down the current leg, drawing a new heading and duration when
    /// it expires. Returns the heading to use for this tick.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, dt: f64) -> Vec2 {
        if self.remaining <= 0.0 {
            self.direction = random_unit(rng);
            self.remaining = rw_duration(rng);
        }
        self.remaining -= dt;
        self.direction
    }
}

/// Baseline random walk at `v_fast`.
pub fn dsa_rw<R: Rng + ?Sized>(rw: &mut RwState, rng: &mut R, dt: f64, v_fast: f64) -> Vec2 {
    v_fast * rw.advance(rng, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { radius: f64 },
    VLine { half_width: f64 },
    HLine { half_width: f64 },
    Wavy { amplitude: f64, period: f64, half_width: f64 },
}

/// Shape family without dimensions, as named in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Disk,
    VLine,
    HLine,
    Wavy,
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disk" => Ok(Self::Disk),
            "vline" => Ok(Self::VLine),
            "hline" => Ok(Self::HLine),
            "wavy" => Ok(Self::Wavy),
            other => Err(format!("unknown shape {other:?} (expected disk, vline, hline or wavy)")),
        }
    }
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Disk => "disk",
            Self::VLine => "vline",
            Self::HLine => "hline",
            Self::Wavy => "wavy",
        }
    }

    /// Dimensions scaled to the arena.
    pub fn for_arena(self, side: f64) -> Shape {
        const LINE_HALF_WIDTH: f64 = 0.3;
        match self {
            Self::Disk => Shape::Disk { radius: 0.25 * side },
            Self::VLine => Shape::VLine {
                half_width: LINE_HALF_WIDTH,
            },
            Self::HLine => Shape::HLine {
                half_width: LINE_HALF_WIDTH,
            },
            Self::Wavy => Shape::Wavy {
                amplitude: 0.15 * side,
                period: 0.5 * side,
                half_width: LINE_HALF_WIDTH,
            },
        }
    }
}

/// Whether `p`, in the shared frame, lies inside `shape` centred on the origin.
pub fn in_shape(p: Vec2, shape: Shape) -> bool {
    match shape {
        Shape::Disk { radius } => p.norm() <= radius,
        Shape::VLine { half_width } => p.x.abs() <= half_width,
        Shape::HLine { half_width } => p.y.abs() <= half_width,
        Shape::Wavy {
            amplitude,
            period,
            half_width,
        } => (p.y - amplitude * (2.0 * PI * p.x / period).sin()).abs() <= half_width,
    }
}

/// Shape formation: fast random walk outside the shape; inside it, creep
/// towards the nearest neighbour, or wander slowly if there is none.
/// `neighbours` are relative positions of robots in range.
#[allow(clippy::too_many_arguments)]
pub fn dsa_sf<R: Rng + ?Sized>(
    p_robot: Vec2,
    neighbours: &[Vec2],
    shape: Shape,
    rw: &mut RwState,
    rng: &mut R,
    dt: f64,
    v_fast: f64,
    v_slow: f64,
) -> Vec2 {
    let heading = rw.advance(rng, dt);
    if !in_shape(p_robot, shape) {
        return v_fast * heading;
    }
    let nearest = neighbours
        .iter()
        .filter(|r| r.norm() > 0.0)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()));
    match nearest {
        Some(r) => v_slow * r.normalize(),
        None => v_slow * heading,
    }
}

/// Last known position of one carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierEstimate {
    pub mu: Vec2,
    pub sigma2: f64,
    /// Time of observation (s); 0 means never observed.
    pub t_observed: f64,
}

impl Default for CarrierEstimate {
    fn default() -> Self {
        Self {
            mu: Vec2::zeros(),
            sigma2: 0.0,
            t_observed: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarrierKnowledge {
    pub entries: Vec<CarrierEstimate>,
}

impl CarrierKnowledge {
    pub fn new(n_carriers: usize) -> Self {
        Self {
            entries: vec![CarrierEstimate::default(); n_carriers],
        }
    }

    /// Records a direct sighting. Ignored unless newer than what is held.
    pub fn observe(&mut self, carrier: usize, p_robot: Vec2, robot_sigma2: f64, sigma_position: f64, p_rel: Vec2, t: f64) {
        let e = &mut self.entries[carrier];
        if t <= e.t_observed {
            return;
        }
        *e = CarrierEstimate {
            mu: p_robot + p_rel,
            sigma2: sigma_position * sigma_position + robot_sigma2,
            t_observed: t,
        };
    }

    /// Symmetric merge: per carrier the strictly newer entry wins on both sides.
    pub fn exchange(&mut self, other: &mut CarrierKnowledge) {
        for (mine, theirs) in self.entries.iter_mut().zip(other.entries.iter_mut()) {
            if theirs.t_observed > mine.t_observed {
                *mine = *theirs;
            } else if mine.t_observed > theirs.t_observed {
                *theirs = *mine;
            }
        }
    }

    pub fn all_observed(&self) -> bool {
        self.entries.iter().all(|e| e.t_observed > 0.0)
    }

    /// Carrier with the oldest observation, lowest id on ties.
    pub fn oldest(&self) -> Option<usize> {
        self.entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.t_observed.total_cmp(&b.t_observed))
            .map(|(i, _)| i)
    }
}

/// Knowledge enhancement: a random walk whose legs, once every carrier has
/// been seen, set off toward the carrier with the oldest information rather
/// than in a random direction. A heading is kept for the whole leg, so a
/// robot that reaches a stale estimate overshoots and keeps searching nearby.
pub fn dsa_ke<R: Rng + ?Sized>(
    p_robot: Vec2,
    knowledge: &CarrierKnowledge,
    rw: &mut RwState,
    rng: &mut R,
    dt: f64,
    v_fast: f64,
) -> Vec2 {
    let target = knowledge
        .all_observed()
        .then(|| knowledge.oldest())
        .flatten()
        .map(|j| knowledge.entries[j].mu - p_robot)
        .filter(|d| d.norm() > 1e-9);
    if rw.remaining <= 0.0 {
        if let Some(d) = target {
            rw.direction = d.normalize();
            rw.remaining = rw_duration(rng);
        }
    }
    v_fast * rw.advance(rng, dt)
}

/// Unique robots met so far and the proxy convergence time derived from them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncounterTracker {
    pub met: BTreeSet<u32>,
    pub t_met_half: Option<f64>,
    pub t_proxyconv: Option<f64>,
}

impl EncounterTracker {
    pub fn update(&mut self, ids: impl IntoIterator<Item = u32>, t: f64, n_robots: usize, beta: f64) {
        self.met.extend(ids);
        if self.t_met_half.is_none() && self.met.len() as f64 > n_robots as f64 / 2.0 {
            self.t_met_half = Some(t);
            self.t_proxyconv = Some(beta * t);
        }
    }

    pub fn converged(&self, t: f64) -> bool {
        self.t_proxyconv.is_some_and(|tp| t > tp)
    }
}
