//! One robot's fragment of the swarm factor graph.
//!
//! The window holds the robot's most recent pose variables, oldest first.
//! Consecutive variables are linked by odometry factors and the oldest one
//! carries the anchor. Observations of other robots become outward-facing
//! factors keyed by `(timestep, remote id)`; their second endpoint is the
//! remote robot's variable for the same timestep, reached only through the
//! request/response exchange in [`crate::wire`].

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::accounting::{Event, ResourceCounters};
use crate::gbp::{belief_update, Factor, GaussianCanonical};
use crate::Vec2;

pub type Timestep = u32;
pub type RobotId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("robot is not yet localized")]
    NotLocalized,
}

/// Parameters of a robot's local graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub n_window: usize,
    /// Odometry noise σ (m); odometry factors have precision 1/σ².
    pub sigma_velocity: f64,
    /// Relative position noise σ (m); outward factors have precision 1/σ².
    pub sigma_position: f64,
    pub r_sense: f64,
    pub r_damp: f64,
    /// Precision of the first anchor's `(0, 0)` prior (m⁻²).
    pub prior_lambda: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            n_window: 10,
            sigma_velocity: 0.1,
            sigma_position: 0.02,
            r_sense: 0.5,
            r_damp: 0.8,
            prior_lambda: 0.01,
        }
    }
}

/// A relative observation of another robot made at timestep `ts`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub remote_id: RobotId,
    pub p_object: Vec2,
    pub ts: Timestep,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WindowVar {
    pub(crate) ts: Timestep,
    pub(crate) belief: GaussianCanonical,
    /// Latest message from each remote robot's outward factor on this variable.
    pub(crate) remote_in: BTreeMap<RobotId, GaussianCanonical>,
}

/// Endpoint 0 is the local variable, endpoint 1 the remote one.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OutwardFactor {
    pub(crate) factor: Factor,
    /// Most recent belief of the remote variable received in a response.
    pub(crate) remote_belief: Option<GaussianCanonical>,
}

#[derive(Debug, Clone)]
pub struct RobotGraph {
    robot_id: RobotId,
    params: GraphParams,
    pub(crate) window: VecDeque<WindowVar>,
    anchor: Option<Factor>,
    /// `odometry[i]` links `window[i]` (endpoint 0) to `window[i + 1]`.
    odometry: VecDeque<Factor>,
    pub(crate) outward: BTreeMap<(Timestep, RobotId), OutwardFactor>,
    p_odom: Vec2,
    current_ts: Option<Timestep>,
    pub(crate) counters: ResourceCounters,
}

impl RobotGraph {
    pub fn new(robot_id: RobotId, params: GraphParams) -> Self {
        Self {
            robot_id,
            params,
            window: VecDeque::with_capacity(params.n_window + 1),
            anchor: None,
            odometry: VecDeque::with_capacity(params.n_window),
            outward: BTreeMap::new(),
            p_odom: Vec2::zeros(),
            current_ts: None,
            counters: ResourceCounters::default(),
        }
    }

    pub fn robot_id(&self) -> RobotId {
        self.robot_id
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn current_ts(&self) -> Option<Timestep> {
        self.current_ts
    }

    pub fn p_odom(&self) -> Vec2 {
        self.p_odom
    }

    pub fn counters(&self) -> &ResourceCounters {
        &self.counters
    }

    pub fn counters_mut(&mut self) -> &mut ResourceCounters {
        &mut self.counters
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Timesteps of the live window, oldest first.
    pub fn timesteps(&self) -> impl Iterator<Item = Timestep> + '_ {
        self.window.iter().map(|v| v.ts)
    }

    pub fn belief(&self, ts: Timestep) -> Option<GaussianCanonical> {
        self.index_of(ts).map(|i| self.window[i].belief)
    }

    pub fn newest_belief(&self) -> Option<GaussianCanonical> {
        self.window.back().map(|v| v.belief)
    }

    /// Constraint of the anchor on the oldest variable.
    pub fn anchor_z(&self) -> Option<GaussianCanonical> {
        self.anchor.as_ref().map(Factor::z)
    }

    pub fn num_odometry_factors(&self) -> usize {
        self.odometry.len()
    }

    pub fn num_outward_factors(&self) -> usize {
        self.outward.len()
    }

    pub fn outward_keys(&self) -> impl Iterator<Item = (Timestep, RobotId)> + '_ {
        self.outward.keys().copied()
    }

    /// Number of factor nodes a random sweep chooses from.
    pub fn num_factors(&self) -> usize {
        usize::from(self.anchor.is_some()) + self.odometry.len() + self.outward.len()
    }

    pub(crate) fn index_of(&self, ts: Timestep) -> Option<usize> {
        let oldest = self.window.front()?.ts;
        let i = ts.checked_sub(oldest)? as usize;
        (i < self.window.len()).then_some(i)
    }

    pub fn integrate_velocity(&mut self, v_sense: Vec2, dt: f64) {
        debug_assert!(dt > 0.0);
        self.p_odom += v_sense * dt;
    }

    /// Issues a new timestep: creates its variable, links it by odometry and
    /// slides the window, migrating the anchor when the oldest variable leaves.
    pub fn advance_timestep(&mut self) {
        let Some(prev_ts) = self.current_ts else {
            self.window.push_back(WindowVar {
                ts: 0,
                belief: GaussianCanonical::zero(),
                remote_in: BTreeMap::new(),
            });
            self.anchor = Some(Factor::anchor(GaussianCanonical::from_mean(
                Vec2::zeros(),
                1.0 / self.params.prior_lambda,
            )));
            self.current_ts = Some(0);
            self.p_odom = Vec2::zeros();
            return;
        };

        let ts = prev_ts + 1;
        let prev_belief = self.window.back().expect("window is never empty").belief;
        let z = GaussianCanonical::from_mean(self.p_odom, self.params.sigma_velocity.powi(2));
        let mut odo = Factor::measurement(z).expect("odometry precision is positive");
        // Seed the new variable with the exact message the odometry factor
        // would send: the previous belief shifted by p_odom.
        let seed = odo.message_to(1, prev_belief);
        odo.set_last_sent(1, seed);
        self.counters.account(Event::FactorMessagePair);
        self.odometry.push_back(odo);
        self.window.push_back(WindowVar {
            ts,
            belief: seed,
            remote_in: BTreeMap::new(),
        });
        self.current_ts = Some(ts);
        self.p_odom = Vec2::zeros();

        if self.window.len() > self.params.n_window {
            self.evict_oldest();
        }
    }

    fn evict_oldest(&mut self) {
        let evicted = self.window.pop_front().expect("window over capacity");
        let odo = self.odometry.pop_front().expect("odometry links evicted variable");
        self.outward.retain(|&(ts, _), _| ts != evicted.ts);

        let new_oldest = &self.window[0];
        let z = if new_oldest.belief.is_informative() {
            new_oldest.belief
        } else {
            GaussianCanonical::from_mean(Vec2::zeros(), 1.0 / self.params.prior_lambda)
        };
        let mut anchor = Factor::anchor(z);
        // The anchor takes over the evicted odometry factor's contribution so
        // the belief is continuous across the migration.
        anchor.set_last_sent(0, odo.last_sent(1));
        self.anchor = Some(anchor);
        self.update_belief(0);
    }

    /// Records an observation as an outward factor on the current variable.
    /// A repeated observation of the same robot in the same timestep replaces
    /// the constraint and keeps the factor's message state.
    pub fn record_observation(&mut self, obs: Observation) {
        debug_assert_eq!(Some(obs.ts), self.current_ts, "observations attach to the current timestep");
        debug_assert!(
            obs.p_object.norm() <= self.params.r_sense + 6.0 * self.params.sigma_position,
            "observation beyond sensing range"
        );
        if self.index_of(obs.ts).is_none() {
            return;
        }
        // Express the offset at the variable's epoch: x_ts = p_robot - p_odom.
        let z = GaussianCanonical::from_mean(obs.p_object + self.p_odom, self.params.sigma_position.powi(2));
        self.outward
            .entry((obs.ts, obs.remote_id))
            .and_modify(|f| f.factor.set_z(z))
            .or_insert_with(|| OutwardFactor {
                factor: Factor::measurement(z).expect("position precision is positive"),
                remote_belief: None,
            });
    }

    /// Position of the robot in its own estimate of the shared frame.
    pub fn current_pose(&self) -> Result<Vec2, GraphError> {
        let newest = self.newest_belief().ok_or(GraphError::NotLocalized)?;
        Ok(newest.mean().ok_or(GraphError::NotLocalized)? + self.p_odom)
    }

    /// Positional variance of the newest variable (1/λ).
    pub fn pose_variance(&self) -> Result<f64, GraphError> {
        let newest = self.newest_belief().ok_or(GraphError::NotLocalized)?;
        if newest.is_informative() {
            Ok(1.0 / newest.lambda)
        } else {
            Err(GraphError::NotLocalized)
        }
    }

    /// World-frame point this robot believes is the shared origin, given its
    /// ground-truth position. Simulator-side only.
    pub fn local_origin(&self, gt_position: Vec2) -> Result<Vec2, GraphError> {
        Ok(gt_position - self.current_pose()?)
    }

    /// One step of the local schedule: a uniformly chosen factor sends
    /// messages to its local endpoints.
    pub fn sweep_random_factor<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.num_factors();
        if n == 0 {
            return;
        }
        self.sweep_factor(rng.random_range(0..n));
    }

    /// Sweeps the factor at `index` in the order anchor, odometry, outward.
    pub fn sweep_factor(&mut self, index: usize) {
        let r_damp = self.params.r_damp;
        let mut index = index;
        if let Some(anchor) = self.anchor.as_mut() {
            if index == 0 {
                let msg = anchor.message_to(0, GaussianCanonical::zero());
                anchor.deliver(0, msg, r_damp);
                self.update_belief(0);
                return;
            }
            index -= 1;
        }
        if index < self.odometry.len() {
            let (a, b) = (self.window[index].belief, self.window[index + 1].belief);
            let odo = &mut self.odometry[index];
            let to_older = odo.message_to(0, b);
            let to_newer = odo.message_to(1, a);
            odo.deliver(0, to_older, r_damp);
            odo.deliver(1, to_newer, r_damp);
            self.counters.account(Event::FactorMessagePair);
            self.update_belief(index);
            self.update_belief(index + 1);
            return;
        }
        index -= self.odometry.len();
        let Some((&(ts, _), outward)) = self.outward.iter_mut().nth(index) else {
            return;
        };
        // Without a remote belief there is nothing to send inward yet.
        if let Some(remote) = outward.remote_belief {
            let msg = outward.factor.message_to(0, remote);
            outward.factor.deliver(0, msg, r_damp);
            self.counters.account(Event::FactorMessagePair);
            if let Some(i) = self.index_of(ts) {
                self.update_belief(i);
            }
        }
    }

    pub(crate) fn attached_factor_count(&self, i: usize) -> usize {
        let var = &self.window[i];
        let anchor = usize::from(i == 0 && self.anchor.is_some());
        let odometry = usize::from(i > 0) + usize::from(i + 1 < self.window.len());
        let outward = self.outward.range((var.ts, 0)..=(var.ts, RobotId::MAX)).count();
        anchor + odometry + outward + var.remote_in.len()
    }

    /// Recomputes the belief of `window[i]` from the latest message of every
    /// attached factor, local or remote.
    pub(crate) fn update_belief(&mut self, i: usize) {
        let var = &self.window[i];
        let ts = var.ts;
        let anchor = (i == 0).then(|| self.anchor.as_ref().map(|a| a.last_sent(0))).flatten();
        let from_older = (i > 0).then(|| self.odometry[i - 1].last_sent(1));
        let from_newer = (i < self.odometry.len()).then(|| self.odometry[i].last_sent(0));
        let outward = self
            .outward
            .range((ts, 0)..=(ts, RobotId::MAX))
            .map(|(_, f)| f.factor.last_sent(0));
        let belief = belief_update(
            anchor
                .into_iter()
                .chain(from_older)
                .chain(from_newer)
                .chain(outward)
                .chain(var.remote_in.values().copied()),
        );
        let factors = self.attached_factor_count(i);
        self.counters.account(Event::BeliefUpdate { factors });
        self.window[i].belief = belief;
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.window.len() > self.params.n_window {
            return Err(format!("window {} exceeds {}", self.window.len(), self.params.n_window));
        }
        if self.window.is_empty() {
            return if self.anchor.is_none() && self.odometry.is_empty() && self.outward.is_empty() {
                Ok(())
            } else {
                Err("factors without variables".into())
            };
        }
        if self.anchor.is_none() {
            return Err("no anchor on the oldest variable".into());
        }
        if self.odometry.len() + 1 != self.window.len() {
            return Err(format!(
                "{} odometry factors for {} variables",
                self.odometry.len(),
                self.window.len()
            ));
        }
        for w in self.window.iter().zip(self.window.iter().skip(1)) {
            if w.1.ts != w.0.ts + 1 {
                return Err("window timesteps not consecutive".into());
            }
        }
        for &(ts, remote) in self.outward.keys() {
            if self.index_of(ts).is_none() {
                return Err(format!("outward factor ({ts}, {remote}) references an evicted variable"));
            }
            if remote == self.robot_id {
                return Err("outward factor to self".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph() -> RobotGraph {
        RobotGraph::new(1, GraphParams::default())
    }

    #[test]
    fn integrates_velocity() {
        let mut g = graph();
        for _ in 0..30 {
            g.integrate_velocity(Vec2::new(0.5, 0.0), 1.0 / 60.0);
        }
        assert!((g.p_odom() - Vec2::new(0.25, 0.0)).norm() < 1e-9);

        let mut g = graph();
        g.integrate_velocity(Vec2::zeros(), 1.0 / 60.0);
        assert_eq!(g.p_odom(), Vec2::zeros());
        for k in 0..10 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            g.integrate_velocity(Vec2::new(s, 0.0), 0.25);
        }
        assert!(g.p_odom().norm() < 1e-12);
    }

    #[test]
    fn first_timestep_gets_weak_prior() {
        let mut g = graph();
        g.advance_timestep();
        assert_eq!(g.current_ts(), Some(0));
        assert_eq!(g.window_len(), 1);
        let z = g.anchor_z().unwrap();
        assert_eq!(z.mean().unwrap(), Vec2::zeros());
        assert!((z.lambda - 0.01).abs() < 1e-12);
        // Not localized until the anchor has sent a message.
        assert_eq!(g.current_pose(), Err(GraphError::NotLocalized));
        g.sweep_factor(0);
        assert_eq!(g.current_pose().unwrap(), Vec2::zeros());
        g.check_invariants().unwrap();
    }

    #[test]
    fn window_slides_and_anchor_migrates() {
        let mut g = graph();
        g.advance_timestep();
        g.sweep_factor(0);
        for _ in 0..12 {
            g.integrate_velocity(Vec2::new(1.0, 0.0), 0.5);
            g.advance_timestep();
            g.check_invariants().unwrap();
        }
        assert_eq!(g.window_len(), 10);
        let oldest = g.timesteps().next().unwrap();
        g.integrate_velocity(Vec2::new(1.0, 0.0), 0.5);
        g.advance_timestep();
        assert_eq!(g.window_len(), 10);
        assert_eq!(g.timesteps().next().unwrap(), oldest + 1);
        g.check_invariants().unwrap();
        // Anchor constraint equals the belief the new oldest variable had.
        let z = g.anchor_z().unwrap();
        assert!((z.mean().unwrap() - g.belief(oldest + 1).unwrap().mean().unwrap()).norm() < 1e-9);
    }

    #[test]
    fn eviction_removes_outward_factors() {
        let mut g = graph();
        g.advance_timestep();
        g.record_observation(Observation {
            remote_id: 3,
            p_object: Vec2::new(0.4, 0.0),
            ts: 0,
        });
        g.advance_timestep();
        g.record_observation(Observation {
            remote_id: 3,
            p_object: Vec2::new(0.3, 0.0),
            ts: 1,
        });
        assert_eq!(g.num_outward_factors(), 2);
        for _ in 0..9 {
            g.advance_timestep();
        }
        assert_eq!(g.outward_keys().collect::<Vec<_>>(), vec![(1, 3)]);
        g.advance_timestep();
        assert_eq!(g.num_outward_factors(), 0);
        g.check_invariants().unwrap();
    }

    #[test]
    fn observation_creates_keyed_factor() {
        let mut g = graph();
        for _ in 0..7 {
            g.advance_timestep();
        }
        let obs = Observation {
            remote_id: 3,
            p_object: Vec2::new(0.4, 0.0),
            ts: 6,
        };
        g.record_observation(obs);
        let f = &g.outward[&(6, 3)].factor;
        assert!((f.z().lambda - 2500.0).abs() < 1e-9);
        assert!((f.z().mean().unwrap() - Vec2::new(0.4, 0.0)).norm() < 1e-12);
        g.record_observation(Observation {
            p_object: Vec2::new(0.35, 0.0),
            ..obs
        });
        assert_eq!(g.num_outward_factors(), 1);
        assert!((g.outward[&(6, 3)].factor.z().mean().unwrap().x - 0.35).abs() < 1e-12);
    }

    #[test]
    fn observation_expressed_at_variable_epoch() {
        let mut g = graph();
        g.advance_timestep();
        g.integrate_velocity(Vec2::new(0.5, 0.0), 0.2);
        g.record_observation(Observation {
            remote_id: 2,
            p_object: Vec2::new(0.3, 0.0),
            ts: 0,
        });
        // Robot moved 0.1 m since x0, so the remote is 0.4 m from x0.
        let mu = g.outward[&(0, 2)].factor.z().mean().unwrap();
        assert!((mu - Vec2::new(0.4, 0.0)).norm() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "beyond sensing range")]
    #[cfg(debug_assertions)]
    fn observation_out_of_range_is_rejected() {
        let mut g = graph();
        g.advance_timestep();
        g.record_observation(Observation {
            remote_id: 2,
            p_object: Vec2::new(2.0, 0.0),
            ts: 0,
        });
    }

    #[test]
    fn pose_is_newest_mean_plus_odometry() {
        let mut g = graph();
        g.advance_timestep();
        for _ in 0..50 {
            g.sweep_factor(0);
        }
        g.integrate_velocity(Vec2::new(0.1, 0.0), 1.0);
        assert!((g.current_pose().unwrap() - Vec2::new(0.1, 0.0)).norm() < 1e-9);
        assert!((g.local_origin(Vec2::new(2.0, 2.0)).unwrap() - Vec2::new(1.9, 2.0)).norm() < 1e-9);
    }

    #[test]
    fn pose_is_continuous_across_node_boundary() {
        let mut g = graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        g.advance_timestep();
        for step in 0..200 {
            g.integrate_velocity(Vec2::new(0.3, -0.2), 1.0 / 60.0);
            if step % 6 == 0 {
                g.sweep_random_factor(&mut rng);
            }
            if step % 30 == 29 {
                let before = g.current_pose();
                g.advance_timestep();
                if let Ok(before) = before {
                    let after = g.current_pose().unwrap();
                    assert!((after - before).norm() < 1e-6, "{before:?} -> {after:?}");
                }
                assert_eq!(g.current_pose().ok(), g.newest_belief().unwrap().mean());
            }
        }
    }

    #[test]
    fn lone_robot_uncertainty_never_shrinks() {
        let mut g = graph();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        g.advance_timestep();
        let mut prev: Option<f64> = None;
        for node in 0..60 {
            for _ in 0..5 {
                g.sweep_random_factor(&mut rng);
            }
            g.integrate_velocity(Vec2::new(0.5, 0.1), 0.5);
            g.advance_timestep();
            if node >= g.params().n_window {
                let lambda = g.newest_belief().unwrap().lambda;
                if let Some(p) = prev {
                    assert!(lambda <= p * (1.0 + 1e-9), "node {node}: {lambda} > {p}");
                }
                prev = Some(lambda);
            }
        }
    }

    #[test]
    fn random_operation_sequences_keep_invariants() {
        use proptest::prelude::*;
        proptest!(|(ops in proptest::collection::vec((0u8..4, 0u32..5, -0.5..0.5f64), 0..300))| {
            let mut g = RobotGraph::new(0, GraphParams::default());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for (op, remote, x) in ops {
                match op {
                    0 => g.advance_timestep(),
                    1 => g.integrate_velocity(Vec2::new(x, -x), 1.0 / 60.0),
                    2 => if let Some(ts) = g.current_ts() {
                        g.record_observation(Observation { remote_id: remote + 1, p_object: Vec2::new(x, 0.1), ts });
                    },
                    _ => g.sweep_random_factor(&mut rng),
                }
                prop_assert!(g.check_invariants().is_ok(), "{:?}", g.check_invariants());
                prop_assert!(g.num_outward_factors() <= g.params().n_window * 5);
            }
        });
    }
}
