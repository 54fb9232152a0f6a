//! A standalone factor graph over 2D positions, swept with randomized GBP.
//!
//! This is the reference setting for the kernels: every variable and factor
//! is local. [`FactorGraph::solve_dense`] assembles the full information
//! system and solves it directly, which is what the iterative estimates are
//! checked against.

use nalgebra::DMatrix;
use rand::Rng;

use crate::accounting::{Event, ResourceCounters};
use crate::gbp::{Factor, FactorKind, GaussianCanonical, GaussianMoments, GbpError};

pub type VarId = usize;
pub type FactorId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct VariableNode {
    pub timestep: u32,
    pub belief: GaussianCanonical,
    pub factors: Vec<FactorId>,
}

#[derive(Debug, Clone)]
struct Slot {
    factor: Factor,
    endpoints: [VarId; 2],
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    variables: Vec<VariableNode>,
    factors: Vec<Slot>,
    r_damp: f64,
    counters: ResourceCounters,
}

impl FactorGraph {
    pub fn new(r_damp: f64) -> Self {
        Self {
            variables: Vec::new(),
            factors: Vec::new(),
            r_damp,
            counters: ResourceCounters::default(),
        }
    }

    pub fn add_variable(&mut self, timestep: u32) -> VarId {
        self.variables.push(VariableNode {
            timestep,
            belief: GaussianCanonical::zero(),
            factors: Vec::new(),
        });
        self.variables.len() - 1
    }

    pub fn add_anchor(&mut self, var: VarId, z: GaussianCanonical) -> FactorId {
        self.push_factor(Factor::anchor(z), [var, var])
    }

    /// Adds `h(from, to) = to - from` with constraint `z`.
    pub fn add_measurement(&mut self, from: VarId, to: VarId, z: GaussianCanonical) -> Result<FactorId, GbpError> {
        assert_ne!(from, to, "measurement endpoints must differ");
        Ok(self.push_factor(Factor::measurement(z)?, [from, to]))
    }

    fn push_factor(&mut self, factor: Factor, endpoints: [VarId; 2]) -> FactorId {
        let id = self.factors.len();
        for &v in &endpoints[..factor.arity()] {
            self.variables[v].factors.push(id);
        }
        self.factors.push(Slot { factor, endpoints });
        id
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn variable(&self, id: VarId) -> &VariableNode {
        &self.variables[id]
    }

    pub fn belief(&self, id: VarId) -> GaussianCanonical {
        self.variables[id].belief
    }

    pub fn counters(&self) -> &ResourceCounters {
        &self.counters
    }

    /// Sends messages from factor `id` to each of its endpoints, then updates
    /// the endpoint beliefs.
    pub fn sweep_factor(&mut self, id: FactorId) {
        let slot = &self.factors[id];
        let arity = slot.factor.arity();
        let [a, b] = slot.endpoints;
        // Messages are computed from the pre-sweep beliefs of both endpoints.
        let msgs = if arity == 1 {
            [slot.factor.message_to(0, GaussianCanonical::zero()), GaussianCanonical::zero()]
        } else {
            self.counters.account(Event::FactorMessagePair);
            [
                slot.factor.message_to(0, self.variables[b].belief),
                slot.factor.message_to(1, self.variables[a].belief),
            ]
        };
        let r_damp = self.r_damp;
        for (k, msg) in msgs.into_iter().enumerate().take(arity) {
            self.factors[id].factor.deliver(k, msg, r_damp);
        }
        self.update_belief(a);
        if arity == 2 {
            self.update_belief(b);
        }
    }

    /// One step of the random schedule: a uniformly chosen factor is swept.
    pub fn sweep_random_factor<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.factors.is_empty() {
            return;
        }
        let id = rng.random_range(0..self.factors.len());
        self.sweep_factor(id);
    }

    fn update_belief(&mut self, var: VarId) {
        let node = &self.variables[var];
        let belief = super::belief_update(node.factors.iter().map(|&f| {
            let slot = &self.factors[f];
            let k = if slot.endpoints[0] == var { 0 } else { 1 };
            slot.factor.last_sent(k)
        }));
        self.counters.account(Event::BeliefUpdate {
            factors: node.factors.len(),
        });
        self.variables[var].belief = belief;
    }

    /// Exact posterior marginals by direct solution of the information system.
    ///
    /// Every connected component needs at least one anchor, otherwise the
    /// system is singular.
    pub fn solve_dense(&self) -> Result<Vec<GaussianMoments>, GbpError> {
        let n = self.variables.len();
        self.check_anchored()?;

        // Isotropic precisions: x and y decouple and share the same n×n system.
        let mut info = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, 2);
        for slot in &self.factors {
            let z = slot.factor.z();
            let [a, b] = slot.endpoints;
            match slot.factor.kind() {
                FactorKind::Anchor => {
                    info[(a, a)] += z.lambda;
                    rhs[(a, 0)] += z.eta.x;
                    rhs[(a, 1)] += z.eta.y;
                }
                FactorKind::Measurement => {
                    info[(a, a)] += z.lambda;
                    info[(b, b)] += z.lambda;
                    info[(a, b)] -= z.lambda;
                    info[(b, a)] -= z.lambda;
                    rhs[(a, 0)] -= z.eta.x;
                    rhs[(a, 1)] -= z.eta.y;
                    rhs[(b, 0)] += z.eta.x;
                    rhs[(b, 1)] += z.eta.y;
                }
            }
        }

        let chol = info.cholesky().ok_or(GbpError::Singular)?;
        let means = chol.solve(&rhs);
        let cov = chol.inverse();
        Ok((0..n)
            .map(|i| GaussianMoments {
                mu: crate::Vec2::new(means[(i, 0)], means[(i, 1)]),
                sigma2: cov[(i, i)],
            })
            .collect())
    }

    fn check_anchored(&self) -> Result<(), GbpError> {
        let n = self.variables.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for slot in &self.factors {
            if slot.factor.arity() == 2 {
                let (ra, rb) = (find(&mut parent, slot.endpoints[0]), find(&mut parent, slot.endpoints[1]));
                parent[ra] = rb;
            }
        }
        let mut anchored = vec![false; n];
        for slot in &self.factors {
            if slot.factor.kind() == FactorKind::Anchor && slot.factor.z().lambda > 0.0 {
                let r = find(&mut parent, slot.endpoints[0]);
                anchored[r] = true;
            }
        }
        for v in 0..n {
            if !anchored[find(&mut parent, v)] {
                return Err(GbpError::Singular);
            }
        }
        Ok(())
    }
}

/// Dense solve of `graph`; see [`FactorGraph::solve_dense`].
pub fn solve_dense(graph: &FactorGraph) -> Result<Vec<GaussianMoments>, GbpError> {
    graph.solve_dense()
}

/// Free-function form of [`FactorGraph::sweep_random_factor`].
pub fn sweep_random_factor<R: Rng + ?Sized>(graph: &mut FactorGraph, rng: &mut R) {
    graph.sweep_random_factor(rng);
}

// Random graph generators are also used by the acceptance suite.
#[doc(hidden)]
pub mod testing {
    use super::*;
    use crate::Vec2;
    use rand_distr::StandardNormal;

    /// A random connected graph at arena scale: variables spread over a
    /// 5 m square, a spanning tree of measurement factors, one anchor on
    /// variable 0 plus `extra_anchors` more, and `extra_edges` additional
    /// measurements closing loops. Every factor draws σ² uniformly from
    /// [0.01, 1] m² and its measurement noise from that σ.
    pub fn random_graph<R: Rng + ?Sized>(
        rng: &mut R,
        n_vars: usize,
        extra_edges: usize,
        extra_anchors: usize,
        r_damp: f64,
    ) -> FactorGraph {
        let mut g = FactorGraph::new(r_damp);
        let truth: Vec<Vec2> = (0..n_vars)
            .map(|_| Vec2::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)))
            .collect();
        for i in 0..n_vars {
            g.add_variable(i as u32);
        }
        let measure = |rng: &mut R, v: Vec2, sigma: f64| {
            let noise = Vec2::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            GaussianCanonical::from_mean(v + noise * sigma, sigma * sigma)
        };
        let measurement_sigma = |rng: &mut R| rng.random_range(0.01f64..1.0).sqrt();

        let anchor = |rng: &mut R, g: &mut FactorGraph, v: usize| {
            let sigma = measurement_sigma(rng);
            let z = measure(rng, truth[v], sigma);
            g.add_anchor(v, z);
        };
        anchor(rng, &mut g, 0);
        for _ in 0..extra_anchors {
            let v = rng.random_range(0..n_vars);
            anchor(rng, &mut g, v);
        }
        for i in 1..n_vars {
            let j = rng.random_range(0..i);
            let sigma = measurement_sigma(rng);
            let z = measure(rng, truth[i] - truth[j], sigma);
            g.add_measurement(j, i, z).unwrap();
        }
        for _ in 0..extra_edges {
            let a = rng.random_range(0..n_vars);
            let mut b = rng.random_range(0..n_vars);
            while b == a {
                b = rng.random_range(0..n_vars);
            }
            let sigma = measurement_sigma(rng);
            let z = measure(rng, truth[b] - truth[a], sigma);
            g.add_measurement(a, b, z).unwrap();
        }
        g
    }

    /// Mean Euclidean distance between GBP means and the dense solution.
    pub fn mean_discrepancy(g: &FactorGraph, exact: &[GaussianMoments]) -> f64 {
        let total: f64 = exact
            .iter()
            .enumerate()
            .map(|(i, m)| match g.belief(i).mean() {
                Some(mu) => (mu - m.mu).norm(),
                None => f64::INFINITY,
            })
            .sum();
        total / exact.len() as f64
    }
}
