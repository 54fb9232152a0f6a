//! Distributed spatial awareness for simulated robot swarms.
//!
//! Each robot keeps a sliding-window factor graph of its own past positions,
//! links it to neighbours through relative observations, and runs Gaussian
//! belief propagation over the union of those fragments by exchanging small
//! request/response messages. The result is a shared reference frame built
//! from purely local sensing and communication.

pub mod accounting;
pub mod behaviors;
pub mod gbp;
pub mod harness;
pub mod metrics;
pub mod sim;
pub mod swarm_graph;
pub mod wire;
pub mod world;

/// Planar vector used for positions, velocities and information vectors.
pub type Vec2 = nalgebra::Vector2<f64>;
