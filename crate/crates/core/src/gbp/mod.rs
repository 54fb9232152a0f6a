//! Linear 2D Gaussian belief propagation.

mod factor;
mod gaussian;
pub mod graph;

pub use factor::{
    belief_update, damp, measurement_messages, variable_to_factor_message, Factor, FactorKind,
};
pub use gaussian::{canonical_sum, to_canonical, to_moments, GaussianCanonical, GaussianMoments};
pub use graph::{solve_dense, sweep_random_factor, FactorGraph, FactorId, VarId, VariableNode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GbpError {
    #[error("zero precision has no moments form (infinite variance)")]
    NoInformation,
    #[error("measurement constraint must have positive precision")]
    DegenerateConstraint,
    #[error("information matrix is singular: a connected component has no anchor")]
    Singular,
}
