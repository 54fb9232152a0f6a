//! Isotropic 2D Gaussians in information and moments form.
//!
//! Every variable in the swarm is a planar position and every factor has an
//! isotropic covariance, so the precision matrix collapses to one scalar.
//! Products of Gaussians become component-wise sums in information form.

use std::ops::{Add, AddAssign, Sub};

use crate::gbp::GbpError;
use crate::Vec2;

/// A 2D Gaussian in information form: `eta = lambda * mu`, scalar precision `lambda`.
///
/// `lambda == 0` encodes "no information". That is a valid message but not a
/// valid measurement constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCanonical {
    pub eta: Vec2,
    pub lambda: f64,
}

/// A 2D Gaussian in moments form with isotropic variance `sigma2` (m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mu: Vec2,
    pub sigma2: f64,
}

impl Default for GaussianCanonical {
    fn default() -> Self {
        Self::zero()
    }
}

impl GaussianCanonical {
    pub fn new(eta: Vec2, lambda: f64) -> Self {
        Self { eta, lambda }
    }

    /// The zero-information Gaussian, identity of [`canonical_sum`].
    pub fn zero() -> Self {
        Self {
            eta: Vec2::zeros(),
            lambda: 0.0,
        }
    }

    /// Builds the information form of `N(mu, sigma2 * I)`.
    pub fn from_mean(mu: Vec2, sigma2: f64) -> Self {
        to_canonical(GaussianMoments { mu, sigma2 })
    }

    pub fn is_informative(&self) -> bool {
        self.lambda > 0.0
    }

    /// Mean of the distribution, if it carries any information.
    pub fn mean(&self) -> Option<Vec2> {
        self.is_informative().then(|| self.eta / self.lambda)
    }

    pub fn to_moments(&self) -> Result<GaussianMoments, GbpError> {
        to_moments(*self)
    }

    /// Rounds every component through `f32`, the precision used on the wire.
    pub fn to_wire_precision(self) -> Self {
        Self {
            eta: Vec2::new(self.eta.x as f32 as f64, self.eta.y as f32 as f64),
            lambda: self.lambda as f32 as f64,
        }
    }
}

impl Add for GaussianCanonical {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        canonical_sum(self, rhs)
    }
}

impl AddAssign for GaussianCanonical {
    fn add_assign(&mut self, rhs: Self) {
        *self = canonical_sum(*self, rhs);
    }
}

/// Raw component-wise difference. Can produce a negative precision; use
/// [`crate::gbp::variable_to_factor_message`] where a valid message is needed.
impl Sub for GaussianCanonical {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self {
            eta: self.eta - rhs.eta,
            lambda: self.lambda - rhs.lambda,
        }
    }
}

impl std::iter::Sum for GaussianCanonical {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), canonical_sum)
    }
}

pub fn to_canonical(g: GaussianMoments) -> GaussianCanonical {
    let lambda = 1.0 / g.sigma2;
    GaussianCanonical {
        eta: g.mu * lambda,
        lambda,
    }
}

pub fn to_moments(g: GaussianCanonical) -> Result<GaussianMoments, GbpError> {
    if !(g.lambda > 0.0) {
        return Err(GbpError::NoInformation);
    }
    Ok(GaussianMoments {
        mu: g.eta / g.lambda,
        sigma2: 1.0 / g.lambda,
    })
}

/// Product of two Gaussians, i.e. the component-wise sum in information form.
pub fn canonical_sum(a: GaussianCanonical, b: GaussianCanonical) -> GaussianCanonical {
    GaussianCanonical {
        eta: a.eta + b.eta,
        lambda: a.lambda + b.lambda,
    }
}
