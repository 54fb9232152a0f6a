//! Factor nodes and the message kernels shared by every graph in the crate.

use crate::gbp::{GaussianCanonical, GbpError};

/// Unary priors are anchors; binary relative-position constraints are measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Anchor,
    Measurement,
}

/// A factor and the messages it last delivered to each endpoint.
///
/// Measurement factors encode `h(x0, x1) = x1 - x0` with constraint `z`.
/// Anchors only use endpoint 0. `last_sent[k]` is exactly the (damped)
/// message most recently delivered to endpoint `k`; the factor subtracts it
/// from that endpoint's belief to recover the variable-to-factor message.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    kind: FactorKind,
    z: GaussianCanonical,
    last_sent: [GaussianCanonical; 2],
}

impl Factor {
    pub fn anchor(z: GaussianCanonical) -> Self {
        Self {
            kind: FactorKind::Anchor,
            z,
            last_sent: [GaussianCanonical::zero(); 2],
        }
    }

    pub fn measurement(z: GaussianCanonical) -> Result<Self, GbpError> {
        if !(z.lambda > 0.0) {
            return Err(GbpError::DegenerateConstraint);
        }
        Ok(Self {
            kind: FactorKind::Measurement,
            z,
            last_sent: [GaussianCanonical::zero(); 2],
        })
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn z(&self) -> GaussianCanonical {
        self.z
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            FactorKind::Anchor => 1,
            FactorKind::Measurement => 2,
        }
    }

    /// Replaces the constraint, keeping the message caches.
    pub fn set_z(&mut self, z: GaussianCanonical) {
        self.z = z;
    }

    pub fn last_sent(&self, endpoint: usize) -> GaussianCanonical {
        self.last_sent[endpoint]
    }

    /// Overwrites the cached message without damping. Used when a message is
    /// seeded at construction time.
    pub fn set_last_sent(&mut self, endpoint: usize, msg: GaussianCanonical) {
        self.last_sent[endpoint] = msg;
    }

    /// Undamped factor-to-variable message toward `endpoint`, given the
    /// current belief of the other endpoint (ignored for anchors).
    pub fn message_to(&self, endpoint: usize, other_belief: GaussianCanonical) -> GaussianCanonical {
        match self.kind {
            FactorKind::Anchor => self.z,
            FactorKind::Measurement => {
                // z has λ > 0 by construction.
                let incoming = variable_to_factor_message(other_belief, self.last_sent[1 - endpoint]);
                if endpoint == 0 {
                    measurement_message_to_first(self.z, incoming)
                } else {
                    measurement_message_to_second(self.z, incoming)
                }
            }
        }
    }

    /// Damps `msg` against the last message sent to `endpoint`, caches and
    /// returns the damped result.
    pub fn deliver(&mut self, endpoint: usize, msg: GaussianCanonical, r_damp: f64) -> GaussianCanonical {
        let damped = damp(msg, self.last_sent[endpoint], r_damp);
        self.last_sent[endpoint] = damped;
        damped
    }
}

/// Belief of a variable: the product of its incoming factor messages.
pub fn belief_update<I>(msgs: I) -> GaussianCanonical
where
    I: IntoIterator<Item = GaussianCanonical>,
{
    msgs.into_iter().sum()
}

/// The variable-to-factor message recovered at the factor as
/// `belief - last message sent to that variable`.
///
/// Rounding can leave a slightly negative precision; such a message carries
/// no information and is returned as zero.
pub fn variable_to_factor_message(
    belief: GaussianCanonical,
    last_sent_to_var: GaussianCanonical,
) -> GaussianCanonical {
    let diff = belief - last_sent_to_var;
    if diff.lambda > 0.0 {
        diff
    } else {
        GaussianCanonical::zero()
    }
}

/// Messages from a measurement factor `z` on `h(xi, xj) = xj - xi` to both
/// endpoints, given the incoming variable-to-factor messages.
pub fn measurement_messages(
    z: GaussianCanonical,
    msg_from_i: GaussianCanonical,
    msg_from_j: GaussianCanonical,
) -> Result<(GaussianCanonical, GaussianCanonical), GbpError> {
    if !(z.lambda > 0.0) {
        return Err(GbpError::DegenerateConstraint);
    }
    Ok((
        measurement_message_to_first(z, msg_from_j),
        measurement_message_to_second(z, msg_from_i),
    ))
}

fn precision_weight(z: GaussianCanonical, incoming: GaussianCanonical) -> f64 {
    z.lambda / (z.lambda + incoming.lambda)
}

// xi ≈ xj − μf, so ηf enters with a minus sign here.
fn measurement_message_to_first(z: GaussianCanonical, from_second: GaussianCanonical) -> GaussianCanonical {
    if !(from_second.lambda > 0.0) {
        return GaussianCanonical::zero();
    }
    let alpha = precision_weight(z, from_second);
    GaussianCanonical {
        eta: z.eta * -(1.0 - alpha) + from_second.eta * alpha,
        lambda: alpha * from_second.lambda,
    }
}

fn measurement_message_to_second(z: GaussianCanonical, from_first: GaussianCanonical) -> GaussianCanonical {
    if !(from_first.lambda > 0.0) {
        return GaussianCanonical::zero();
    }
    let alpha = precision_weight(z, from_first);
    GaussianCanonical {
        eta: z.eta * (1.0 - alpha) + from_first.eta * alpha,
        lambda: alpha * from_first.lambda,
    }
}

/// Convex blend of a new message with the previous one, applied to `eta`
/// and `lambda` independently.
pub fn damp(new: GaussianCanonical, prev: GaussianCanonical, r_damp: f64) -> GaussianCanonical {
    debug_assert!((0.0..1.0).contains(&r_damp), "r_damp must be in [0, 1)");
    GaussianCanonical {
        eta: new.eta * (1.0 - r_damp) + prev.eta * r_damp,
        lambda: new.lambda * (1.0 - r_damp) + prev.lambda * r_damp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2;
    use proptest::prelude::*;

    fn g(ex: f64, ey: f64, l: f64) -> GaussianCanonical {
        GaussianCanonical::new(Vec2::new(ex, ey), l)
    }

    fn assert_close(a: GaussianCanonical, b: GaussianCanonical) {
        assert!(
            (a.eta - b.eta).norm() < 1e-12 && (a.lambda - b.lambda).abs() < 1e-12,
            "{a:?} != {b:?}"
        );
    }

    #[test]
    fn belief_is_sum_of_messages() {
        assert_eq!(belief_update([g(0.0, 0.0, 0.01)]), g(0.0, 0.0, 0.01));
        let b = belief_update([g(1.0, 0.0, 1.0), g(0.0, 1.0, 1.0)]);
        assert_eq!(b, g(1.0, 1.0, 2.0));
        assert_eq!(b.mean().unwrap(), Vec2::new(0.5, 0.5));
        assert_eq!(belief_update([]), GaussianCanonical::zero());
    }

    #[test]
    fn variable_message_subtracts_last_sent() {
        assert_eq!(
            variable_to_factor_message(g(1.0, 0.0, 11.0), g(1.0, 0.0, 1.0)),
            g(0.0, 0.0, 10.0)
        );
        let b = g(3.0, -1.0, 4.0);
        assert_eq!(variable_to_factor_message(b, GaussianCanonical::zero()), b);
        // Rounding residue below zero precision carries no information.
        assert_eq!(
            variable_to_factor_message(g(1.0, 0.0, 1.0), g(1.0 + 1e-15, 0.0, 1.0 + 1e-15)),
            GaussianCanonical::zero()
        );
    }

    #[test]
    fn belief_subtraction_matches_product_of_other_messages() {
        // Star: variable with three factor messages. The classical message to
        // factor k is the sum of the other two.
        let msgs = [g(1.0, 2.0, 3.0), g(-0.5, 0.25, 0.75), g(4.0, -4.0, 10.0)];
        let belief = belief_update(msgs);
        for k in 0..3 {
            let classical: GaussianCanonical = (0..3).filter(|&i| i != k).map(|i| msgs[i]).sum();
            assert_close(variable_to_factor_message(belief, msgs[k]), classical);
        }
    }

    #[test]
    fn measurement_messages_marginalize() {
        let z = GaussianCanonical::from_mean(Vec2::new(1.0, 0.0), 1.0);
        let (to_i, _) = measurement_messages(z, GaussianCanonical::zero(), g(2.0, 0.0, 1.0)).unwrap();
        assert_close(to_i, g(0.5, 0.0, 0.5));
        assert_eq!(to_i.mean().unwrap(), Vec2::new(1.0, 0.0));

        let (_, to_j) = measurement_messages(z, g(2.0, 0.0, 1.0), GaussianCanonical::zero()).unwrap();
        assert_close(to_j, g(1.5, 0.0, 0.5));
        assert_eq!(to_j.mean().unwrap(), Vec2::new(3.0, 0.0));
    }

    #[test]
    fn message_to_first_endpoint_agrees_with_joint_marginal() {
        // Oracle: joint precision over (xi, xj) for one axis, with the
        // incoming message as a prior on xj, solved as a 2x2 system.
        let (mu_f, lam_f) = (1.0, 1.0);
        let (mu_j, lam_j) = (2.0, 1.0);
        let a = [[lam_f, -lam_f], [-lam_f, lam_f + lam_j]];
        let b = [-lam_f * mu_f, lam_f * mu_f + lam_j * mu_j];
        // Marginal of xi in information form: Schur complement on xj.
        let lam_i = a[0][0] - a[0][1] * a[1][0] / a[1][1];
        let eta_i = b[0] - a[0][1] * b[1] / a[1][1];

        let z = GaussianCanonical::from_mean(Vec2::new(mu_f, 0.0), 1.0 / lam_f);
        let (to_i, _) = measurement_messages(z, GaussianCanonical::zero(), g(mu_j * lam_j, 0.0, lam_j)).unwrap();
        assert!((to_i.lambda - lam_i).abs() < 1e-12);
        assert!((to_i.eta.x - eta_i).abs() < 1e-12);
    }

    #[test]
    fn uninformed_neighbour_sends_nothing() {
        let z = GaussianCanonical::from_mean(Vec2::new(1.0, 0.0), 1.0);
        let (to_i, to_j) =
            measurement_messages(z, GaussianCanonical::zero(), GaussianCanonical::zero()).unwrap();
        assert_eq!(to_i, GaussianCanonical::zero());
        assert_eq!(to_j, GaussianCanonical::zero());
    }

    #[test]
    fn degenerate_constraint_rejected() {
        assert!(matches!(
            measurement_messages(GaussianCanonical::zero(), g(1.0, 0.0, 1.0), g(1.0, 0.0, 1.0)),
            Err(GbpError::DegenerateConstraint)
        ));
        assert!(Factor::measurement(GaussianCanonical::zero()).is_err());
    }

    #[test]
    fn damping() {
        assert_close(damp(g(1.0, 0.0, 1.0), GaussianCanonical::zero(), 0.8), g(0.2, 0.0, 0.2));
        let m = g(0.3, -2.0, 7.0);
        assert_eq!(damp(m, m, 0.8), m);
        assert_eq!(damp(m, g(9.0, 9.0, 9.0), 0.0), m);
    }

    #[test]
    fn anchor_message_is_constraint() {
        let z = GaussianCanonical::from_mean(Vec2::new(1.0, 2.0), 0.25);
        let mut f = Factor::anchor(z);
        assert_eq!(f.arity(), 1);
        assert_eq!(f.message_to(0, GaussianCanonical::zero()), z);
        for _ in 0..200 {
            let m = f.message_to(0, GaussianCanonical::zero());
            f.deliver(0, m, 0.8);
        }
        assert_close(f.last_sent(0), z);
    }

    proptest! {
        #[test]
        fn recomputed_message_at_fixed_point_equals_last_sent(
            mu in -5.0..5.0f64, lam_f in 0.1..100.0f64,
            eta_b in -50.0..50.0f64, lam_b in 0.1..100.0f64,
        ) {
            // Two-variable graph where endpoint 1's belief is only this factor's
            // message plus an external prior: iterate to the fixed point and
            // check that one more message equals the cached one.
            let z = GaussianCanonical::from_mean(Vec2::new(mu, 0.0), 1.0 / lam_f);
            let mut f = Factor::measurement(z).unwrap();
            let belief0 = g(eta_b, 0.0, lam_b);
            for _ in 0..400 {
                let m = f.message_to(1, belief0);
                f.deliver(1, m, 0.8);
            }
            let again = damp(f.message_to(1, belief0), f.last_sent(1), 0.8);
            prop_assert!((again.lambda - f.last_sent(1).lambda).abs() < 1e-9);
            prop_assert!((again.eta - f.last_sent(1).eta).norm() < 1e-9);
        }

        #[test]
        fn zero_information_never_raises_precision(
            eta in -10.0..10.0f64, lam in 0.0..10.0f64, lam_f in 0.1..100.0f64,
        ) {
            let z = GaussianCanonical::from_mean(Vec2::new(1.0, 0.0), 1.0 / lam_f);
            let (to_i, to_j) = measurement_messages(z, GaussianCanonical::zero(), GaussianCanonical::zero()).unwrap();
            let belief = g(eta, 0.0, lam);
            prop_assert_eq!((belief + to_i).lambda, lam);
            prop_assert_eq!((belief + to_j).lambda, lam);
        }
    }
}
