//! Floating-point operation and bandwidth accounting.
//!
//! Costs follow a fixed model: a belief update costs 3 operations per
//! attached factor, one evaluation of a measurement factor's message pair
//! costs 13 operations, and bytes are charged at their exact encoded size.

/// Operations per attached factor for one belief update.
pub const FLOPS_PER_BELIEF_FACTOR: u64 = 3;
/// Operations for one measurement-factor message pair.
pub const FLOPS_PER_FACTOR_MESSAGE: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    BeliefUpdate { factors: usize },
    FactorMessagePair,
    Tx(usize),
    Rx(usize),
}

/// Per-robot counters, monotone until [`ResourceCounters::reset`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResourceCounters {
    pub flops: u64,
    pub bytes_tx: u64,
    pub bytes_rx: u64,
}

impl ResourceCounters {
    pub fn account(&mut self, event: Event) {
        match event {
            Event::BeliefUpdate { factors } => self.flops += FLOPS_PER_BELIEF_FACTOR * factors as u64,
            Event::FactorMessagePair => self.flops += FLOPS_PER_FACTOR_MESSAGE,
            Event::Tx(bytes) => self.bytes_tx += bytes as u64,
            Event::Rx(bytes) => self.bytes_rx += bytes as u64,
        }
    }

    pub fn bytes(&self) -> u64 {
        self.bytes_tx + self.bytes_rx
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Free-function form of [`ResourceCounters::account`].
pub fn account(counters: &mut ResourceCounters, event: Event) {
    counters.account(event);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn costs() {
        let mut c = ResourceCounters::default();
        account(&mut c, Event::BeliefUpdate { factors: 3 });
        assert_eq!(c.flops, 9);
        account(&mut c, Event::FactorMessagePair);
        assert_eq!(c.flops, 22);
        account(&mut c, Event::Tx(16));
        account(&mut c, Event::Rx(60));
        assert_eq!((c.bytes_tx, c.bytes_rx, c.bytes()), (16, 60, 76));
        c.reset();
        assert_eq!(c, ResourceCounters::default());
    }
}
