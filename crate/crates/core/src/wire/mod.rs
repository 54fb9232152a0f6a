//! Inter-robot message encoding and the request/response exchange.

pub mod codec;
mod exchange;

pub use codec::{WireError, WireItem, WireRequest, WireResponse};
pub use exchange::{exchange, ExchangeBytes};
