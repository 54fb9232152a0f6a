//! Byte layout of the inter-robot exchange. All fields are little-endian.
//!
//! Request:  `sender u32 | target u32 | entry_count u32 | entry_count × ts u32`
//! Response: `sender u32 | target u32 | belief_count u16 | message_count u16 |
//!            (belief_count + message_count) × item`
//! Item:     `ts u32 | eta_x f32 | eta_y f32 | lambda f32`
//!
//! Both headers are 12 bytes. Belief items precede factor-message items.

use crate::gbp::GaussianCanonical;
use crate::Vec2;

pub const HEADER_BYTES: usize = 12;
pub const ENTRY_BYTES: usize = 4;
pub const ITEM_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message truncated: {len} bytes is shorter than the 12-byte header")]
    Truncated { len: usize },
    #[error("length mismatch: header implies {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("too many items for one response: {0}")]
    TooManyItems(usize),
    #[error("message addressed to robot {target}, not {robot}")]
    Misaddressed { target: u32, robot: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub sender_id: u32,
    pub target_id: u32,
    /// Timesteps of the sender's outward factors that connect to the target.
    pub entries: Vec<u32>,
}

/// One tagged Gaussian on the wire, at 32-bit precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireItem {
    pub ts: u32,
    pub eta_x: f32,
    pub eta_y: f32,
    pub lambda: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireResponse {
    pub sender_id: u32,
    pub target_id: u32,
    /// Beliefs of the responder's variables, in request order.
    pub beliefs: Vec<WireItem>,
    /// Messages from the responder's outward factors to the requester's
    /// variables, ascending timestep.
    pub messages: Vec<WireItem>,
}

impl WireItem {
    pub fn new(ts: u32, g: GaussianCanonical) -> Self {
        Self {
            ts,
            eta_x: g.eta.x as f32,
            eta_y: g.eta.y as f32,
            lambda: g.lambda as f32,
        }
    }

    pub fn gaussian(&self) -> GaussianCanonical {
        GaussianCanonical::new(
            Vec2::new(f64::from(self.eta_x), f64::from(self.eta_y)),
            f64::from(self.lambda),
        )
    }
}

pub fn request_len(entries: usize) -> usize {
    HEADER_BYTES + ENTRY_BYTES * entries
}

pub fn response_len(items: usize) -> usize {
    HEADER_BYTES + ITEM_BYTES * items
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().expect("4-byte slice"))
}

fn f32_at(buf: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(buf[at..at + 4].try_into().expect("4-byte slice"))
}

impl WireRequest {
    pub fn encoded_len(&self) -> usize {
        request_len(self.entries.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.target_id.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for ts in &self.entries {
            out.extend_from_slice(&ts.to_le_bytes());
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < HEADER_BYTES {
            return Err(WireError::Truncated { len: buf.len() });
        }
        let count = u32_at(buf, 8) as usize;
        let expected = request_len(count);
        if buf.len() != expected {
            return Err(WireError::LengthMismatch {
                expected,
                actual: buf.len(),
            });
        }
        Ok(Self {
            sender_id: u32_at(buf, 0),
            target_id: u32_at(buf, 4),
            entries: (0..count).map(|i| u32_at(buf, HEADER_BYTES + 4 * i)).collect(),
        })
    }
}

impl WireResponse {
    pub fn item_count(&self) -> usize {
        self.beliefs.len() + self.messages.len()
    }

    pub fn encoded_len(&self) -> usize {
        response_len(self.item_count())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let beliefs = u16::try_from(self.beliefs.len()).map_err(|_| WireError::TooManyItems(self.beliefs.len()))?;
        let messages =
            u16::try_from(self.messages.len()).map_err(|_| WireError::TooManyItems(self.messages.len()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.target_id.to_le_bytes());
        out.extend_from_slice(&beliefs.to_le_bytes());
        out.extend_from_slice(&messages.to_le_bytes());
        for item in self.beliefs.iter().chain(&self.messages) {
            out.extend_from_slice(&item.ts.to_le_bytes());
            out.extend_from_slice(&item.eta_x.to_le_bytes());
            out.extend_from_slice(&item.eta_y.to_le_bytes());
            out.extend_from_slice(&item.lambda.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < HEADER_BYTES {
            return Err(WireError::Truncated { len: buf.len() });
        }
        let beliefs = u16::from_le_bytes([buf[8], buf[9]]) as usize;
        let messages = u16::from_le_bytes([buf[10], buf[11]]) as usize;
        let expected = response_len(beliefs + messages);
        if buf.len() != expected {
            return Err(WireError::LengthMismatch {
                expected,
                actual: buf.len(),
            });
        }
        let item = |i: usize| {
            let at = HEADER_BYTES + ITEM_BYTES * i;
            WireItem {
                ts: u32_at(buf, at),
                eta_x: f32_at(buf, at + 4),
                eta_y: f32_at(buf, at + 8),
                lambda: f32_at(buf, at + 12),
            }
        };
        Ok(Self {
            sender_id: u32_at(buf, 0),
            target_id: u32_at(buf, 4),
            beliefs: (0..beliefs).map(item).collect(),
            messages: (beliefs..beliefs + messages).map(item).collect(),
        })
    }
}
