//! Request/response exchange between two robots' graph fragments.
//!
//! The requester names the timesteps of its outward factors that point at
//! the responder. The responder returns the beliefs of those variables
//! followed by messages from its own outward factors that point back at the
//! requester. Everything else about the remote graph stays private.

use crate::accounting::Event;
use crate::swarm_graph::RobotGraph;
use crate::wire::codec::{WireError, WireItem, WireRequest, WireResponse};

impl RobotGraph {
    /// Request for the beliefs behind every outward factor linked to `target_id`.
    pub fn build_request(&self, target_id: u32) -> WireRequest {
        WireRequest {
            sender_id: self.robot_id(),
            target_id,
            entries: self
                .outward
                .keys()
                .filter(|&&(_, remote)| remote == target_id)
                .map(|&(ts, _)| ts)
                .collect(),
        }
    }

    /// Answers `req`. Requested timesteps that have left the window are
    /// omitted. Each outward factor toward the requester computes, damps and
    /// caches its message to the requester's variable.
    pub fn handle_request(&mut self, req: &WireRequest) -> Result<WireResponse, WireError> {
        if req.target_id != self.robot_id() {
            return Err(WireError::Misaddressed {
                target: req.target_id,
                robot: self.robot_id(),
            });
        }
        let beliefs = req
            .entries
            .iter()
            .filter_map(|&ts| self.belief(ts).map(|b| WireItem::new(ts, b)))
            .collect();

        let r_damp = self.params().r_damp;
        let mut messages = Vec::new();
        let keys: Vec<u32> = self
            .outward
            .keys()
            .filter(|&&(_, remote)| remote == req.sender_id)
            .map(|&(ts, _)| ts)
            .collect();
        for ts in keys {
            let local = self.belief(ts).expect("outward factors only reference live variables");
            let outward = self.outward.get_mut(&(ts, req.sender_id)).expect("key collected above");
            let msg = outward.factor.message_to(1, local);
            // Cache exactly what the requester will decode.
            let sent = outward.factor.deliver(1, msg, r_damp).to_wire_precision();
            outward.factor.set_last_sent(1, sent);
            self.counters.account(Event::FactorMessagePair);
            messages.push(WireItem::new(ts, sent));
        }

        Ok(WireResponse {
            sender_id: self.robot_id(),
            target_id: req.sender_id,
            beliefs,
            messages,
        })
    }

    /// Folds a response into the local graph. Remote beliefs drive the
    /// matching outward factors inward; remote factor messages replace the
    /// previous message from that robot on the named variable. Items naming
    /// variables that are no longer in the window are dropped.
    pub fn apply_response(&mut self, resp: &WireResponse) -> Result<(), WireError> {
        if resp.target_id != self.robot_id() {
            return Err(WireError::Misaddressed {
                target: resp.target_id,
                robot: self.robot_id(),
            });
        }
        let r_damp = self.params().r_damp;
        let remote = resp.sender_id;

        for item in &resp.beliefs {
            let Some(outward) = self.outward.get_mut(&(item.ts, remote)) else {
                continue;
            };
            let belief = item.gaussian();
            outward.remote_belief = Some(belief);
            let msg = outward.factor.message_to(0, belief);
            outward.factor.deliver(0, msg, r_damp);
            self.counters.account(Event::FactorMessagePair);
            if let Some(i) = self.index_of(item.ts) {
                self.update_belief(i);
            }
        }

        for item in &resp.messages {
            let Some(i) = self.index_of(item.ts) else {
                continue;
            };
            self.window[i].remote_in.insert(remote, item.gaussian());
            self.update_belief(i);
        }
        Ok(())
    }
}

/// Encoded bytes of one request/response round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeBytes {
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

/// Runs one full round trip through the byte encoding, charging each side
/// for what it transmits and receives.
pub fn exchange(requester: &mut RobotGraph, responder: &mut RobotGraph) -> Result<ExchangeBytes, WireError> {
    let request = requester.build_request(responder.robot_id()).encode();
    requester.counters_mut().account(Event::Tx(request.len()));
    responder.counters_mut().account(Event::Rx(request.len()));

    let response = responder.handle_request(&WireRequest::decode(&request)?)?.encode()?;
    responder.counters_mut().account(Event::Tx(response.len()));
    requester.counters_mut().account(Event::Rx(response.len()));

    requester.apply_response(&WireResponse::decode(&response)?)?;
    Ok(ExchangeBytes { request, response })
}
