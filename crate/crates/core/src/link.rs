//! The frame-delivery interface the round engine talks to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkmodel::LinkModelError;
use crate::phy::SpreadingFactor;
use crate::rng::SimRng;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("analytical link model failed: {0}")]
    Model(#[from] LinkModelError),
}

/// A device in the star topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Server,
    Client(usize),
}

impl NodeId {
    pub fn key(self) -> u64 {
        match self {
            NodeId::Server => 0,
            NodeId::Client(i) => i as u64 + 1,
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NodeId::Server => s.serialize_str("server"),
            NodeId::Client(i) => s.serialize_str(&format!("client{i}")),
        }
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "server" {
            return Ok(NodeId::Server);
        }
        s.strip_prefix("client")
            .and_then(|i| i.parse().ok())
            .map(NodeId::Client)
            .ok_or_else(|| serde::de::Error::custom(format!("bad node id {s:?}")))
    }
}

/// One frame as seen by a particular receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTx {
    pub sf: SpreadingFactor,
    pub channel: usize,
    pub start: f64,
    pub airtime: f64,
    /// Sender-to-receiver distance in meters.
    pub distance: f64,
}

impl FrameTx {
    pub fn end(&self) -> f64 {
        self.start + self.airtime
    }
}

/// Decides per-frame reception at one receiver.
pub trait LinkLayer {
    /// Returns one flag per input frame, in input order. Frames may come in any
    /// order, but across calls for the same receiver their start times must not
    /// move backwards.
    fn receive(&mut self, receiver: NodeId, frames: &[FrameTx], rng: &mut SimRng) -> Result<Vec<bool>, LinkError>;
}

/// Every frame arrives.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealLink;

impl LinkLayer for IdealLink {
    fn receive(&mut self, _receiver: NodeId, frames: &[FrameTx], _rng: &mut SimRng) -> Result<Vec<bool>, LinkError> {
        Ok(vec![true; frames.len()])
    }
}
