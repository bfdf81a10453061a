//! Discrete-event simulator for federated learning over LoRa star networks.
//!
//! The crate models LoRa frame airtime and reception ([`phy`]), an
//! event-driven interference simulation ([`linksim`]) and its analytical
//! counterpart ([`linkmodel`]), the update codec ([`codec`]), federated
//! averaging on a small MLP ([`fl`]), the round scheduler
//! ([`orchestrator`]) and batch scenario execution ([`scenario`]).

pub mod codec;
pub mod exec;
pub mod fl;
pub mod link;
pub mod linkmodel;
pub mod linksim;
pub mod orchestrator;
pub mod phy;
pub mod rng;
pub mod scenario;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Phy(#[from] phy::PhyError),
    #[error(transparent)]
    Link(#[from] link::LinkError),
    #[error(transparent)]
    LinkModel(#[from] linkmodel::LinkModelError),
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
    #[error(transparent)]
    Fl(#[from] fl::FlError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    pub fn context(self, context: &str) -> Self {
        Error::Context { context: context.to_string(), source: Box::new(self) }
    }
}
