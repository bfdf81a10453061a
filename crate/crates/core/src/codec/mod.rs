//! Update transfer pipeline: sparsify, quantize, compress, fragment, FEC.
//!
//! Wire layout of an encoded update:
//!
//! ```text
//! [u32 LE code-stream length][f32 LE scale][u8 bits][u8 flags][zlib stream]
//! ```
//!
//! Bit 0 of `flags` marks a differential update. Every fragment travels in a
//! frame with a 2-byte index header, so a frame carries `MTU - 2` data bytes.

mod fec;
mod quant;

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fec::{fragment, reassemble, FecRate, FragmentSet};
pub use quant::{dequantize, error_bound, levels, quantize, SUPPORTED_BITS};

use crate::phy::{mtu, SpreadingFactor};

pub const HEADER_BYTES: usize = 10;
pub const FRAGMENT_HEADER_BYTES: usize = 2;
const FLAG_DIFFERENTIAL: u8 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CodecError {
    #[error("unsupported quantization width {0} (expected 1, 2, 4 or 32)")]
    InvalidBits(u8),
    #[error("invalid FEC rate {0:?}; expected num/den with 0 < num <= den")]
    InvalidRate(String),
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot fragment an empty payload")]
    EmptyPayload,
    #[error("fragment size must be positive")]
    InvalidFragmentSize,
    #[error("update contains non-finite values")]
    NonFinite,
    #[error("only {received} of {required} required fragments received")]
    Undecodable { received: usize, required: usize },
    #[error("corrupt update: {0}")]
    Corrupt(String),
}

/// Pipeline settings shared by both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Magnitudes strictly below this are zeroed.
    pub sparsify_threshold: f32,
    pub quant_bits: u8,
    /// Clients send `local - global` instead of the full model.
    pub differential_uplink: bool,
    pub fec_rate: FecRate,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            sparsify_threshold: 0.001,
            quant_bits: 4,
            differential_uplink: true,
            fec_rate: FecRate::new(1, 2).expect("valid rate"),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sparsify_threshold >= 0.0) {
            return Err(format!("sparsify_threshold must be >= 0, got {}", self.sparsify_threshold));
        }
        quant::check_bits(self.quant_bits).map_err(|e| e.to_string())
    }
}

pub fn sparsify(v: &[f32], threshold: f32) -> Vec<f32> {
    v.iter().map(|&x| if x.abs() < threshold { 0.0 } else { x }).collect()
}

/// zlib container, default compression level.
pub fn compress(bytes: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn decompress(bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    ZlibDecoder::new(bytes).read_to_end(&mut out).map_err(|e| CodecError::Corrupt(e.to_string()))?;
    Ok(out)
}

pub fn diff_encode(local: &[f32], global: &[f32]) -> Result<Vec<f32>, CodecError> {
    check_len(local, global)?;
    Ok(local.iter().zip(global).map(|(l, g)| l - g).collect())
}

pub fn diff_apply(global: &[f32], diff: &[f32]) -> Result<Vec<f32>, CodecError> {
    check_len(global, diff)?;
    Ok(global.iter().zip(diff).map(|(g, d)| g + d).collect())
}

fn check_len(a: &[f32], b: &[f32]) -> Result<(), CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

/// Data bytes per frame at `sf`.
pub fn fragment_capacity(sf: SpreadingFactor) -> usize {
    mtu(sf) - FRAGMENT_HEADER_BYTES
}

/// A model or model difference ready for transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedUpdate {
    /// Complete wire bytes (header plus compressed codes).
    pub payload: Vec<u8>,
    pub quant_scale: f32,
    pub rate: FecRate,
    /// Source fragments, `fragment_capacity(sf)` bytes each.
    pub fragments: Vec<Vec<u8>>,
    pub is_differential: bool,
}

impl EncodedUpdate {
    /// U, the transmitted update size in bytes.
    pub fn byte_size(&self) -> usize {
        self.payload.len()
    }

    pub fn k(&self) -> usize {
        self.fragments.len()
    }

    pub fn n(&self) -> usize {
        self.rate.coded_count(self.k())
    }
}

/// Runs the pipeline on `v`, or on `v - reference` when a reference is given.
pub fn encode_update(
    v: &[f32],
    cfg: &CodecConfig,
    sf: SpreadingFactor,
    rate: FecRate,
    reference: Option<&[f32]>,
) -> Result<EncodedUpdate, CodecError> {
    let input = match reference {
        Some(g) => diff_encode(v, g)?,
        None => v.to_vec(),
    };
    let sparse = sparsify(&input, cfg.sparsify_threshold);
    let (codes, scale) = quantize(&sparse, cfg.quant_bits)?;
    let body = compress(&codes);
    let mut payload = Vec::with_capacity(HEADER_BYTES + body.len());
    let code_len = u32::try_from(codes.len()).map_err(|_| CodecError::Corrupt("update too large".into()))?;
    payload.extend_from_slice(&code_len.to_le_bytes());
    payload.extend_from_slice(&scale.to_le_bytes());
    payload.push(cfg.quant_bits);
    payload.push(if reference.is_some() { FLAG_DIFFERENTIAL } else { 0 });
    payload.extend_from_slice(&body);
    let fragments = fragment(&payload, fragment_capacity(sf))?;
    Ok(EncodedUpdate { payload, quant_scale: scale, rate, fragments, is_differential: reference.is_some() })
}

/// Parses wire bytes back into `len` parameters, adding `reference` for
/// differential updates.
pub fn decode_update(payload: &[u8], len: usize, reference: Option<&[f32]>) -> Result<Vec<f32>, CodecError> {
    if payload.len() < HEADER_BYTES {
        return Err(CodecError::Corrupt(format!("{} bytes is shorter than the header", payload.len())));
    }
    let code_len = u32::from_le_bytes(payload[0..4].try_into().expect("4 bytes")) as usize;
    let scale = f32::from_le_bytes(payload[4..8].try_into().expect("4 bytes"));
    let bits = payload[8];
    let differential = payload[9] & FLAG_DIFFERENTIAL != 0;
    let codes = decompress(&payload[HEADER_BYTES..])?;
    if codes.len() != code_len {
        return Err(CodecError::Corrupt(format!("code stream is {} bytes, header says {code_len}", codes.len())));
    }
    let values = dequantize(&codes, scale, bits, len)?;
    match (differential, reference) {
        (true, Some(g)) => diff_apply(g, &values),
        (false, None) => Ok(values),
        (true, None) => Err(CodecError::Corrupt("differential update without a reference model".into())),
        (false, Some(_)) => Err(CodecError::Corrupt("reference given for a full-model update".into())),
    }
}
