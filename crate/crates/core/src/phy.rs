//! LoRa physical-layer tables and link-budget math (EU868, 125 kHz).

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("spreading factor {0} outside 7..=12")]
    InvalidSpreadingFactor(u8),
    #[error("frames always carry a payload; got 0 bytes")]
    EmptyPayload,
    #[error("payload of {payload} bytes exceeds the SF{sf} MTU of {mtu} bytes; fragment first")]
    FragmentationRequired { sf: u8, payload: usize, mtu: usize },
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("fading coefficient must be positive, got {0}")]
    NonPositiveFading(f64),
}

/// LoRa spreading factor, always within 7..=12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub const MIN: u8 = 7;
    pub const MAX: u8 = 12;

    pub fn new(value: u8) -> Result<Self, PhyError> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Self(value))
        } else {
            Err(PhyError::InvalidSpreadingFactor(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based position in SF-indexed tables (SF7 -> 0).
    pub fn index(self) -> usize {
        (self.0 - Self::MIN) as usize
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < 6, "SF table index {index} out of range");
        Self(Self::MIN + index as u8)
    }

    pub fn all() -> impl Iterator<Item = SpreadingFactor> {
        (Self::MIN..=Self::MAX).map(SpreadingFactor)
    }
}

impl TryFrom<u8> for SpreadingFactor {
    type Error = PhyError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SpreadingFactor> for u8 {
    fn from(sf: SpreadingFactor) -> u8 {
        sf.0
    }
}

impl fmt::Display for SpreadingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{}", self.0)
    }
}

const MTU_BYTES: [usize; 6] = [222, 222, 115, 51, 51, 51];

/// Maximum frame payload for the SF at 125 kHz in the EU868 band.
pub fn mtu(sf: SpreadingFactor) -> usize {
    MTU_BYTES[sf.index()]
}

/// Radio and propagation parameters shared by every device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    /// CR in the 4/(4+CR) coding rate, 1..=4.
    pub coding_rate: u8,
    pub preamble_symbols: u32,
    pub explicit_header: bool,
    /// Low-data-rate optimization flag per SF7..SF12.
    pub low_data_rate_optimize: [bool; 6],
    pub tx_power_dbm: f64,
    /// Coefficient multiplying `log10(d / d_ref)`. With the default
    /// (non-conventional) form this already includes the factor 10, so 40
    /// corresponds to a power-law exponent of 4.
    pub path_loss_exponent: f64,
    pub ref_loss_db: f64,
    pub ref_distance_m: f64,
    pub antenna_gain_db: f64,
    pub channels: usize,
    /// Use `10 * alpha * log10(d / d_ref)` instead of `alpha * log10(d / d_ref)`.
    pub conventional_path_loss: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 125_000.0,
            coding_rate: 1,
            preamble_symbols: 8,
            explicit_header: true,
            low_data_rate_optimize: [false, false, false, false, true, true],
            tx_power_dbm: 14.0,
            path_loss_exponent: 40.0,
            // free-space loss at 1 m for 868 MHz
            ref_loss_db: 31.2,
            ref_distance_m: 1.0,
            antenna_gain_db: 0.0,
            channels: 8,
            conventional_path_loss: false,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(format!("bandwidth_hz must be > 0, got {}", self.bandwidth_hz));
        }
        if !(1..=4).contains(&self.coding_rate) {
            return Err(format!("coding_rate must be in 1..=4, got {}", self.coding_rate));
        }
        if self.channels == 0 {
            return Err("channels must be >= 1".into());
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(format!(
                "path_loss_exponent must be > 0, got {}",
                self.path_loss_exponent
            ));
        }
        if !(self.ref_distance_m > 0.0) {
            return Err(format!("ref_distance_m must be > 0, got {}", self.ref_distance_m));
        }
        if !self.tx_power_dbm.is_finite() || !self.ref_loss_db.is_finite() || !self.antenna_gain_db.is_finite() {
            return Err("power and loss terms must be finite".into());
        }
        Ok(())
    }

    /// Exponent of the equivalent power law `P_r ∝ d^-exponent`.
    pub fn power_law_exponent(&self) -> f64 {
        if self.conventional_path_loss {
            self.path_loss_exponent
        } else {
            self.path_loss_exponent / 10.0
        }
    }

    fn distance_loss_db(&self, d: f64) -> f64 {
        let scale = if self.conventional_path_loss {
            10.0 * self.path_loss_exponent
        } else {
            self.path_loss_exponent
        };
        scale * (d / self.ref_distance_m).log10()
    }

    /// Linear gain `g` such that mean received power (mW) is `g * p_t * d^-exponent`.
    pub fn linear_gain_constant(&self) -> f64 {
        db_to_linear(self.antenna_gain_db - self.ref_loss_db)
            * self.ref_distance_m.powf(self.power_law_exponent())
    }
}

/// Time on air of one frame, in seconds.
pub fn airtime(sf: SpreadingFactor, payload: usize, cfg: &RadioConfig) -> Result<f64, PhyError> {
    if payload == 0 {
        return Err(PhyError::EmptyPayload);
    }
    let limit = mtu(sf);
    if payload > limit {
        return Err(PhyError::FragmentationRequired { sf: sf.value(), payload, mtu: limit });
    }
    Ok(symbol_airtime(sf, payload, cfg))
}

fn symbol_airtime(sf: SpreadingFactor, payload: usize, cfg: &RadioConfig) -> f64 {
    let s = sf.value() as i64;
    let t_sym = (1u64 << s) as f64 / cfg.bandwidth_hz;
    let preamble = (cfg.preamble_symbols as f64 + 4.25) * t_sym;
    let h = if cfg.explicit_header { 0 } else { 1 };
    let de = cfg.low_data_rate_optimize[sf.index()] as i64;
    let num = 8 * payload as i64 - 4 * s + 28 + 16 - 20 * h;
    let den = 4 * (s - 2 * de);
    let blocks = (num + den - 1).div_euclid(den).max(0);
    let payload_symbols = 8 + blocks * (cfg.coding_rate as i64 + 4);
    preamble + payload_symbols as f64 * t_sym
}

/// Received power in dBm for transmit power `tx_dbm`, distance `d` and power
/// fading coefficient `fading`.
pub fn received_power(tx_dbm: f64, d: f64, fading: f64, cfg: &RadioConfig) -> Result<f64, PhyError> {
    if !(d > 0.0) {
        return Err(PhyError::NonPositiveDistance(d));
    }
    if !(fading > 0.0) {
        return Err(PhyError::NonPositiveFading(fading));
    }
    Ok(tx_dbm - cfg.ref_loss_db + cfg.antenna_gain_db - cfg.distance_loss_db(d) + 10.0 * fading.log10())
}

/// Draws a Rayleigh power-fading coefficient, `A ~ Exp(1)`.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let a: f64 = Exp1.sample(rng);
        if a > 0.0 {
            return a;
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Receiver sensitivities and pairwise capture thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfTables {
    /// Sensitivity in dBm for SF7..SF12.
    pub sensitivity_dbm: [f64; 6],
    /// Required SIR in dB; row = signal SF, column = interferer SF.
    pub capture_db: [[f64; 6]; 6],
}

impl Default for SfTables {
    fn default() -> Self {
        Self {
            // typical 125 kHz datasheet values
            sensitivity_dbm: [-123.0, -126.0, -129.0, -132.0, -134.5, -137.0],
            // 6 dB co-SF rejection, inter-SF thresholds from published
            // LoRa imperfect-orthogonality measurements
            capture_db: [
                [6.0, -8.0, -9.0, -9.0, -9.0, -9.0],
                [-11.0, 6.0, -11.0, -12.0, -13.0, -13.0],
                [-15.0, -13.0, 6.0, -13.0, -14.0, -15.0],
                [-19.0, -18.0, -17.0, 6.0, -17.0, -18.0],
                [-22.0, -22.0, -21.0, -20.0, 6.0, -20.0],
                [-25.0, -25.0, -25.0, -24.0, -23.0, 6.0],
            ],
        }
    }
}

impl SfTables {
    pub fn validate(&self) -> Result<(), String> {
        if self.sensitivity_dbm.iter().any(|s| !s.is_finite()) {
            return Err("sensitivity_dbm entries must be finite".into());
        }
        if self.sensitivity_dbm.windows(2).any(|w| w[1] >= w[0]) {
            return Err("sensitivity_dbm must strictly decrease with SF".into());
        }
        if self.capture_db.iter().flatten().any(|x| !x.is_finite()) {
            return Err("capture_db entries must be finite".into());
        }
        Ok(())
    }

    pub fn sensitivity(&self, sf: SpreadingFactor) -> f64 {
        self.sensitivity_dbm[sf.index()]
    }

    pub fn capture_threshold(&self, signal: SpreadingFactor, interferer: SpreadingFactor) -> f64 {
        self.capture_db[signal.index()][interferer.index()]
    }

    pub fn above_sensitivity(&self, p_r: f64, sf: SpreadingFactor) -> bool {
        p_r >= self.sensitivity(sf)
    }

    pub fn capture_ok(&self, p_sig: f64, p_int: f64, sf_sig: SpreadingFactor, sf_int: SpreadingFactor) -> bool {
        p_sig - p_int >= self.capture_threshold(sf_sig, sf_int)
    }
}
