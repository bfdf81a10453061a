//! Semi-analytical link model.
//!
//! The per-frame success probability under Rayleigh fading and a Poisson field
//! of ALOHA interferers is computed by one-dimensional quadrature over the
//! signal fading gain `a`:
//!
//! ```text
//! S(d) = ∫_{a0}^∞ (1 − Σ_j c_j β_j^{−2/α} γ(2/α, β_j R^α))^n̄ e^{−a} da
//! c_j  = 2 λ_f (l + l̄_j) η_j / (α R² n_f),  β_j = a d^{−α} / ξ_j,  a0 = ζ d^α / (γ0 p_t)
//! ```
//!
//! and every frame is then an independent Bernoulli draw.

mod gamma;
mod quadrature;

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

pub use gamma::{ln_gamma, lower_incomplete_gamma, lower_incomplete_gamma_scaled};
pub use quadrature::integrate;

use crate::link::{FrameTx, LinkError, LinkLayer, NodeId};
use crate::linksim::LinkEnv;
use crate::phy::{self, mtu, SpreadingFactor};
use crate::rng::SimRng;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinkModelError {
    #[error("numerical domain error: {0}")]
    Domain(String),
    #[error("numerical integration did not converge: {0}")]
    NonConvergent(String),
    #[error("invalid analytical parameters: {0}")]
    InvalidParams(String),
}

const REL_TOL: f64 = 1e-10;
const ABS_TOL: f64 = 1e-15;
const MAX_SEGMENTS: usize = 500;
/// Truncation point of the shifted integral: e^{-U} = 1e-12.
const TRUNCATION: f64 = 12.0 * std::f64::consts::LN_10;

/// Inputs of the analytical model, all in SI units and linear powers.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticalParams {
    /// Interferer density (devices per m²).
    pub intensity_per_m2: f64,
    /// Per-interferer frame rate (frames per second).
    pub frame_rate_per_s: f64,
    pub radius_m: f64,
    pub channels: usize,
    /// Probability that an interfering frame uses SF7..SF12.
    pub sf_weights: [f64; 6],
    /// Interfering frame airtime per SF (s).
    pub interferer_airtime: [f64; 6],
    /// Own MTU-sized frame airtime per SF (s), used when no airtime is given.
    pub own_airtime: [f64; 6],
    /// Sensitivity per SF (mW).
    pub sensitivity_mw: [f64; 6],
    /// Linear mean gain at 1 m, such that mean power = γ0 p_t d^{−α}.
    pub gain_constant: f64,
    pub tx_power_mw: f64,
    /// Power-law path-loss exponent.
    pub alpha: f64,
    /// Capture ratios (linear), `[signal][interferer]`.
    pub capture_ratio: [[f64; 6]; 6],
}

impl AnalyticalParams {
    /// Derives parameters consistent with the simulated link budget.
    pub fn from_env(env: &LinkEnv) -> Self {
        let radio = &env.radio;
        let mut own_airtime = [0.0; 6];
        let mut interferer_airtime = [0.0; 6];
        let mut sensitivity_mw = [0.0; 6];
        let mut capture_ratio = [[0.0; 6]; 6];
        for sf in SpreadingFactor::all() {
            let i = sf.index();
            own_airtime[i] = phy::airtime(sf, mtu(sf), radio).expect("MTU payload is valid");
            interferer_airtime[i] = env.interferer_airtime(sf);
            sensitivity_mw[i] = phy::db_to_linear(env.tables.sensitivity(sf));
            for j in SpreadingFactor::all() {
                capture_ratio[i][j.index()] = phy::db_to_linear(env.tables.capture_threshold(sf, j));
            }
        }
        Self {
            intensity_per_m2: env.interference.intensity_per_m2,
            frame_rate_per_s: env.interference.frames_per_hour / 3600.0,
            radius_m: env.interference.radius_m,
            channels: radio.channels,
            sf_weights: env.interference.sf_weights,
            interferer_airtime,
            own_airtime,
            sensitivity_mw,
            gain_constant: radio.linear_gain_constant(),
            tx_power_mw: phy::db_to_linear(radio.tx_power_dbm),
            alpha: radio.power_law_exponent(),
            capture_ratio,
        }
    }

    pub fn validate(&self) -> Result<(), LinkModelError> {
        let bad = |m: String| Err(LinkModelError::InvalidParams(m));
        if !(self.intensity_per_m2 >= 0.0) || !self.intensity_per_m2.is_finite() {
            return bad(format!("intensity must be >= 0, got {}", self.intensity_per_m2));
        }
        if !(self.frame_rate_per_s >= 0.0) || !self.frame_rate_per_s.is_finite() {
            return bad(format!("frame rate must be >= 0, got {}", self.frame_rate_per_s));
        }
        if !(self.radius_m > 0.0) || self.channels == 0 || !(self.alpha > 0.0) {
            return bad("radius, channel count and path-loss exponent must be positive".into());
        }
        if self.sf_weights.iter().any(|w| !(*w >= 0.0)) || (self.sf_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("SF weights must be non-negative and sum to 1".into());
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.interferer_airtime) || !positive(&self.own_airtime) {
            return bad("all durations must be positive".into());
        }
        if !positive(&self.sensitivity_mw)
            || !positive(&[self.gain_constant, self.tx_power_mw])
            || !self.capture_ratio.iter().all(|r| positive(r))
        {
            return bad("powers, gains and capture ratios must be positive".into());
        }
        Ok(())
    }

    /// Mean number of interferers, n̄ = λ_I π R².
    pub fn mean_interferers(&self) -> f64 {
        self.intensity_per_m2 * std::f64::consts::PI * self.radius_m * self.radius_m
    }

    /// Lower integration limit: the fading gain at which the mean-power
    /// signal sits exactly at the sensitivity.
    pub fn fading_threshold(&self, sf: SpreadingFactor, d: f64) -> f64 {
        self.sensitivity_mw[sf.index()] * d.powf(self.alpha) / (self.gain_constant * self.tx_power_mw)
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the bit patterns of every field
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.intensity_per_m2.to_bits());
        eat(self.frame_rate_per_s.to_bits());
        eat(self.radius_m.to_bits());
        eat(self.channels as u64);
        for i in 0..6 {
            eat(self.sf_weights[i].to_bits());
            eat(self.interferer_airtime[i].to_bits());
            eat(self.own_airtime[i].to_bits());
            eat(self.sensitivity_mw[i].to_bits());
            for j in 0..6 {
                eat(self.capture_ratio[i][j].to_bits());
            }
        }
        eat(self.gain_constant.to_bits());
        eat(self.tx_power_mw.to_bits());
        eat(self.alpha.to_bits());
        h
    }
}

/// Success probability of a frame of `airtime` seconds at distance `d`.
pub fn success_probability_with_airtime(
    sf: SpreadingFactor,
    d: f64,
    airtime: f64,
    params: &AnalyticalParams,
) -> Result<f64, LinkModelError> {
    params.validate()?;
    if !(d > 0.0) || !d.is_finite() {
        return Err(LinkModelError::Domain(format!("distance must be positive, got {d}")));
    }
    if !(airtime > 0.0) || !airtime.is_finite() {
        return Err(LinkModelError::Domain(format!("airtime must be positive, got {airtime}")));
    }
    let a0 = params.fading_threshold(sf, d);
    if !a0.is_finite() {
        return Err(LinkModelError::Domain(format!("fading threshold overflowed at d={d}")));
    }
    let n_bar = params.mean_interferers();
    let s = 2.0 / params.alpha;
    let i = sf.index();
    let d_alpha = d.powf(params.alpha);
    let r_alpha = params.radius_m.powf(params.alpha);
    let mut coeff = [0.0; 6];
    let mut x_per_a = [0.0; 6];
    for j in 0..6 {
        coeff[j] = 2.0 * params.frame_rate_per_s * (airtime + params.interferer_airtime[j]) * params.sf_weights[j]
            / (params.alpha * params.channels as f64);
        x_per_a[j] = r_alpha / (d_alpha * params.capture_ratio[i][j]);
    }

    let mut failure: Option<LinkModelError> = None;
    let mut bracket = |a: f64| -> f64 {
        if n_bar == 0.0 {
            return 1.0;
        }
        let mut interference = 0.0;
        for j in 0..6 {
            if coeff[j] == 0.0 {
                continue;
            }
            match lower_incomplete_gamma_scaled(s, a * x_per_a[j]) {
                Ok(g) => interference += coeff[j] * g,
                Err(e) => {
                    failure.get_or_insert(e);
                    return f64::NAN;
                }
            }
        }
        (1.0 - interference).clamp(0.0, 1.0).powf(n_bar)
    };

    let body = integrate(|u| bracket(a0 + u) * (-u).exp(), 0.0, TRUNCATION, REL_TOL, ABS_TOL, MAX_SEGMENTS);
    let tail = (-TRUNCATION).exp() * bracket(a0 + TRUNCATION);
    if let Some(e) = failure {
        return Err(e);
    }
    let p = (-a0).exp() * (body? + tail);
    if !p.is_finite() {
        return Err(LinkModelError::NonConvergent(format!("non-finite probability at {sf}, d={d}")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Success probability of an MTU-sized frame.
pub fn success_probability(sf: SpreadingFactor, d: f64, params: &AnalyticalParams) -> Result<f64, LinkModelError> {
    success_probability_with_airtime(sf, d, params.own_airtime[sf.index()], params)
}

/// True iff `R ≤ p` for `R` uniform on (0, 1].
pub fn bernoulli_outcome<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    let r = 1.0 - rng.random::<f64>();
    r <= p
}

/// Distance quantum for cache keys (m).
pub const DISTANCE_QUANTUM_M: f64 = 0.01;

/// Memoizes success probabilities by (SF, quantized distance, airtime).
#[derive(Debug, Clone)]
pub struct ProbabilityCache {
    params: AnalyticalParams,
    fingerprint: u64,
    enabled: bool,
    table: HashMap<(u8, u64, u64, u64), f64>,
    evaluations: usize,
}

impl ProbabilityCache {
    pub fn new(params: AnalyticalParams) -> Result<Self, LinkModelError> {
        params.validate()?;
        let fingerprint = params.fingerprint();
        Ok(Self { params, fingerprint, enabled: true, table: HashMap::new(), evaluations: 0 })
    }

    /// Same lookups, but every query integrates afresh.
    pub fn uncached(params: AnalyticalParams) -> Result<Self, LinkModelError> {
        Ok(Self { enabled: false, ..Self::new(params)? })
    }

    pub fn params(&self) -> &AnalyticalParams {
        &self.params
    }

    /// Number of integrations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn quantize(d: f64) -> f64 {
        ((d / DISTANCE_QUANTUM_M).round().max(1.0)) * DISTANCE_QUANTUM_M
    }

    pub fn probability(&mut self, sf: SpreadingFactor, d: f64, airtime: f64) -> Result<f64, LinkModelError> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinkModelError::Domain(format!("distance must be positive, got {d}")));
        }
        let dq = Self::quantize(d);
        let key = (sf.value(), (dq / DISTANCE_QUANTUM_M) as u64, airtime.to_bits(), self.fingerprint);
        if self.enabled {
            if let Some(&p) = self.table.get(&key) {
                return Ok(p);
            }
        }
        let p = success_probability_with_airtime(sf, dq, airtime, &self.params)?;
        self.evaluations += 1;
        if self.enabled {
            self.table.insert(key, p);
        }
        Ok(p)
    }
}

/// Link layer that replaces simulation with per-frame Bernoulli draws.
#[derive(Debug, Clone)]
pub struct AnalyticalLink {
    cache: ProbabilityCache,
}

impl AnalyticalLink {
    pub fn new(env: &LinkEnv) -> Result<Self, LinkModelError> {
        Ok(Self { cache: ProbabilityCache::new(AnalyticalParams::from_env(env))? })
    }

    pub fn cache(&self) -> &ProbabilityCache {
        &self.cache
    }
}

impl LinkLayer for AnalyticalLink {
    fn receive(&mut self, _receiver: NodeId, frames: &[FrameTx], rng: &mut SimRng) -> Result<Vec<bool>, LinkError> {
        frames
            .iter()
            .map(|f| {
                let p = self.cache.probability(f.sf, f.distance, f.airtime)?;
                Ok(bernoulli_outcome(p, rng))
            })
            .collect()
    }
}
