//! Event-driven link-level simulation.
//!
//! Each receiver is surrounded by its own Poisson field of interferers within
//! `radius_m`. Every interferer emits frames as a Poisson process; frames pick
//! an SF by `sf_weights`, a channel uniformly, and get an independent fading
//! draw. A signal frame survives when its received power clears the
//! sensitivity and it captures against every co-channel frame that overlaps it
//! in time.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::link::{FrameTx, LinkError, LinkLayer, NodeId};
use crate::phy::{self, mtu, RadioConfig, SfTables, SpreadingFactor};
use crate::rng::{self, SimRng, Stream};

/// Background LoRa traffic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferenceConfig {
    /// PPP intensity in devices per square meter.
    pub intensity_per_m2: f64,
    pub frames_per_hour: f64,
    /// Distance beyond which interferers are ignored.
    pub radius_m: f64,
    /// Probability of each SF7..SF12 for an interfering frame.
    pub sf_weights: [f64; 6],
    /// Interferer payload per SF; defaults to the SF's MTU.
    pub payload_bytes: Option<[usize; 6]>,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        Self {
            intensity_per_m2: 1e-5,
            frames_per_hour: 10.0,
            radius_m: 2000.0,
            sf_weights: [1.0 / 6.0; 6],
            payload_bytes: None,
        }
    }
}

impl InterferenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.intensity_per_m2 >= 0.0) || !self.intensity_per_m2.is_finite() {
            return Err(format!("intensity_per_m2 must be >= 0, got {}", self.intensity_per_m2));
        }
        if !(self.frames_per_hour >= 0.0) || !self.frames_per_hour.is_finite() {
            return Err(format!("frames_per_hour must be >= 0, got {}", self.frames_per_hour));
        }
        if !(self.radius_m > 0.0) {
            return Err(format!("radius_m must be > 0, got {}", self.radius_m));
        }
        if self.sf_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err("sf_weights must be non-negative".into());
        }
        let total: f64 = self.sf_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("sf_weights must sum to 1, got {total}"));
        }
        if let Some(p) = self.payload_bytes {
            for (i, &b) in p.iter().enumerate() {
                let sf = SpreadingFactor::from_index(i);
                if b == 0 || b > mtu(sf) {
                    return Err(format!("payload_bytes for {sf} must be in 1..={}", mtu(sf)));
                }
            }
        }
        Ok(())
    }

    pub fn payload(&self, sf: SpreadingFactor) -> usize {
        self.payload_bytes.map(|p| p[sf.index()]).unwrap_or_else(|| mtu(sf))
    }

    /// Mean number of interferers around a receiver.
    pub fn mean_count(&self) -> f64 {
        self.intensity_per_m2 * PI * self.radius_m * self.radius_m
    }
}

/// Everything a receiver needs to evaluate frames.
#[derive(Debug, Clone)]
pub struct LinkEnv {
    pub radio: RadioConfig,
    pub tables: SfTables,
    pub interference: InterferenceConfig,
    interferer_airtime: [f64; 6],
    max_interferer_airtime: f64,
    sf_cdf: [f64; 6],
}

impl LinkEnv {
    pub fn new(radio: RadioConfig, tables: SfTables, interference: InterferenceConfig) -> Result<Self, String> {
        radio.validate()?;
        tables.validate()?;
        interference.validate()?;
        let mut interferer_airtime = [0.0; 6];
        for sf in SpreadingFactor::all() {
            interferer_airtime[sf.index()] =
                phy::airtime(sf, interference.payload(sf), &radio).map_err(|e| e.to_string())?;
        }
        let max_interferer_airtime = interferer_airtime.iter().cloned().fold(0.0, f64::max);
        let mut sf_cdf = [0.0; 6];
        let mut acc = 0.0;
        for (i, w) in interference.sf_weights.iter().enumerate() {
            acc += w;
            sf_cdf[i] = acc;
        }
        Ok(Self { radio, tables, interference, interferer_airtime, max_interferer_airtime, sf_cdf })
    }

    pub fn interferer_airtime(&self, sf: SpreadingFactor) -> f64 {
        self.interferer_airtime[sf.index()]
    }

    fn draw_sf<R: Rng + ?Sized>(&self, rng: &mut R) -> SpreadingFactor {
        let u: f64 = rng.random();
        let idx = self.sf_cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
            // rounding left the last bucket short; take the last non-empty one
            self.interference.sf_weights.iter().rposition(|&w| w > 0.0).unwrap_or(5)
        });
        SpreadingFactor::from_index(idx)
    }
}

/// A background transmitter placed around a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferer {
    pub radius_m: f64,
    pub angle: f64,
    pub frame_rate_per_hour: f64,
    pub next_tx_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererFrame {
    pub sf: SpreadingFactor,
    pub channel: usize,
    pub start: f64,
    pub duration: f64,
    pub rx_power_dbm: f64,
}

impl InterfererFrame {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start < end && self.end() > start
    }
}

/// Channel state seen by one signal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRealization {
    pub fading: f64,
    pub overlapping: Vec<InterfererFrame>,
}

fn exp_gap<R: Rng + ?Sized>(rate_per_hour: f64, rng: &mut R) -> f64 {
    if rate_per_hour > 0.0 {
        let e: f64 = Exp1.sample(rng);
        e * 3600.0 / rate_per_hour
    } else {
        f64::INFINITY
    }
}

/// Places a Poisson number of interferers uniformly on a disk of `radius_m`.
pub fn spawn_interferers<R: Rng + ?Sized>(
    intensity_per_m2: f64,
    radius_m: f64,
    frames_per_hour: f64,
    rng: &mut R,
) -> Vec<Interferer> {
    let mean = intensity_per_m2 * PI * radius_m * radius_m;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let count: f64 = Poisson::new(mean).expect("positive Poisson mean").sample(rng);
    (0..count as usize)
        .map(|_| {
            // 1 - u lies in (0, 1], so the radius is never zero
            let u: f64 = rng.random();
            let radius = radius_m * (1.0 - u).sqrt();
            let angle = 2.0 * PI * rng.random::<f64>();
            Interferer {
                radius_m: radius,
                angle,
                frame_rate_per_hour: frames_per_hour,
                next_tx_time: exp_gap(frames_per_hour, rng),
            }
        })
        .collect()
}

/// Emits the interferer's pending frame and schedules its next one.
/// Returns `None` for a silent interferer.
pub fn next_interferer_frame<R: Rng + ?Sized>(
    interferer: &mut Interferer,
    env: &LinkEnv,
    rng: &mut R,
) -> Option<InterfererFrame> {
    if !(interferer.frame_rate_per_hour > 0.0) || !interferer.next_tx_time.is_finite() {
        return None;
    }
    let start = interferer.next_tx_time;
    interferer.next_tx_time = start + exp_gap(interferer.frame_rate_per_hour, rng);
    let sf = env.draw_sf(rng);
    let channel = rng.random_range(0..env.radio.channels);
    let fading = phy::sample_fading(rng);
    let rx_power_dbm = phy::received_power(env.radio.tx_power_dbm, interferer.radius_m, fading, &env.radio)
        .expect("interferer radius and fading are positive");
    Some(InterfererFrame { sf, channel, start, duration: env.interferer_airtime(sf), rx_power_dbm })
}

/// Reception decision for one frame given its channel realization.
pub fn frame_outcome(frame: &FrameTx, realization: &LinkRealization, env: &LinkEnv) -> bool {
    let p_sig = match phy::received_power(env.radio.tx_power_dbm, frame.distance, realization.fading, &env.radio) {
        Ok(p) => p,
        Err(_) => return false,
    };
    if !env.tables.above_sensitivity(p_sig, frame.sf) {
        return false;
    }
    realization
        .overlapping
        .iter()
        .filter(|f| f.channel == frame.channel && f.overlaps(frame.start, frame.end()))
        .all(|f| env.tables.capture_ok(p_sig, f.rx_power_dbm, frame.sf, f.sf))
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    idx: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest time first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Receiver-centric interferer field with lazily generated traffic.
#[derive(Debug, Clone)]
pub struct InterferenceField {
    interferers: Vec<Interferer>,
    queue: BinaryHeap<Pending>,
    active: Vec<InterfererFrame>,
    /// Every frame starting before this time has been generated.
    generated_until: f64,
    last_start: f64,
    rng: SimRng,
}

impl InterferenceField {
    pub fn spawn(env: &LinkEnv, mut rng: SimRng) -> Self {
        let cfg = &env.interference;
        let interferers = spawn_interferers(cfg.intensity_per_m2, cfg.radius_m, cfg.frames_per_hour, &mut rng);
        Self {
            interferers,
            queue: BinaryHeap::new(),
            active: Vec::new(),
            generated_until: f64::NEG_INFINITY,
            last_start: f64::NEG_INFINITY,
            rng,
        }
    }

    pub fn interferers(&self) -> &[Interferer] {
        &self.interferers
    }

    /// Generates traffic up to `end` and drops frames that ended before `start`.
    fn advance(&mut self, start: f64, end: f64, env: &LinkEnv) {
        let horizon = start - env.max_interferer_airtime;
        if horizon > self.generated_until {
            // Nothing generated so far can reach `start`; restart every
            // process at the horizon (memoryless arrivals).
            self.active.clear();
            self.queue.clear();
            for (idx, it) in self.interferers.iter_mut().enumerate() {
                it.next_tx_time = horizon + exp_gap(it.frame_rate_per_hour, &mut self.rng);
                if it.next_tx_time.is_finite() {
                    self.queue.push(Pending { time: it.next_tx_time, idx });
                }
            }
            self.generated_until = horizon;
        }
        while let Some(&Pending { time, idx }) = self.queue.peek() {
            if time >= end {
                break;
            }
            self.queue.pop();
            let it = &mut self.interferers[idx];
            if let Some(frame) = next_interferer_frame(it, env, &mut self.rng) {
                self.active.push(frame);
            }
            if it.next_tx_time.is_finite() {
                self.queue.push(Pending { time: it.next_tx_time, idx });
            }
        }
        self.generated_until = self.generated_until.max(end);
        self.active.retain(|f| f.end() > start);
    }

    /// Builds the realization for `frame`. Successive calls must not move the
    /// frame start backwards.
    pub fn realize(&mut self, frame: &FrameTx, fading: f64, env: &LinkEnv) -> LinkRealization {
        assert!(frame.start >= self.last_start, "frames must be presented in start-time order");
        self.last_start = frame.start;
        self.advance(frame.start, frame.end(), env);
        let overlapping = self
            .active
            .iter()
            .filter(|f| f.channel == frame.channel && f.overlaps(frame.start, frame.end()))
            .copied()
            .collect();
        LinkRealization { fading, overlapping }
    }
}

/// Full link-level simulation with one persistent field per receiver.
#[derive(Debug, Clone)]
pub struct FullSimLink {
    env: LinkEnv,
    seed: u64,
    fields: HashMap<NodeId, InterferenceField>,
}

impl FullSimLink {
    pub fn new(env: LinkEnv, seed: u64) -> Self {
        Self { env, seed, fields: HashMap::new() }
    }

    pub fn env(&self) -> &LinkEnv {
        &self.env
    }

    /// Interferers placed around `node`, if its field has been created.
    pub fn interferers(&self, node: NodeId) -> Option<&[Interferer]> {
        self.fields.get(&node).map(|f| f.interferers())
    }
}

impl LinkLayer for FullSimLink {
    fn receive(&mut self, receiver: NodeId, frames: &[FrameTx], rng: &mut SimRng) -> Result<Vec<bool>, LinkError> {
        let mut order: Vec<usize> = (0..frames.len()).collect();
        order.sort_by(|&a, &b| {
            frames[a].start.total_cmp(&frames[b].start).then(frames[a].channel.cmp(&frames[b].channel))
        });
        let Self { env, seed, fields } = self;
        let field = fields
            .entry(receiver)
            .or_insert_with(|| InterferenceField::spawn(env, rng::stream(*seed, Stream::Field, &[receiver.key()])));
        let mut out = vec![false; frames.len()];
        for i in order {
            let fading = phy::sample_fading(rng);
            let realization = field.realize(&frames[i], fading, env);
            out[i] = frame_outcome(&frames[i], &realization, env);
        }
        Ok(out)
    }
}

/// Multicasts `frames` to several receivers; each gets independent fading.
/// Returns the received frame indices per receiver.
pub fn transmit_fragments(
    link: &mut dyn LinkLayer,
    frames: &[FrameTx],
    receivers: &[(NodeId, f64)],
    rng: &mut SimRng,
) -> Result<Vec<BTreeSet<usize>>, LinkError> {
    receivers
        .iter()
        .map(|&(node, distance)| {
            let local: Vec<FrameTx> = frames.iter().map(|f| FrameTx { distance, ..*f }).collect();
            Ok(link
                .receive(node, &local, rng)?
                .into_iter()
                .enumerate()
                .filter_map(|(i, ok)| ok.then_some(i))
                .collect())
        })
        .collect()
}

/// Monte Carlo success frequency of an MTU-sized frame at `distance`, with a
/// freshly placed interferer field for every frame.
pub fn estimate_success(
    env: &LinkEnv,
    sf: SpreadingFactor,
    distance: f64,
    frames: usize,
    seed: u64,
    exec: Execution,
) -> f64 {
    const CHUNK: usize = 2_000;
    let airtime = phy::airtime(sf, mtu(sf), &env.radio).expect("MTU payload is valid");
    let chunks = frames.div_ceil(CHUNK);
    let hits: Vec<usize> = exec.map_range(chunks, |c| {
        let mut rng = rng::stream(seed, Stream::MonteCarlo, &[sf.value() as u64, distance.to_bits(), c as u64]);
        let todo = CHUNK.min(frames - c * CHUNK);
        let mut ok = 0;
        for _ in 0..todo {
            let field_rng = SimRng::seed_from_u64(rng.random());
            let mut field = InterferenceField::spawn(env, field_rng);
            let frame = FrameTx {
                sf,
                channel: rng.random_range(0..env.radio.channels),
                start: env.max_interferer_airtime,
                airtime,
                distance,
            };
            let fading = phy::sample_fading(&mut rng);
            let realization = field.realize(&frame, fading, env);
            ok += frame_outcome(&frame, &realization, env) as usize;
        }
        ok
    });
    hits.iter().sum::<usize>() as f64 / frames as f64
}
