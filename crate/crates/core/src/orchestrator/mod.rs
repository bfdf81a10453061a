//! The round engine.
//!
//! Each round the server multicasts the global model on channel 0, waits the
//! processing delay, and then every sampled client that decoded the model
//! uploads its update on its own channel. Round 1 has no downlink: all
//! devices generate the initial model locally. Rounds are serialized and
//! every device is paced by the duty-cycle rule.

mod schedule;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use schedule::{downlink_start_time, next_allowed, round_interval, LorawanClass};

use crate::codec::{self, EncodedUpdate, FragmentSet};
use crate::exec::Execution;
use crate::fl::{self, Dataset, Mlp};
use crate::link::{FrameTx, IdealLink, LinkLayer, NodeId};
use crate::linkmodel::AnalyticalLink;
use crate::linksim::{FullSimLink, LinkEnv};
use crate::phy::{self, mtu, SpreadingFactor};
use crate::rng::{self, SimRng, Stream};
use crate::scenario::ScenarioConfig;
use crate::Error;

/// Clients placed uniformly on a disk around the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub clients: usize,
    pub radius_m: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self { clients: 20, radius_m: 500.0 }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.clients == 0 {
            return Err("clients must be positive".into());
        }
        if !(self.radius_m > 0.0) || !self.radius_m.is_finite() {
            return Err(format!("radius_m must be positive, got {}", self.radius_m));
        }
        Ok(())
    }

    /// Distances to the server, each in (0, radius].
    pub fn place(&self, rng: &mut SimRng) -> Vec<f64> {
        use rand::Rng;
        (0..self.clients).map(|_| self.radius_m * (1.0 - rng.random::<f64>()).sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Event-driven interference simulation.
    #[serde(alias = "full-sim")]
    Sim,
    /// Bernoulli draws from the analytical success probability.
    Analytical,
    /// Every frame arrives.
    Ideal,
}

impl std::str::FromStr for LinkMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" | "full-sim" => Ok(LinkMode::Sim),
            "analytical" => Ok(LinkMode::Analytical),
            "ideal" => Ok(LinkMode::Ideal),
            _ => Err(format!("unknown link mode {s:?} (expected sim, analytical or ideal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub lorawan_class: LorawanClass,
    pub ping_period_s: f64,
    pub duty_cycle_percent: f64,
    pub processing_delay_s: f64,
    pub rounds: usize,
    pub clients_per_round: usize,
    pub spreading_factor: SpreadingFactor,
    pub link_mode: LinkMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lorawan_class: LorawanClass::B,
            ping_period_s: 0.03,
            duty_cycle_percent: 1.0,
            processing_delay_s: 10.0,
            rounds: 15,
            clients_per_round: 8,
            spreading_factor: SpreadingFactor::new(9).expect("valid SF"),
            link_mode: LinkMode::Sim,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lorawan_class == LorawanClass::B && !(self.ping_period_s > 0.0) {
            return Err(format!("ping_period_s must be positive for class B, got {}", self.ping_period_s));
        }
        if !(self.duty_cycle_percent > 0.0 && self.duty_cycle_percent <= 100.0) {
            return Err(format!("duty_cycle_percent must be in (0, 100], got {}", self.duty_cycle_percent));
        }
        if !(self.processing_delay_s >= 0.0) || !self.processing_delay_s.is_finite() {
            return Err(format!("processing_delay_s must be >= 0, got {}", self.processing_delay_s));
        }
        if self.rounds == 0 || self.clients_per_round == 0 {
            return Err("rounds and clients_per_round must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Downlink,
    Uplink,
}

/// One update transmission (all its coded frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub device: NodeId,
    pub round: usize,
    pub kind: TxKind,
    pub start: f64,
    pub airtime: f64,
    pub frames: usize,
}

/// What happened to one sampled client in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDelivery {
    pub client: usize,
    pub decoded_downlink: bool,
    pub transmitted: bool,
    /// The server decoded the client's update.
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    /// Absolute time at which the last uplink of the round ended.
    pub completion_time_s: f64,
    pub downlink_start_s: f64,
    pub downlink_airtime_s: f64,
    /// Uplink airtime summed over the clients that transmitted.
    pub cumulative_uplink_airtime_s: f64,
    pub downlink_bytes: usize,
    pub downlink_fragments: usize,
    pub deliveries: Vec<ClientDelivery>,
}

impl RoundMetrics {
    pub fn aggregated(&self) -> usize {
        self.deliveries.iter().filter(|d| d.delivered).count()
    }
}

/// Seed of one replication.
pub fn replication_seed(master: u64, replication: usize) -> u64 {
    rng::derive_seed(master, Stream::Replication, &[replication as u64])
}

/// Training and test data for one replication.
pub fn build_datasets(cfg: &ScenarioConfig, seed: u64) -> Result<(Dataset, Dataset), Error> {
    cfg.data.load(seed, &cfg.base_dir)
}

pub fn build_link(cfg: &ScenarioConfig, seed: u64) -> Result<Box<dyn LinkLayer + Send>, Error> {
    let env = LinkEnv::new(cfg.radio.clone(), cfg.tables.clone(), cfg.interference.clone()).map_err(Error::Config)?;
    Ok(match cfg.schedule.link_mode {
        LinkMode::Sim => Box::new(FullSimLink::new(env, seed)),
        LinkMode::Analytical => Box::new(AnalyticalLink::new(&env)?),
        LinkMode::Ideal => Box::new(IdealLink),
    })
}

/// State of one replication.
pub struct Simulation {
    cfg: ScenarioConfig,
    seed: u64,
    exec: Execution,
    model: Mlp,
    train: Arc<Dataset>,
    test: Arc<Dataset>,
    shards: Vec<Vec<usize>>,
    distances: Vec<f64>,
    link: Box<dyn LinkLayer + Send>,
    frame_airtime: f64,
    global: Vec<f32>,
    round: usize,
    server_next: f64,
    client_next: Vec<f64>,
    last_completion: f64,
    log: Vec<TxRecord>,
}

impl Simulation {
    /// Builds a replication from `seed`, generating or loading its data.
    pub fn new(cfg: &ScenarioConfig, seed: u64, exec: Execution) -> Result<Self, Error> {
        let (train, test) = build_datasets(cfg, seed)?;
        Self::with_data(cfg, seed, exec, Arc::new(train), Arc::new(test))
    }

    pub fn with_data(
        cfg: &ScenarioConfig,
        seed: u64,
        exec: Execution,
        train: Arc<Dataset>,
        test: Arc<Dataset>,
    ) -> Result<Self, Error> {
        cfg.validate()?;
        let model = cfg.train.model(train.dim, train.classes)?;
        if test.dim != train.dim {
            return Err(Error::Config(format!("train/test feature widths differ: {} vs {}", train.dim, test.dim)));
        }
        let shards = fl::partition(train.len(), cfg.topology.clients, &mut rng::stream(seed, Stream::Partition, &[]))?;
        let distances = cfg.topology.place(&mut rng::stream(seed, Stream::Topology, &[]));
        let link = build_link(cfg, seed)?;
        let sf = cfg.schedule.spreading_factor;
        let frame_airtime = phy::airtime(sf, mtu(sf), &cfg.radio)?;
        let global = fl::init_global(&model, seed);
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            exec,
            model,
            train,
            test,
            shards,
            distances,
            link,
            frame_airtime,
            global,
            round: 0,
            server_next: 0.0,
            client_next: vec![0.0; cfg.topology.clients],
            last_completion: 0.0,
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn global(&self) -> &[f32] {
        &self.global
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn tx_log(&self) -> &[TxRecord] {
        &self.log
    }

    /// Airtime of one MTU-sized frame.
    pub fn frame_airtime(&self) -> f64 {
        self.frame_airtime
    }

    pub fn run(&mut self) -> Result<Vec<RoundMetrics>, Error> {
        (0..self.cfg.schedule.rounds).map(|_| self.run_round()).collect()
    }

    fn frames(&self, start: f64, channel: usize, n: usize) -> Vec<FrameTx> {
        let sf = self.cfg.schedule.spreading_factor;
        (0..n)
            .map(|j| FrameTx { sf, channel, start: start + j as f64 * self.frame_airtime, airtime: self.frame_airtime, distance: 0.0 })
            .collect()
    }

    fn encode(&self, v: &[f32], reference: Option<&[f32]>) -> Result<EncodedUpdate, Error> {
        Ok(codec::encode_update(v, &self.cfg.codec, self.cfg.schedule.spreading_factor, self.cfg.codec.fec_rate, reference)?)
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics, Error> {
        self.round += 1;
        let t = self.round;
        let sched = self.cfg.schedule.clone();
        let dc = sched.duty_cycle_percent;
        let delay = sched.processing_delay_s;
        let sampled = fl::sample_clients(
            self.cfg.topology.clients,
            sched.clients_per_round,
            self.cfg.radio.channels,
            &mut rng::stream(self.seed, Stream::Sampling, &[t as u64]),
        )?;

        // downlink
        let theta = self.global.clone();
        let mut held: Vec<Option<Vec<f32>>> = vec![None; self.cfg.topology.clients];
        let (dl_start, dl_air, dl_bytes, dl_frames, uplink_start);
        if t == 1 {
            // devices derive the initial model from the shared seed; only the
            // pacing interval of a virtual transmission at t = 0 applies
            let virtual_dl = self.encode(&theta, None)?;
            self.server_next = next_allowed(0.0, virtual_dl.n() as f64 * self.frame_airtime, dc);
            for &i in &sampled {
                held[i] = Some(theta.clone());
            }
            (dl_start, dl_air, dl_bytes, dl_frames, uplink_start) = (0.0, 0.0, 0, 0, 0.0);
        } else {
            let enc = self.encode(&theta, None)?;
            let n = enc.n();
            let air = n as f64 * self.frame_airtime;
            let mut candidate = self.server_next.max(self.last_completion);
            for &i in &sampled {
                candidate = candidate.max(self.client_next[i] - air - delay);
            }
            let start = downlink_start_time(candidate, sched.lorawan_class, sched.ping_period_s);
            self.server_next = next_allowed(start, air, dc);
            self.log.push(TxRecord { device: NodeId::Server, round: t, kind: TxKind::Downlink, start, airtime: air, frames: n });
            let frames = self.frames(start, 0, n);
            // what a client reconstructs from a successful decode
            let decoded = codec::decode_update(&enc.payload, theta.len(), None)?;
            for &i in &sampled {
                let node = NodeId::Client(i);
                let local: Vec<FrameTx> = frames.iter().map(|f| FrameTx { distance: self.distances[i], ..*f }).collect();
                let mut link_rng = rng::stream(self.seed, Stream::Link, &[t as u64, 0, node.key()]);
                let got = self.link.receive(node, &local, &mut link_rng)?;
                let set = FragmentSet::new(got.iter().enumerate().filter_map(|(j, ok)| ok.then_some(j)).collect(), enc.k(), n)?;
                if set.decodable() {
                    codec::reassemble(&enc.fragments, &set, enc.byte_size())?;
                    held[i] = Some(decoded.clone());
                }
            }
            (dl_start, dl_air, dl_bytes, dl_frames, uplink_start) =
                (start, air, enc.byte_size(), n, start + air + delay);
        }

        // local training, in parallel across clients
        let participants: Vec<(usize, usize, Vec<f32>)> = sampled
            .iter()
            .enumerate()
            .filter_map(|(ch, &i)| held[i].take().map(|m| (ch, i, m)))
            .collect();
        let seed = self.seed;
        let (model, train, shards, train_cfg) = (&self.model, &self.train, &self.shards, &self.cfg.train);
        let trained: Vec<Result<Vec<f32>, fl::FlError>> = self.exec.map(&participants, |(_, i, start)| {
            let mut r = rng::stream(seed, Stream::Training, &[t as u64, *i as u64]);
            fl::local_train(model, start, train, &shards[*i], train_cfg, &mut r)
        });

        // uplink
        let mut uplinks = Vec::with_capacity(participants.len());
        let mut all_frames = Vec::new();
        let mut owner = Vec::new();
        let mut ul_air_total = 0.0;
        let mut completion = if t == 1 { 0.0 } else { uplink_start };
        for ((ch, i, reference), local) in participants.iter().zip(trained) {
            let local = local?;
            let enc = if self.cfg.codec.differential_uplink {
                self.encode(&local, Some(reference))?
            } else {
                self.encode(&local, None)?
            };
            let n = enc.n();
            let air = n as f64 * self.frame_airtime;
            self.log.push(TxRecord { device: NodeId::Client(*i), round: t, kind: TxKind::Uplink, start: uplink_start, airtime: air, frames: n });
            self.client_next[*i] = next_allowed(uplink_start, air, dc);
            ul_air_total += air;
            completion = f64::max(completion, uplink_start + air);
            for f in self.frames(uplink_start, *ch, n) {
                all_frames.push(FrameTx { distance: self.distances[*i], ..f });
                owner.push(uplinks.len());
            }
            uplinks.push((*i, enc));
        }
        let mut link_rng = rng::stream(self.seed, Stream::Link, &[t as u64, 1, NodeId::Server.key()]);
        let got = self.link.receive(NodeId::Server, &all_frames, &mut link_rng)?;
        let mut received: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); uplinks.len()];
        let mut next_idx = vec![0usize; uplinks.len()];
        for (ok, &u) in got.iter().zip(&owner) {
            if *ok {
                received[u].insert(next_idx[u]);
            }
            next_idx[u] += 1;
        }

        let mut delivered: Vec<(usize, Vec<f32>)> = Vec::new();
        for ((i, enc), set) in uplinks.iter().zip(received) {
            let set = FragmentSet::new(set, enc.k(), enc.n())?;
            if !set.decodable() {
                continue;
            }
            let bytes = codec::reassemble(&enc.fragments, &set, enc.byte_size())?;
            // differences are applied to the server's full-precision model
            let reference = if enc.is_differential { Some(theta.as_slice()) } else { None };
            delivered.push((*i, codec::decode_update(&bytes, theta.len(), reference)?));
        }
        delivered.sort_by_key(|(i, _)| *i);

        let deliveries = sampled
            .iter()
            .map(|&c| ClientDelivery {
                client: c,
                decoded_downlink: participants.iter().any(|(_, i, _)| *i == c),
                transmitted: uplinks.iter().any(|(i, _)| *i == c),
                delivered: delivered.iter().any(|(i, _)| *i == c),
            })
            .collect();

        if !delivered.is_empty() {
            let weighted: Vec<(&[f32], usize)> = delivered.iter().map(|(i, v)| (v.as_slice(), self.shards[*i].len())).collect();
            self.global = fl::fedavg(&weighted)?;
        }
        let (accuracy, loss) = fl::evaluate(&self.model, &self.global, &self.test)?;
        self.last_completion = completion;
        Ok(RoundMetrics {
            round: t,
            accuracy,
            loss,
            completion_time_s: completion,
            downlink_start_s: dl_start,
            downlink_airtime_s: dl_air,
            cumulative_uplink_airtime_s: ul_air_total,
            downlink_bytes: dl_bytes,
            downlink_fragments: dl_frames,
            deliveries,
        })
    }
}

/// Checks that every device's transmissions respect the duty cycle: the
/// airtime of each update is at most `duty_cycle_percent` of the time until
/// that device's next update starts. Returns the first violation.
pub fn audit_duty_cycle(log: &[TxRecord], duty_cycle_percent: f64) -> Result<(), String> {
    let mut devices: Vec<NodeId> = log.iter().map(|r| r.device).collect();
    devices.sort();
    devices.dedup();
    for dev in devices {
        let mut tx: Vec<&TxRecord> = log.iter().filter(|r| r.device == dev).collect();
        tx.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in tx.windows(2) {
            let window = w[1].start - w[0].start;
            if w[0].airtime > duty_cycle_percent / 100.0 * window + 1e-9 {
                return Err(format!(
                    "{dev:?} sent {:.3} s in a {:.3} s window starting at {:.3} s (round {})",
                    w[0].airtime, window, w[0].start, w[0].round
                ));
            }
        }
    }
    Ok(())
}
