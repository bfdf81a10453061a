//! Scenario configuration, sweeps, batch execution and metric export.

mod config;
mod presets;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{DataConfig, ScenarioConfig};
pub use presets::{Preset, Variant};

use crate::exec::Execution;
use crate::orchestrator::{replication_seed, LinkMode, RoundMetrics, Simulation};
use crate::Error;

/// One output row: a round of one replication of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scenario: String,
    pub variant: String,
    pub replication: usize,
    pub seed: u64,
    pub round: usize,
    pub sf: u8,
    pub fec_rate: String,
    pub lambda_i: f64,
    pub link_mode: String,
    pub accuracy: f64,
    pub loss: f64,
    pub completion_time_s: f64,
    pub downlink_start_s: f64,
    pub downlink_airtime_s: f64,
    pub cumulative_uplink_airtime_s: f64,
    pub downlink_bytes: usize,
    pub downlink_fragments: usize,
    pub sampled: usize,
    pub decoded_downlink: usize,
    pub transmitted_uplink: usize,
    pub aggregated: usize,
    /// `client:downlink:uplink` per sampled client, `;`-separated, with 1/0 flags.
    pub delivery_flags: String,
}

impl MetricRecord {
    pub const COLUMNS: [&'static str; 22] = [
        "scenario",
        "variant",
        "replication",
        "seed",
        "round",
        "sf",
        "fec_rate",
        "lambda_i",
        "link_mode",
        "accuracy",
        "loss",
        "completion_time_s",
        "downlink_start_s",
        "downlink_airtime_s",
        "cumulative_uplink_airtime_s",
        "downlink_bytes",
        "downlink_fragments",
        "sampled",
        "decoded_downlink",
        "transmitted_uplink",
        "aggregated",
        "delivery_flags",
    ];

    fn new(variant: &Variant, replication: usize, seed: u64, m: &RoundMetrics) -> Self {
        let cfg = &variant.cfg;
        let flag = |b: bool| if b { '1' } else { '0' };
        Self {
            scenario: cfg.name.clone(),
            variant: variant.name.clone(),
            replication,
            seed,
            round: m.round,
            sf: cfg.schedule.spreading_factor.value(),
            fec_rate: cfg.codec.fec_rate.to_string(),
            lambda_i: cfg.interference.intensity_per_m2,
            link_mode: match cfg.schedule.link_mode {
                LinkMode::Sim => "sim",
                LinkMode::Analytical => "analytical",
                LinkMode::Ideal => "ideal",
            }
            .into(),
            accuracy: m.accuracy,
            loss: m.loss,
            completion_time_s: m.completion_time_s,
            downlink_start_s: m.downlink_start_s,
            downlink_airtime_s: m.downlink_airtime_s,
            cumulative_uplink_airtime_s: m.cumulative_uplink_airtime_s,
            downlink_bytes: m.downlink_bytes,
            downlink_fragments: m.downlink_fragments,
            sampled: m.deliveries.len(),
            decoded_downlink: m.deliveries.iter().filter(|d| d.decoded_downlink).count(),
            transmitted_uplink: m.deliveries.iter().filter(|d| d.transmitted).count(),
            aggregated: m.aggregated(),
            delivery_flags: m
                .deliveries
                .iter()
                .map(|d| format!("{}:{}:{}", d.client, flag(d.decoded_downlink), flag(d.delivered)))
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

/// Expands the optional preset over `base`.
pub fn variants(base: &ScenarioConfig, preset: Option<Preset>) -> Vec<Variant> {
    match preset {
        Some(p) => p.expand(base),
        None => vec![Variant { name: "base".into(), cfg: base.clone() }],
    }
}

/// Runs every replication of every variant; records come out in
/// (variant, replication, round) order regardless of `exec`.
pub fn run_variants(variants: &[Variant], exec: Execution) -> Result<Vec<MetricRecord>, Error> {
    let jobs: Vec<(usize, usize)> = variants
        .iter()
        .enumerate()
        .flat_map(|(v, var)| (0..var.cfg.replications).map(move |r| (v, r)))
        .collect();
    let results = exec.map(&jobs, |&(v, rep)| -> Result<Vec<MetricRecord>, Error> {
        let variant = &variants[v];
        let seed = replication_seed(variant.cfg.seed, rep);
        let mut sim = Simulation::new(&variant.cfg, seed, exec).map_err(|e| e.context(&variant.name))?;
        let rounds = sim.run().map_err(|e| e.context(&variant.name))?;
        Ok(rounds.iter().map(|m| MetricRecord::new(variant, rep, seed, m)).collect())
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_csv(path: &Path, records: &[MetricRecord]) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(MetricRecord::COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_jsonl(path: &Path, records: &[MetricRecord]) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Runs the scenario and writes `metrics.csv` and `metrics.jsonl` into `out`.
pub fn run_scenario(
    base: &ScenarioConfig,
    preset: Option<Preset>,
    out: &Path,
    exec: Execution,
) -> Result<Vec<MetricRecord>, Error> {
    base.validate()?;
    let records = run_variants(&variants(base, preset), exec)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join("metrics.csv"), &records)?;
    write_jsonl(&out.join("metrics.jsonl"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> MetricRecord {
        MetricRecord {
            scenario: "s, \"quoted\"".into(),
            variant: "sf9_r1/2".into(),
            replication: 0,
            seed: 7,
            round: 1,
            sf: 9,
            fec_rate: "1/2".into(),
            lambda_i: 1e-5,
            link_mode: "sim".into(),
            accuracy: 0.5,
            loss: 1.25,
            completion_time_s: 10.0,
            downlink_start_s: 0.0,
            downlink_airtime_s: 0.0,
            cumulative_uplink_airtime_s: 3.5,
            downlink_bytes: 0,
            downlink_fragments: 0,
            sampled: 2,
            decoded_downlink: 2,
            transmitted_uplink: 2,
            aggregated: 1,
            delivery_flags: "3:1:1;5:1:0".into(),
        }
    }

    #[test]
    fn csv_columns_match_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_csv(&path, &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), MetricRecord::COLUMNS.join(","));
        write_csv(&path, &[record()]).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(headers, MetricRecord::COLUMNS);
        let back: Vec<MetricRecord> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(back, vec![record()]);
        let json = serde_json::to_value(record()).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), MetricRecord::COLUMNS.len());
    }

    #[test]
    fn export_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_jsonl(&a, &[record(), record()]).unwrap();
        write_jsonl(&b, &[record(), record()]).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 2);
    }
}
