use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::fl::{Dataset, IdxConfig, SyntheticConfig, TrainConfig};
use crate::linksim::InterferenceConfig;
use crate::orchestrator::{ScheduleConfig, TopologyConfig};
use crate::phy::{RadioConfig, SfTables};
use crate::rng::{self, Stream};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataConfig {
    Synthetic(SyntheticConfig),
    Idx(IdxConfig),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticConfig::default())
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            DataConfig::Synthetic(s) => s.validate(),
            DataConfig::Idx(i) if i.classes < 2 => Err("classes must be at least 2".into()),
            DataConfig::Idx(_) => Ok(()),
        }
    }

    /// Returns (train, test). Synthetic data depends on `seed`; relative IDX
    /// paths resolve against `base`.
    pub fn load(&self, seed: u64, base: &Path) -> Result<(Dataset, Dataset), Error> {
        match self {
            DataConfig::Synthetic(s) => Ok(s.generate(&mut rng::stream(seed, Stream::Dataset, &[]))),
            DataConfig::Idx(i) => Ok(i.load(base)?),
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub replications: usize,
    pub topology: TopologyConfig,
    pub schedule: ScheduleConfig,
    pub codec: CodecConfig,
    pub radio: RadioConfig,
    pub tables: SfTables,
    pub interference: InterferenceConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Where metric files are written when the command line gives no `--out`.
    pub output_dir: PathBuf,
    /// Directory that relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            replications: 1,
            topology: TopologyConfig::default(),
            schedule: ScheduleConfig::default(),
            codec: CodecConfig::default(),
            radio: RadioConfig::default(),
            tables: SfTables::default(),
            interference: InterferenceConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            output_dir: PathBuf::from("results"),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let at = |section: &str, r: Result<(), String>| r.map_err(|e| Error::Config(format!("{section}: {e}")));
        at("topology", self.topology.validate())?;
        at("schedule", self.schedule.validate())?;
        at("codec", self.codec.validate())?;
        at("radio", self.radio.validate())?;
        at("tables", self.tables.validate())?;
        at("interference", self.interference.validate())?;
        at("train", self.train.validate())?;
        at("data", self.data.validate())?;
        if self.replications == 0 {
            return Err(Error::Config("replications: must be positive".into()));
        }
        let m = self.schedule.clients_per_round;
        if m > self.radio.channels {
            return Err(Error::Config(format!(
                "schedule.clients_per_round: {m} exceeds radio.channels ({})",
                self.radio.channels
            )));
        }
        if m > self.topology.clients {
            return Err(Error::Config(format!(
                "schedule.clients_per_round: {m} exceeds topology.clients ({})",
                self.topology.clients
            )));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            if s.train_samples < self.topology.clients {
                return Err(Error::Config(format!(
                    "data.train_samples: {} is fewer than topology.clients ({})",
                    s.train_samples, self.topology.clients
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::FecRate;
    use crate::orchestrator::{LinkMode, LorawanClass};

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ScenarioConfig::from_toml_str("seed = 42\n").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.topology.clients, 20);
        assert_eq!(cfg.topology.radius_m, 500.0);
        assert_eq!(cfg.schedule.clients_per_round, 8);
        assert_eq!(cfg.schedule.lorawan_class, LorawanClass::B);
        assert_eq!(cfg.schedule.ping_period_s, 0.03);
        assert_eq!(cfg.schedule.duty_cycle_percent, 1.0);
        assert_eq!(cfg.schedule.processing_delay_s, 10.0);
        assert_eq!(cfg.interference.intensity_per_m2, 1e-5);
        assert_eq!(cfg.interference.frames_per_hour, 10.0);
        assert_eq!(cfg.codec.sparsify_threshold, 0.001);
        assert_eq!(cfg.codec.quant_bits, 4);
        assert_eq!(cfg.codec.fec_rate, FecRate::new(1, 2).unwrap());
    }

    #[test]
    fn too_many_sampled_clients() {
        let err = ScenarioConfig::from_toml_str("[schedule]\nclients_per_round = 9\n").unwrap_err();
        assert!(err.to_string().contains("schedule.clients_per_round"), "{err}");
        let err = ScenarioConfig::from_toml_str("[codec]\nquant_bits = 3\n").unwrap_err();
        assert!(err.to_string().contains("codec"), "{err}");
        assert!(ScenarioConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[codec]\nfec_rate = \"3/2\"\n").is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.schedule.link_mode = LinkMode::Analytical;
        cfg.codec.fec_rate = FecRate::new(2, 3).unwrap();
        cfg.data = DataConfig::Idx(IdxConfig {
            train_images: "a".into(),
            train_labels: "b".into(),
            test_images: "c".into(),
            test_labels: "d".into(),
            train_limit: Some(100),
            test_limit: None,
            classes: 10,
        });
        let text = cfg.to_toml_string().unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let synthetic = ScenarioConfig::default();
        let back = ScenarioConfig::from_toml_str(&synthetic.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, synthetic);
    }

    #[test]
    fn link_mode_aliases() {
        let cfg = ScenarioConfig::from_toml_str("[schedule]\nlink_mode = \"full-sim\"\n").unwrap();
        assert_eq!(cfg.schedule.link_mode, LinkMode::Sim);
    }
}
