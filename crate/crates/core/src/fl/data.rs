//! Datasets: a synthetic Gaussian-blob task and MNIST-style IDX files.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FlError;

/// Row-major features with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f32>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the selected rows into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
            classes: self.classes,
        }
    }
}

/// Mixture of Gaussian blobs, several per class. The leading
/// `inactive_features` coordinates are always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub blobs_per_class: usize,
    pub features: usize,
    pub inactive_features: usize,
    /// Standard deviation of blob centers.
    pub separation: f64,
    pub noise: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            blobs_per_class: 2,
            features: 256,
            inactive_features: 96,
            separation: 0.6,
            noise: 1.0,
            train_samples: 4000,
            test_samples: 1000,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes < 2 || self.blobs_per_class == 0 || self.features == 0 {
            return Err("classes >= 2, blobs_per_class >= 1 and features >= 1 required".into());
        }
        if self.inactive_features >= self.features {
            return Err("inactive_features must be below features".into());
        }
        if !(self.separation >= 0.0) || !(self.noise >= 0.0) {
            return Err("separation and noise must be non-negative".into());
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err("train_samples and test_samples must be positive".into());
        }
        Ok(())
    }

    /// Returns (train, test).
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> (Dataset, Dataset) {
        let (d, dead) = (self.features, self.inactive_features);
        let centers: Vec<f64> = (0..self.classes * self.blobs_per_class * d)
            .map(|i| if i % d < dead { 0.0 } else { self.separation * rng.sample::<f64, _>(StandardNormal) })
            .collect();
        let mut make = |n: usize| {
            let mut features = Vec::with_capacity(n * d);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let y = rng.random_range(0..self.classes);
                let blob = rng.random_range(0..self.blobs_per_class);
                let c = &centers[(y * self.blobs_per_class + blob) * d..][..d];
                for (j, &m) in c.iter().enumerate() {
                    let noise: f64 = StandardNormal.sample(rng);
                    features.push(if j < dead { 0.0 } else { (m + self.noise * noise) as f32 });
                }
                labels.push(y);
            }
            Dataset { features, labels, dim: d, classes: self.classes }
        };
        let train = make(self.train_samples);
        let test = make(self.test_samples);
        (train, test)
    }
}

/// MNIST-layout IDX files; `.gz` paths are decompressed on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Keep only the first N training samples.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default = "default_idx_classes")]
    pub classes: usize,
}

fn default_idx_classes() -> usize {
    10
}

impl IdxConfig {
    pub fn load(&self, base: &Path) -> Result<(Dataset, Dataset), FlError> {
        let split = |img: &Path, lbl: &Path, limit: Option<usize>| -> Result<Dataset, FlError> {
            let (features, dim, n) = read_idx_images(&base.join(img))?;
            let labels = read_idx_labels(&base.join(lbl))?;
            if labels.len() != n {
                return Err(FlError::Data(format!("{} images but {} labels", n, labels.len())));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes) {
                return Err(FlError::Data(format!("label {bad} outside 0..{}", self.classes)));
            }
            let keep = limit.unwrap_or(n).min(n);
            Ok(Dataset { features: features[..keep * dim].to_vec(), labels: labels[..keep].to_vec(), dim, classes: self.classes })
        };
        Ok((
            split(&self.train_images, &self.train_labels, self.train_limit)?,
            split(&self.test_images, &self.test_labels, self.test_limit)?,
        ))
    }
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>, FlError> {
    let file = File::open(path).map_err(|e| FlError::Data(format!("{}: {e}", path.display())))?;
    let mut buf = Vec::new();
    let res = if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf)
    } else {
        BufReader::new(file).read_to_end(&mut buf)
    };
    res.map_err(|e| FlError::Data(format!("{}: {e}", path.display())))?;
    Ok(buf)
}

fn idx_header(bytes: &[u8], magic: u32, what: &str) -> Result<Vec<usize>, FlError> {
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if bytes.len() < 4 || be(0) != magic {
        return Err(FlError::Data(format!("{what}: bad IDX magic, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    if bytes.len() < 4 + 4 * ndim {
        return Err(FlError::Data(format!("{what}: truncated IDX header")));
    }
    let dims: Vec<usize> = (0..ndim).map(|i| be(4 + 4 * i) as usize).collect();
    let body = bytes.len() - 4 - 4 * ndim;
    if body != dims.iter().product::<usize>() {
        return Err(FlError::Data(format!("{what}: expected {} data bytes, found {body}", dims.iter().product::<usize>())));
    }
    Ok(dims)
}

/// Parses an unsigned-byte image file into features in [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f32>, usize, usize), FlError> {
    let dims = idx_header(bytes, 0x0000_0803, "images")?;
    let data = &bytes[16..];
    Ok((data.iter().map(|&b| b as f32 / 255.0).collect(), dims[1] * dims[2], dims[0]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, FlError> {
    idx_header(bytes, 0x0000_0801, "labels")?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

fn read_idx_images(path: &Path) -> Result<(Vec<f32>, usize, usize), FlError> {
    parse_idx_images(&open_maybe_gz(path)?)
}

fn read_idx_labels(path: &Path) -> Result<Vec<usize>, FlError> {
    parse_idx_labels(&open_maybe_gz(path)?)
}

/// IID split into `clients` disjoint shards whose sizes differ by at most one.
pub fn partition<R: Rng + ?Sized>(samples: usize, clients: usize, rng: &mut R) -> Result<Vec<Vec<usize>>, FlError> {
    if clients == 0 || samples < clients {
        return Err(FlError::Data(format!("cannot split {samples} samples among {clients} clients")));
    }
    let mut idx: Vec<usize> = (0..samples).collect();
    idx.shuffle(rng);
    let (base, extra) = (samples / clients, samples % clients);
    let mut out = Vec::with_capacity(clients);
    let mut start = 0;
    for c in 0..clients {
        let len = base + usize::from(c < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}
