//! Federated learning core: local SGD, client sampling and FedAvg.

mod data;
mod mlp;

use num_traits::Float;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{parse_idx_images, parse_idx_labels, partition, Dataset, IdxConfig, SyntheticConfig};
pub use mlp::{cross_entropy, Mlp};

use crate::rng::{self, Stream};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FlError {
    #[error("invalid model architecture: {0}")]
    Architecture(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("no updates to aggregate")]
    NoUpdates,
    #[error("parameter vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error("cannot sample {m} of {n} clients over {channels} channels")]
    Sampling { m: usize, n: usize, channels: usize },
}

/// Local optimizer and model shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden_layers: Vec<usize>,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// L2 penalty coefficient applied in every SGD step.
    pub weight_decay: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden_layers: vec![128], local_epochs: 1, batch_size: 10, learning_rate: 0.02, weight_decay: 0.2 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err("local_epochs and batch_size must be positive".into());
        }
        if self.hidden_layers.contains(&0) {
            return Err("hidden layer widths must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err("learning_rate and weight_decay must be non-negative".into());
        }
        Ok(())
    }

    pub fn model(&self, input: usize, classes: usize) -> Result<Mlp, FlError> {
        let mut dims = vec![input];
        dims.extend(&self.hidden_layers);
        dims.push(classes);
        Mlp::new(dims)
    }
}

/// Initial global model; identical on every device using the same seed.
pub fn init_global(model: &Mlp, seed: u64) -> Vec<f32> {
    model.init(&mut rng::stream(seed, Stream::Init, &[]))
}

/// Uniform sample of `m` distinct client ids in draw order.
pub fn sample_clients<R: Rng + ?Sized>(n: usize, m: usize, channels: usize, rng: &mut R) -> Result<Vec<usize>, FlError> {
    if m == 0 || m > n || m > channels {
        return Err(FlError::Sampling { m, n, channels });
    }
    Ok(index::sample(rng, n, m).into_vec())
}

/// Mini-batch SGD on the shard `idx` of `data`, starting from `params`.
pub fn local_train<R: Rng + ?Sized>(
    model: &Mlp,
    params: &[f32],
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f32>, FlError> {
    if params.len() != model.param_count() {
        return Err(FlError::LengthMismatch(params.len(), model.param_count()));
    }
    let mut p = params.to_vec();
    let mut order = idx.to_vec();
    let mut xs = Vec::with_capacity(cfg.batch_size * data.dim);
    let mut ys = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            xs.clear();
            ys.clear();
            for &i in batch {
                xs.extend_from_slice(data.row(i));
                ys.push(data.labels[i]);
            }
            let (loss, grad) = model.loss_and_grad(&p, &xs, &ys);
            if !loss.is_finite() {
                return Err(FlError::Diverged);
            }
            for (w, g) in p.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * (g + cfg.weight_decay * *w);
            }
        }
    }
    if p.iter().any(|w| !w.is_finite()) {
        return Err(FlError::Diverged);
    }
    Ok(p)
}

/// Dataset-size weighted average, summed in input order.
pub fn fedavg<T: Float>(updates: &[(&[T], usize)]) -> Result<Vec<T>, FlError> {
    let (first, _) = updates.first().ok_or(FlError::NoUpdates)?;
    let len = first.len();
    if let Some((v, _)) = updates.iter().find(|(v, _)| v.len() != len) {
        return Err(FlError::LengthMismatch(len, v.len()));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(FlError::NoUpdates);
    }
    let weights: Vec<f64> = updates.iter().map(|(_, n)| *n as f64 / total as f64).collect();
    let out: Vec<T> = (0..len)
        .map(|j| {
            let acc = updates.iter().zip(&weights).fold(0.0f64, |acc, ((v, _), w)| {
                acc + w * v[j].to_f64().expect("float converts to f64")
            });
            T::from(acc).expect("f64 converts to float")
        })
        .collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(FlError::Diverged);
    }
    Ok(out)
}

/// Accuracy and mean cross-entropy on `data`.
pub fn evaluate(model: &Mlp, params: &[f32], data: &Dataset) -> Result<(f64, f64), FlError> {
    if data.is_empty() {
        return Err(FlError::Data("empty test set".into()));
    }
    if model.classes() == 0 {
        return Err(FlError::Architecture("no output classes".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0f64;
    for i in 0..data.len() {
        let logits = model.logits(params, data.row(i));
        let pred = logits
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |best, (c, &z)| if z > best.1 { (c, z) } else { best })
            .0;
        correct += usize::from(pred == data.labels[i]);
        loss += cross_entropy(&logits, data.labels[i]) as f64;
    }
    Ok((correct as f64 / data.len() as f64, loss / data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn fedavg_examples() {
        let a = [1.0f64, 1.0];
        let b = [3.0f64, 3.0];
        assert_eq!(fedavg(&[(&a[..], 4)]).unwrap(), a.to_vec());
        assert_eq!(fedavg(&[(&a[..], 2), (&b[..], 2)]).unwrap(), vec![2.0, 2.0]);
        let z = [0.0f64, 0.0];
        let f = [4.0f64, 4.0];
        assert_eq!(fedavg(&[(&z[..], 1), (&f[..], 3)]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(fedavg::<f64>(&[]), Err(FlError::NoUpdates));
        assert!(fedavg(&[(&a[..], 1), (&[1.0][..], 1)]).is_err());
    }

    #[test]
    fn sampling_rules() {
        let mut r = stream(1, Stream::Sampling, &[]);
        let mut all = sample_clients(20, 8, 8, &mut r).unwrap();
        assert_eq!(all.len(), 8);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 8);
        let mut full = sample_clients(8, 8, 8, &mut r).unwrap();
        full.sort();
        assert_eq!(full, (0..8).collect::<Vec<_>>());
        assert!(sample_clients(20, 9, 8, &mut r).is_err());
        let one = |s| sample_clients(20, 1, 8, &mut stream(s, Stream::Sampling, &[])).unwrap();
        assert_eq!(one(5), one(5));
    }

    #[test]
    fn sampling_frequency() {
        let mut r = stream(2, Stream::Sampling, &[]);
        let mut counts = [0usize; 20];
        let rounds = 10_000;
        for _ in 0..rounds {
            for c in sample_clients(20, 8, 8, &mut r).unwrap() {
                counts[c] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / rounds as f64 - 0.4).abs() < 0.02);
        }
    }

    fn toy() -> (Mlp, Dataset) {
        // two separable clusters
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let y = i % 2;
            let s = if y == 0 { -1.0 } else { 1.0 };
            features.extend([s * 2.0 + (i as f32 * 0.01), s * 1.5]);
            labels.push(y);
        }
        (Mlp::new(vec![2, 8, 2]).unwrap(), Dataset { features, labels, dim: 2, classes: 2 })
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (m, d) = toy();
        let p = init_global(&m, 3);
        let cfg = TrainConfig { learning_rate: 0.0, ..Default::default() };
        let idx: Vec<usize> = (0..d.len()).collect();
        assert_eq!(local_train(&m, &p, &d, &idx, &cfg, &mut stream(1, Stream::Training, &[])).unwrap(), p);
    }

    #[test]
    fn training_fits_separable_data() {
        let (m, d) = toy();
        let p = init_global(&m, 3);
        let cfg = TrainConfig { weight_decay: 0.0, learning_rate: 0.1, ..Default::default() };
        let idx: Vec<usize> = (0..d.len()).collect();
        let (_, before) = evaluate(&m, &p, &d).unwrap();
        let trained = local_train(&m, &p, &d, &idx, &cfg, &mut stream(1, Stream::Training, &[])).unwrap();
        let (acc, after) = evaluate(&m, &trained, &d).unwrap();
        assert!(after < before);
        let cfg10 = TrainConfig { local_epochs: 10, ..cfg };
        let fitted = local_train(&m, &p, &d, &idx, &cfg10, &mut stream(1, Stream::Training, &[])).unwrap();
        assert_eq!(evaluate(&m, &fitted, &d).unwrap().0, 1.0);
        assert!(acc > 0.5);
    }

    #[test]
    fn init_is_seeded() {
        let m = Mlp::new(vec![64, 64, 10]).unwrap();
        assert_eq!(init_global(&m, 1), init_global(&m, 1));
        assert_ne!(init_global(&m, 1), init_global(&m, 2));
    }

    #[test]
    fn uniform_model_scores_chance() {
        let cfg = SyntheticConfig { test_samples: 5000, train_samples: 10, ..Default::default() };
        let (_, test) = cfg.generate(&mut stream(4, Stream::Dataset, &[]));
        let m = Mlp::new(vec![cfg.features, 10]).unwrap();
        let zeros = vec![0.0f32; m.param_count()];
        // all logits tie, so the argmax is class 0
        let (acc, loss) = evaluate(&m, &zeros, &test).unwrap();
        assert!((acc - 0.1).abs() < 0.02);
        assert!((loss - 10f64.ln()).abs() < 1e-6);
        let empty = Dataset { features: vec![], labels: vec![], dim: cfg.features, classes: 10 };
        assert!(evaluate(&m, &zeros, &empty).is_err());
    }
}
