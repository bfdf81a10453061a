//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use lorafl::fl::Mlp;
use lorafl::phy::{self, RadioConfig, SfTables, SpreadingFactor};

/// Weighted mean computed the long way: scale, sum, divide.
pub fn brute_force_mean(updates: &[(Vec<f64>, usize)]) -> Vec<f64> {
    let len = updates[0].0.len();
    let total: f64 = updates.iter().map(|(_, n)| *n as f64).sum();
    let mut sum = vec![0.0; len];
    for (v, n) in updates {
        for j in 0..len {
            sum[j] += *n as f64 * v[j];
        }
    }
    sum.iter().map(|s| s / total).collect()
}

/// Largest error of `got` against the brute-force weighted mean, relative to
/// the weighted mean magnitude so that entries whose terms cancel are not
/// judged against a near-zero result.
pub fn fedavg_error(updates: &[(Vec<f64>, usize)], got: &[f64]) -> f64 {
    let want = brute_force_mean(updates);
    let magnitude: Vec<(Vec<f64>, usize)> =
        updates.iter().map(|(v, n)| (v.iter().map(|x| x.abs()).collect(), *n)).collect();
    let scale = brute_force_mean(&magnitude);
    got.iter().zip(&want).zip(&scale).map(|((g, w), s)| (g - w).abs() / s).fold(0.0, f64::max)
}

/// Central differences of the mean loss with respect to every parameter.
pub fn numeric_gradient(model: &Mlp, params: &[f64], xs: &[f64], ys: &[usize], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|j| {
            let orig = p[j];
            p[j] = orig + h;
            let (up, _) = model.loss_and_grad(&p, xs, ys);
            p[j] = orig - h;
            let (down, _) = model.loss_and_grad(&p, xs, ys);
            p[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise error of `grad` against `fd`, relative to the larger
/// of the two (floored at 1e-3 of the gradient norm).
pub fn gradient_error(grad: &[f64], fd: &[f64]) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    grad.iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * norm))
        .fold(0.0, f64::max)
}

/// Success probability under Rayleigh fading alone, from the dBm link budget:
/// `P(A · P̄ ≥ ζ) = exp(-ζ / P̄)`.
pub fn fading_only_success(radio: &RadioConfig, tables: &SfTables, sf: SpreadingFactor, d: f64) -> f64 {
    let mean_dbm = phy::received_power(radio.tx_power_dbm, d, 1.0, radio).unwrap();
    let margin_db = tables.sensitivity(sf) - mean_dbm;
    (-(10f64.powf(margin_db / 10.0))).exp()
}
