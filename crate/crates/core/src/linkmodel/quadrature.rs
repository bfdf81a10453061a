//! Adaptive 15-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::LinkModelError;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// 7-point Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// Integrates `f` over `[a, b]` until the estimated error falls below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<f64, LinkModelError> {
    let first = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    // totals are re-summed each step; running updates lose everything after
    // a huge segment is replaced
    while error > abs_tol.max(rel_tol * value.abs()) {
        if !value.is_finite() || !error.is_finite() {
            return Err(LinkModelError::NonConvergent(format!("non-finite integrand on [{a}, {b}]")));
        }
        if heap.len() >= max_segments {
            return Err(LinkModelError::NonConvergent(format!(
                "quadrature error {error:e} above tolerance after {max_segments} segments"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        heap.push(left);
        heap.push(right);
        value = heap.iter().map(|s| s.value).sum();
        error = heap.iter().map(|s| s.error).sum();
    }
    if !value.is_finite() {
        return Err(LinkModelError::NonConvergent("non-finite quadrature result".into()));
    }
    Ok(value)
}
