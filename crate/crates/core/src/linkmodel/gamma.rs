//! Gamma-function helpers for the analytical link model.

use super::LinkModelError;

const MAX_ITER: usize = 500;
// Two ulps at 1; anything tighter may never be met in f64.
const EPS: f64 = 2.0 * f64::EPSILON;
const TINY: f64 = 1e-300;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Unregularized lower incomplete gamma `γ(s, x) = ∫₀ˣ t^(s-1) e^(-t) dt`.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64, LinkModelError> {
    check_domain(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        Ok(series_sum(s, x)? * (s * x.ln() - x).exp())
    } else {
        let gamma = ln_gamma(s).exp();
        Ok(gamma - upper_continued_fraction(s, x)? * (s * x.ln() - x).exp())
    }
}

/// `γ(s, x) / x^s`, finite as x → 0 where it tends to 1/s.
pub fn lower_incomplete_gamma_scaled(s: f64, x: f64) -> Result<f64, LinkModelError> {
    check_domain(s, x)?;
    if x == 0.0 {
        return Ok(1.0 / s);
    }
    if x < s + 1.0 {
        Ok(series_sum(s, x)? * (-x).exp())
    } else {
        Ok(lower_incomplete_gamma(s, x)? * (-s * x.ln()).exp())
    }
}

fn check_domain(s: f64, x: f64) -> Result<(), LinkModelError> {
    if !(s > 0.0) || !(x >= 0.0) || !s.is_finite() || x.is_nan() {
        return Err(LinkModelError::Domain(format!("incomplete gamma needs s > 0, x >= 0; got s={s}, x={x}")));
    }
    Ok(())
}

/// Σ xⁿ / (s (s+1) … (s+n))
fn series_sum(s: f64, x: f64) -> Result<f64, LinkModelError> {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut ap = s;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum);
        }
    }
    Err(LinkModelError::NonConvergent(format!("incomplete gamma series at s={s}, x={x}")))
}

/// Continued fraction for Γ(s, x) e^x x^-s (modified Lentz).
fn upper_continued_fraction(s: f64, x: f64) -> Result<f64, LinkModelError> {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(LinkModelError::NonConvergent(format!("incomplete gamma continued fraction at s={s}, x={x}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, upper: f64) -> f64 {
        let n = 200_000;
        let h = upper / n as f64;
        let mut acc = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Defining integral after a smoothing substitution, by composite Simpson:
    /// γ(s, x) = (1/s) ∫₀^{x^s} exp(-v^{1/s}) dv for s < 1,
    /// γ(s, x) = 2 ∫₀^{√x} w^{2s-1} exp(-w²) dw otherwise.
    fn quadrature_oracle(s: f64, x: f64) -> f64 {
        if s < 1.0 {
            simpson(|v| (-v.powf(1.0 / s)).exp(), x.powf(s)) / s
        } else {
            2.0 * simpson(|w| w.powf(2.0 * s - 1.0) * (-w * w).exp(), x.sqrt())
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.1) - 2.252_712_651_734_206).abs() < 1e-13);
    }

    #[test]
    fn closed_forms() {
        for x in [0.01, 0.5, 1.0, 3.0, 10.0, 40.0] {
            let v = lower_incomplete_gamma(1.0, x).unwrap();
            let want = 1.0 - (-x).exp();
            assert!((v - want).abs() <= 1e-14 * want.max(1e-300) + 1e-16, "x={x}");
        }
        assert_eq!(lower_incomplete_gamma(0.7, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn half_order_at_one() {
        // √π · erf(1)
        let v = lower_incomplete_gamma(0.5, 1.0).unwrap();
        assert!((v - 1.493_648_265_624_854).abs() < 1e-12, "{v}");
    }

    #[test]
    fn matches_quadrature_oracle() {
        for &s in &[0.5, 0.74, 1.0, 1.5, 2.5] {
            for &x in &[1e-3, 0.2, 0.9, 1.7, 4.0, 12.0] {
                let got = lower_incomplete_gamma(s, x).unwrap();
                let want = quadrature_oracle(s, x);
                assert!(((got - want) / want).abs() < 1e-9, "s={s} x={x} got={got} want={want}");
            }
        }
    }

    #[test]
    fn scaled_form_is_consistent() {
        for &s in &[0.5, 0.74] {
            for &x in &[1e-200, 1e-8, 0.3, 2.0, 50.0, 1e4] {
                let scaled = lower_incomplete_gamma_scaled(s, x).unwrap();
                assert!(scaled.is_finite() && scaled > 0.0);
                if x > 1e-100 {
                    let direct = lower_incomplete_gamma(s, x).unwrap() / x.powf(s);
                    assert!(((scaled - direct) / direct).abs() < 1e-12, "s={s} x={x}");
                } else {
                    assert!((scaled * s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(lower_incomplete_gamma(0.0, 1.0).is_err());
        assert!(lower_incomplete_gamma(-1.0, 1.0).is_err());
        assert!(lower_incomplete_gamma(1.0, -0.1).is_err());
        assert!(lower_incomplete_gamma(1.0, f64::NAN).is_err());
    }
}
