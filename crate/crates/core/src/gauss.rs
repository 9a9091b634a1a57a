//! Standard normal density, distribution function and quantile.
//!
//! The distribution function goes through `erfc` so that both tails keep full
//! relative precision; `Φ(x) = erfc(-x/√2)/2`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density φ(x).
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function Φ(x). Handles ±∞.
pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Upper tail 1 − Φ(x).
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Inverse of Φ on (0, 1).
///
/// Bracketed Newton iteration; converges to the last few ulps.
pub fn quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    if p == 0.5 {
        return 0.0;
    }
    // solve sf(x) = t for x > 0 with t the smaller tail, so that neither
    // tail is squeezed through 1 - p
    let t = p.min(1.0 - p);
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    let mut x = 1.0;
    for _ in 0..200 {
        let resid = sf(x) - t;
        if resid < 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // d(sf)/dx = -φ(x)
        let next = x + resid / pdf(x);
        let next = if next <= lo || next >= hi || !next.is_finite() {
            0.5 * (lo + hi)
        } else {
            next
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    if p < 0.5 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert_eq!(cdf(f64::INFINITY), 1.0);
        assert_eq!(cdf(f64::NEG_INFINITY), 0.0);
        // Φ(1.96) from tables, 1 - 0.024997895148220435
        assert!((cdf(1.96) - 0.975_002_104_851_779_6).abs() < 1e-15);
        // deep tail keeps relative precision: Φ(-10) = 7.619853024160527e-24
        assert!((cdf(-10.0) / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.25, 0.5, 0.75, 0.9, 0.999_999] {
            let x = quantile(p);
            assert!((cdf(x) - p).abs() <= 1e-15 * p.max(1e-3), "p = {p}");
        }
    }

    #[test]
    fn upper_quartile() {
        // mpmath: findroot(ncdf(x) - 0.75) = 0.67448975019608174320...
        assert!((quantile(0.75) - 0.674_489_750_196_081_7).abs() < 1e-14);
    }
}
