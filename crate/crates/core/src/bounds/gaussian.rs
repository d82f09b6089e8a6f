//! Standard normal density, tail and Mills ratio.

use std::f64::consts::FRAC_1_SQRT_2;

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(x).
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate in relative terms deep into the tail.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio Ψ(x) = (1 − Φ(x)) / φ(x) = √(2π) e^{x²/2} (1 − Φ(x)).
///
/// Never forms e^{x²/2} on its own; beyond x = 26 the continued fraction
/// 1/(x + 1/(x + 2/(x + …))) takes over from the direct ratio.
pub fn mills_psi(x: f64) -> f64 {
    if x < 26.0 {
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            return f64::INFINITY;
        }
        return normal_tail(x) / pdf;
    }
    // Lentz evaluation of x + 1/(x + 2/(x + 3/(x + ...)))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// √(2π)
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tail_values() {
        assert_eq!(normal_tail(0.0), 0.5);
        // mpmath, 30 digits
        let t1 = 0.158_655_253_931_457_05;
        assert!((normal_tail(1.0) / t1 - 1.0).abs() < 1e-14);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!(((2.0 * PI).sqrt() - SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn mills_branches_join() {
        let below = normal_tail(25.999_999) / normal_pdf(25.999_999);
        let above = mills_psi(26.000_001);
        assert!((below / above - 1.0).abs() < 1e-7);
        // asymptotic 1/x - 1/x^3 + 3/x^5
        let x = 40.0f64;
        let asym = 1.0 / x - 1.0 / x.powi(3) + 3.0 / x.powi(5) - 15.0 / x.powi(7);
        assert!((mills_psi(x) / asym - 1.0).abs() < 1e-10);
    }
}
