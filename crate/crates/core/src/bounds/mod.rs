//! Truncated-moment error functionals and moderate-deviation envelopes.
//!
//! For a summand law with ξ_i = Z_i/(σ_Z √n) and ξ_{i,x} = x ξ_i:
//!
//! ```text
//! δ_x  = E ξ_x² I(|ξ_x| > 1) + E |ξ_x|³ I(|ξ_x| ≤ 1)
//! L_nx = n δ_x
//! I_nx = (E exp(ξ_x − ξ_x²/2))^n
//! ```
//!
//! All one-variable functionals are written for X = c·Z with c = x/(σ_Z √n),
//! so the same code serves the single-variable lemma checks.

pub mod gaussian;
pub mod remainders;

use serde::Serialize;

use crate::distributions::Moment;
use crate::error::{Error, Result};
use crate::summand::Summand;

pub use remainders::{estimate_breve_rnx, estimate_rnx, RemainderConfig};

/// c = x/(σ_Z √n), the factor turning Z into ξ_x.
pub fn tilt_scale<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    x / (s.z_variance().sqrt() * (n as f64).sqrt())
}

/// δ₁ for X = c·Z: E X² I(|X| > 1) + E |X|³ I(|X| ≤ 1).
pub fn delta1<S: Summand>(s: &S, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let cut = 1.0 / c;
    s.expect_z(
        |z| {
            let v = (c * z).abs();
            if v > 1.0 {
                v * v
            } else {
                v * v * v
            }
        },
        &[cut],
        Some(&[0.0, 0.0, c * c]),
    )
}

/// The two halves (δ₁₁, δ₁₂) of δ₁.
pub fn delta1_parts<S: Summand>(s: &S, c: f64) -> (f64, f64) {
    if c == 0.0 {
        return (0.0, 0.0);
    }
    let cut = 1.0 / c;
    let outer = s.expect_z(
        |z| {
            let v = (c * z).abs();
            if v > 1.0 {
                v * v
            } else {
                0.0
            }
        },
        &[cut],
        Some(&[0.0, 0.0, c * c]),
    );
    let inner = s.expect_z(
        |z| {
            let v = (c * z).abs();
            if v > 1.0 {
                0.0
            } else {
                v * v * v
            }
        },
        &[cut],
        Some(&[0.0]),
    );
    (outer, inner)
}

/// δ_{i,x} for the i.i.d. summand law.
pub fn delta_ix<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    delta1(s, tilt_scale(s, n, x))
}

pub fn l_nx<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    n as f64 * delta_ix(s, n, x)
}

/// L at tilt 1 + x.
pub fn l_n_1px<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    l_nx(s, n, 1.0 + x)
}

/// Upper bound for L_{n,1+x} on 0 ≤ x ≤ 1:
/// (1+x)² n E ξ² I(|ξ| > 1/2) + (1+x)³ n E |ξ|³ I(|ξ| ≤ 1).
pub fn l_n_1px_chain_bound<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    let c = tilt_scale(s, n, 1.0);
    let nf = n as f64;
    let outer = s.expect_z(
        |z| {
            let v = (c * z).abs();
            if v > 0.5 {
                v * v
            } else {
                0.0
            }
        },
        &[0.5 / c],
        Some(&[0.0, 0.0, c * c]),
    );
    let (_, inner) = delta1_parts(s, c);
    nf * ((1.0 + x).powi(2) * outer + (1.0 + x).powi(3) * inner)
}

/// E exp(λ X − θ X²) for X = c·Z.
pub fn mgf_quadratic<S: Summand>(s: &S, c: f64, lambda: f64, theta: f64) -> f64 {
    if c == 0.0 {
        return 1.0;
    }
    // maximum of the exponent sits at X = λ/(2θ)
    let peak = if theta > 0.0 {
        lambda / (2.0 * theta) / c
    } else {
        1.0 / c
    };
    s.expect_z(
        |z| {
            let v = c * z;
            (lambda * v - theta * v * v).exp()
        },
        &[peak, 1.0 / c],
        None,
    )
}

/// E e^Y with Y = ξ_x − ξ_x²/2.
pub fn mgf_y<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    mgf_quadratic(s, tilt_scale(s, n, x), 1.0, 0.5)
}

pub fn i_nx<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    mgf_y(s, n, x).powi(n as i32)
}

/// ln I_nx, safe when I_nx under- or overflows.
pub fn log_i_nx<S: Summand>(s: &S, n: usize, x: f64) -> f64 {
    n as f64 * mgf_y(s, n, x).ln()
}

/// e^{−5.5δ} ≤ E e^Y ≤ e^{2.65δ} for one factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfBracket {
    pub delta: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

pub fn mgf_bracket<S: Summand>(s: &S, n: usize, x: f64) -> MgfBracket {
    let delta = delta_ix(s, n, x);
    let value = mgf_y(s, n, x);
    let lower = (-5.5 * delta).exp();
    let upper = (2.65 * delta).exp();
    MgfBracket {
        delta,
        lower,
        value,
        upper,
        holds: lower <= value && value <= upper,
    }
}

/// Largest |E e^{λX−θX²} − 1 − (λ²/2 − θ)EX²| / δ₁ over the box
/// 0 ≤ λ ≤ 4, 0.25 ≤ θ ≤ 4 (step 0.25) for X = c·Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticMgfFit {
    pub scale: f64,
    pub delta1: f64,
    pub constant: f64,
    pub worst_lambda: f64,
    pub worst_theta: f64,
}

pub fn quadratic_mgf_constant<S: Summand>(s: &S, c: f64) -> QuadraticMgfFit {
    let d1 = delta1(s, c);
    let ex2 = c * c * s.z_variance();
    let mut fit = QuadraticMgfFit {
        scale: c,
        delta1: d1,
        constant: 0.0,
        worst_lambda: 0.0,
        worst_theta: 0.0,
    };
    for i in 0..=16 {
        let lambda = 0.25 * i as f64;
        for j in 1..=16 {
            let theta = 0.25 * j as f64;
            let resid = (mgf_quadratic(s, c, lambda, theta) - 1.0 - (lambda * lambda / 2.0 - theta) * ex2).abs();
            let ratio = resid / d1;
            if ratio > fit.constant {
                fit.constant = ratio;
                fit.worst_lambda = lambda;
                fit.worst_theta = theta;
            }
        }
    }
    fit
}

/// Both sides of the four inequalities on E(Z e^Y), E(Z² e^Y), E(|YZ| e^Y)
/// and E(|Y| Z² e^Y) with Y = X − X²/2 and Z = X² − EX², for X = c·Z_s.
pub fn truncated_product_checks<S: Summand>(s: &S, c: f64) -> [(f64, f64); 4] {
    let ex2 = c * c * s.z_variance();
    let (d11, d12) = delta1_parts(s, c);
    let pts = [1.0 / c];
    let e = |f: &dyn Fn(f64, f64) -> f64| {
        s.expect_z(
            |z| {
                let v = c * z;
                let y = v - v * v / 2.0;
                f(y, v * v - ex2) * y.exp()
            },
            &pts,
            None,
        )
    };
    [
        (e(&|_, q| q).abs(), 4.2 * d11 + 1.5 * d12),
        (e(&|_, q| q * q), 4.0 * d11 + 2.0 * d12 + 2.0 * d11 * d11),
        (e(&|y, q| (y * q).abs()), 2.0 * d11 + d12),
        (e(&|y, q| y.abs() * q * q), 3.1 * d11 + d12 + d11 * d11),
    ]
}

/// C (1+x)³ E|X|³ / (σ³ √n) for i.i.d. summands.
pub fn envelope_jsw(n: usize, x: f64, abs_third: Moment, variance: f64, c: f64) -> Result<f64> {
    if !abs_third.is_finite() {
        return Err(Error::InfiniteMoment("E|X|^3 is infinite".into()));
    }
    Ok(c * (1.0 + x).powi(3) * abs_third.value() / (variance.powf(1.5) * (n as f64).sqrt()))
}

/// Upper end (ΣEX²)^{1/2}/(ΣE|X|³)^{1/3} of the x-range for [`envelope_jsw`].
pub fn jsw_x_max(n: usize, abs_third: Moment, variance: f64) -> f64 {
    let nf = n as f64;
    (nf * variance).sqrt() / (nf * abs_third.value()).cbrt()
}

/// C {(σ_p/σ)^p (1+x)^p / n^{p/2−1} + (√a_m + σ_h/σ)(1+x)³/√n}, for p ∈ (2, 3].
pub fn envelope_ustat(n: usize, x: f64, p: f64, sigma_p_ratio: f64, sigma_h_ratio: f64, a_m: f64, c: f64) -> f64 {
    let nf = n as f64;
    let heavy = sigma_p_ratio.powf(p) * (1.0 + x).powf(p) / nf.powf(p / 2.0 - 1.0);
    let smooth = (a_m.sqrt() + sigma_h_ratio) * (1.0 + x).powi(3) / nf.sqrt();
    c * (heavy + smooth)
}

/// c1 · min{(σ/σ_p) n^{1/2−1/p}, (n/a_m)^{1/6}}.
pub fn ustat_x_max(n: usize, p: f64, sigma_p_ratio: f64, a_m: f64, c1: f64) -> f64 {
    let nf = n as f64;
    c1 * (nf.powf(0.5 - 1.0 / p) / sigma_p_ratio).min((nf / a_m).powf(1.0 / 6.0))
}

pub fn in_ustat_range(n: usize, x: f64, p: f64, sigma_p_ratio: f64, a_m: f64, c1: f64) -> bool {
    x >= 0.0 && x <= ustat_x_max(n, p, sigma_p_ratio, a_m, c1)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideConditions {
    /// max_i δ_{i,x} ≤ 1
    pub c1_condition: bool,
    /// L_nx ≤ c1 x²
    pub rc_condition: bool,
    pub c1_param: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub x: f64,
    pub n: usize,
    pub delta_x: f64,
    pub l_nx: f64,
    pub i_nx: f64,
    pub side_conditions: SideConditions,
    pub envelope_jsw: Option<f64>,
    pub envelope_ustat: Option<f64>,
    pub r_nx: Option<Estimate>,
    pub breve_r: Option<Estimate>,
}

/// The deterministic part of a report; Monte Carlo fields are left empty.
pub fn bound_report<S: Summand>(s: &S, n: usize, x: f64, c1_param: f64) -> BoundReport {
    let delta_x = delta_ix(s, n, x);
    let l = n as f64 * delta_x;
    BoundReport {
        x,
        n,
        delta_x,
        l_nx: l,
        i_nx: i_nx(s, n, x),
        side_conditions: SideConditions {
            c1_condition: delta_x <= 1.0,
            rc_condition: l <= c1_param * x * x,
            c1_param,
        },
        envelope_jsw: None,
        envelope_ustat: None,
        r_nx: None,
        breve_r: None,
    }
}
