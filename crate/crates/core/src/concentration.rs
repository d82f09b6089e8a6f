//! Stein-equation solution and Monte Carlo checks of the randomized
//! concentration inequality
//!
//! ```text
//! P(Δ1 ≤ W ≤ Δ2) ≤ 17(β2 + β3) + 5E|Δ2 − Δ1| + 2 Σ_i Σ_j E|ξ_i(Δ_j − Δ_j^{(i)})|
//! ```
//!
//! and of two self-normalized sub-Gaussian tail bounds.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::bounds::gaussian::{mills_psi, normal_cdf, normal_pdf, normal_tail, SQRT_2PI};
use crate::bounds::{delta1_parts, tilt_scale, Estimate};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::rng::{run_blocks, SeedStream};

/// f_x(w) solving f' − wf = I(w ≤ x) − Φ(x):
/// Ψ(−w)(1 − Φ(x)) for w ≤ x and Φ(x)Ψ(w) for w > x, with Ψ the Mills ratio.
pub fn stein_f(x: f64, w: f64) -> f64 {
    if w <= x {
        mills_psi(-w) * normal_tail(x)
    } else {
        normal_cdf(x) * mills_psi(w)
    }
}

/// ∂f_x(w)/∂x.
pub fn stein_f_partial_x(x: f64, w: f64) -> f64 {
    if w <= x {
        -mills_psi(-w) * normal_pdf(x)
    } else {
        mills_psi(w) * normal_pdf(x)
    }
}

/// Largest excess of each property over its bound on a grid (≤ 0 when it holds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteinPropertyReport {
    pub points: usize,
    /// max |w f_x(w)| − 1
    pub wf_excess: f64,
    /// max |f_x(w)| − 1
    pub f_excess: f64,
    /// max |w f(w) − (w+t) f(w+t)| − min{1, (|w| + √(2π)/4)|t|}
    pub difference_excess: f64,
    /// max |∂f_x/∂x| − 1
    pub partial_excess: f64,
    /// max |f' − wf − I(w ≤ x) + Φ(x)| by central differences, |w − x| > 0.01
    pub residual: f64,
}

impl SteinPropertyReport {
    pub fn holds(&self, tol: f64, residual_tol: f64) -> bool {
        self.wf_excess <= tol
            && self.f_excess <= tol
            && self.difference_excess <= tol
            && self.partial_excess <= tol
            && self.residual < residual_tol
    }
}

pub fn stein_property_check(xs: &[f64], ws: &[f64], ts: &[f64]) -> SteinPropertyReport {
    let mut r = SteinPropertyReport {
        points: 0,
        wf_excess: f64::NEG_INFINITY,
        f_excess: f64::NEG_INFINITY,
        difference_excess: f64::NEG_INFINITY,
        partial_excess: f64::NEG_INFINITY,
        residual: 0.0,
    };
    let h = 1e-5;
    for &x in xs {
        let phi_x = normal_cdf(x);
        for &w in ws {
            r.points += 1;
            let f = stein_f(x, w);
            r.wf_excess = r.wf_excess.max((w * f).abs() - 1.0);
            r.f_excess = r.f_excess.max(f.abs() - 1.0);
            r.partial_excess = r.partial_excess.max(stein_f_partial_x(x, w).abs() - 1.0);
            for &t in ts {
                let lhs = (w * f - (w + t) * stein_f(x, w + t)).abs();
                let rhs = 1f64.min((w.abs() + SQRT_2PI / 4.0) * t.abs());
                r.difference_excess = r.difference_excess.max(lhs - rhs);
            }
            if (w - x).abs() > 0.01 {
                let d = (stein_f(x, w + h) - stein_f(x, w - h)) / (2.0 * h);
                let ind = if w <= x { 1.0 } else { 0.0 };
                r.residual = r.residual.max((d - w * f - ind + phi_x).abs());
            }
        }
    }
    r
}

pub type DeltaFn = Arc<dyn Fn(&[f64]) -> (f64, f64) + Send + Sync>;
pub type LeaveOneOutFn = Arc<dyn Fn(&[f64], usize) -> (f64, f64) + Send + Sync>;

/// Band endpoints (Δ1, Δ2) as functions of ξ_1..ξ_n.
#[derive(Clone)]
pub enum DeltaChoice {
    Constants {
        a: f64,
        b: f64,
    },
    /// Δ1 = −c(V² − 1)², Δ2 = c(V² − 1)²; the leave-one-out versions drop ξ_i² from V².
    VSquaredBand {
        c: f64,
    },
    /// User endpoints and leave-one-out endpoints. The leave-one-out pair for
    /// index i must not depend on ξ_i; this cannot be checked.
    Custom {
        delta: DeltaFn,
        leave_one_out: LeaveOneOutFn,
    },
}

impl fmt::Debug for DeltaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaChoice::Constants { a, b } => write!(f, "constants({a},{b})"),
            DeltaChoice::VSquaredBand { c } => write!(f, "v-squared-band({c})"),
            DeltaChoice::Custom { .. } => write!(f, "custom"),
        }
    }
}

impl DeltaChoice {
    fn endpoints(&self, xi: &[f64], v2: f64) -> (f64, f64) {
        match self {
            DeltaChoice::Constants { a, b } => (*a, *b),
            DeltaChoice::VSquaredBand { c } => {
                let e = c * (v2 - 1.0).powi(2);
                (-e, e)
            }
            DeltaChoice::Custom { delta, .. } => delta(xi),
        }
    }

    fn leave_one_out(&self, xi: &[f64], v2: f64, i: usize) -> (f64, f64) {
        match self {
            DeltaChoice::Constants { a, b } => (*a, *b),
            DeltaChoice::VSquaredBand { c } => {
                let e = c * (v2 - xi[i] * xi[i] - 1.0).powi(2);
                (-e, e)
            }
            DeltaChoice::Custom { leave_one_out, .. } => leave_one_out(xi, i),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConcentrationConfig {
    pub dist: DistributionSpec,
    pub n: usize,
    pub delta: DeltaChoice,
    pub reps: usize,
    pub stream: SeedStream,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub label: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Σ E ξ_i² I(|ξ_i| > 1)
    pub beta2: f64,
    /// Σ E |ξ_i|³ I(|ξ_i| ≤ 1)
    pub beta3: f64,
    pub margin: f64,
    pub verdict: bool,
    pub independence_assumed: bool,
}

/// Estimates both sides of the concentration inequality with ξ_i = X_i/(σ√n).
pub fn concentration_check(cfg: &ConcentrationConfig) -> Result<ConcentrationReport> {
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if cfg.reps < 1000 {
        return Err(Error::InvalidParameter(format!(
            "at least 1000 replications needed, got {}",
            cfg.reps
        )));
    }
    let n = cfg.n;
    let scale = 1.0 / (cfg.dist.sd() * (n as f64).sqrt());
    let (d11, d12) = delta1_parts(&cfg.dist, tilt_scale(&cfg.dist, n, 1.0));
    let (beta2, beta3) = (n as f64 * d11, n as f64 * d12);
    let parts = run_blocks(cfg.reps, cfg.stream, |count, rng| {
        let mut xi = vec![0.0; n];
        let mut acc = [0.0; 3];
        for _ in 0..count {
            cfg.dist.fill(rng, &mut xi);
            xi.iter_mut().for_each(|v| *v *= scale);
            let w: f64 = xi.iter().sum();
            let v2: f64 = xi.iter().map(|v| v * v).sum();
            let (d1, d2) = cfg.delta.endpoints(&xi, v2);
            if d1 <= w && w <= d2 {
                acc[0] += 1.0;
            }
            let mut r = 5.0 * (d2 - d1).abs();
            for i in 0..n {
                let (l1, l2) = cfg.delta.leave_one_out(&xi, v2, i);
                r += 2.0 * xi[i].abs() * ((d1 - l1).abs() + (d2 - l2).abs());
            }
            acc[1] += r;
            acc[2] += r * r;
        }
        acc
    });
    let t = parts.iter().fold([0.0; 3], |mut s, a| {
        for k in 0..3 {
            s[k] += a[k];
        }
        s
    });
    let reps = cfg.reps as f64;
    let p = t[0] / reps;
    let m = t[1] / reps;
    let lhs = Estimate {
        value: p,
        se: (p * (1.0 - p) / reps).sqrt(),
    };
    let rhs = Estimate {
        value: 17.0 * (beta2 + beta3) + m,
        se: ((t[2] / reps - m * m).max(0.0) / reps).sqrt(),
    };
    let slack = 3.0 * (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
    Ok(ConcentrationReport {
        label: format!("{} n={} {:?}", cfg.dist, n, cfg.delta),
        lhs,
        rhs,
        beta2,
        beta3,
        margin: rhs.value - lhs.value,
        verdict: lhs.value <= rhs.value + slack,
        independence_assumed: matches!(cfg.delta, DeltaChoice::Custom { .. }),
    })
}

/// The 20 configurations of the standing suite: five laws, n ∈ {10, 50} and
/// two band choices, each on its own substream of `stream`.
pub fn concentration_suite(reps: usize, stream: SeedStream) -> Vec<ConcentrationConfig> {
    let laws = [
        "normal",
        "exponential-centered",
        "uniform-centered",
        "rademacher",
        "two-point(p=0.2)",
    ];
    let mut out = vec![];
    for (li, law) in laws.iter().enumerate() {
        let dist: DistributionSpec = law.parse().expect("built-in law");
        for n in [10usize, 50] {
            for (di, delta) in [
                DeltaChoice::Constants { a: -0.05, b: 0.05 },
                DeltaChoice::VSquaredBand { c: 1.0 },
            ]
            .into_iter()
            .enumerate()
            {
                out.push(ConcentrationConfig {
                    dist: dist.clone(),
                    n,
                    delta,
                    reps,
                    stream: stream.derive(&[li as u64, n as u64, di as u64]),
                });
            }
        }
    }
    out
}

pub fn run_concentration_suite(reps: usize, stream: SeedStream) -> Result<Vec<ConcentrationReport>> {
    concentration_suite(reps, stream)
        .iter()
        .map(concentration_check)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgaussianPoint {
    pub x: f64,
    /// P(|S| ≥ x D_n), D_n² = V² + 5B²
    pub lsw: Estimate,
    pub lsw_bound: f64,
    /// P(|W| ≥ x (4 + V))
    pub w_tail: Estimate,
    pub w_tail_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgaussianReport {
    pub law: String,
    pub n: usize,
    /// Computed by enumerating every outcome rather than sampling.
    pub exact: bool,
    pub points: Vec<SubgaussianPoint>,
}

impl SubgaussianReport {
    pub fn holds(&self) -> bool {
        self.points.iter().all(|p| p.holds)
    }
}

/// Largest number of outcomes enumerated for a discrete law.
const ENUMERATION_CAP: usize = 1 << 20;

/// Both sub-Gaussian bounds with ξ_i = X_i/(σ√n) (so B² = 1) at each grid
/// point. Discrete laws with at most 2^20 joint outcomes are enumerated.
pub fn subgaussian_check(
    dist: &DistributionSpec,
    n: usize,
    x_grid: &[f64],
    reps: usize,
    stream: SeedStream,
) -> Result<SubgaussianReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let scale = 1.0 / (dist.sd() * (n as f64).sqrt());
    let k = x_grid.len();
    // per grid point: [lsw hits, w-tail hits]
    let score = |xi: &[f64], out: &mut [f64], weight: f64| {
        let s: f64 = xi.iter().sum();
        let v2: f64 = xi.iter().map(|v| v * v).sum();
        let d = (v2 + 5.0).sqrt();
        let v = v2.sqrt();
        for (j, &x) in x_grid.iter().enumerate() {
            if s.abs() >= x * d {
                out[2 * j] += weight;
            }
            if s.abs() >= x * (4.0 + v) {
                out[2 * j + 1] += weight;
            }
        }
    };

    let exact_outcomes = dist
        .atoms()
        .and_then(|a| a.len().checked_pow(n as u32))
        .filter(|&c| c <= ENUMERATION_CAP);
    let (probs, se_of): (Vec<f64>, Box<dyn Fn(f64) -> f64>) =
        if let (Some(total), Some(atoms)) = (exact_outcomes, dist.atoms()) {
            let mut acc = vec![0.0; 2 * k];
            let mut xi = vec![0.0; n];
            let a = atoms.len();
            for code in 0..total {
                let mut c = code;
                let mut w = 1.0;
                for v in xi.iter_mut() {
                    let (val, p) = atoms[c % a];
                    c /= a;
                    *v = val * scale;
                    w *= p;
                }
                score(&xi, &mut acc, w);
            }
            (acc, Box::new(|_| 0.0))
        } else {
            if reps < 100 {
                return Err(Error::InvalidParameter(format!(
                    "at least 100 replications needed, got {reps}"
                )));
            }
            let parts = run_blocks(reps, stream, |count, rng| {
                let mut acc = vec![0.0; 2 * k];
                let mut xi = vec![0.0; n];
                for _ in 0..count {
                    dist.fill(rng, &mut xi);
                    xi.iter_mut().for_each(|v| *v *= scale);
                    score(&xi, &mut acc, 1.0);
                }
                acc
            });
            let mut acc = vec![0.0; 2 * k];
            for p in parts {
                for (a, b) in acc.iter_mut().zip(p) {
                    *a += b;
                }
            }
            let r = reps as f64;
            acc.iter_mut().for_each(|v| *v /= r);
            (acc, Box::new(move |p: f64| (p * (1.0 - p) / r).sqrt()))
        };

    let points = x_grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let lsw = Estimate {
                value: probs[2 * j],
                se: se_of(probs[2 * j]),
            };
            let w_tail = Estimate {
                value: probs[2 * j + 1],
                se: se_of(probs[2 * j + 1]),
            };
            let lsw_bound = 2f64.sqrt() * (-x * x / 8.0).exp();
            let w_tail_bound = 4.0 * (-x * x / 2.0).exp();
            SubgaussianPoint {
                x,
                lsw,
                lsw_bound,
                w_tail,
                w_tail_bound,
                holds: lsw.value <= lsw_bound + 3.0 * lsw.se && w_tail.value <= w_tail_bound + 3.0 * w_tail.se,
            }
        })
        .collect();
    Ok(SubgaussianReport {
        law: dist.to_string(),
        n,
        exact: exact_outcomes.is_some(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let k = ((hi - lo) / step).round() as usize;
        (0..=k).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn stein_examples() {
        assert!((stein_f(0.0, 0.0) - 0.626_657_068_657_750_1).abs() < 1e-15);
        // f_0(w) = Ψ(|w|)/2 ~ 1/(2|w|) as w → −∞
        assert!((stein_f(0.0, -10.0) - mills_psi(10.0) / 2.0).abs() < 1e-15);
        assert!((stein_f(0.0, -1e4) * 2e4 - 1.0).abs() < 1e-7);
        assert!(stein_f(0.0, 40.0).is_finite());
        // direct formula away from overflow
        let (x, w) = (0.7, -1.3);
        let direct = SQRT_2PI * (w * w / 2.0f64).exp() * normal_cdf(w) * (1.0 - normal_cdf(x));
        assert!((stein_f(x, w) - direct).abs() < 1e-14);
        let (x, w) = (-0.4, 1.1);
        let direct = SQRT_2PI * (w * w / 2.0f64).exp() * normal_cdf(x) * (1.0 - normal_cdf(w));
        assert!((stein_f(x, w) - direct).abs() < 1e-14);
        // ∂/∂x against a difference quotient
        let h = 1e-6;
        for (x, w) in [(0.3, -1.0), (-0.5, 2.0)] {
            let fd = (stein_f(x + h, w) - stein_f(x - h, w)) / (2.0 * h);
            assert!((fd - stein_f_partial_x(x, w)).abs() < 1e-8);
        }
    }

    #[test]
    fn stein_properties_on_grid() {
        let g = grid(-6.0, 6.0, 0.1);
        let ts = grid(-3.0, 3.0, 0.25);
        let r = stein_property_check(&g, &g, &ts);
        assert!(r.holds(1e-9, 1e-6), "{r:?}");
        // (w, t) = (2, 0.5) at x = 1
        let lhs = (2.0 * stein_f(1.0, 2.0) - 2.5 * stein_f(1.0, 2.5)).abs();
        assert!(lhs < 1f64.min((2.0 + SQRT_2PI / 4.0) * 0.5));
    }

    #[test]
    fn constant_band() {
        let cfg = ConcentrationConfig {
            dist: DistributionSpec::standard_normal(),
            n: 20,
            delta: DeltaChoice::Constants { a: -1.0, b: 1.0 },
            reps: 2000,
            stream: SeedStream::new(1, 0),
        };
        let r = concentration_check(&cfg).unwrap();
        assert!(r.rhs.value >= 10.0 && r.rhs.se == 0.0);
        assert!(r.verdict && !r.independence_assumed);
        let rev = ConcentrationConfig {
            delta: DeltaChoice::Constants { a: 1.0, b: -1.0 },
            ..cfg
        };
        assert_eq!(concentration_check(&rev).unwrap().lhs.value, 0.0);
    }

    #[test]
    fn v_band_normal() {
        let cfg = ConcentrationConfig {
            dist: DistributionSpec::standard_normal(),
            n: 50,
            delta: DeltaChoice::VSquaredBand { c: 1.0 },
            reps: 20_000,
            stream: SeedStream::new(2, 0),
        };
        let r = concentration_check(&cfg).unwrap();
        assert!(r.verdict && r.margin > 0.0, "{r:?}");
    }

    #[test]
    fn custom_band_flags_independence() {
        let cfg = ConcentrationConfig {
            dist: DistributionSpec::standard_normal(),
            n: 10,
            delta: DeltaChoice::Custom {
                delta: Arc::new(|_xi: &[f64]| (-0.2, 0.2)),
                leave_one_out: Arc::new(|_xi: &[f64], _i| (-0.2, 0.2)),
            },
            reps: 1000,
            stream: SeedStream::new(3, 0),
        };
        let r = concentration_check(&cfg).unwrap();
        assert!(r.independence_assumed && r.verdict);
    }

    #[test]
    fn suite_has_twenty_configs() {
        assert_eq!(concentration_suite(1000, SeedStream::new(0, 0)).len(), 20);
    }

    #[test]
    fn subgaussian_rademacher_exact() {
        let r = subgaussian_check(
            &DistributionSpec::rademacher(),
            10,
            &[0.0, 1.0, 2.0, 3.0],
            0,
            SeedStream::new(0, 0),
        )
        .unwrap();
        assert!(r.exact && r.holds());
        assert_eq!(r.points[0].lsw.value, 1.0);
        assert!(r.points[0].lsw_bound > 1.0);
        // S = (2k − 10)/√10 and D² = 6: |S| ≥ √6 ⇔ |2k − 10| ≥ 7.75, i.e. k ≤ 1 or k ≥ 9
        let want = 2.0 * (1.0 + 10.0) / 1024.0;
        assert!((r.points[1].lsw.value - want).abs() < 1e-15);
    }

    #[test]
    fn subgaussian_normal_mc() {
        let d = DistributionSpec::standard_normal();
        let r = subgaussian_check(&d, 100, &[1.0, 2.0, 3.0], 20_000, SeedStream::new(4, 0)).unwrap();
        assert!(!r.exact && r.holds());
        let p = r.points[1];
        assert!((p.lsw_bound - 2f64.sqrt() * (-0.5f64).exp()).abs() < 1e-15);
        assert!(p.lsw.value < 0.1);
    }
}
