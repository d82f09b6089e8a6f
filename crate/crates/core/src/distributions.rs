//! Centered data-generating laws.
//!
//! Every family is shifted at construction so that its mean is exactly zero.
//! Continuous laws expose a density and CDF; discrete laws expose their atoms.
//! Expectations `E f(X)` go through [`DistributionSpec::expect`], which sums
//! atoms exactly or runs adaptive quadrature over a truncated window. The
//! Pareto family's polynomial tail is handled by closed-form partial moments
//! when the caller states the integrand's polynomial form beyond the window.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::gaussian::{normal_cdf, normal_pdf, normal_tail};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_upper_tail, Tolerance};
use crate::rng::{SeedStream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Normal {
        sigma: f64,
    },
    /// `E - 1/rate` with `E ~ Exp(rate)`.
    ExponentialCentered {
        rate: f64,
    },
    Rademacher,
    /// Uniform on `[-half_width, half_width]`.
    UniformCentered {
        half_width: f64,
    },
    /// `P - E P` with `P` Pareto(alpha) on `[scale, ∞)`.
    ParetoCentered {
        alpha: f64,
        scale: f64,
    },
    /// Standardized two-point law: `√((1-p)/p)` w.p. `p`, `-√(p/(1-p))` otherwise.
    TwoPoint {
        p: f64,
    },
}

/// A moment value together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Moment {
    Exact(f64),
    Numeric(f64),
    Infinite,
}

impl Moment {
    pub fn value(&self) -> f64 {
        match *self {
            Moment::Exact(v) | Moment::Numeric(v) => v,
            Moment::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Moment::Infinite)
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Moment {
        match self {
            Moment::Exact(v) => Moment::Exact(f(v)),
            Moment::Numeric(v) => Moment::Numeric(f(v)),
            Moment::Infinite => Moment::Infinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMoments {
    pub abs_third: Moment,
    pub fourth: Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub variance: f64,
    pub analytic: AnalyticMoments,
    atoms: Vec<(f64, f64)>,
}

/// `make_distribution` entry point: validates parameters and fills moments.
pub fn make_distribution(family: Family) -> Result<DistributionSpec> {
    DistributionSpec::new(family)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl DistributionSpec {
    pub fn new(family: Family) -> Result<Self> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(format!("{what} must be positive and finite, got {v}")))
            }
        };
        let atoms = match family {
            Family::Normal { sigma } => {
                positive(sigma, "sigma")?;
                vec![]
            }
            Family::ExponentialCentered { rate } => {
                positive(rate, "rate")?;
                vec![]
            }
            Family::Rademacher => vec![(-1.0, 0.5), (1.0, 0.5)],
            Family::UniformCentered { half_width } => {
                positive(half_width, "half_width")?;
                vec![]
            }
            Family::ParetoCentered { alpha, scale } => {
                positive(scale, "scale")?;
                if !(alpha > 2.0) || !alpha.is_finite() {
                    return Err(bad(format!(
                        "pareto tail index must exceed 2 for finite variance, got {alpha}"
                    )));
                }
                vec![]
            }
            Family::TwoPoint { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(bad(format!("two-point p must lie in (0,1), got {p}")));
                }
                vec![(-(p / (1.0 - p)).sqrt(), 1.0 - p), (((1.0 - p) / p).sqrt(), p)]
            }
        };
        let mut spec = DistributionSpec {
            family,
            variance: 0.0,
            analytic: AnalyticMoments {
                abs_third: Moment::Infinite,
                fourth: Moment::Infinite,
            },
            atoms,
        };
        spec.variance = spec.raw_moment(2).value();
        spec.analytic = AnalyticMoments {
            abs_third: spec.abs_moment(3.0),
            fourth: spec.raw_moment(4),
        };
        Ok(spec)
    }

    pub fn normal(sigma: f64) -> Result<Self> {
        Self::new(Family::Normal { sigma })
    }

    pub fn standard_normal() -> Self {
        Self::new(Family::Normal { sigma: 1.0 }).expect("valid")
    }

    pub fn rademacher() -> Self {
        Self::new(Family::Rademacher).expect("valid")
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Normal { .. } => "normal",
            Family::ExponentialCentered { .. } => "exponential-centered",
            Family::Rademacher => "rademacher",
            Family::UniformCentered { .. } => "uniform-centered",
            Family::ParetoCentered { .. } => "pareto-centered",
            Family::TwoPoint { .. } => "two-point",
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_discrete(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Support points and masses of a discrete law.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        if self.is_discrete() {
            Some(&self.atoms)
        } else {
            None
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(
            self.family,
            Family::Normal { .. } | Family::Rademacher | Family::UniformCentered { .. }
        ) || matches!(self.family, Family::TwoPoint { p } if p == 0.5)
    }

    /// Closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self.family {
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::ExponentialCentered { rate } => (-1.0 / rate, f64::INFINITY),
            Family::UniformCentered { half_width } => (-half_width, half_width),
            Family::ParetoCentered { alpha, scale } => (scale - pareto_mean(alpha, scale), f64::INFINITY),
            Family::Rademacher | Family::TwoPoint { .. } => (self.atoms[0].0, self.atoms[self.atoms.len() - 1].0),
        }
    }

    pub fn density(&self, y: f64) -> Result<f64> {
        Ok(match self.family {
            Family::Normal { sigma } => normal_pdf(y / sigma) / sigma,
            Family::ExponentialCentered { rate } => {
                let t = y + 1.0 / rate;
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
            Family::UniformCentered { half_width } => {
                if y.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            Family::ParetoCentered { alpha, scale } => {
                let p = y + pareto_mean(alpha, scale);
                if p < scale {
                    0.0
                } else {
                    alpha * scale.powf(alpha) * p.powf(-alpha - 1.0)
                }
            }
            Family::Rademacher | Family::TwoPoint { .. } => return Err(Error::DiscreteLaw(self.name().into())),
        })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y == f64::INFINITY {
            return 1.0;
        }
        if y == f64::NEG_INFINITY {
            return 0.0;
        }
        match self.family {
            Family::Normal { sigma } => normal_cdf(y / sigma),
            Family::ExponentialCentered { rate } => {
                let t = y + 1.0 / rate;
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            Family::UniformCentered { half_width } => ((y + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
            Family::ParetoCentered { alpha, scale } => {
                let p = y + pareto_mean(alpha, scale);
                if p <= scale {
                    0.0
                } else {
                    1.0 - (scale / p).powf(alpha)
                }
            }
            Family::Rademacher | Family::TwoPoint { .. } => self
                .atoms
                .iter()
                .filter(|a| a.0 <= y)
                .map(|a| a.1)
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// P(X > y), computed without cancellation in the upper tail.
    pub fn sf(&self, y: f64) -> f64 {
        match self.family {
            Family::Normal { sigma } => normal_tail(y / sigma),
            Family::ExponentialCentered { rate } => {
                let t = y + 1.0 / rate;
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            Family::ParetoCentered { alpha, scale } => {
                let p = y + pareto_mean(alpha, scale);
                if p <= scale {
                    1.0
                } else {
                    (scale / p).powf(alpha)
                }
            }
            _ => 1.0 - self.cdf(y),
        }
    }

    /// Draws one value.
    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self.family {
            Family::Normal { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            Family::ExponentialCentered { rate } => {
                let e: f64 = rng.sample(Exp1);
                (e - 1.0) / rate
            }
            Family::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Family::UniformCentered { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            Family::ParetoCentered { alpha, scale } => {
                let u: f64 = rng.random();
                scale * (1.0 - u).powf(-1.0 / alpha) - pareto_mean(alpha, scale)
            }
            Family::TwoPoint { p } => {
                if rng.random::<f64>() < p {
                    self.atoms[1].0
                } else {
                    self.atoms[0].0
                }
            }
        }
    }

    pub fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.draw(rng);
        }
    }

    /// `n` draws from the start of `stream`.
    pub fn sample(&self, n: usize, stream: SeedStream) -> Vec<f64> {
        let mut rng = stream.rng();
        let mut out = vec![0.0; n];
        self.fill(&mut rng, &mut out);
        out
    }

    /// E f(X). `breaks` are points where `f` is not smooth.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> f64 {
        self.expect_with_tail(f, breaks, None)
    }

    /// E f(X), where `tail_poly = [c0, c1, c2, ...]` states that
    /// `f(y) = Σ c_k y^k` for all `y` beyond every break point. Only heavy
    /// tailed laws use it; for the others the window already holds all but a
    /// negligible part of the mass.
    pub fn expect_with_tail<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64], tail_poly: Option<&[f64]>) -> f64 {
        if let Some(atoms) = self.atoms() {
            return atoms.iter().map(|&(a, p)| p * f(a)).sum();
        }
        let tol = Tolerance::default();
        let (lo, hi, mut pts) = self.window();
        pts.extend_from_slice(breaks);
        let dens = |y: f64| self.density(y).unwrap_or(0.0);
        match self.family {
            Family::ParetoCentered { alpha, scale } => {
                let last = breaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let top = hi.max(last);
                let body = integrate(|y| f(y) * dens(y), lo, top, &pts, tol);
                let tail = match tail_poly {
                    Some(c) => c
                        .iter()
                        .enumerate()
                        .map(|(k, &ck)| {
                            if ck == 0.0 {
                                0.0
                            } else {
                                ck * pareto_upper_partial(alpha, scale, k as u32, top)
                            }
                        })
                        .sum(),
                    None => {
                        // the substitution needs a positive start
                        let shift = top.max(1.0);
                        let head = if shift > top {
                            integrate(|y| f(y) * dens(y), top, shift, &[], tol)
                        } else {
                            0.0
                        };
                        head + integrate_upper_tail(|y| f(y) * dens(y), shift, tol)
                    }
                };
                body + tail
            }
            _ => integrate(|y| f(y) * dens(y), lo, hi, &pts, tol),
        }
    }

    /// Numeric integration window and interior nodes for continuous laws.
    pub(crate) fn window(&self) -> (f64, f64, Vec<f64>) {
        match self.family {
            Family::Normal { sigma } => {
                let mut pts = vec![0.0];
                for k in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
                    pts.push(k * sigma);
                    pts.push(-k * sigma);
                }
                (-40.0 * sigma, 40.0 * sigma, pts)
            }
            Family::ExponentialCentered { rate } => {
                let lo = -1.0 / rate;
                let pts = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
                    .iter()
                    .map(|k| lo + k / rate)
                    .collect();
                (lo, lo + 64.0 / rate, pts)
            }
            Family::UniformCentered { half_width } => (-half_width, half_width, vec![0.0]),
            Family::ParetoCentered { alpha, scale } => {
                let lo = scale - pareto_mean(alpha, scale);
                let pts = (1..=10)
                    .map(|k| lo + scale * ((1u64 << k) as f64 - 1.0) / 8.0)
                    .collect();
                (lo, lo + 1024.0 * scale, pts)
            }
            Family::Rademacher | Family::TwoPoint { .. } => {
                let (a, b) = (self.atoms[0].0, self.atoms[self.atoms.len() - 1].0);
                (a, b, vec![])
            }
        }
    }

    /// E X^k for integer k ≤ 4.
    pub fn raw_moment(&self, k: u32) -> Moment {
        if let Some(atoms) = self.atoms() {
            return Moment::Exact(atoms.iter().map(|&(a, p)| p * a.powi(k as i32)).sum());
        }
        match self.family {
            Family::Normal { sigma } => Moment::Exact(match k {
                0 => 1.0,
                2 => sigma * sigma,
                4 => 3.0 * sigma.powi(4),
                _ if k % 2 == 1 => 0.0,
                _ => double_factorial(k - 1) * sigma.powi(k as i32),
            }),
            Family::ExponentialCentered { rate } => {
                // central moments of Exp(1): 1, 0, 1, 2, 9
                let c = [1.0, 0.0, 1.0, 2.0, 9.0];
                match c.get(k as usize) {
                    Some(v) => Moment::Exact(v / rate.powi(k as i32)),
                    None => Moment::Numeric(self.expect(|y| y.powi(k as i32), &[])),
                }
            }
            Family::UniformCentered { half_width } => Moment::Exact(if k % 2 == 1 {
                0.0
            } else {
                half_width.powi(k as i32) / (k as f64 + 1.0)
            }),
            Family::ParetoCentered { alpha, scale } => {
                if (k as f64) >= alpha {
                    return Moment::Infinite;
                }
                // E (P - mu)^k by binomial expansion of the raw Pareto moments
                let mu = pareto_mean(alpha, scale);
                let mut s = 0.0;
                for j in 0..=k {
                    let ep = alpha * scale.powi(j as i32) / (alpha - j as f64);
                    s += binom(k, j) * ep * (-mu).powi((k - j) as i32);
                }
                Moment::Exact(s)
            }
            Family::Rademacher | Family::TwoPoint { .. } => unreachable!(),
        }
    }

    /// E|X|^p.
    pub fn abs_moment(&self, p: f64) -> Moment {
        if let Some(atoms) = self.atoms() {
            return Moment::Exact(atoms.iter().map(|&(a, w)| w * a.abs().powf(p)).sum());
        }
        match self.family {
            Family::Normal { sigma } => {
                let v = 2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
                Moment::Exact(v * sigma.powf(p))
            }
            Family::UniformCentered { half_width } => Moment::Exact(half_width.powf(p) / (p + 1.0)),
            Family::ExponentialCentered { rate } if p == 3.0 => {
                Moment::Exact((12.0 / std::f64::consts::E - 2.0) / rate.powi(3))
            }
            Family::ParetoCentered { alpha, .. } if p >= alpha => Moment::Infinite,
            _ => {
                let tail = if p.fract() == 0.0 {
                    let mut c = vec![0.0; p as usize + 1];
                    c[p as usize] = 1.0;
                    Some(c)
                } else {
                    None
                };
                Moment::Numeric(self.expect_with_tail(|y| y.abs().powf(p), &[0.0], tail.as_deref()))
            }
        }
    }

    /// (E|X|^p)^{1/p}.
    pub fn sigma_p(&self, p: f64) -> Moment {
        self.abs_moment(p).map(|v| v.powf(1.0 / p))
    }
}

fn pareto_mean(alpha: f64, scale: f64) -> f64 {
    alpha * scale / (alpha - 1.0)
}

/// E[X^k I(X > t)] for the centered Pareto law, `t` at or above the support start.
fn pareto_upper_partial(alpha: f64, scale: f64, k: u32, t: f64) -> f64 {
    let mu = pareto_mean(alpha, scale);
    let s = (t + mu).max(scale);
    let mut acc = 0.0;
    for j in 0..=k {
        // E[P^j I(P > s)] = alpha scale^alpha s^{j-alpha} / (alpha - j)
        let ep = alpha * scale.powf(alpha) * s.powf(j as f64 - alpha) / (alpha - j as f64);
        acc += binom(k, j) * ep * (-mu).powi((k - j) as i32);
    }
    acc
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn double_factorial(n: u32) -> f64 {
    (1..=n).rev().step_by(2).map(|v| v as f64).product()
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Normal { sigma } => write!(f, "normal(sigma={sigma})"),
            Family::ExponentialCentered { rate } => write!(f, "exponential-centered(rate={rate})"),
            Family::Rademacher => write!(f, "rademacher"),
            Family::UniformCentered { half_width } => write!(f, "uniform-centered(half_width={half_width})"),
            Family::ParetoCentered { alpha, scale } => write!(f, "pareto-centered(alpha={alpha},scale={scale})"),
            Family::TwoPoint { p } => write!(f, "two-point(p={p})"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Parses `name` or `name(key=value, ...)`, e.g. `pareto-centered(alpha=2.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| bad(format!("unbalanced parentheses in `{s}`")))?;
                (s[..i].trim(), inner)
            }
            None => (s, ""),
        };
        let mut kv = Vec::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| bad(format!("`{v}` is not a number")))?;
            kv.push((k.trim().to_string(), v));
        }
        let take = |key: &str, default: Option<f64>| -> Result<f64> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .or(default)
                .ok_or_else(|| bad(format!("{name}: missing parameter `{key}`")))
        };
        let allowed: &[&str] = match name {
            "normal" => &["sigma"],
            "exponential-centered" => &["rate"],
            "rademacher" => &[],
            "uniform-centered" => &["half_width"],
            "pareto-centered" => &["alpha", "scale"],
            "two-point" => &["p"],
            other => return Err(bad(format!("unknown distribution family `{other}`"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(bad(format!("{name}: unknown parameter `{k}`")));
        }
        let family = match name {
            "normal" => Family::Normal {
                sigma: take("sigma", Some(1.0))?,
            },
            "exponential-centered" => Family::ExponentialCentered {
                rate: take("rate", Some(1.0))?,
            },
            "rademacher" => Family::Rademacher,
            "uniform-centered" => Family::UniformCentered {
                half_width: take("half_width", Some(3f64.sqrt()))?,
            },
            "pareto-centered" => Family::ParetoCentered {
                alpha: take("alpha", None)?,
                scale: take("scale", Some(1.0))?,
            },
            _ => Family::TwoPoint { p: take("p", None)? },
        };
        DistributionSpec::new(family)
    }
}
