//! Exponentially tilted summand laws and importance-sampled tail estimates.
//!
//! The tilted law of a raw observation has density proportional to
//! e^{g(ξ)} dF with g(ξ) = xξ − x²ξ²/2 and ξ = Z/(σ_Z √n). Sampling from it and
//! reweighting by Π E e^{g} · e^{−Σ g(ξ̂_i)} gives an unbiased estimate of any
//! event probability under the original law.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::bounds::{mgf_y, tilt_scale};
use crate::distributions::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::kernels::BoundKernel;
use crate::quadrature::{gk15, integrate, Tolerance};
use crate::rng::{run_blocks, SeedStream, StreamRng};
use crate::summand::Summand;
use crate::ustat::studentize;

/// Default number of quantile nodes in the inversion grid.
pub const DEFAULT_GRID: usize = 4096;

/// Weighted estimates with fewer effective samples than this are rejected.
pub const MIN_ESS: f64 = 10.0;

/// Monotone cubic (Fritsch-Carlson) interpolant through increasing knots.
#[derive(Debug, Clone)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Pchip {
        let k = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..k - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; k];
        d[0] = s[0];
        d[k - 1] = s[k - 2];
        for i in 1..k - 1 {
            if s[i - 1] * s[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
            }
        }
        Pchip { x, y, d }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let v = h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1];
        v.clamp(self.y[i].min(self.y[i + 1]), self.y[i].max(self.y[i + 1]))
    }
}

#[derive(Debug, Clone)]
enum TiltedLaw {
    Atoms {
        values: Vec<f64>,
        probs: Vec<f64>,
        cum: Vec<f64>,
    },
    Grid {
        nodes: Vec<f64>,
        cdf: Vec<f64>,
        inverse: Pchip,
        forward: Pchip,
    },
}

/// Per-variable moments of Ŷ = g(ξ̂) under the tilted law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedMoments {
    pub m1: f64,
    pub var: f64,
    pub abs3: f64,
}

/// (m_n, σ_n², v_n) = n × the per-variable moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedTotals {
    pub m_n: f64,
    pub sigma_n2: f64,
    pub v_n: f64,
}

#[derive(Debug, Clone)]
pub struct TiltedDistribution {
    pub base: DistributionSpec,
    pub n: usize,
    pub x: f64,
    /// x/(σ_Z √n)
    pub scale: f64,
    /// E e^Y per variable, summed over the grid cells
    pub normalizer: f64,
    pub moments: TiltedMoments,
    law: TiltedLaw,
}

fn tilt_window(base: &DistributionSpec) -> (f64, f64, Vec<f64>) {
    let (lo, hi, mut nodes) = base.window();
    if let Family::ParetoCentered { alpha, scale } = base.family {
        // reach survival probability 1e-17 along a geometric ladder
        let mu = scale - lo;
        let top = scale * 1e17f64.powf(1.0 / alpha) - mu;
        let mut t = hi;
        while t < top {
            nodes.push(t);
            t = lo + 2.0 * (t - lo);
        }
        return (lo, top, nodes);
    }
    (lo, hi, nodes)
}

/// Builds the tilted law of the summand at level `x` for sample size `n`.
pub fn build_tilted<S: Summand>(s: &S, n: usize, x: f64, grid_size: usize) -> Result<TiltedDistribution> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tilt level must be finite and nonnegative, got {x}"
        )));
    }
    if grid_size < 256 {
        return Err(Error::InvalidParameter(format!(
            "grid size must be at least 256, got {grid_size}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let base = s.base().clone();
    let c = tilt_scale(s, n, x);
    let g = |y: f64| {
        let v = c * s.z(y);
        v - 0.5 * v * v
    };
    let moments = tilted_moments_of(s, c);

    if let Some(atoms) = base.atoms() {
        let values: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let raw: Vec<f64> = atoms.iter().map(|&(a, p)| p * g(a).exp()).collect();
        let normalizer: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|w| w / normalizer).collect();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        return Ok(TiltedDistribution {
            base,
            n,
            x,
            scale: c,
            normalizer,
            moments,
            law: TiltedLaw::Atoms { values, probs, cum },
        });
    }

    let dens = |y: f64| base.density(y).unwrap_or(0.0);
    let w = |y: f64| {
        let f = dens(y);
        if f == 0.0 {
            0.0
        } else {
            f * g(y).exp()
        }
    };
    let (lo, hi, mut fixed) = tilt_window(&base);
    if c > 0.0 {
        fixed.extend(s.z_level_points(1.0 / c));
    }
    fixed.push(lo);
    fixed.push(hi);
    fixed.retain(|&p| p >= lo && p <= hi);
    fixed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fixed.dedup();

    // coarse pass: locate tilted quantiles
    let mut coarse = vec![lo];
    for pair in fixed.windows(2) {
        let step = (pair[1] - pair[0]) / 32.0;
        for k in 1..=32 {
            coarse.push(if k == 32 { pair[1] } else { pair[0] + k as f64 * step });
        }
    }
    let mut cum = vec![0.0];
    for pair in coarse.windows(2) {
        let (m, _) = gk15(&w, pair[0], pair[1]);
        cum.push(cum.last().unwrap() + m.max(0.0));
    }
    let total = *cum.last().unwrap();
    let mut targets: Vec<f64> = (1..grid_size).map(|j| j as f64 / grid_size as f64).collect();
    for k in 4..=15 {
        for m in [1.0, 2.0, 5.0] {
            let u = m * 10f64.powi(-k);
            targets.push(u);
            targets.push(1.0 - u);
        }
    }
    let mut nodes = fixed.clone();
    for u in targets {
        let goal = u * total;
        let j = cum.partition_point(|&v| v < goal).clamp(1, cum.len() - 1);
        let (c0, c1) = (cum[j - 1], cum[j]);
        let frac = if c1 > c0 { (goal - c0) / (c1 - c0) } else { 0.5 };
        nodes.push(coarse[j - 1] + frac * (coarse[j] - coarse[j - 1]));
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + b.abs()));

    // fine pass: per-cell masses to full precision
    let tol = Tolerance {
        abs: 1e-18 * total.max(1e-300),
        rel: 1e-13,
        max_segments: 200,
    };
    let masses: Vec<f64> = nodes
        .windows(2)
        .map(|p| integrate(w, p[0], p[1], &[], tol).max(0.0))
        .collect();
    let normalizer: f64 = masses.iter().sum();
    let mut cdf = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for m in &masses {
        acc += m;
        cdf.push(acc / normalizer);
    }
    *cdf.last_mut().unwrap() = 1.0;

    // inversion needs strictly increasing V; merge empty cells
    let (mut iv, mut iy) = (vec![cdf[0]], vec![nodes[0]]);
    for k in 1..nodes.len() {
        if cdf[k] > *iv.last().unwrap() {
            iv.push(cdf[k]);
            iy.push(nodes[k]);
        } else if iv.len() == 1 {
            // leading zero-mass cells: start at the last empty node
            iy[0] = nodes[k];
        }
    }
    let inverse = Pchip::new(iv.clone(), iy.clone());
    let forward = Pchip::new(iy, iv);
    Ok(TiltedDistribution {
        base,
        n,
        x,
        scale: c,
        normalizer,
        moments,
        law: TiltedLaw::Grid {
            nodes,
            cdf,
            inverse,
            forward,
        },
    })
}

fn tilted_moments_of<S: Summand>(s: &S, c: f64) -> TiltedMoments {
    if c == 0.0 {
        return TiltedMoments {
            m1: 0.0,
            var: 0.0,
            abs3: 0.0,
        };
    }
    let pts = [1.0 / c];
    let e = |k: i32| {
        s.expect_z(
            |z| {
                let v = c * z;
                let y = v - 0.5 * v * v;
                y.abs().powi(k) * if k == 1 { y.signum() } else { 1.0 } * y.exp()
            },
            &pts,
            None,
        )
    };
    let norm = crate::bounds::mgf_quadratic(s, c, 1.0, 0.5);
    let m1 = e(1) / norm;
    TiltedMoments {
        m1,
        var: e(2) / norm - m1 * m1,
        abs3: e(3) / norm,
    }
}

impl TiltedDistribution {
    /// Whether the tilt is trivial, in which case sampling defers to the base law.
    pub fn is_identity(&self) -> bool {
        self.x == 0.0
    }

    pub fn totals(&self) -> TiltedTotals {
        let n = self.n as f64;
        TiltedTotals {
            m_n: n * self.moments.m1,
            sigma_n2: n * self.moments.var,
            v_n: n * self.moments.abs3,
        }
    }

    /// Tilted CDF V(y). Exact at grid nodes and atoms, monotone in between.
    pub fn cdf(&self, y: f64) -> f64 {
        match &self.law {
            TiltedLaw::Atoms { values, cum, .. } => {
                let k = values.partition_point(|&a| a <= y);
                if k == 0 {
                    0.0
                } else {
                    cum[k - 1]
                }
            }
            TiltedLaw::Grid { forward, .. } => forward.eval(y),
        }
    }

    /// The (y_k, V(y_k)) table of a continuous tilted law.
    pub fn grid(&self) -> Option<(&[f64], &[f64])> {
        match &self.law {
            TiltedLaw::Grid { nodes, cdf, .. } => Some((nodes, cdf)),
            TiltedLaw::Atoms { .. } => None,
        }
    }

    /// Reweighted atoms of a discrete tilted law.
    pub fn atoms(&self) -> Option<(&[f64], &[f64])> {
        match &self.law {
            TiltedLaw::Atoms { values, probs, .. } => Some((values, probs)),
            TiltedLaw::Grid { .. } => None,
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        if self.is_identity() {
            return self.base.draw(rng);
        }
        let u: f64 = rng.random();
        match &self.law {
            TiltedLaw::Atoms { values, cum, .. } => {
                let k = cum.partition_point(|&c| c <= u).min(values.len() - 1);
                values[k]
            }
            TiltedLaw::Grid { inverse, .. } => inverse.eval(u),
        }
    }

    pub fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        if self.is_identity() {
            return self.base.fill(rng, out);
        }
        for v in out.iter_mut() {
            *v = self.draw(rng);
        }
    }
}

/// `n` tilted draws from the start of `stream`.
pub fn sample_tilted(t: &TiltedDistribution, n: usize, stream: SeedStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut out = vec![0.0; n];
    t.fill(&mut rng, &mut out);
    out
}

pub fn tilted_moments(t: &TiltedDistribution) -> TiltedTotals {
    t.totals()
}

/// The statistic whose upper tail is estimated.
#[derive(Clone)]
pub enum Statistic {
    /// S_n / V_n
    SelfNormalized,
    /// Student's √n X̄ / s
    StudentT,
    /// Studentized U-statistic T_n with the bound θ
    StudentizedU(Box<BoundKernel>),
}

impl fmt::Debug for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::SelfNormalized => write!(f, "SelfNormalized"),
            Statistic::StudentT => write!(f, "StudentT"),
            Statistic::StudentizedU(k) => write!(f, "StudentizedU({})", k.kernel.name),
        }
    }
}

impl Statistic {
    /// NaN when the statistic is undefined (zero spread).
    pub fn value(&self, xs: &[f64]) -> f64 {
        match self {
            Statistic::SelfNormalized => {
                let (s, v2) = xs.iter().fold((0.0, 0.0), |(s, v), &x| (s + x, v + x * x));
                if v2 > 0.0 {
                    s / v2.sqrt()
                } else {
                    f64::NAN
                }
            }
            Statistic::StudentT => {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
                if ss > 0.0 {
                    n.sqrt() * mean / (ss / (n - 1.0)).sqrt()
                } else {
                    f64::NAN
                }
            }
            Statistic::StudentizedU(k) => studentize(&k.kernel, xs, k.theta).map(|s| s.t).unwrap_or(f64::NAN),
        }
    }
}

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A measurable predicate of the raw sample.
#[derive(Clone)]
pub enum Event {
    /// statistic ≥ threshold
    Exceeds(Statistic, f64),
    Custom(Predicate),
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Exceeds(s, x) => write!(f, "Exceeds({s:?}, {x})"),
            Event::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Event {
    pub fn holds(&self, xs: &[f64]) -> bool {
        match self {
            Event::Exceeds(s, x) => s.value(xs) >= *x,
            Event::Custom(f) => f(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Plain,
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub method: Method,
    /// Events observed (plain) or indicator-positive draws (tilted).
    pub hits: usize,
    pub ess: Option<f64>,
    pub x_tilt: Option<f64>,
}

impl TailEstimate {
    pub fn relative_se(&self) -> f64 {
        self.se / self.estimate
    }
}

/// Indicator mean of {statistic ≥ x} over `reps` samples of size `n`.
pub fn estimate_tail_plain(
    dist: &DistributionSpec,
    statistic: &Statistic,
    n: usize,
    x: f64,
    reps: usize,
    stream: SeedStream,
) -> Result<TailEstimate> {
    estimate_event_plain(dist, &Event::Exceeds(statistic.clone(), x), n, reps, stream)
}

pub fn estimate_event_plain(
    dist: &DistributionSpec,
    event: &Event,
    n: usize,
    reps: usize,
    stream: SeedStream,
) -> Result<TailEstimate> {
    if reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "at least 100 replications needed, got {reps}"
        )));
    }
    let hits: usize = run_blocks(reps, stream, |count, rng| {
        let mut buf = vec![0.0; n];
        let mut h = 0usize;
        for _ in 0..count {
            dist.fill(rng, &mut buf);
            h += event.holds(&buf) as usize;
        }
        h
    })
    .into_iter()
    .sum();
    let p = hits as f64 / reps as f64;
    Ok(TailEstimate {
        estimate: p,
        se: (p * (1.0 - p) / reps as f64).sqrt(),
        reps,
        method: Method::Plain,
        hits,
        ess: None,
        x_tilt: None,
    })
}

/// Importance-sampled probability of `event` with the summand law tilted at
/// `x_tilt`. At `x_tilt = 0` the draws and the estimate coincide with
/// [`estimate_event_plain`].
pub fn estimate_tail_tilted<S: Summand>(
    s: &S,
    event: &Event,
    n: usize,
    x_tilt: f64,
    reps: usize,
    stream: SeedStream,
) -> Result<TailEstimate> {
    let tilted = build_tilted(s, n, x_tilt, DEFAULT_GRID)?;
    estimate_with_tilted(s, &tilted, event, reps, stream)
}

/// As [`estimate_tail_tilted`] with a prebuilt tilted law.
pub fn estimate_with_tilted<S: Summand>(
    s: &S,
    tilted: &TiltedDistribution,
    event: &Event,
    reps: usize,
    stream: SeedStream,
) -> Result<TailEstimate> {
    if reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "at least 100 replications needed, got {reps}"
        )));
    }
    let n = tilted.n;
    let c = tilted.scale;
    let log_norm = n as f64 * mgf_y(s, n, tilted.x).ln();
    let parts = run_blocks(reps, stream, |count, rng| {
        let mut buf = vec![0.0; n];
        let (mut sw, mut sw2, mut hits) = (0.0, 0.0, 0usize);
        for _ in 0..count {
            tilted.fill(rng, &mut buf);
            if !event.holds(&buf) {
                continue;
            }
            let sum_y: f64 = buf
                .iter()
                .map(|&y| {
                    let v = c * s.z(y);
                    v - 0.5 * v * v
                })
                .sum();
            let w = if c == 0.0 { 1.0 } else { (log_norm - sum_y).exp() };
            sw += w;
            sw2 += w * w;
            hits += 1;
        }
        (sw, sw2, hits)
    });
    let (sw, sw2, hits) = parts
        .iter()
        .fold((0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let r = reps as f64;
    let est = sw / r;
    let ess = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    if tilted.x > 0.0 && ess < MIN_ESS {
        return Err(Error::DegenerateWeights(ess));
    }
    Ok(TailEstimate {
        estimate: est,
        se: ((sw2 / r - est * est).max(0.0) / r).sqrt(),
        reps,
        method: Method::Tilted,
        hits,
        ess: Some(ess),
        x_tilt: Some(tilted.x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{i_nx, l_nx};
    use crate::kernels::builtin_kernel;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn student_oracle(n: usize, x: f64) -> f64 {
        let nf = n as f64;
        let t = StudentsT::new(0.0, 1.0, nf - 1.0).unwrap();
        1.0 - t.cdf(x * ((nf - 1.0) / (nf - x * x)).sqrt())
    }

    fn rademacher_exact(n: usize, x: f64) -> f64 {
        // S/V = S/√n; count sign patterns with S ≥ x√n
        let mut hits = 0u64;
        for mask in 0u32..(1 << n) {
            let s = 2 * mask.count_ones() as i64 - n as i64;
            if s as f64 / (n as f64).sqrt() >= x {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.1, 0.9, 1.0]);
        let mut prev = -1.0;
        for k in 0..=300 {
            let v = p.eval(k as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(p.eval(2.0), 0.9);
    }

    #[test]
    fn identity_tilt_matches_base() {
        for law in [
            "normal",
            "exponential-centered",
            "pareto-centered(alpha=2.5)",
            "uniform-centered",
        ] {
            let d: DistributionSpec = law.parse().unwrap();
            let t = build_tilted(&d, 20, 0.0, 1024).unwrap();
            assert!((t.normalizer - 1.0).abs() < 1e-11, "{law}: {}", t.normalizer);
            let (ys, vs) = t.grid().unwrap();
            for (y, v) in ys.iter().zip(vs) {
                assert!((v - d.cdf(*y)).abs() < 1e-12, "{law} at {y}: {v} vs {}", d.cdf(*y));
            }
            let a = sample_tilted(&t, 50, SeedStream::new(1, 1));
            let b = d.sample(50, SeedStream::new(1, 1));
            assert_eq!(a, b);
            assert_eq!(t.totals().m_n, 0.0);
        }
    }

    #[test]
    fn valid_cdf() {
        let d: DistributionSpec = "exponential-centered".parse().unwrap();
        let t = build_tilted(&d, 30, 2.5, 512).unwrap();
        let (ys, vs) = t.grid().unwrap();
        assert_eq!(vs[0], 0.0);
        assert_eq!(*vs.last().unwrap(), 1.0);
        assert!(vs.windows(2).all(|w| w[1] >= w[0]));
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        assert!(build_tilted(&d, 30, 2.5, 100).is_err());
        assert!(build_tilted(&d, 30, -1.0, 512).is_err());
    }

    #[test]
    fn rademacher_tilted_atoms() {
        let r = DistributionSpec::rademacher();
        let (n, x) = (10, 2.0);
        let t = build_tilted(&r, n, x, 256).unwrap();
        let (vals, probs) = t.atoms().unwrap();
        let a = x / (n as f64).sqrt();
        // g(±1/√n) = ±a − a²/2; the common factor cancels
        let want = a.exp() / (a.exp() + (-a).exp());
        assert_eq!(vals, &[-1.0, 1.0]);
        assert!((probs[1] - want).abs() < 1e-15);
        let m1 = (a - a * a / 2.0) * want + (-a - a * a / 2.0) * (1.0 - want);
        assert!((t.moments.m1 - m1).abs() < 1e-14);
    }

    #[test]
    fn normalizer_matches_i_nx() {
        let laws = [
            "normal",
            "exponential-centered",
            "uniform-centered",
            "pareto-centered(alpha=3.5)",
        ];
        for law in laws {
            let d: DistributionSpec = law.parse().unwrap();
            for (n, x) in [(100, 2.0), (25, 1.0), (400, 3.0)] {
                let t = build_tilted(&d, n, x, DEFAULT_GRID).unwrap();
                let rel = t.normalizer.powi(n as i32) / i_nx(&d, n, x) - 1.0;
                assert!(rel.abs() < 1e-9, "{law} n={n} x={x}: {rel:e}");
            }
        }
        let d = DistributionSpec::standard_normal();
        let g = builtin_kernel("gini").unwrap().bind(&d).unwrap();
        let t = build_tilted(&g, 40, 2.0, DEFAULT_GRID).unwrap();
        assert!((t.normalizer.powi(40) / i_nx(&g, 40, 2.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn draws_follow_tilted_cdf() {
        let d = DistributionSpec::standard_normal();
        let t = build_tilted(&d, 10, 2.0, DEFAULT_GRID).unwrap();
        let mut xs = sample_tilted(&t, 100_000, SeedStream::new(12, 0));
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let v = t.cdf(y);
                (v - i as f64 / m).abs().max(((i + 1) as f64 / m - v).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / m.sqrt(), "KS {ks}");
        // per-variable mean of Ŷ
        let c = t.scale;
        let ys: Vec<f64> = xs.iter().map(|&y| c * y - 0.5 * (c * y).powi(2)).collect();
        let mean = ys.iter().sum::<f64>() / m;
        let sd = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
        assert!((mean - t.moments.m1).abs() < 4.0 * sd / m.sqrt());
        assert_eq!(
            sample_tilted(&t, 5, SeedStream::new(3, 3)),
            sample_tilted(&t, 5, SeedStream::new(3, 3))
        );
    }

    #[test]
    fn moment_asymptotics_fitted_constant() {
        let laws = ["normal", "exponential-centered", "uniform-centered", "rademacher"];
        let mut per_n = vec![];
        for n in [25usize, 100, 400] {
            let mut worst: f64 = 0.0;
            for law in laws {
                let d: DistributionSpec = law.parse().unwrap();
                for x in [1.0, 2.0] {
                    let t = build_tilted(&d, n, x, 256).unwrap();
                    let tot = t.totals();
                    let l = l_nx(&d, n, x);
                    worst = worst
                        .max((tot.m_n - x * x / 2.0).abs() / l)
                        .max((tot.sigma_n2 - x * x).abs() / l)
                        .max(tot.v_n / l);
                }
            }
            per_n.push(worst);
        }
        assert!(per_n.iter().all(|c| c.is_finite()));
        for w in per_n.windows(2) {
            assert!(w[1] / w[0] < 2.0 && w[0] / w[1] < 2.0, "{per_n:?}");
        }
    }

    #[test]
    fn plain_matches_student_oracle() {
        let d = DistributionSpec::standard_normal();
        let e = estimate_tail_plain(&d, &Statistic::SelfNormalized, 10, 1.0, 200_000, SeedStream::new(5, 0)).unwrap();
        let want = student_oracle(10, 1.0);
        assert!((e.estimate - want).abs() < 3.0 * e.se, "{e:?} vs {want}");
        let all = estimate_tail_plain(
            &d,
            &Statistic::SelfNormalized,
            10,
            f64::NEG_INFINITY,
            100,
            SeedStream::new(5, 0),
        )
        .unwrap();
        assert_eq!(all.estimate, 1.0);
        assert!(estimate_tail_plain(&d, &Statistic::SelfNormalized, 10, 1.0, 99, SeedStream::new(5, 0)).is_err());
    }

    #[test]
    fn rademacher_against_enumeration() {
        let r = DistributionSpec::rademacher();
        let exact = rademacher_exact(10, 2.0);
        assert!((exact - 11.0 / 1024.0).abs() < 1e-15);
        let ev = Event::Exceeds(Statistic::SelfNormalized, 2.0);
        let p = estimate_event_plain(&r, &ev, 10, 200_000, SeedStream::new(8, 0)).unwrap();
        let t = estimate_tail_tilted(&r, &ev, 10, 2.0, 200_000, SeedStream::new(8, 1)).unwrap();
        assert!((p.estimate - exact).abs() < 3.0 * p.se);
        assert!((t.estimate - exact).abs() < 3.0 * t.se, "{t:?} vs {exact}");
    }

    #[test]
    fn zero_tilt_is_plain() {
        let d: DistributionSpec = "exponential-centered".parse().unwrap();
        let ev = Event::Exceeds(Statistic::SelfNormalized, 1.0);
        let p = estimate_event_plain(&d, &ev, 15, 5000, SeedStream::new(2, 0)).unwrap();
        let t = estimate_tail_tilted(&d, &ev, 15, 0.0, 5000, SeedStream::new(2, 0)).unwrap();
        assert_eq!(p.estimate, t.estimate);
        assert!((p.se - t.se).abs() < 1e-15);
    }

    #[test]
    fn tilted_beats_plain_deep_in_tail() {
        let d = DistributionSpec::standard_normal();
        let ev = Event::Exceeds(Statistic::SelfNormalized, 3.0);
        let reps = 100_000;
        let p = estimate_event_plain(&d, &ev, 50, reps, SeedStream::new(9, 0)).unwrap();
        let t = estimate_tail_tilted(&d, &ev, 50, 3.0, reps, SeedStream::new(9, 1)).unwrap();
        let want = student_oracle(50, 3.0);
        assert!((t.estimate - want).abs() < 3.0 * t.se, "{t:?} vs {want}");
        assert!(t.relative_se() < p.relative_se());
    }

    #[test]
    fn degenerate_weights_detected() {
        // tilting far beyond the event region leaves almost no usable weight
        let d = DistributionSpec::standard_normal();
        let ev = Event::Custom(Arc::new(|xs: &[f64]| xs.iter().sum::<f64>() < -25.0));
        let r = estimate_tail_tilted(&d, &ev, 50, 3.0, 1000, SeedStream::new(1, 0));
        assert!(matches!(r, Err(Error::DegenerateWeights(_))));
    }

    #[test]
    fn statistics_agree_on_t_kernel() {
        let d = DistributionSpec::standard_normal();
        let xs = d.sample(20, SeedStream::new(4, 0));
        let k = builtin_kernel("t").unwrap().bind(&d).unwrap();
        let a = Statistic::StudentT.value(&xs);
        let b = Statistic::StudentizedU(Box::new(k)).value(&xs);
        assert!((a - b).abs() < 1e-12);
        // S/V and t are monotone transforms of each other
        let sv = Statistic::SelfNormalized.value(&xs);
        let n = 20.0f64;
        assert!((a - sv * ((n - 1.0) / (n - sv * sv)).sqrt()).abs() < 1e-12);
    }
}
