//! Symmetric U-statistic kernels, their projections, and the quadratic
//! domination condition
//!
//! ```text
//! {h(x_1..x_m) - θ}² ≤ c0 [ τ σ² + Σ_i {h1(x_i) - θ}² ]
//! ```
//!
//! A [`KernelSpec`] is law-free. Binding it to a [`DistributionSpec`] with
//! [`KernelSpec::bind`] yields a [`BoundKernel`] carrying θ, σ², σ_h² and an
//! exact (closed-form or quadrature) projection h1.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::gaussian::{normal_cdf, normal_pdf};
use crate::distributions::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::rng::{run_blocks, SeedStream};
use crate::summand::Summand;

/// Projection variance below this is treated as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// A margin RHS − LHS below `-MARGIN_TOL·max(1, RHS)` counts as a violation;
/// equality cases (e.g. x1 = x2 for the t kernel) sit exactly on the boundary.
pub const MARGIN_TOL: f64 = 1e-12;

type KernelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    /// (x1 + x2)/2
    T,
    /// (x1 − x2)²/2
    Variance,
    /// |x1 − x2|
    Gini,
    /// I(x1 + x2 ≤ 0)
    Wilcoxon,
}

/// How τ is obtained once the law is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    Fixed(f64),
    ThetaSqOverSigma2,
    InvSigma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcConstants {
    pub c0: f64,
    pub tau: TauRule,
}

#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    pub degree: usize,
    pub kc: Option<KcConstants>,
    builtin: Option<Builtin>,
    eval: KernelFn,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("kc", &self.kc)
            .finish()
    }
}

/// Looks up one of `t`, `variance`, `gini`, `wilcoxon`.
pub fn builtin_kernel(name: &str) -> Result<KernelSpec> {
    let (b, c0, tau): (Builtin, f64, TauRule) = match name {
        "t" => (Builtin::T, 2.0, TauRule::Fixed(0.0)),
        "variance" => (Builtin::Variance, 10.0, TauRule::ThetaSqOverSigma2),
        "gini" => (Builtin::Gini, 8.0, TauRule::ThetaSqOverSigma2),
        "wilcoxon" => (Builtin::Wilcoxon, 1.0, TauRule::InvSigma2),
        other => return Err(Error::UnknownKernel(other.to_string())),
    };
    let eval: KernelFn = match b {
        Builtin::T => Arc::new(|a: &[f64]| 0.5 * (a[0] + a[1])),
        Builtin::Variance => Arc::new(|a: &[f64]| 0.5 * (a[0] - a[1]) * (a[0] - a[1])),
        Builtin::Gini => Arc::new(|a: &[f64]| (a[0] - a[1]).abs()),
        Builtin::Wilcoxon => Arc::new(|a: &[f64]| if a[0] + a[1] <= 0.0 { 1.0 } else { 0.0 }),
    };
    Ok(KernelSpec {
        name: name.to_string(),
        degree: 2,
        kc: Some(KcConstants { c0, tau }),
        builtin: Some(b),
        eval,
    })
}

impl KernelSpec {
    /// A user kernel. `eval` must be symmetric in its `degree` arguments.
    pub fn custom<F>(name: &str, degree: usize, eval: F, kc: Option<KcConstants>) -> Result<KernelSpec>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if degree < 2 {
            return Err(Error::InvalidParameter(format!(
                "kernel degree must be at least 2, got {degree}"
            )));
        }
        Ok(KernelSpec {
            name: name.to_string(),
            degree,
            kc,
            builtin: None,
            eval: Arc::new(eval),
        })
    }

    pub fn builtin(&self) -> Option<Builtin> {
        self.builtin
    }

    /// The kernel is a sum of its projections, so the remainder r vanishes.
    pub fn is_linear(&self) -> bool {
        self.builtin == Some(Builtin::T)
    }

    pub fn eval_kernel(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.degree {
            return Err(Error::ArityMismatch {
                name: self.name.clone(),
                expected: self.degree,
                got: args.len(),
            });
        }
        Ok((self.eval)(args))
    }

    /// Unchecked evaluation for hot loops; `args.len()` must equal the degree.
    #[inline]
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.degree);
        (self.eval)(args)
    }

    /// Binds the kernel to a law, computing θ, σ², σ_h².
    pub fn bind(&self, dist: &DistributionSpec) -> Result<BoundKernel> {
        let mut bk = BoundKernel {
            kernel: self.clone(),
            dist: dist.clone(),
            theta: 0.0,
            sigma2: 0.0,
            sigma_h2: 0.0,
        };
        let v = dist.variance;
        match self.builtin {
            Some(Builtin::T) => {
                bk.sigma2 = v / 4.0;
                bk.sigma_h2 = v / 2.0;
            }
            Some(Builtin::Variance) => {
                let mu4 = dist.analytic.fourth;
                if !mu4.is_finite() {
                    return Err(Error::InfiniteMoment(format!(
                        "variance kernel needs E X^4 < ∞ under {dist}"
                    )));
                }
                let mu4 = mu4.value();
                bk.theta = v;
                bk.sigma2 = (mu4 - v * v) / 4.0;
                bk.sigma_h2 = (mu4 + v * v) / 2.0;
            }
            Some(Builtin::Gini) => {
                bk.theta = match dist.family {
                    Family::Normal { sigma } => 2.0 * sigma / PI.sqrt(),
                    _ => dist.expect(|y| bk.h1(y), &[0.0]),
                };
                bk.sigma2 = dist.expect(|y| (bk.h1(y) - bk.theta).powi(2), &[0.0]);
                bk.sigma_h2 = 2.0 * v - bk.theta * bk.theta;
            }
            Some(Builtin::Wilcoxon) => {
                let symmetric_continuous = dist.is_symmetric() && !dist.is_discrete();
                bk.theta = if symmetric_continuous {
                    0.5
                } else {
                    dist.expect(|y| bk.h1(y), &[0.0])
                };
                bk.sigma2 = if symmetric_continuous {
                    1.0 / 12.0
                } else {
                    dist.expect(|y| (bk.h1(y) - bk.theta).powi(2), &[0.0])
                };
                bk.sigma_h2 = bk.theta * (1.0 - bk.theta);
            }
            None if self.degree == 2 => {
                bk.theta = dist.expect(|y| bk.h1(y), &[0.0]);
                bk.sigma2 = dist.expect(|y| (bk.h1(y) - bk.theta).powi(2), &[0.0]);
                bk.sigma_h2 = dist.expect(
                    |y| dist.expect(|w| (self.eval(&[y, w]) - bk.theta).powi(2), &[y]),
                    &[0.0],
                );
            }
            None => {
                let (theta, sigma2, sigma_h2) = bk.mc_moments(1 << 18, SeedStream::new(0x5eed, 0xa11));
                bk.theta = theta;
                bk.sigma2 = sigma2;
                bk.sigma_h2 = sigma_h2;
            }
        }
        if !(bk.sigma2 > DEGENERACY_FLOOR) {
            return Err(Error::DegenerateKernel(self.name.clone()));
        }
        Ok(bk)
    }
}

/// A projection value with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projection {
    pub value: f64,
    pub se: f64,
    pub exact: bool,
}

/// A kernel bound to a law.
#[derive(Debug, Clone)]
pub struct BoundKernel {
    pub kernel: KernelSpec,
    pub dist: DistributionSpec,
    pub theta: f64,
    pub sigma2: f64,
    pub sigma_h2: f64,
}

impl BoundKernel {
    pub fn degree(&self) -> usize {
        self.kernel.degree
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// σ_h/σ
    pub fn sigma_h_ratio(&self) -> f64 {
        (self.sigma_h2 / self.sigma2).sqrt()
    }

    /// Whether h1 has a closed form or exact quadrature (otherwise it is
    /// a deterministic Monte Carlo average).
    pub fn has_exact_projection(&self) -> bool {
        self.kernel.builtin.is_some() || self.kernel.degree == 2
    }

    /// h1(y) = E h(y, X_2, …, X_m).
    pub fn h1(&self, y: f64) -> f64 {
        let d = &self.dist;
        match self.kernel.builtin {
            Some(Builtin::T) => 0.5 * y,
            Some(Builtin::Variance) => 0.5 * (y * y + d.variance),
            Some(Builtin::Gini) => match d.family {
                Family::Normal { sigma } => {
                    let u = y / sigma;
                    sigma * (2.0 * normal_pdf(u) + u * (2.0 * normal_cdf(u) - 1.0))
                }
                Family::ExponentialCentered { rate } => {
                    // X = E − 1/rate; E|u − E| with u = y + 1/rate
                    let u = rate * (y + 1.0 / rate);
                    if u >= 0.0 {
                        (u - 1.0 + 2.0 * (-u).exp()) / rate
                    } else {
                        (1.0 - u) / rate
                    }
                }
                Family::UniformCentered { half_width: a } => {
                    if y.abs() <= a {
                        (y * y + a * a) / (2.0 * a)
                    } else {
                        y.abs()
                    }
                }
                _ => d.expect_with_tail(|x| (y - x).abs(), &[y], Some(&[-y, 1.0])),
            },
            Some(Builtin::Wilcoxon) => d.cdf(-y),
            None if self.kernel.degree == 2 => d.expect(|x| self.kernel.eval(&[y, x]), &[y]),
            None => {
                // deterministic per y
                let stream = SeedStream::new(y.to_bits(), 0x4831);
                self.h1_monte_carlo(y, 1 << 12, stream).value
            }
        }
    }

    /// Conditional Monte Carlo estimate of h1(y) from `inner_reps` draws.
    pub fn h1_monte_carlo(&self, y: f64, inner_reps: usize, stream: SeedStream) -> Projection {
        let m = self.kernel.degree;
        let mut rng = stream.rng();
        let mut args = vec![0.0; m];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..inner_reps {
            args[0] = y;
            self.dist.fill(&mut rng, &mut args[1..]);
            let v = self.kernel.eval(&args);
            s += v;
            s2 += v * v;
        }
        let n = inner_reps as f64;
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        Projection {
            value: mean,
            se: (var / n).sqrt(),
            exact: false,
        }
    }

    /// h1 at `y`: exact where available, otherwise conditional Monte Carlo.
    pub fn h1_projection(&self, y: f64, inner_reps: usize, stream: SeedStream) -> Projection {
        if self.has_exact_projection() {
            Projection {
                value: self.h1(y),
                se: 0.0,
                exact: true,
            }
        } else {
            self.h1_monte_carlo(y, inner_reps.max(1), stream)
        }
    }

    /// Standardized projection (h1(y) − θ)/σ.
    pub fn h1_std(&self, y: f64) -> f64 {
        (self.h1(y) - self.theta) / self.sigma()
    }

    /// θ, Var h1 and Var h from pairs of tuples sharing their first argument.
    fn mc_moments(&self, reps: usize, stream: SeedStream) -> (f64, f64, f64) {
        let m = self.kernel.degree;
        let sums = run_blocks(reps, stream, |count, rng| {
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            let mut acc = [0.0; 4];
            for _ in 0..count {
                self.dist.fill(rng, &mut a);
                b[0] = a[0];
                self.dist.fill(rng, &mut b[1..]);
                let (ha, hb) = (self.kernel.eval(&a), self.kernel.eval(&b));
                acc[0] += ha + hb;
                acc[1] += ha * ha + hb * hb;
                acc[2] += ha * hb;
                acc[3] += 1.0;
            }
            acc
        });
        let t = sums.iter().fold([0.0; 4], |mut s, a| {
            for k in 0..4 {
                s[k] += a[k];
            }
            s
        });
        let n = t[3];
        let theta = t[0] / (2.0 * n);
        (theta, t[2] / n - theta * theta, t[1] / (2.0 * n) - theta * theta)
    }

    /// σ_p = (E|h1(X) − θ|^p)^{1/p}; infinite when the moment diverges.
    pub fn sigma_p(&self, p: f64) -> f64 {
        let d = &self.dist;
        if let Family::ParetoCentered { alpha, .. } = d.family {
            // h1 grows linearly for t/gini and quadratically for variance
            let growth = match self.kernel.builtin {
                Some(Builtin::Wilcoxon) => 0.0,
                Some(Builtin::Variance) => 2.0,
                _ => 1.0,
            };
            if growth * p >= alpha {
                return f64::INFINITY;
            }
        }
        match self.kernel.builtin {
            Some(Builtin::T) => 0.5 * d.sigma_p(p).value(),
            _ => d
                .expect(|y| (self.h1(y) - self.theta).abs().powf(p), &[0.0])
                .powf(1.0 / p),
        }
    }

    /// τ for this law under the kernel's rule.
    pub fn tau(&self, rule: TauRule) -> f64 {
        match rule {
            TauRule::Fixed(t) => t,
            TauRule::ThetaSqOverSigma2 => self.theta * self.theta / self.sigma2,
            TauRule::InvSigma2 => 1.0 / self.sigma2,
        }
    }

    /// a_m = max{c0 τ, c0 + m} using the kernel's declared constants.
    pub fn a_m(&self) -> Option<f64> {
        self.kernel.kc.map(|kc| {
            let tau = self.tau(kc.tau);
            (kc.c0 * tau).max(kc.c0 + self.kernel.degree as f64)
        })
    }

    fn kc_terms(&self, args: &[f64], h1_buf: &mut [f64]) -> (f64, f64) {
        let lhs = (self.kernel.eval(args) - self.theta).powi(2);
        for (o, &a) in h1_buf.iter_mut().zip(args) {
            *o = (self.h1(a) - self.theta).powi(2);
        }
        (lhs, h1_buf.iter().sum())
    }

    /// Evaluates the domination condition on `trials` i.i.d. tuples and on the
    /// stress grid {±1, ±2, ±4, ±8}·sd in every coordinate.
    pub fn check_condition_kc(&self, c0: f64, tau: f64, trials: usize, stream: SeedStream) -> ViolationReport {
        let m = self.kernel.degree;
        let floor = tau * self.sigma2;
        let judge = |args: &[f64], buf: &mut [f64], acc: &mut ViolationReport| {
            let (lhs, s) = self.kc_terms(args, buf);
            let rhs = c0 * (floor + s);
            let margin = rhs - lhs;
            acc.trials += 1;
            if margin < -MARGIN_TOL * rhs.max(1.0) {
                acc.violations += 1;
            }
            if margin < acc.worst_margin {
                acc.worst_margin = margin;
                acc.witness = args.to_vec();
            }
            let ratio = if floor + s > 0.0 {
                lhs / (floor + s)
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > acc.c0_needed {
                acc.c0_needed = ratio;
            }
        };

        let blocks = run_blocks(trials, stream, |count, rng| {
            let mut acc = ViolationReport::empty();
            let mut args = vec![0.0; m];
            let mut buf = vec![0.0; m];
            for _ in 0..count {
                self.dist.fill(rng, &mut args);
                judge(&args, &mut buf, &mut acc);
            }
            acc
        });
        let mut report = blocks
            .into_iter()
            .fold(ViolationReport::empty(), ViolationReport::merge);

        let sd = self.dist.sd();
        let levels: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().flat_map(|k| [-k * sd, k * sd]).collect();
        let mut grid = ViolationReport::empty();
        let mut idx = vec![0usize; m];
        let mut args = vec![0.0; m];
        let mut buf = vec![0.0; m];
        loop {
            for (a, &i) in args.iter_mut().zip(&idx) {
                *a = levels[i];
            }
            judge(&args, &mut buf, &mut grid);
            // odometer increment
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < levels.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        report.grid_points = grid.trials;
        report = report.merge(grid);
        report.c0 = c0;
        report.tau = tau;
        report
    }

    /// Smallest c0 at fixed τ with no violation on the same tuples the checker
    /// visits (the exact limit a bisection on c0 would converge to).
    pub fn min_feasible_c0(&self, tau: f64, trials: usize, stream: SeedStream) -> f64 {
        self.check_condition_kc(1.0, tau, trials, stream).c0_needed
    }
}

impl Summand for BoundKernel {
    fn base(&self) -> &DistributionSpec {
        &self.dist
    }

    fn z(&self, y: f64) -> f64 {
        self.h1_std(y)
    }

    fn z_variance(&self) -> f64 {
        1.0
    }

    fn z_linear_slope(&self) -> Option<f64> {
        self.kernel.is_linear().then(|| 0.5 / self.sigma())
    }
}

/// Empirical certificate for the domination condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub c0: f64,
    pub tau: f64,
    /// All evaluated tuples, random and grid.
    pub trials: usize,
    pub grid_points: usize,
    pub violations: usize,
    /// Most negative RHS − LHS seen (positive when every tuple has slack).
    pub worst_margin: f64,
    pub witness: Vec<f64>,
    /// Largest LHS / (τσ² + Σ{h1 − θ}²) seen.
    pub c0_needed: f64,
}

impl ViolationReport {
    fn empty() -> Self {
        ViolationReport {
            c0: 0.0,
            tau: 0.0,
            trials: 0,
            grid_points: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            witness: vec![],
            c0_needed: 0.0,
        }
    }

    fn merge(mut self, other: ViolationReport) -> ViolationReport {
        self.trials += other.trials;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin {
            self.worst_margin = other.worst_margin;
            self.witness = other.witness;
        }
        self.c0_needed = self.c0_needed.max(other.c0_needed);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn normal() -> DistributionSpec {
        DistributionSpec::standard_normal()
    }

    #[test]
    fn builtin_constants() {
        let g = builtin_kernel("gini").unwrap();
        assert_eq!(g.kc.unwrap().c0, 8.0);
        assert_eq!(g.kc.unwrap().tau, TauRule::ThetaSqOverSigma2);
        let t = builtin_kernel("t").unwrap();
        assert_eq!(
            t.kc.unwrap(),
            KcConstants {
                c0: 2.0,
                tau: TauRule::Fixed(0.0)
            }
        );
        let w = builtin_kernel("wilcoxon").unwrap();
        assert_eq!(w.kc.unwrap().c0, 1.0);
        assert_eq!(w.kc.unwrap().tau, TauRule::InvSigma2);
        let v = builtin_kernel("variance").unwrap();
        assert_eq!(v.kc.unwrap().c0, 10.0);
        assert!(matches!(builtin_kernel("median"), Err(Error::UnknownKernel(_))));
    }

    #[test]
    fn eval_examples() {
        let g = builtin_kernel("gini").unwrap();
        assert_eq!(g.eval_kernel(&[1.0, 4.0]).unwrap(), 3.0);
        let v = builtin_kernel("variance").unwrap();
        assert_eq!(v.eval_kernel(&[2.0, 0.0]).unwrap(), 2.0);
        let w = builtin_kernel("wilcoxon").unwrap();
        assert_eq!(w.eval_kernel(&[-1.0, 0.5]).unwrap(), 1.0);
        assert!(matches!(g.eval_kernel(&[1.0]), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn symmetry_of_builtins() {
        let mut rng = SeedStream::new(1, 1).rng();
        for name in ["t", "variance", "gini", "wilcoxon"] {
            let k = builtin_kernel(name).unwrap();
            for _ in 0..100 {
                let args: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect();
                let v = k.eval(&args);
                for _ in 0..100 {
                    let mut p = args.clone();
                    p.shuffle(&mut rng);
                    assert_eq!(k.eval(&p), v);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let d = normal();
        let t = builtin_kernel("t").unwrap().bind(&d).unwrap();
        assert_eq!(t.h1(3.0), 1.5);
        let e: DistributionSpec = "exponential-centered(rate=1)".parse().unwrap();
        assert_eq!(builtin_kernel("t").unwrap().bind(&e).unwrap().h1(3.0), 1.5);
        let w = builtin_kernel("wilcoxon").unwrap().bind(&d).unwrap();
        assert_eq!(w.h1(0.0), 0.5);
        let g = builtin_kernel("gini").unwrap().bind(&d).unwrap();
        // E|1 - Z| by mpmath quadrature
        assert!((g.h1(1.0) - 1.166_630_941_175_372_6).abs() < 1e-14);
    }

    #[test]
    fn gini_closed_form_matches_quadrature() {
        // same law, but forced through the generic route via sigma = 1 normal
        // written as the custom degree-2 kernel |x1 - x2|
        let d = normal();
        let g = builtin_kernel("gini").unwrap().bind(&d).unwrap();
        let c = KernelSpec::custom("absdiff", 2, |a| (a[0] - a[1]).abs(), None)
            .unwrap()
            .bind(&d)
            .unwrap();
        for y in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            assert!((g.h1(y) - c.h1(y)).abs() < 1e-11, "{y}");
        }
        assert!((g.theta - c.theta).abs() < 1e-11);
        assert!((g.sigma2 - c.sigma2).abs() < 1e-10);
        assert!((g.sigma_h2 - c.sigma_h2).abs() < 1e-9);
    }

    #[test]
    fn gini_closed_forms_match_quadrature() {
        for law in ["exponential-centered(rate=2)", "uniform-centered(half_width=1.5)"] {
            let d: DistributionSpec = law.parse().unwrap();
            let g = builtin_kernel("gini").unwrap().bind(&d).unwrap();
            for y in [-2.0, -0.6, 0.0, 0.4, 1.2, 3.0] {
                let q = d.expect(|x| (y - x).abs(), &[y]);
                assert!((g.h1(y) - q).abs() < 1e-12, "{law} {y}");
            }
        }
    }

    #[test]
    fn theta_examples() {
        let d = normal();
        let th = |n: &str| builtin_kernel(n).unwrap().bind(&d).unwrap().theta;
        assert_eq!(th("t"), 0.0);
        assert_eq!(th("variance"), 1.0);
        assert_eq!(th("wilcoxon"), 0.5);
        assert!((th("gini") - 2.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn moments_match_monte_carlo() {
        // θ = E h, σ_h² = Var h by brute Monte Carlo over pairs
        let laws: Vec<DistributionSpec> = [
            "normal",
            "exponential-centered(rate=1)",
            "uniform-centered",
            "two-point(p=0.3)",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        for d in &laws {
            for name in ["t", "variance", "gini", "wilcoxon"] {
                let bk = builtin_kernel(name).unwrap().bind(d).unwrap();
                let xs = d.sample(400_000, SeedStream::new(8, 8));
                let vals: Vec<f64> = xs.chunks(2).map(|p| bk.kernel.eval(p)).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let se = (var / n).sqrt();
                assert!(
                    (mean - bk.theta).abs() < 4.0 * se + 1e-12,
                    "{d} {name}: {mean} vs {}",
                    bk.theta
                );
                assert!(
                    (var / bk.sigma_h2 - 1.0).abs() < 0.03,
                    "{d} {name}: {var} vs {}",
                    bk.sigma_h2
                );
                // E h1(X) = θ
                let h1m = xs.iter().take(100_000).map(|&x| bk.h1(x)).sum::<f64>() / 1e5;
                assert!((h1m - bk.theta).abs() < 5.0 * (bk.sigma2 / 1e5).sqrt(), "{d} {name}");
            }
        }
    }

    #[test]
    fn monte_carlo_projection_agrees_with_exact() {
        let d = normal();
        for name in ["t", "variance", "gini", "wilcoxon"] {
            let bk = builtin_kernel(name).unwrap().bind(&d).unwrap();
            for (i, y) in [-2.0, -0.3, 0.0, 1.0, 2.2].iter().enumerate() {
                let mc = bk.h1_monte_carlo(*y, 50_000, SeedStream::new(77, i as u64));
                let exact = bk.h1_projection(*y, 1, SeedStream::new(0, 0));
                assert!(exact.exact && exact.se == 0.0);
                assert!((mc.value - exact.value).abs() <= 4.0 * mc.se + 1e-12, "{name} y={y}");
            }
        }
    }

    #[test]
    fn degenerate_kernels_are_flagged() {
        // X² ≡ 1 under ±1, so the variance kernel's projection is constant
        let r = DistributionSpec::rademacher();
        assert!(matches!(
            builtin_kernel("variance").unwrap().bind(&r),
            Err(Error::DegenerateKernel(_))
        ));
        let p: DistributionSpec = "pareto-centered(alpha=3)".parse().unwrap();
        assert!(matches!(
            builtin_kernel("variance").unwrap().bind(&p),
            Err(Error::InfiniteMoment(_))
        ));
    }

    #[test]
    fn condition_kc_counterexample() {
        let d = normal();
        let t = builtin_kernel("t").unwrap().bind(&d).unwrap();
        // at x1 = x2 = 1: LHS = 1, RHS = 0.1 (0.25 + 0.25)
        let rep = t.check_condition_kc(0.1, 0.0, 1000, SeedStream::new(3, 0));
        assert!(rep.violations > 0);
        assert!(rep.worst_margin < 0.0);
        let mut buf = [0.0; 2];
        let (lhs, s) = t.kc_terms(&[1.0, 1.0], &mut buf);
        assert_eq!(lhs, 1.0);
        assert_eq!(0.1 * s, 0.05);
    }

    #[test]
    fn condition_kc_certifies_builtins_small() {
        let d = normal();
        for name in ["t", "variance", "gini", "wilcoxon"] {
            let bk = builtin_kernel(name).unwrap().bind(&d).unwrap();
            let kc = bk.kernel.kc.unwrap();
            let rep = bk.check_condition_kc(kc.c0, bk.tau(kc.tau), 20_000, SeedStream::new(4, 0));
            assert_eq!(rep.violations, 0, "{name}: {rep:?}");
            assert_eq!(rep.grid_points, 64);
            assert_eq!(rep.trials, 20_064);
            assert!((rep.violations > 0) == (rep.worst_margin < 0.0) || rep.worst_margin.abs() < 1e-12);
            assert!(rep.c0_needed <= kc.c0 * (1.0 + 1e-12));
            let c0min = bk.min_feasible_c0(bk.tau(kc.tau), 20_000, SeedStream::new(4, 0));
            assert_eq!(c0min, rep.c0_needed);
        }
    }

    #[test]
    fn sigma_p_values() {
        let d = normal();
        let t = builtin_kernel("t").unwrap().bind(&d).unwrap();
        // (σ_p/σ)^3 = E|Z|^3 for the t kernel
        let r = t.sigma_p(3.0) / t.sigma();
        assert!((r.powi(3) - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-12);
        let p: DistributionSpec = "pareto-centered(alpha=2.5)".parse().unwrap();
        let g = builtin_kernel("gini").unwrap().bind(&p).unwrap();
        assert!(g.sigma_p(3.0).is_infinite());
        assert!(g.sigma_p(2.2).is_finite());
    }

    #[test]
    fn custom_degree_three() {
        let k = KernelSpec::custom("sum3", 3, |a| a.iter().sum::<f64>() / 3.0, None).unwrap();
        let bk = k.bind(&normal()).unwrap();
        assert!(bk.theta.abs() < 0.01);
        assert!((bk.sigma2 - 1.0 / 9.0).abs() < 0.01);
        assert!((bk.sigma_h2 - 1.0 / 3.0).abs() < 0.01);
        let p = bk.h1_projection(0.9, 20_000, SeedStream::new(1, 2));
        assert!(!p.exact);
        assert!((p.value - 0.3).abs() < 4.0 * p.se);
        assert!(KernelSpec::custom("bad", 1, |a| a[0], None).is_err());
    }
}
