//! Monte Carlo estimates of the perturbation functionals R_{n,x} and breve R_{n,x}
//! for Studentized U-statistics.

use rand::Rng;
use serde::Serialize;

use super::{l_n_1px, mgf_y, Estimate};
use crate::error::{Error, Result};
use crate::kernels::BoundKernel;
use crate::rng::{run_blocks, SeedStream};
use crate::tilting::{build_tilted, DEFAULT_GRID};
use crate::ustat::{binomial, hoeffding_decompose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderConfig {
    /// Use D3 in place of |D2| in the first addend of R_{n,x}.
    pub use_d3: bool,
    pub c4: f64,
    /// Cap on reps · n · C(n−1, m−1) kernel evaluations.
    pub budget: u128,
}

impl Default for RemainderConfig {
    fn default() -> Self {
        RemainderConfig {
            use_d3: false,
            c4: 1.0,
            budget: 5_000_000_000,
        }
    }
}

fn check_budget(bk: &BoundKernel, n: usize, reps: usize, cap: u128) -> Result<()> {
    let m = bk.degree();
    if n <= m {
        return Err(Error::SampleTooSmall { n, m });
    }
    let needed = reps as u128 * n as u128 * binomial(n - 1, m - 1);
    if needed > cap {
        return Err(Error::BudgetExceeded { needed, cap });
    }
    Ok(())
}

fn mean_se(parts: &[(f64, f64)], reps: usize) -> Estimate {
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let r = reps as f64;
    let m = s / r;
    Estimate {
        value: m,
        se: ((s2 / r - m * m).max(0.0) / r).sqrt(),
    }
}

/// R_{n,x}. The first addend is the tilted-law mean of x|D1| + x²|D2|. For
/// the second, each replicate picks one index i at random, redraws X_i from
/// the untilted law and scores n·min(|xξ_i|, 1)(|D1 − D1^{(i)}| + x|D2 − D2^{(i)}|)
/// divided by E e^{Y_i}.
pub fn estimate_rnx(
    bk: &BoundKernel,
    n: usize,
    x: f64,
    reps: usize,
    stream: SeedStream,
    cfg: &RemainderConfig,
) -> Result<Estimate> {
    check_budget(bk, n, reps, cfg.budget)?;
    let tilted = build_tilted(bk, n, x, DEFAULT_GRID)?;
    let factor = mgf_y(bk, n, x);
    let sigma_h = bk.sigma_h_ratio();
    let parts = run_blocks(reps, stream, |count, rng| {
        let mut xs = vec![0.0; n];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            tilted.fill(rng, &mut xs);
            let hd = hoeffding_decompose(bk, &xs, false).expect("sample size checked");
            let d2 = if cfg.use_d3 {
                hd.d3(x, sigma_h, cfg.c4)
            } else {
                hd.d2.abs()
            };
            let a = x * hd.d1.abs() + x * x * d2;

            let i = rng.random_range(0..n);
            xs[i] = bk.dist.draw(rng);
            let hd = hoeffding_decompose(bk, &xs, true).expect("sample size checked");
            let (l1, l2) = hd.leave_one_out(i);
            let b = (x * hd.xi[i]).abs().min(1.0) * ((hd.d1 - l1).abs() + x * (hd.d2 - l2).abs());

            let v = a + n as f64 * b / factor;
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    Ok(mean_se(&parts, reps))
}

/// breve R_{n,x} by plain Monte Carlo:
///
/// ```text
/// L_{n,1+x} + E|D1| + xE|D2| + Σ_i E[|ξ_i| I{|ξ_i| ≤ 1/(1+x)} (|D1 − D1^{(i)}| + x|D2 − D2^{(i)}|)]
/// ```
pub fn estimate_breve_rnx(
    bk: &BoundKernel,
    n: usize,
    x: f64,
    reps: usize,
    stream: SeedStream,
    cfg: &RemainderConfig,
) -> Result<Estimate> {
    check_budget(bk, n, reps, cfg.budget)?;
    let cut = 1.0 / (1.0 + x);
    let parts = run_blocks(reps, stream, |count, rng| {
        let mut xs = vec![0.0; n];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            bk.dist.fill(rng, &mut xs);
            let hd = hoeffding_decompose(bk, &xs, true).expect("sample size checked");
            let mut v = hd.d1.abs() + x * hd.d2.abs();
            for i in 0..n {
                let xi = hd.xi[i].abs();
                if xi <= cut {
                    let (l1, l2) = hd.leave_one_out(i);
                    v += xi * ((hd.d1 - l1).abs() + x * (hd.d2 - l2).abs());
                }
            }
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let mc = mean_se(&parts, reps);
    Ok(Estimate {
        value: l_n_1px(bk, n, x) + mc.value,
        se: mc.se,
    })
}
