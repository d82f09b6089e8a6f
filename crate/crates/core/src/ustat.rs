//! U-statistics, jackknife Studentization and the Hoeffding decomposition
//! of the Studentized statistic into W, V and the remainders D1, D2.
//!
//! With h̃ = (h − θ)/σ, h̃1 = (h1 − θ)/σ and r(S) = h̃(S) − Σ_{j∈S} h̃1(X_j):
//!
//! ```text
//! ξ_i = h̃1(X_i)/√n,  W = Σ ξ_i,  V² = Σ ξ_i²
//! D1  = √n/(m C(n,m)) Σ_S r(S)
//! T*  = (W + D1) / (V √(1 + D2))
//! ```
//!
//! where D2 is defined through s1*² = σ² V² (1 + D2).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{BoundKernel, KernelSpec};

/// Largest number of kernel subsets enumerated for one statistic.
pub const SUBSET_CAP: u128 = 10_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn check_size(n: usize, m: usize) -> Result<u128> {
    if n <= m {
        return Err(Error::SampleTooSmall { n, m });
    }
    let c = binomial(n, m);
    if c > SUBSET_CAP {
        return Err(Error::TooLarge {
            needed: c,
            cap: SUBSET_CAP,
        });
    }
    Ok(c)
}

/// Calls `f` with every increasing index tuple of length `m` from `0..n`.
pub fn for_each_subset<F: FnMut(&[usize])>(n: usize, m: usize, mut f: F) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        let mut k = m;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if idx[k] < n - m + k {
                break;
            }
        }
        idx[k] += 1;
        for j in k + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// U_n = C(n,m)⁻¹ Σ_S h(X_S).
pub fn u_statistic(kernel: &KernelSpec, xs: &[f64]) -> Result<f64> {
    let c = check_size(xs.len(), kernel.degree)?;
    let mut args = vec![0.0; kernel.degree];
    let mut sum = 0.0;
    for_each_subset(xs.len(), kernel.degree, |s| {
        for (a, &i) in args.iter_mut().zip(s) {
            *a = xs[i];
        }
        sum += kernel.eval(&args);
    });
    Ok(sum / c as f64)
}

/// q_i = C(n−1,m−1)⁻¹ Σ_{S∋i} h(X_S), the leave-in averages behind the jackknife.
pub fn jackknife_q(kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    let m = kernel.degree;
    check_size(n, m)?;
    let mut q = vec![0.0; n];
    let mut args = vec![0.0; m];
    for_each_subset(n, m, |s| {
        for (a, &i) in args.iter_mut().zip(s) {
            *a = xs[i];
        }
        let h = kernel.eval(&args);
        for &i in s {
            q[i] += h;
        }
    });
    let c1 = binomial(n - 1, m - 1) as f64;
    q.iter_mut().for_each(|v| *v /= c1);
    Ok(q)
}

/// The Studentized statistic and its self-normalized companion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Studentized {
    pub n: usize,
    pub m: usize,
    pub u: f64,
    /// Jackknife variance (n−1)/(n−m)² Σ (q_i − U_n)².
    pub s1_sq: f64,
    /// (n−1)/(n−m)² Σ (q_i − θ)².
    pub s1_star_sq: f64,
    /// √n (U_n − θ) / (m s1)
    pub t: f64,
    /// √n (U_n − θ) / (m s1*)
    pub t_star: f64,
}

fn studentized_from_q(q: &[f64], u: f64, theta: f64, m: usize) -> Result<Studentized> {
    let n = q.len();
    let k = (n - 1) as f64 / ((n - m) as f64).powi(2);
    let s1_sq = k * q.iter().map(|v| (v - u).powi(2)).sum::<f64>();
    let s1_star_sq = k * q.iter().map(|v| (v - theta).powi(2)).sum::<f64>();
    if !(s1_sq > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let num = (n as f64).sqrt() * (u - theta);
    Ok(Studentized {
        n,
        m,
        u,
        s1_sq,
        s1_star_sq,
        t: num / (m as f64 * s1_sq.sqrt()),
        t_star: num / (m as f64 * s1_star_sq.sqrt()),
    })
}

/// Studentizes U_n around `theta`. The `t` kernel takes an O(n) route; its
/// T_n is exactly Student's √n X̄ / s when θ = 0.
pub fn studentize(kernel: &KernelSpec, xs: &[f64], theta: f64) -> Result<Studentized> {
    let n = xs.len();
    let m = kernel.degree;
    if kernel.is_linear() {
        if n <= m {
            return Err(Error::SampleTooSmall { n, m });
        }
        let s: f64 = xs.iter().sum();
        let nf = n as f64;
        let q: Vec<f64> = xs.iter().map(|&x| ((nf - 2.0) * x + s) / (2.0 * (nf - 1.0))).collect();
        return studentized_from_q(&q, s / nf, theta, m);
    }
    let q = jackknife_q(kernel, xs)?;
    let u = q.iter().sum::<f64>() / n as f64;
    studentized_from_q(&q, u, theta, m)
}

/// k = m²(n−1)/(n−m)², the constant linking T and T*.
pub fn t_star_constant(n: usize, m: usize) -> f64 {
    (m * m) as f64 * (n - 1) as f64 / ((n - m) as f64).powi(2)
}

/// T* = T / √(1 + k T²).
pub fn t_star_transform(t: f64, n: usize, m: usize) -> f64 {
    let k = t_star_constant(n, m);
    t / (1.0 + k * t * t).sqrt()
}

/// Inverse of [`t_star_transform`]; defined for k T*² < 1.
pub fn t_star_inverse(t_star: f64, n: usize, m: usize) -> Result<f64> {
    let k = t_star_constant(n, m);
    let d = 1.0 - k * t_star * t_star;
    if !(d > 0.0) {
        return Err(Error::OutOfRange(t_star));
    }
    Ok(t_star / d.sqrt())
}

/// Everything the decomposition produces for one sample.
#[derive(Debug, Clone, Serialize)]
pub struct HoeffdingDecomp {
    pub n: usize,
    pub m: usize,
    pub u: f64,
    pub theta: f64,
    /// σ of the projection, the unit of the standardized kernel.
    pub sigma: f64,
    pub q: Vec<f64>,
    pub xi: Vec<f64>,
    pub w: f64,
    pub v2: f64,
    pub d1: f64,
    pub d2: f64,
    /// Σ_S r(S)
    pub r_sum: f64,
    /// ψ_i = Σ_{S∋i} r(S)
    pub psi: Vec<f64>,
    /// Λ² = Σ ψ_i²
    pub lambda2: f64,
    pub s1_sq: f64,
    pub s1_star_sq: f64,
    pub t: f64,
    pub t_star: f64,
    #[serde(skip)]
    pair: Option<Vec<f64>>,
}

struct D2Parts {
    w: f64,
    v2: f64,
    lambda2: f64,
    xi_psi: f64,
    d1: f64,
}

fn d2_formula(n: usize, m: usize, p: &D2Parts) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let a = nf.sqrt() * (nf - mf) / (nf - 1.0);
    let b = nf.sqrt() * (mf - 1.0) / (nf - 1.0);
    let c1 = binomial(n - 1, m - 1) as f64;
    let rest = (nf * b * b + 2.0 * a * b) * p.w * p.w
        + p.lambda2 / (c1 * c1)
        + 2.0 * a / c1 * p.xi_psi
        + 2.0 * b * mf * nf.sqrt() * p.w * p.d1;
    1.0 / (nf - 1.0) + (nf - 1.0) / (nf - mf).powi(2) * rest / p.v2
}

impl HoeffdingDecomp {
    /// D1 and D2 recomputed with every term involving X_i removed (n fixed).
    pub fn leave_one_out(&self, i: usize) -> (f64, f64) {
        let n = self.n;
        let m = self.m;
        let c = binomial(n, m) as f64;
        let nf = n as f64;
        let r_sum = self.r_sum - self.psi[i];
        let d1 = nf.sqrt() / (m as f64 * c) * r_sum;
        let (mut lambda2, mut xi_psi) = (0.0, 0.0);
        if self.lambda2 > 0.0 {
            let pair = self
                .pair
                .as_ref()
                .expect("leave-one-out terms need the decomposition built with pairs");
            for j in 0..n {
                if j == i {
                    continue;
                }
                let pj = self.psi[j] - pair[j * n + i];
                lambda2 += pj * pj;
                xi_psi += self.xi[j] * pj;
            }
        }
        let parts = D2Parts {
            w: self.w - self.xi[i],
            v2: self.v2 - self.xi[i] * self.xi[i],
            lambda2,
            xi_psi,
            d1,
        };
        (d1, d2_formula(n, m, &parts))
    }

    /// All leave-one-out pairs (D1^{(i)}, D2^{(i)}).
    pub fn leave_one_out_all(&self) -> Vec<(f64, f64)> {
        (0..self.n).map(|i| self.leave_one_out(i)).collect()
    }

    /// D3 = C4 { σ' x n^{-1/2} + (σ' x)^{-1} n^{3/2 − 2m} Λ² } with σ' = σ_h/σ.
    pub fn d3(&self, x: f64, sigma_h_ratio: f64, c4: f64) -> f64 {
        let nf = self.n as f64;
        let sx = sigma_h_ratio * x;
        let second = if self.lambda2 == 0.0 {
            0.0
        } else if sx > 0.0 {
            nf.powf(1.5 - 2.0 * self.m as f64) * self.lambda2 / sx
        } else {
            f64::INFINITY
        };
        c4 * (sx / nf.sqrt() + second)
    }

    /// (W + D1) / (V √(1 + D2)), which must reproduce `t_star`.
    pub fn t_star_from_parts(&self) -> f64 {
        (self.w + self.d1) / (self.v2.sqrt() * (1.0 + self.d2).sqrt())
    }

    /// Relative residuals |a − b| / max(|a|, |b|, 1) of the five identities, in order:
    /// jackknife sum of squares, s1*²/σ² = V²(1 + D2), √n(U − θ)/(mσ) = W + D1,
    /// T* from the parts, and Λ² = Σψ_i² (infinite if Λ² < 0).
    pub fn identity_residuals(&self) -> [f64; 5] {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let nf = self.n as f64;
        let mf = self.m as f64;
        let sum_q2: f64 = self.q.iter().map(|q| q * q).sum();
        let jack = rel(
            (nf - mf).powi(2) / (nf - 1.0) * self.s1_sq,
            sum_q2 - nf * self.u * self.u,
        );
        let sigma2 = self.sigma * self.sigma;
        let d2 = rel(self.s1_star_sq / sigma2, self.v2 * (1.0 + self.d2));
        let split = rel(nf.sqrt() * (self.u - self.theta) / (mf * self.sigma), self.w + self.d1);
        let t_star = rel(self.t_star_from_parts(), self.t_star);
        let sum_psi2: f64 = self.psi.iter().map(|p| p * p).sum();
        let lambda = if self.lambda2 < 0.0 {
            f64::INFINITY
        } else {
            rel(self.lambda2, sum_psi2)
        };
        [jack, d2, split, t_star, lambda]
    }
}

/// Decomposes the Studentized U-statistic of `xs` under the bound law.
/// The pair matrix behind the leave-one-out terms is kept when `with_pairs`.
pub fn hoeffding_decompose(bk: &BoundKernel, xs: &[f64], with_pairs: bool) -> Result<HoeffdingDecomp> {
    let n = xs.len();
    let m = bk.degree();
    let c = check_size(n, m)?;
    let nf = n as f64;
    let sigma = bk.sigma();
    let h1s: Vec<f64> = xs.iter().map(|&x| bk.h1_std(x)).collect();
    let xi: Vec<f64> = h1s.iter().map(|h| h / nf.sqrt()).collect();
    let w: f64 = xi.iter().sum();
    let v2: f64 = xi.iter().map(|v| v * v).sum();

    let mut psi = vec![0.0; n];
    let mut pair = with_pairs.then(|| vec![0.0; n * n]);
    let mut r_sum = 0.0;
    let mut q = vec![0.0; n];
    let mut args = vec![0.0; m];
    let linear = bk.kernel.is_linear();
    for_each_subset(n, m, |s| {
        for (a, &i) in args.iter_mut().zip(s) {
            *a = xs[i];
        }
        let h = bk.kernel.eval(&args);
        for &i in s {
            q[i] += h;
        }
        let r = if linear {
            0.0
        } else {
            (h - bk.theta) / sigma - s.iter().map(|&i| h1s[i]).sum::<f64>()
        };
        r_sum += r;
        for &i in s {
            psi[i] += r;
        }
        if let Some(p) = pair.as_mut() {
            for (a, &j) in s.iter().enumerate() {
                for &k in &s[a + 1..] {
                    p[j * n + k] += r;
                    p[k * n + j] += r;
                }
            }
        }
    });
    if let Some(p) = pair.as_mut() {
        for i in 0..n {
            p[i * n + i] = psi[i];
        }
    }
    let c1 = binomial(n - 1, m - 1) as f64;
    q.iter_mut().for_each(|v| *v /= c1);
    let u = q.iter().sum::<f64>() / nf;
    let st = studentized_from_q(&q, u, bk.theta, m)?;

    let lambda2: f64 = psi.iter().map(|p| p * p).sum();
    let xi_psi: f64 = xi.iter().zip(&psi).map(|(a, b)| a * b).sum();
    let d1 = nf.sqrt() / (m as f64 * c as f64) * r_sum;
    let d2 = d2_formula(
        n,
        m,
        &D2Parts {
            w,
            v2,
            lambda2,
            xi_psi,
            d1,
        },
    );
    Ok(HoeffdingDecomp {
        n,
        m,
        u,
        theta: bk.theta,
        sigma,
        q,
        xi,
        w,
        v2,
        d1,
        d2,
        r_sum,
        psi,
        lambda2,
        s1_sq: st.s1_sq,
        s1_star_sq: st.s1_star_sq,
        t: st.t,
        t_star: st.t_star,
        pair,
    })
}

/// Membership in G_{n,x} = {|W| ≤ √x n^{1/4} (4 + V), V² ≥ 1/2}.
pub fn membership_g_nx(w: f64, v2: f64, x: f64, n: usize) -> bool {
    let bound = x.sqrt() * (n as f64).powf(0.25) * (4.0 + v2.sqrt());
    w.abs() <= bound && v2 >= 0.5
}
