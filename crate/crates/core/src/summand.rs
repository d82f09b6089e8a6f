//! The per-observation variable behind ξ_i.
//!
//! W_n and V_n² are built from ξ_i = Z_i / √(n Var Z) where Z_i = z(X_i) for
//! some function `z` of a raw observation. For a plain self-normalized sum
//! `z` is the identity; for a Studentized U-statistic it is the standardized
//! projection (h1(y) - θ)/σ. The bound quantities and the tilted sampler only
//! need `z`, its variance, and the raw law.

use crate::distributions::DistributionSpec;

pub trait Summand: Sync {
    /// Law of the raw observation X.
    fn base(&self) -> &DistributionSpec;

    /// Z as a function of the raw value.
    fn z(&self, y: f64) -> f64;

    fn z_variance(&self) -> f64;

    /// If `z(y) = b·y`, returns `b`.
    fn z_linear_slope(&self) -> Option<f64> {
        None
    }

    /// Raw values at which |z| crosses `level`. Nonlinear `z` is scanned over
    /// the quadrature window and each sign change refined by bisection.
    fn z_level_points(&self, level: f64) -> Vec<f64> {
        if let Some(b) = self.z_linear_slope() {
            return vec![-level / b.abs(), level / b.abs()];
        }
        let base = self.base();
        if base.is_discrete() {
            return vec![];
        }
        let (lo, hi, mut nodes) = base.window();
        nodes.push(lo);
        nodes.push(hi);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        let gap = |y: f64| self.z(y).abs() - level;
        let mut out = vec![];
        for w in nodes.windows(2) {
            let steps = 64;
            let h = (w[1] - w[0]) / steps as f64;
            let mut a = w[0];
            let mut ga = gap(a);
            for k in 1..=steps {
                let b = if k == steps { w[1] } else { w[0] + k as f64 * h };
                let gb = gap(b);
                if ga == 0.0 {
                    out.push(a);
                } else if ga * gb < 0.0 {
                    let (mut l, mut r, gl) = (a, b, ga);
                    for _ in 0..200 {
                        let mid = 0.5 * (l + r);
                        if !(mid > l && mid < r) {
                            break;
                        }
                        if (gap(mid) < 0.0) == (gl < 0.0) {
                            l = mid;
                        } else {
                            r = mid;
                        }
                    }
                    out.push(0.5 * (l + r));
                }
                a = b;
                ga = gb;
            }
        }
        out
    }

    /// E f(Z). `tail_poly` states that `f(z) = Σ c_k z^k` for large z; it is
    /// only used when `z` is linear.
    fn expect_z<F: Fn(f64) -> f64>(&self, f: F, level_points: &[f64], tail_poly: Option<&[f64]>) -> f64
    where
        Self: Sized,
    {
        let base = self.base();
        let mut breaks: Vec<f64> = Vec::new();
        for &c in level_points {
            breaks.extend(self.z_level_points(c));
        }
        match (self.z_linear_slope(), tail_poly) {
            (Some(b), Some(c)) if b > 0.0 => {
                let poly: Vec<f64> = c.iter().enumerate().map(|(k, ck)| ck * b.powi(k as i32)).collect();
                base.expect_with_tail(|y| f(self.z(y)), &breaks, Some(&poly))
            }
            _ => base.expect(|y| f(self.z(y)), &breaks),
        }
    }
}

impl Summand for DistributionSpec {
    fn base(&self) -> &DistributionSpec {
        self
    }

    fn z(&self, y: f64) -> f64 {
        y
    }

    fn z_variance(&self) -> f64 {
        self.variance
    }

    fn z_linear_slope(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::builtin_kernel;

    #[test]
    fn level_points_of_projected_kernel() {
        let d = DistributionSpec::standard_normal();
        let g = builtin_kernel("gini").unwrap().bind(&d).unwrap();
        for level in [0.5, 2.0, 5.0] {
            let pts = g.z_level_points(level);
            assert!(!pts.is_empty());
            for y in pts {
                assert!((g.z(y).abs() - level).abs() < 1e-9, "{level} {y}");
            }
        }
        let lin = d.z_level_points(3.0);
        assert_eq!(lin, vec![-3.0, 3.0]);
    }
}
