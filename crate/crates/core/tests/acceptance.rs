//! Acceptance suite: twelve end-to-end checks against oracles, invariants and
//! closed-form bounds. Prints one PASS/FAIL line per check and exits non-zero
//! if any check fails or overruns its time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use selfnorm::bounds::gaussian::{mills_psi, normal_pdf, normal_tail};
use selfnorm::bounds::{i_nx, mgf_bracket};
use selfnorm::concentration::{run_concentration_suite, stein_property_check, subgaussian_check};
use selfnorm::experiments::{run_ratio_curve, with_workers, EstimatorKind, ExperimentConfig, StatisticKind};
use selfnorm::tilting::{build_tilted, estimate_tail_plain, estimate_tail_tilted, Event, Statistic, DEFAULT_GRID};
use selfnorm::{builtin_kernel, hoeffding_decompose, DistributionSpec, SeedStream};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn student_oracle(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).unwrap();
    1.0 - t.cdf(x * ((nf - 1.0) / (nf - x * x)).sqrt())
}

fn law(s: &str) -> DistributionSpec {
    s.parse().unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn student_t_oracle() -> Outcome {
    let d = DistributionSpec::standard_normal();
    let mut worst: f64 = 0.0;
    for (k, x) in [0.5, 1.0, 1.5, 2.0].into_iter().enumerate() {
        let e = estimate_tail_plain(
            &d,
            &Statistic::SelfNormalized,
            10,
            x,
            1_000_000,
            SeedStream::new(101, k as u64),
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((e.estimate - student_oracle(10, x)).abs() / e.se);
    }
    check(worst <= 3.0, format!("max |MC − exact| = {worst:.2} SE"))
}

fn rademacher_enumeration() -> Outcome {
    let d = DistributionSpec::rademacher();
    let n = 10;
    let mut worst: f64 = 0.0;
    for (k, x) in [1.0, 1.5, 2.0].into_iter().enumerate() {
        let hits = (0u32..1 << n)
            .filter(|mask| (2.0 * mask.count_ones() as f64 - n as f64) / (n as f64).sqrt() >= x)
            .count();
        let exact = hits as f64 / 1024.0;
        let event = Event::Exceeds(Statistic::SelfNormalized, x);
        let p = estimate_tail_plain(
            &d,
            &Statistic::SelfNormalized,
            n,
            x,
            100_000,
            SeedStream::new(102, k as u64),
        )
        .map_err(|e| e.to_string())?;
        let t = estimate_tail_tilted(&d, &event, n, 2.0, 100_000, SeedStream::new(103, k as u64))
            .map_err(|e| e.to_string())?;
        worst = worst
            .max((p.estimate - exact).abs() / p.se)
            .max((t.estimate - exact).abs() / t.se)
            .max((p.estimate - t.estimate).abs() / (p.se * p.se + t.se * t.se).sqrt());
    }
    check(worst <= 3.0, format!("max pairwise gap = {worst:.2} SE"))
}

fn decomposition_identities() -> Outcome {
    let d = DistributionSpec::standard_normal();
    let mut worst: f64 = 0.0;
    let mut t_exact = true;
    for name in ["t", "variance", "gini", "wilcoxon"] {
        let bk = builtin_kernel(name)
            .and_then(|k| k.bind(&d))
            .map_err(|e| e.to_string())?;
        for n in [12usize, 20, 40] {
            for rep in 0..50u64 {
                let xs = d.sample(n, SeedStream::new(104, rep).substream(n as u64));
                let hd = hoeffding_decompose(&bk, &xs, false).map_err(|e| e.to_string())?;
                worst = hd.identity_residuals().into_iter().fold(worst, f64::max);
                if name == "t" {
                    t_exact &= hd.d1 == 0.0 && hd.lambda2 == 0.0 && hd.psi.iter().all(|&p| p == 0.0);
                }
            }
        }
    }
    check(
        worst < 1e-9 && t_exact,
        format!("max relative residual {worst:.2e}, t kernel remainders exactly zero: {t_exact}"),
    )
}

fn moderate_deviation_trend() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        StatisticKind::StudentizedU,
        "normal",
        Some("t"),
        vec![50, 200, 800],
        vec![1.5],
    );
    cfg.reps = 200_000;
    cfg.seed = 105;
    cfg.estimator = EstimatorKind::Both;
    let curve = run_ratio_curve(&cfg).map_err(|e| e.to_string())?;
    let trend = curve.non_increasing_within_ci();
    let spread = curve.c_hat_spread();
    let rows: Vec<String> = curve
        .rows
        .iter()
        .zip(&curve.fitted)
        .map(|(r, f)| {
            format!(
                "n={} |ratio−1|={:.4}±{:.4} Ĉ={:.4}",
                r.n,
                r.deviation(),
                r.half_width(),
                f.c_hat.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let ok = trend && spread.is_some_and(|s| s < 2.0);
    check(
        ok,
        format!(
            "non-increasing within CI: {trend}; Ĉ spread {:.2} (need < 2); {}",
            spread.unwrap_or(f64::NAN),
            rows.join("; ")
        ),
    )
}

fn tilted_gain() -> Outcome {
    let d = DistributionSpec::standard_normal();
    let (n, x) = (50, 3.0);
    let oracle = student_oracle(n, x);
    let event = Event::Exceeds(Statistic::SelfNormalized, x);
    let t = estimate_tail_tilted(&d, &event, n, x, 100_000, SeedStream::new(106, 0)).map_err(|e| e.to_string())?;
    let p = estimate_tail_plain(&d, &Statistic::SelfNormalized, n, x, 100_000, SeedStream::new(106, 1))
        .map_err(|e| e.to_string())?;
    let gap = (t.estimate - oracle).abs() / t.se;
    check(
        gap <= 3.0 && t.relative_se() < p.relative_se(),
        format!(
            "tilted off by {gap:.2} SE; relative SE tilted {:.4} vs plain {:.4}",
            t.relative_se(),
            p.relative_se()
        ),
    )
}

fn concentration_suite() -> Outcome {
    let reports = run_concentration_suite(100_000, SeedStream::new(107, 0)).map_err(|e| e.to_string())?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.verdict)
        .map(|r| r.label.as_str())
        .collect();
    let min_margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    check(
        reports.len() == 20 && failed.is_empty(),
        format!(
            "{} configs, {} failed {failed:?}, smallest margin {min_margin:.4}",
            reports.len(),
            failed.len()
        ),
    )
}

fn stein_utilities() -> Outcome {
    let grid: Vec<f64> = (0..=240).map(|k| -6.0 + 0.05 * k as f64).collect();
    let ts: Vec<f64> = (0..=24).map(|k| -3.0 + 0.25 * k as f64).collect();
    let r = stein_property_check(&grid, &grid, &ts);
    check(
        r.holds(1e-9, 1e-6),
        format!(
            "{} points; excess |wf| {:.1e}, |f| {:.1e}, difference {:.1e}, ∂x {:.1e}; residual {:.1e}",
            r.points, r.wf_excess, r.f_excess, r.difference_excess, r.partial_excess, r.residual
        ),
    )
}

fn gaussian_sandwich() -> Outcome {
    let slack = 1.0 + 1e-15;
    let mut bad = 0;
    for k in 1..=1000 {
        let t = 0.01 * k as f64;
        let tail = normal_tail(t);
        let phi = normal_pdf(t);
        let psi = mills_psi(t);
        let ok = t / (1.0 + t * t) * phi <= tail * slack
            && tail <= phi / t * slack
            && t / (1.0 + t * t) <= psi * slack
            && psi <= slack / t;
        bad += (!ok) as usize;
    }
    check(bad == 0, format!("{bad} of 1000 grid points violate"))
}

fn mgf_bracket_and_normalizer() -> Outcome {
    let laws = [
        "normal",
        "exponential-centered",
        "uniform-centered",
        "rademacher",
        "two-point(p=0.2)",
        "pareto-centered(alpha=3.5)",
    ];
    let mut bracket_fail = vec![];
    let mut worst: f64 = 0.0;
    for name in laws {
        let d = law(name);
        for n in [25usize, 100, 400] {
            for x in [1.0, 2.0, 3.0] {
                if !mgf_bracket(&d, n, x).holds {
                    bracket_fail.push(format!("{name} n={n} x={x}"));
                }
                let t = build_tilted(&d, n, x, DEFAULT_GRID).map_err(|e| e.to_string())?;
                worst = worst.max((t.normalizer.powi(n as i32) / i_nx(&d, n, x) - 1.0).abs());
            }
        }
    }
    check(
        bracket_fail.is_empty() && worst < 1e-9,
        format!("bracket failures {bracket_fail:?}; max |normalizer^n / I − 1| = {worst:.2e}"),
    )
}

fn kernel_certificates() -> Outcome {
    let d = DistributionSpec::standard_normal();
    let mut parts = vec![];
    let mut ok = true;
    for (k, name) in ["t", "variance", "gini", "wilcoxon"].into_iter().enumerate() {
        let bk = builtin_kernel(name)
            .and_then(|k| k.bind(&d))
            .map_err(|e| e.to_string())?;
        let kc = bk.kernel.kc.ok_or("built-in kernel without constants")?;
        let r = bk.check_condition_kc(kc.c0, bk.tau(kc.tau), 1_000_000, SeedStream::new(110, k as u64));
        ok &= r.violations == 0 && r.trials >= 1_000_000;
        parts.push(format!("{name}: {} violations / {} tuples", r.violations, r.trials));
    }
    check(ok, parts.join("; "))
}

fn subgaussian_bounds() -> Outcome {
    let xs = [1.0, 2.0, 3.0];
    let cases = [("normal", 50usize), ("exponential-centered", 50), ("rademacher", 10)];
    let mut parts = vec![];
    let mut ok = true;
    for (k, (name, n)) in cases.into_iter().enumerate() {
        let r = subgaussian_check(&law(name), n, &xs, 100_000, SeedStream::new(111, k as u64))
            .map_err(|e| e.to_string())?;
        ok &= r.holds();
        if name == "rademacher" {
            ok &= r.exact;
        }
        parts.push(format!(
            "{name} n={n}{}: {}",
            if r.exact { " (exact)" } else { "" },
            r.holds()
        ));
    }
    check(ok, parts.join("; "))
}

fn reproducibility() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        StatisticKind::StudentizedU,
        "exponential-centered",
        Some("gini"),
        vec![12, 24],
        vec![0.0, 1.0, 2.0],
    );
    cfg.reps = 20_000;
    cfg.seed = 112;
    cfg.estimator = EstimatorKind::Both;
    let run = |w: usize| {
        with_workers(w, || run_ratio_curve(&cfg).and_then(|c| c.to_csv()))
            .and_then(|r| r)
            .map_err(|e| e.to_string())
    };
    let a = run(1)?;
    let b = run(1)?;
    let c = run(4)?;
    check(
        a == b && a == c,
        format!(
            "{} bytes; repeat identical: {}; 1 vs 4 workers identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("Student-t oracle", 60, student_t_oracle),
        ("exhaustive enumeration oracle", 30, rademacher_enumeration),
        ("decomposition identities", 120, decomposition_identities),
        ("moderate-deviation trend", 300, moderate_deviation_trend),
        ("tilted sampler unbiasedness and gain", 60, tilted_gain),
        ("concentration inequality suite", 180, concentration_suite),
        ("Stein utilities", 10, stein_utilities),
        ("Gaussian tail sandwich", 1, gaussian_sandwich),
        ("mgf bracket and tilted normalizer", 30, mgf_bracket_and_normalizer),
        ("domination-condition certificates", 60, kernel_certificates),
        ("sub-Gaussian bounds", 60, subgaussian_bounds),
        ("reproducibility", 30, reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failures += (!ok) as usize;
        let time = format!(
            "{:.1}s of {budget}s{}",
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
        println!(
            "{} {:>2} {name} ({time}): {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
