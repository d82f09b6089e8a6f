//! Experiment orchestration: ratio curves P(T_n ≥ x)/(1 − Φ(x)) with
//! envelopes, bound reports, the concentration suite, kernel certificates
//! and single-sample decompositions, with CSV and JSON persistence.
//!
//! Every (n, x) cell draws from its own stream derived from (seed, n, x), and
//! Monte Carlo blocks are reduced in a fixed order, so outputs depend only on
//! the config and seed, not on the worker count.

pub mod config;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

pub use config::{EstimatorKind, ExperimentConfig, Format, StatisticKind, SEED_ENV};

use crate::bounds::gaussian::normal_tail;
use crate::bounds::{
    bound_report, envelope_jsw, envelope_ustat, estimate_breve_rnx, estimate_rnx, in_ustat_range, jsw_x_max, l_nx,
    BoundReport, RemainderConfig,
};
use crate::concentration::{
    concentration_check, concentration_suite, ConcentrationConfig, ConcentrationReport, DeltaChoice,
};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::kernels::{BoundKernel, ViolationReport};
use crate::rng::SeedStream;
use crate::tilting::{estimate_tail_plain, estimate_tail_tilted, Event, Method, Statistic, TailEstimate};
use crate::ustat::{hoeffding_decompose, HoeffdingDecomp};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Stream tags separating the experiment kinds.
const TAG_PLAIN: u64 = 0;
const TAG_TILTED: u64 = 1;
const TAG_REMAINDER: u64 = 2;
const TAG_BREVE: u64 = 3;
const TAG_CONCENTRATION: u64 = 4;
const TAG_KERNEL: u64 = 5;
const TAG_DECOMPOSE: u64 = 6;

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: usize, reps: usize, z: f64) -> (f64, f64) {
    let r = reps as f64;
    let p = hits as f64 / r;
    let z2 = z * z;
    let denom = 1.0 + z2 / r;
    let center = (p + z2 / (2.0 * r)) / denom;
    let half = z / denom * (p * (1.0 - p) / r + z2 / (4.0 * r * r)).sqrt();
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == reps { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// The summand law the configured statistic is tilted through.
enum Tilt<'a> {
    Sum(&'a DistributionSpec),
    Kernel(&'a BoundKernel),
}

/// Everything a config resolves to before sampling.
struct Setup {
    dist: DistributionSpec,
    bk: Option<BoundKernel>,
    statistic: Statistic,
    root: SeedStream,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dist = cfg.distribution()?;
        let bk = cfg.bound_kernel()?;
        let statistic = cfg.tail_statistic(bk.as_ref());
        Ok(Setup {
            dist,
            bk,
            statistic,
            root: SeedStream::new(cfg.seed, 0),
        })
    }

    fn tilt(&self) -> Tilt<'_> {
        match &self.bk {
            Some(bk) => Tilt::Kernel(bk),
            None => Tilt::Sum(&self.dist),
        }
    }

    fn cell(&self, n: usize, x: f64, tag: u64) -> SeedStream {
        self.root.derive(&[n as u64, x.to_bits(), tag])
    }

    fn plain(&self, n: usize, x: f64, reps: usize) -> Result<TailEstimate> {
        estimate_tail_plain(&self.dist, &self.statistic, n, x, reps, self.cell(n, x, TAG_PLAIN))
    }

    fn tilted(&self, n: usize, x: f64, reps: usize) -> Result<TailEstimate> {
        let event = Event::Exceeds(self.statistic.clone(), x);
        let stream = self.cell(n, x, TAG_TILTED);
        match self.tilt() {
            Tilt::Sum(d) => estimate_tail_tilted(d, &event, n, x, reps, stream),
            Tilt::Kernel(bk) => estimate_tail_tilted(bk, &event, n, x, reps, stream),
        }
    }

    fn l_nx(&self, n: usize, x: f64) -> f64 {
        match self.tilt() {
            Tilt::Sum(d) => l_nx(d, n, x),
            Tilt::Kernel(bk) => l_nx(bk, n, x),
        }
    }

    /// Envelope at C = 1 and the x-range predicate.
    fn envelope(&self, cfg: &ExperimentConfig, n: usize, x: f64) -> (f64, bool) {
        match &self.bk {
            None => {
                let abs3 = self.dist.abs_moment(3.0);
                let v = self.dist.variance;
                let env = envelope_jsw(n, x, abs3, v, 1.0).unwrap_or(f64::NAN);
                let in_range = abs3.is_finite() && x <= cfg.envelope.c1 * jsw_x_max(n, abs3, v);
                (env, in_range)
            }
            Some(bk) => {
                let p = cfg.envelope.p;
                let sp = bk.sigma_p(p) / bk.sigma();
                match bk.a_m() {
                    Some(a_m) if sp.is_finite() => (
                        envelope_ustat(n, x, p, sp, bk.sigma_h_ratio(), a_m, 1.0),
                        in_ustat_range(n, x, p, sp, a_m, cfg.envelope.c1),
                    ),
                    _ => (f64::NAN, false),
                }
            }
        }
    }
}

/// One CSV row of a ratio curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub n: usize,
    pub x: f64,
    pub tail_hat: f64,
    pub tail_se: f64,
    pub gauss_tail: f64,
    pub ratio: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub envelope: f64,
    #[serde(rename = "L_nx")]
    pub l_nx: f64,
    pub in_range: bool,
}

impl RatioRow {
    pub fn deviation(&self) -> f64 {
        (self.ratio - 1.0).abs()
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ratio_hi - self.ratio_lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FittedConstant {
    pub n: usize,
    /// max over the in-range grid of |ratio − 1| / envelope; None if no x is in range.
    pub c_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCurve {
    pub rows: Vec<RatioRow>,
    /// The estimate behind each row, in row order.
    pub estimates: Vec<TailEstimate>,
    pub fitted: Vec<FittedConstant>,
}

impl RatioCurve {
    /// Per x, |ratio − 1| at each larger n is at most its value at the
    /// previous n plus both CI half-widths.
    pub fn non_increasing_within_ci(&self) -> bool {
        let mut by_x: BTreeMap<u64, Vec<&RatioRow>> = BTreeMap::new();
        for r in &self.rows {
            by_x.entry(r.x.to_bits()).or_default().push(r);
        }
        by_x.values().all(|rows| {
            let mut rows = rows.clone();
            rows.sort_by_key(|r| r.n);
            rows.windows(2)
                .all(|w| w[1].deviation() <= w[0].deviation() + w[0].half_width() + w[1].half_width())
        })
    }

    /// max Ĉ / min Ĉ over the n with a fitted constant; None unless there are two.
    pub fn c_hat_spread(&self) -> Option<f64> {
        let cs: Vec<f64> = self.fitted.iter().filter_map(|f| f.c_hat).collect();
        if cs.len() < 2 {
            return None;
        }
        let hi = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi / lo)
    }

    pub fn verdicts(&self) -> BTreeMap<String, bool> {
        let mut v = BTreeMap::new();
        v.insert("ratio_deviation_non_increasing".into(), self.non_increasing_within_ci());
        if let Some(s) = self.c_hat_spread() {
            v.insert("c_hat_within_factor_2".into(), s < 2.0);
        }
        v
    }

    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }
}

/// Serializes rows with a header, LF line endings and shortest round-trip floats.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Tail estimate at (n, x) by the configured estimator.
fn estimate_cell(setup: &Setup, cfg: &ExperimentConfig, n: usize, x: f64) -> Result<TailEstimate> {
    match cfg.estimator {
        EstimatorKind::Plain => setup.plain(n, x, cfg.reps),
        EstimatorKind::Tilted => setup.tilted(n, x, cfg.reps),
        EstimatorKind::Both => {
            let plain = setup.plain(n, x, cfg.reps)?;
            match setup.tilted(n, x, cfg.reps) {
                Ok(t) if t.se < plain.se || (plain.hits == 0 && t.hits > 0) => Ok(t),
                Ok(_) | Err(Error::DegenerateWeights(_)) => Ok(plain),
                Err(e) => Err(e),
            }
        }
    }
}

fn ratio_row(setup: &Setup, cfg: &ExperimentConfig, n: usize, x: f64, est: &TailEstimate) -> RatioRow {
    let gauss = normal_tail(x);
    let (lo, hi) = match est.method {
        Method::Plain => wilson_interval(est.hits, est.reps, Z95),
        Method::Tilted => ((est.estimate - Z95 * est.se).max(0.0), est.estimate + Z95 * est.se),
    };
    let (envelope, in_range) = setup.envelope(cfg, n, x);
    RatioRow {
        n,
        x,
        tail_hat: est.estimate,
        tail_se: est.se,
        gauss_tail: gauss,
        ratio: est.estimate / gauss,
        ratio_lo: lo / gauss,
        ratio_hi: hi / gauss,
        envelope,
        l_nx: setup.l_nx(n, x),
        in_range,
    }
}

fn fit_constants(cfg: &ExperimentConfig, rows: &[RatioRow]) -> Vec<FittedConstant> {
    if !cfg.envelope.c_fit {
        return vec![];
    }
    cfg.n_list
        .iter()
        .map(|&n| {
            let c_hat = rows
                .iter()
                .filter(|r| r.n == n && r.in_range && r.envelope > 0.0 && r.envelope.is_finite())
                .map(|r| r.deviation() / r.envelope)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            FittedConstant { n, c_hat }
        })
        .collect()
}

/// Tail estimates, ratios, intervals and envelopes over the n × x grid.
pub fn run_ratio_curve(cfg: &ExperimentConfig) -> Result<RatioCurve> {
    let setup = Setup::new(cfg)?;
    let mut rows = vec![];
    let mut estimates = vec![];
    for &n in &cfg.n_list {
        for &x in &cfg.x_grid {
            let est = estimate_cell(&setup, cfg, n, x)?;
            rows.push(ratio_row(&setup, cfg, n, x, &est));
            estimates.push(est);
        }
    }
    let fitted = fit_constants(cfg, &rows);
    Ok(RatioCurve {
        rows,
        estimates,
        fitted,
    })
}

/// One row of the `tail` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    pub x: f64,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub hits: usize,
    pub ess: Option<f64>,
}

/// Raw tail estimates; `both` reports each method on its own row.
pub fn run_tail(cfg: &ExperimentConfig) -> Result<Vec<TailRow>> {
    let setup = Setup::new(cfg)?;
    let mut out = vec![];
    for &n in &cfg.n_list {
        for &x in &cfg.x_grid {
            let mut ests = vec![];
            if cfg.estimator != EstimatorKind::Tilted {
                ests.push(setup.plain(n, x, cfg.reps)?);
            }
            if cfg.estimator != EstimatorKind::Plain {
                ests.push(setup.tilted(n, x, cfg.reps)?);
            }
            out.extend(ests.into_iter().map(|e| TailRow {
                n,
                x,
                method: e.method,
                estimate: e.estimate,
                se: e.se,
                reps: e.reps,
                hits: e.hits,
                ess: e.ess,
            }));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub bound: BoundReport,
    pub ratio: RatioRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSet {
    pub rows: Vec<BoundRow>,
    pub fitted: Vec<FittedConstant>,
}

impl BoundSet {
    pub fn verdicts(&self) -> BTreeMap<String, bool> {
        let mut v = BTreeMap::new();
        v.insert(
            "c1_all".into(),
            self.rows.iter().all(|r| r.bound.side_conditions.c1_condition),
        );
        v.insert(
            "rc_all".into(),
            self.rows.iter().all(|r| r.bound.side_conditions.rc_condition),
        );
        v
    }
}

/// δ, L, I, side conditions, envelopes, optional remainders and the ratio per (n, x).
pub fn run_bound_report(cfg: &ExperimentConfig) -> Result<BoundSet> {
    let setup = Setup::new(cfg)?;
    let rcfg = RemainderConfig {
        use_d3: cfg.bounds.use_d3,
        c4: cfg.bounds.c4,
        ..RemainderConfig::default()
    };
    let mut rows = vec![];
    for &n in &cfg.n_list {
        for &x in &cfg.x_grid {
            let mut bound = match setup.tilt() {
                Tilt::Sum(d) => bound_report(d, n, x, cfg.bounds.c1_param),
                Tilt::Kernel(bk) => bound_report(bk, n, x, cfg.bounds.c1_param),
            };
            let (env, _) = setup.envelope(cfg, n, x);
            let env = env.is_finite().then_some(env);
            match &setup.bk {
                None => bound.envelope_jsw = env,
                Some(bk) => {
                    bound.envelope_ustat = env;
                    let reps = cfg.bounds.remainder_reps;
                    if reps > 0 {
                        bound.r_nx = Some(estimate_rnx(bk, n, x, reps, setup.cell(n, x, TAG_REMAINDER), &rcfg)?);
                        bound.breve_r = Some(estimate_breve_rnx(bk, n, x, reps, setup.cell(n, x, TAG_BREVE), &rcfg)?);
                    }
                }
            }
            let est = estimate_cell(&setup, cfg, n, x)?;
            rows.push(BoundRow {
                bound,
                ratio: ratio_row(&setup, cfg, n, x, &est),
            });
        }
    }
    let ratios: Vec<RatioRow> = rows.iter().map(|r| r.ratio).collect();
    let fitted = fit_constants(cfg, &ratios);
    Ok(BoundSet { rows, fitted })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationSuiteReport {
    /// The 20 standing configurations.
    pub suite: Vec<ConcentrationReport>,
    /// A reversed band, whose left side is exactly 0.
    pub empty_band: ConcentrationReport,
    pub all_hold: bool,
}

/// The standing concentration suite plus an empty-band row.
pub fn run_concentration_suite(cfg: &ExperimentConfig) -> Result<ConcentrationSuiteReport> {
    let stream = SeedStream::new(cfg.seed, TAG_CONCENTRATION);
    let reps = cfg.concentration.reps;
    let suite = concentration_suite(reps, stream)
        .iter()
        .map(concentration_check)
        .collect::<Result<Vec<_>>>()?;
    let empty_band = concentration_check(&ConcentrationConfig {
        dist: DistributionSpec::standard_normal(),
        n: 20,
        delta: DeltaChoice::Constants { a: 0.1, b: -0.1 },
        reps,
        stream: stream.substream(u64::MAX),
    })?;
    let all_hold = suite.iter().all(|r| r.verdict) && empty_band.verdict;
    Ok(ConcentrationSuiteReport {
        suite,
        empty_band,
        all_hold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheckReport {
    pub kernel: String,
    pub law: String,
    pub theta: f64,
    pub sigma2: f64,
    pub sigma_h2: f64,
    pub a_m: Option<f64>,
    pub certificate: Option<ViolationReport>,
}

/// Moments of the configured kernel and its domination-condition certificate.
pub fn run_kernel_check(cfg: &ExperimentConfig) -> Result<KernelCheckReport> {
    let bk = cfg
        .bound_kernel()?
        .ok_or_else(|| Error::Config("field `kernel`: required for kernel-check".into()))?;
    let certificate = bk.kernel.kc.map(|kc| {
        let stream = SeedStream::new(cfg.seed, TAG_KERNEL);
        bk.check_condition_kc(kc.c0, bk.tau(kc.tau), cfg.kernel_check.trials, stream)
    });
    Ok(KernelCheckReport {
        kernel: bk.kernel.name.clone(),
        law: bk.dist.to_string(),
        theta: bk.theta,
        sigma2: bk.sigma2,
        sigma_h2: bk.sigma_h2,
        a_m: bk.a_m(),
        certificate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeReport {
    pub sample: Vec<f64>,
    pub decomposition: HoeffdingDecomp,
    /// Relative residuals of the five decomposition identities.
    pub residuals: [f64; 5],
}

/// Decomposes one sample of size n-list[0] drawn from the configured law.
pub fn run_decompose(cfg: &ExperimentConfig) -> Result<DecomposeReport> {
    cfg.validate()?;
    let bk = cfg
        .bound_kernel()?
        .ok_or_else(|| Error::Config("field `kernel`: required for decompose".into()))?;
    let n = cfg.n_list[0];
    let sample = bk
        .dist
        .sample(n, SeedStream::new(cfg.seed, TAG_DECOMPOSE).substream(n as u64));
    let decomposition = hoeffding_decompose(&bk, &sample, false)?;
    let residuals = decomposition.identity_residuals();
    Ok(DecomposeReport {
        sample,
        decomposition,
        residuals,
    })
}

/// The JSON envelope every experiment is persisted in.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub config_echo: ExperimentConfig,
    pub results: T,
    pub fitted_constants: Vec<FittedConstant>,
    pub verdicts: BTreeMap<String, bool>,
    pub runtime_seconds: f64,
    pub seed: u64,
}

impl<T: Serialize> Report<T> {
    pub fn new(
        cfg: &ExperimentConfig,
        results: T,
        fitted_constants: Vec<FittedConstant>,
        verdicts: BTreeMap<String, bool>,
        started: Instant,
    ) -> Self {
        Report {
            config_echo: cfg.clone(),
            results,
            fitted_constants,
            verdicts,
            runtime_seconds: started.elapsed().as_secs_f64(),
            seed: cfg.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}
