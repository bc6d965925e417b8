//! Seeded Monte Carlo estimates and exact enumeration on small instances.
//!
//! Trials are cut into fixed batches of [`BATCH`]. Batch `b` draws orders,
//! uniforms and realizations from ChaCha stream `2b` and tie-breaks from
//! stream `2b + 1` of the same seed, and batch sums are combined in batch
//! order. Reports are therefore bit-identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::AlphaStrategy;
use crate::model::{Instance, PermutationDraw};
use crate::thresholds::{
    build_blind_cached, build_deterministic, run_stochastic_tta_with, LevelCache, ThresholdSchedule,
};
use crate::{Error, Result};

pub const BATCH: u64 = 1024;

/// Largest instance [`exact_eval`] enumerates.
pub const EXACT_MAX_N: usize = 8;
/// Largest product support [`exact_eval`] accepts.
pub const EXACT_MAX_SUPPORT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Levels `alpha(u_(i))` from sorted fresh uniforms.
    Blind,
    /// Levels `alpha(i/n)`.
    Deterministic,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blind" => Ok(Mode::Blind),
            "deterministic" => Ok(Mode::Deterministic),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    /// Worker cap; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, mode: Mode) -> Self {
        SimConfig { trials, seed, mode, threads: None }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: u64,
    pub mean_reward: f64,
    pub std_error: f64,
    pub prophet: f64,
    pub ratio: f64,
    /// Three standard errors, in ratio units.
    pub ratio_ci_radius: f64,
    pub seed: u64,
}

impl SimReport {
    pub const CSV_HEADER: &'static str =
        "trials,mean_reward,std_error,prophet,ratio,ratio_ci_radius,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.trials,
            self.mean_reward,
            self.std_error,
            self.prophet,
            self.ratio,
            self.ratio_ci_radius,
            self.seed
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

fn batch_rngs(seed: u64, batch: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut main = ChaCha8Rng::seed_from_u64(seed);
    main.set_stream(2 * batch);
    let mut tie = ChaCha8Rng::seed_from_u64(seed);
    tie.set_stream(2 * batch + 1);
    (main, tie)
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `trial` over all trials in fixed batches and returns the per-batch
/// results in batch order.
fn run_batches<T, F>(cfg: &SimConfig, trial_batch: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64, &mut ChaCha8Rng, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
{
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let batches = cfg.trials.div_ceil(BATCH);
    let trials = cfg.trials;
    let seed = cfg.seed;
    in_pool(cfg.threads, || {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let (mut main, mut tie) = batch_rngs(seed, b);
                let count = BATCH.min(trials - b * BATCH);
                trial_batch(b, count, &mut main, &mut tie)
            })
            .collect::<Result<Vec<T>>>()
    })?
}

/// Where the thresholds of each trial come from.
enum Source<'a> {
    Fixed(&'a ThresholdSchedule),
    Blind(&'a AlphaStrategy, LevelCache),
}

fn simulate(
    instance: &Instance,
    source: &Source<'_>,
    cfg: &SimConfig,
) -> Result<Vec<(Kahan, Kahan)>> {
    let n = instance.len();
    run_batches(cfg, |_, count, main, tie| {
        let mut sum = Kahan::default();
        let mut sq = Kahan::default();
        let mut real = vec![0.0; n];
        for _ in 0..count {
            let draw = PermutationDraw::random(n, main);
            instance.sample_into(main, &mut real);
            let out = match source {
                Source::Fixed(s) => run_stochastic_tta_with(s, &draw, &real, tie)?,
                Source::Blind(alpha, cache) => {
                    let s = build_blind_cached(instance, alpha, cache, &draw.uniforms)?;
                    run_stochastic_tta_with(&s, &draw, &real, tie)?
                }
            };
            sum.add(out.reward);
            sq.add(out.reward * out.reward);
        }
        Ok((sum, sq))
    })
}

fn report(instance: &Instance, parts: &[(Kahan, Kahan)], cfg: &SimConfig) -> Result<SimReport> {
    let mut sum = Kahan::default();
    let mut sq = Kahan::default();
    for (s, q) in parts {
        sum.add(s.sum);
        sq.add(q.sum);
    }
    let t = cfg.trials as f64;
    let mean = sum.sum / t;
    let var = if cfg.trials > 1 {
        ((sq.sum - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    let std_error = (var / t).sqrt();
    let prophet = instance.prophet_value()?;
    let (ratio, radius) = if prophet > 0.0 {
        (mean / prophet, 3.0 * std_error / prophet)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SimReport {
        trials: cfg.trials,
        mean_reward: mean,
        std_error,
        prophet,
        ratio,
        ratio_ci_radius: radius,
        seed: cfg.seed,
    })
}

/// Monte Carlo estimate of the blind strategy's reward. Atom thresholds are
/// resolved by stochastic tie-breaking.
pub fn monte_carlo(instance: &Instance, alpha: &AlphaStrategy, cfg: &SimConfig) -> Result<SimReport> {
    let parts = match cfg.mode {
        Mode::Deterministic => {
            let s = build_deterministic(instance, alpha)?;
            simulate(instance, &Source::Fixed(&s), cfg)?
        }
        Mode::Blind => {
            let cache = LevelCache::new(instance, alpha)?;
            simulate(instance, &Source::Blind(alpha, cache), cfg)?
        }
    };
    report(instance, &parts, cfg)
}

/// Monte Carlo estimate for a fixed schedule; `cfg.mode` is ignored.
pub fn monte_carlo_schedule(
    instance: &Instance,
    schedule: &ThresholdSchedule,
    cfg: &SimConfig,
) -> Result<SimReport> {
    if schedule.len() != instance.len() {
        return Err(Error::InvalidArgument("schedule length differs from instance size".into()));
    }
    let parts = simulate(instance, &Source::Fixed(schedule), cfg)?;
    report(instance, &parts, cfg)
}

/// Empirical `P(T <= k)` for `k = 1..=n` with 3-sigma radii.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopCdf {
    pub p: Vec<f64>,
    pub radius: Vec<f64>,
}

/// Stopping-time distribution of the deterministic strategy.
pub fn empirical_stop_cdf(
    instance: &Instance,
    alpha: &AlphaStrategy,
    trials: u64,
    seed: u64,
) -> Result<StopCdf> {
    let n = instance.len();
    let cfg = SimConfig::new(trials, seed, Mode::Deterministic);
    let schedule = build_deterministic(instance, alpha)?;
    let counts = run_batches(&cfg, |_, count, main, tie| {
        let mut hist = vec![0u64; n];
        let mut real = vec![0.0; n];
        for _ in 0..count {
            let draw = PermutationDraw::random(n, main);
            instance.sample_into(main, &mut real);
            if let Some(i) = run_stochastic_tta_with(&schedule, &draw, &real, tie)?.stop_index {
                hist[i] += 1;
            }
        }
        Ok(hist)
    })?;
    let mut hist = vec![0u64; n];
    for h in counts {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    let t = trials as f64;
    let mut acc = 0u64;
    let mut p = Vec::with_capacity(n);
    let mut radius = Vec::with_capacity(n);
    for h in hist {
        acc += h;
        let f = acc as f64 / t;
        p.push(f);
        radius.push(3.0 * (f * (1.0 - f) / t).sqrt());
    }
    Ok(StopCdf { p, radius })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn check_exact_guards(instance: &Instance) -> Result<Vec<Vec<(f64, f64)>>> {
    let n = instance.len();
    if n > EXACT_MAX_N {
        return Err(Error::SizeGuard(format!("exact evaluation needs n <= {EXACT_MAX_N}, got {n}")));
    }
    if !instance.is_discrete() {
        return Err(Error::InvalidInstance("exact evaluation needs discrete distributions".into()));
    }
    let atoms: Vec<Vec<(f64, f64)>> = instance.dists().iter().map(|d| d.atoms()).collect();
    let support: f64 = atoms.iter().map(|a| a.len() as f64).product();
    if support > EXACT_MAX_SUPPORT {
        return Err(Error::SizeGuard(format!("product support {support} exceeds {EXACT_MAX_SUPPORT}")));
    }
    Ok(atoms)
}

/// Exact expected reward of the deterministic strategy on a discrete
/// instance with tie weights taken in expectation.
pub fn exact_eval(instance: &Instance, alpha: &AlphaStrategy) -> Result<f64> {
    check_exact_guards(instance)?;
    let schedule = build_deterministic(instance, alpha)?;
    exact_eval_schedule(instance, &schedule)
}

/// Exact expected reward of a fixed schedule: the mean over all `n!` orders
/// of the sum over the product support.
pub fn exact_eval_schedule(instance: &Instance, schedule: &ThresholdSchedule) -> Result<f64> {
    let atoms = check_exact_guards(instance)?;
    let n = instance.len();
    if schedule.len() != n {
        return Err(Error::InvalidArgument("schedule length differs from instance size".into()));
    }
    let mut total = Kahan::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut idx = vec![0usize; n];
    loop {
        // every outcome of the product law for this order
        idx.iter_mut().for_each(|k| *k = 0);
        loop {
            let mut prob = 1.0;
            for (j, &k) in idx.iter().enumerate() {
                prob *= atoms[j][k].1;
            }
            let mut alive = 1.0;
            let mut reward = 0.0;
            for (i, &j) in order.iter().enumerate() {
                let v = atoms[j][idx[j]].0;
                let t = schedule.tau[i];
                if v > t {
                    reward += alive * v;
                    break;
                }
                if v == t {
                    if let Some(map) = &schedule.atoms[i] {
                        let p = *map.get(&j).ok_or(Error::UnresolvedTie { position: i, variable: j })?;
                        reward += alive * p * v;
                        alive *= 1.0 - p;
                    }
                }
            }
            total.add(prob * reward);
            // odometer step over the product support
            let mut pos = 0;
            while pos < n {
                idx[pos] += 1;
                if idx[pos] < atoms[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == n {
                break;
            }
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(total.sum / factorial(n))
}

/// Lexicographic successor; false once the last permutation is reached.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
