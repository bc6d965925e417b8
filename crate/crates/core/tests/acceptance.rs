//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines are always printed and timings are sequential.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prophet_core::adversarial::{
    dp_optimal_small, dp_value_hard_general, hard_general_limit_ratio, hard_general_prophet,
    make_named, Tag,
};
use prophet_core::bounds::{discrete_report, equalizer_curve, guarantee_limit, profile, stop_cdf_bounds};
use prophet_core::optimizer::{control, equalizer, is_feasible, optimize_piecewise};
use prophet_core::simulator::{empirical_stop_cdf, exact_eval, monte_carlo, monte_carlo_schedule};
use prophet_core::{AlphaStrategy, Distribution, Instance, Mode, SimConfig, ThresholdSchedule};

const INV_E: f64 = 0.367_879_441_171_442_3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn strategies() -> Vec<AlphaStrategy> {
    vec![
        AlphaStrategy::constant(INV_E).unwrap(),
        AlphaStrategy::affine(0.53, -0.38).unwrap(),
        AlphaStrategy::piecewise(vec![0.8, 0.6, 0.45, 0.3, 0.1]).unwrap(),
    ]
}

fn random_dist(rng: &mut ChaCha8Rng, discrete_only: bool) -> Distribution {
    let kind = if discrete_only { 0 } else { rng.random_range(0..3) };
    match kind {
        0 => {
            let k = rng.random_range(1..=3);
            let values: Vec<f64> = (0..k).map(|_| (rng.random_range(0..20) as f64) * 0.25).collect();
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            Distribution::finite(values, w.iter().map(|v| v / s).collect()).unwrap()
        }
        1 => {
            let lo = rng.random_range(0.0..2.0);
            Distribution::uniform(lo, lo + rng.random_range(0.1..3.0)).unwrap()
        }
        _ => {
            let p = rng.random_range(0.05..0.5);
            Distribution::mixture(vec![
                (p, Distribution::point(rng.random_range(1.0..10.0)).unwrap()),
                (1.0 - p, Distribution::uniform(0.0, 1.0).unwrap()),
            ])
            .unwrap()
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n_max: usize, discrete_only: bool) -> Instance {
    let n = rng.random_range(1..=n_max);
    Instance::new((0..n).map(|_| random_dist(rng, discrete_only)).collect()).unwrap()
}

fn c1() -> Outcome {
    let v = guarantee_limit(&AlphaStrategy::constant(INV_E).unwrap(), 64).unwrap();
    let err = (v - (1.0 - INV_E)).abs();
    outcome(err <= 1e-6, format!("guarantee {v:.9}, |error| {err:.2e}"))
}

fn c2() -> Outcome {
    let v = guarantee_limit(&AlphaStrategy::affine(0.53, -0.38).unwrap(), 64).unwrap();
    outcome(v >= 0.657, format!("guarantee {v:.6}"))
}

fn c3() -> Outcome {
    let sol = equalizer::solve_equalizing_ode(
        &equalizer::OdeSolution::linear_seed(equalizer::DEFAULT_NODES),
        equalizer::DEFAULT_ITERATIONS,
    )
    .unwrap();
    let alpha = sol.alpha();
    let curve = equalizer_curve(&profile(&alpha, 256)).unwrap();
    let lo = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let g = guarantee_limit(&alpha, 64).unwrap();
    outcome(
        lo >= 0.6653 && hi <= 0.6720 && g >= 0.665,
        format!("curve [{lo:.5}, {hi:.5}], guarantee {g:.6}"),
    )
}

fn c4() -> Outcome {
    let r = optimize_piecewise(30, 4, 0).unwrap();
    outcome(r.min_f >= 0.6697, format!("min_j f_j {:.6} (argmin j = {})", r.min_f, r.report.argmin))
}

fn c5() -> Outcome {
    let r = control::sweep_default().unwrap();
    outcome(
        (0.669..=0.6755).contains(&r.sup),
        format!(
            "sup {:.6} at K = {:.3}, t_bar = {:.4} ({} of {} feasible)",
            r.sup, r.argmax_k, r.argmax_t_bar, r.feasible_points, r.total_points
        ),
    )
}

fn c6() -> Outcome {
    let a = 3f64.sqrt() - 1.0;
    let (v, cut) = dp_value_hard_general(10_000, a).unwrap();
    let ratio = v / hard_general_prophet(10_000, a);
    let limit = hard_general_limit_ratio(a);
    outcome(
        ratio <= 0.7330 && (limit - a).abs() <= 1e-12,
        format!("ratio {ratio:.6} (cutoff {cut}), limit {limit:.15}"),
    )
}

fn c7() -> Outcome {
    let n = 200;
    let inst = make_named(Tag::SingleThresholdTrap { n }).unwrap().instance;
    let cfg = SimConfig::new(1_000_000, 7, Mode::Deterministic);
    let mut best = f64::NEG_INFINITY;
    for tau in [f64::NEG_INFINITY, 0.0, 0.5, 1.0, 100.0, 200.0] {
        let r = monte_carlo_schedule(&inst, &ThresholdSchedule::fixed(vec![tau; n]), &cfg).unwrap();
        best = best.max(r.ratio);
    }
    let r = monte_carlo(&inst, &AlphaStrategy::constant(INV_E).unwrap(), &cfg).unwrap();
    let target = 1.0 - INV_E - 0.02;
    outcome(
        best <= 0.52 && r.ratio >= target,
        format!("best fixed {best:.4}, stochastic tie-break {:.4} +- {:.4}", r.ratio, r.ratio_ci_radius),
    )
}

fn c8a() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..20 {
        let inst = random_instance(&mut rng, 6, false);
        let n = inst.len();
        for (s, alpha) in strategies().iter().enumerate() {
            let levels = alpha.levels_at(n);
            let cdf = empirical_stop_cdf(&inst, alpha, 100_000, 100 * i + s as u64).unwrap();
            for k in 1..=n {
                let (lo, hi) = stop_cdf_bounds(&levels, k).unwrap();
                let (p, r) = (cdf.p[k - 1], cdf.radius[k - 1]);
                worst = worst.max(lo - p - r).max(p - hi - r);
            }
        }
    }
    outcome(worst <= 1e-12, format!("largest excess beyond 3 sigma {worst:.2e}"))
}

/// A case beyond 3 sigma at 2e5 trials is rerun once at 5e6 trials on a
/// fresh stream; with 36 comparisons one first-stage excursion is expected.
fn c8b() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut reruns = Vec::new();
    let z_score = |inst: &Instance, alpha: &AlphaStrategy, exact: f64, trials: u64, seed: u64| {
        let r = monte_carlo(inst, alpha, &SimConfig::new(trials, seed, Mode::Deterministic)).unwrap();
        (r.mean_reward - exact).abs() / (r.std_error + 1e-15)
    };
    for i in 0..12 {
        let inst = random_instance(&mut rng, 5, true);
        for (s, alpha) in strategies().iter().enumerate() {
            let exact = exact_eval(&inst, alpha).unwrap();
            let seed = 1000 + 10 * i + s as u64;
            let mut z = z_score(&inst, alpha, exact, 200_000, seed);
            if z > 3.0 {
                let z2 = z_score(&inst, alpha, exact, 5_000_000, seed + 1_000_000);
                reruns.push(format!("{z:.2} -> {z2:.2}"));
                z = z2;
            }
            worst = worst.max(z);
            cases += 1;
        }
    }
    outcome(worst <= 3.0, format!("{cases} cases, largest |z| {worst:.2}, reruns {reruns:?}"))
}

fn c8c() -> Outcome {
    let zoo = [
        Tag::NearDeterministic { eps: 1e-3 },
        Tag::IidSpike { n: 6, eps: 0.05 },
        Tag::SingleThresholdTrap { n: 6 },
        Tag::SingleThresholdTrap { n: 50 },
        Tag::HardGeneral { n: 6, a: 0.7 },
        Tag::HardGeneral { n: 40, a: 3f64.sqrt() - 1.0 },
    ];
    let mut failures = Vec::new();
    for (t, tag) in zoo.iter().enumerate() {
        let ni = make_named(*tag).unwrap();
        let inst = &ni.instance;
        let n = inst.len();
        let optimal = if inst.is_discrete() && n <= 8 {
            Some(dp_optimal_small(inst).unwrap())
        } else {
            ni.closed_forms.optimal
        };
        for (s, alpha) in strategies().iter().enumerate() {
            let min_f = discrete_report(&alpha.levels_at(n)).unwrap().min;
            let cfg = SimConfig::new(200_000, 500 + 10 * t as u64 + s as u64, Mode::Deterministic);
            let r = monte_carlo(inst, alpha, &cfg).unwrap();
            let lower_ok = min_f <= r.ratio + r.ratio_ci_radius;
            let upper_ok = optimal.is_none_or(|o| r.ratio - r.ratio_ci_radius <= o / r.prophet);
            if !(lower_ok && upper_ok) {
                failures.push(format!("{} / {alpha}", tag.name()));
            }
        }
    }
    outcome(failures.is_empty(), format!("{} instances x 3 strategies, failures {:?}", zoo.len(), failures))
}

fn c8d() -> Outcome {
    let mut emitted = vec![optimize_piecewise(12, 1, 3).unwrap().levels];
    let pw: Vec<AlphaStrategy> =
        emitted.drain(..).map(|l| AlphaStrategy::piecewise(l).unwrap()).collect();
    let ode = equalizer::solve_equalizing_ode(&equalizer::OdeSolution::linear_seed(256), 5)
        .unwrap()
        .alpha();
    let mut all = pw;
    all.push(ode);
    for (k, t) in [(0.8, 0.0), (1.2, 1.0 / 30.0), (2.0, 0.2)] {
        if let Some(a) = control::solve_control_family(k, t).unwrap().alpha() {
            all.push(a);
        }
    }
    let ok = all.iter().all(|a| is_feasible(a, 10_000));
    outcome(ok, format!("{} emitted strategies checked on 10^4 points", all.len()))
}

fn c8e() -> Outcome {
    let inst = make_named(Tag::HardGeneral { n: 20, a: 0.7 }).unwrap().instance;
    let alpha = AlphaStrategy::affine(0.53, -0.38).unwrap();
    let reports: Vec<String> = [1, 2, 4]
        .iter()
        .map(|&t| {
            let cfg = SimConfig::new(50_000, 11, Mode::Deterministic).with_threads(t);
            monte_carlo(&inst, &alpha, &cfg).unwrap().to_json()
        })
        .collect();
    let pw: Vec<Vec<f64>> = [1, 3]
        .iter()
        .map(|&t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| optimize_piecewise(6, 3, 5).unwrap().levels)
        })
        .collect();
    let same = reports.windows(2).all(|w| w[0] == w[1])
        && pw[0].iter().zip(&pw[1]).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(same, "simulation at 1/2/4 threads, optimizer at 1/3 threads".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, fn() -> Outcome); 12] = [
        ("1 single threshold guarantee", 1.0, c1),
        ("2 affine strategy guarantee", 1.0, c2),
        ("3 equalizing ode", 30.0, c3),
        ("4 piecewise maximin m = 30", 60.0, c4),
        ("5 blind upper bound sweep", 60.0, c5),
        ("6 general upper bound", 1.0, c6),
        ("7 single threshold trap", 60.0, c7),
        ("8a stopping time sandwich", f64::INFINITY, c8a),
        ("8b monte carlo vs exact", f64::INFINITY, c8b),
        ("8c soundness chain", f64::INFINITY, c8c),
        ("8d emitted strategies nonincreasing", f64::INFINITY, c8d),
        ("8e thread-count invariance", f64::INFINITY, c8e),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        let pass = o.pass && secs < budget;
        let limit = if budget.is_finite() { format!(" / {budget:.0} s") } else { String::new() };
        println!(
            "[{}] criterion {name}: {} ({secs:.2} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
