use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use prophet_core::adversarial::{
    self, dp_optimal_small, dp_value_hard_general, make_named, AdversarialRow, Tag,
};
use prophet_core::bounds::{self, discrete_report, guarantee_limit_terms, piecewise_report};
use prophet_core::optimizer::{control, equalizer, optimize_piecewise};
use prophet_core::reproduce::{self, Check, INV_E};
use prophet_core::simulator::{exact_eval, monte_carlo};
use prophet_core::{AlphaStrategy, Error, Instance, Mode, SimConfig, SimReport};

#[derive(Parser)]
#[command(name = "prophet-lab", version, about = "Blind threshold strategies for the prophet secretary problem")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for simulation and optimization.
    #[arg(long, global = true, env = "PROPHET_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Guarantee of a strategy: continuum limit of min_j f_j, and the
    /// finite-n report with --n.
    Bounds(BoundsArgs),
    /// Search for good strategies: step maximin, equalizing ODE, or one
    /// member of the control family behind the blind upper bound.
    Optimize(OptimizeArgs),
    /// Monte Carlo value of a strategy on an instance file.
    Simulate(SimulateArgs),
    /// Sweep of the control family; the largest two-instance objective
    /// bounds every blind strategy from above.
    UpperBound(UpperBoundArgs),
    /// Values and ratios on the named hard instances.
    Adversarial(AdversarialArgs),
    /// Recompute every headline constant and print a pass/fail table.
    ReproduceAll(ReproduceArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// Strategy: constant:p | affine:a,b | pw:a1,...,am | tab:path
    #[arg(long)]
    alpha: String,
    /// Also report f_j for the n-variable discrete functional.
    #[arg(long)]
    n: Option<usize>,
    /// Starting cell count of the quadrature refinement.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Emit the equalizer curve instead of the summary.
    #[arg(long)]
    curve: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Piecewise,
    Ode,
    Control,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum, default_value = "piecewise")]
    method: Method,
    /// Number of pieces.
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Grid intervals of the ODE solution.
    #[arg(long, default_value_t = equalizer::DEFAULT_NODES)]
    nodes: usize,
    /// Picard iterations of the ODE solver.
    #[arg(long, default_value_t = equalizer::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Initial strategy for the ODE solver; defaults to 0.6 (1 - x).
    #[arg(long)]
    init: Option<String>,
    /// Control family parameter K.
    #[arg(long = "K", default_value_t = 1.2)]
    k: f64,
    /// Control family switching time.
    #[arg(long, default_value_t = 1.0 / 30.0)]
    t_bar: f64,
    /// Write per-stage or per-iteration optimizer values here as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Instance file: {"dists":[...]}
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    alpha: String,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value = "blind")]
    mode: Mode,
    /// Also enumerate the exact value (small discrete instances only).
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct UpperBoundArgs {
    #[arg(long = "K-points", default_value_t = control::DEFAULT_K_POINTS)]
    k_points: usize,
    #[arg(long, default_value_t = control::DEFAULT_T_POINTS)]
    t_points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TagName {
    NearDeterministic,
    IidSpike,
    SingleThresholdTrap,
    HardGeneral,
}

#[derive(Args)]
struct AdversarialArgs {
    #[arg(long, value_enum)]
    tag: TagName,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.7320508075688772)]
    a: f64,
    #[arg(long, default_value_t = adversarial::DEFAULT_EPS)]
    eps: f64,
    /// Blind strategy to score; defaults to the constant 1/e.
    #[arg(long)]
    alpha: Option<String>,
    /// Monte Carlo trials for the strategy row; 0 skips it.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Smaller Monte Carlo and restart budgets.
    #[arg(long)]
    quick: bool,
}

struct Report {
    json: Value,
    csv: String,
}

fn csv_lines(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn bounds_cmd(a: &BoundsArgs) -> prophet_core::Result<Report> {
    let alpha = AlphaStrategy::parse(&a.alpha)?;
    if a.curve {
        let terms = guarantee_limit_terms(&alpha, a.grid)?;
        let p = bounds::profile(&alpha, terms.cells);
        let curve = bounds::equalizer_curve(&p)?;
        let json = json!({
            "alpha": alpha.to_string(),
            "x": curve.iter().map(|c| c.0).collect::<Vec<_>>(),
            "alpha_values": p.alpha,
            "equalizer": curve.iter().map(|c| c.1).collect::<Vec<_>>(),
        });
        let rows = curve.iter().zip(&p.alpha).map(|((x, e), v)| format!("{x},{v},{e}"));
        return Ok(Report { json, csv: csv_lines("x,alpha,equalizer", rows) });
    }
    let terms = guarantee_limit_terms(&alpha, a.grid)?;
    let discrete = a.n.map(|n| discrete_report(&alpha.levels_at(n))).transpose()?;
    let piecewise = match &alpha {
        AlphaStrategy::PiecewiseConstant { levels } => Some(piecewise_report(levels)?),
        _ => None,
    };
    let json = json!({
        "alpha": alpha.to_string(),
        "min": terms.value(),
        "integral": terms.integral,
        "inf": terms.inf,
        "argmin_x": terms.argmin_x,
        "cells": terms.cells,
        "n": a.n,
        "discrete": discrete,
        "piecewise": piecewise,
    });
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let row = format!(
        "\"{}\",{},{},{},{},{},{},{}",
        alpha,
        terms.value(),
        terms.integral,
        terms.inf,
        terms.argmin_x,
        a.n.map(|n| n.to_string()).unwrap_or_default(),
        opt(discrete.as_ref().map(|r| r.min)),
        opt(piecewise.as_ref().map(|r| r.min)),
    );
    Ok(Report {
        json,
        csv: csv_lines("alpha,min,integral,inf,argmin_x,n,discrete_min,piecewise_min", [row]),
    })
}

fn write_log(path: Option<&PathBuf>, text: impl FnOnce() -> String) -> prophet_core::Result<()> {
    match path {
        Some(p) => fs::write(p, text()).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => Ok(()),
    }
}

fn optimize_cmd(a: &OptimizeArgs, seed: u64) -> prophet_core::Result<Report> {
    match a.method {
        Method::Piecewise => {
            let r = optimize_piecewise(a.m, a.restarts, seed)?;
            write_log(a.log.as_ref(), || {
                csv_lines(
                    "restart,temperature,min_f,evaluations",
                    r.history.iter().map(|h| {
                        format!("{},{},{},{}", h.restart, h.temperature, h.min_f, h.evaluations)
                    }),
                )
            })?;
            let rows = r.levels.iter().enumerate().map(|(k, v)| format!("{},{v}", k + 1));
            let csv = csv_lines("k,level", rows);
            Ok(Report { json: serde_json::to_value(&r)?, csv })
        }
        Method::Ode => {
            let init = match &a.init {
                Some(spec) => equalizer::OdeSolution::from_alpha(&AlphaStrategy::parse(spec)?, a.nodes),
                None => equalizer::OdeSolution::linear_seed(a.nodes),
            };
            let (sol, log) = equalizer::solve_equalizing_ode_logged(&init, a.iterations)?;
            write_log(a.log.as_ref(), || {
                csv_lines(
                    "iteration,slope,alpha0,residual",
                    log.iter().map(|l| format!("{},{},{},{}", l.iteration, l.slope, l.alpha0, l.residual)),
                )
            })?;
            let check = equalizer::check(&sol, 64)?;
            let rows = sol
                .grid
                .iter()
                .zip(sol.u_values.iter().zip(&sol.alpha_values))
                .map(|(x, (u, v))| format!("{x},{u},{v}"));
            let csv = csv_lines("x,u,alpha", rows);
            let json = json!({ "solution": sol, "check": check, "iterations": log });
            Ok(Report { json, csv })
        }
        Method::Control => {
            let p = control::solve_control_family(a.k, a.t_bar)?;
            let rows = p.beta_grid.iter().zip(&p.beta_values).map(|(t, b)| format!("{t},{b}"));
            let csv = csv_lines("t,beta", rows);
            Ok(Report { json: serde_json::to_value(&p)?, csv })
        }
    }
}

fn simulate_cmd(a: &SimulateArgs, seed: u64, threads: Option<usize>) -> prophet_core::Result<Report> {
    let text = fs::read_to_string(&a.instance)
        .map_err(|e| Error::Io(format!("{}: {e}", a.instance.display())))?;
    let inst = Instance::from_json(&text)?;
    let alpha = AlphaStrategy::parse(&a.alpha)?;
    let cfg = SimConfig { trials: a.trials, seed, mode: a.mode, threads };
    let r = monte_carlo(&inst, &alpha, &cfg)?;
    if a.exact {
        let exact = exact_eval(&inst, &alpha)?;
        let json = json!({ "report": r, "exact": exact });
        let csv = csv_lines(
            &format!("{},exact", SimReport::CSV_HEADER),
            [format!("{},{exact}", r.csv_row())],
        );
        return Ok(Report { json, csv });
    }
    let csv = csv_lines(SimReport::CSV_HEADER, [r.csv_row()]);
    Ok(Report { json: serde_json::to_value(&r)?, csv })
}

fn upper_bound_cmd(a: &UpperBoundArgs) -> prophet_core::Result<Report> {
    if a.k_points == 0 || a.t_points == 0 {
        return Err(Error::InvalidArgument("grid sizes must be positive".into()));
    }
    let r = control::sweep_upper_bound(
        &control::linspace(control::K_MAX, a.k_points),
        &control::linspace(control::T_BAR_MAX, a.t_points),
    )?;
    let rows = r.points.iter().map(|(k, t, v)| format!("{k},{t},{v}"));
    let csv = csv_lines("K,t_bar,objective", rows);
    Ok(Report { json: serde_json::to_value(&r)?, csv })
}

fn adversarial_cmd(a: &AdversarialArgs, seed: u64, threads: Option<usize>) -> prophet_core::Result<Report> {
    let tag = match a.tag {
        TagName::NearDeterministic => Tag::NearDeterministic { eps: a.eps },
        TagName::IidSpike => Tag::IidSpike { n: a.n, eps: a.eps },
        TagName::SingleThresholdTrap => Tag::SingleThresholdTrap { n: a.n },
        TagName::HardGeneral => Tag::HardGeneral { n: a.n, a: a.a },
    };
    let named = make_named(tag)?;
    let inst = &named.instance;
    let name = tag.name().to_string();
    let prophet = inst.prophet_value()?;
    let alpha = match &a.alpha {
        Some(s) => AlphaStrategy::parse(s)?,
        None => AlphaStrategy::constant(INV_E)?,
    };
    let row = |strategy: String, value: f64, prophet: f64| AdversarialRow {
        instance: name.clone(),
        strategy,
        value,
        prophet,
        ratio: value / prophet,
    };
    let mut rows = Vec::new();
    if let Tag::HardGeneral { n, a: av } = tag {
        let (v, cut) = dp_value_hard_general(n, av)?;
        rows.push(row(format!("optimal (cutoff {cut})"), v, prophet));
    } else if inst.is_discrete() && inst.len() <= adversarial::DP_MAX_N {
        rows.push(row("optimal".into(), dp_optimal_small(inst)?, prophet));
    }
    match tag {
        Tag::NearDeterministic { .. } => {
            let r = adversarial::blind_value_near_deterministic(&alpha, 64);
            rows.push(row(format!("{alpha} limit"), r * prophet, prophet));
        }
        Tag::IidSpike { .. } => {
            let r = adversarial::blind_value_iid_spike(&alpha, 64);
            rows.push(row(format!("{alpha} limit"), r * prophet, prophet));
        }
        _ => {}
    }
    if a.trials > 0 {
        let mode = if inst.is_discrete() { Mode::Deterministic } else { Mode::Blind };
        let cfg = SimConfig { trials: a.trials, seed, mode, threads };
        let r = monte_carlo(inst, &alpha, &cfg)?;
        rows.push(row(format!("{alpha} monte carlo"), r.mean_reward, r.prophet));
    }
    if let Tag::SingleThresholdTrap { n } = tag {
        if a.trials > 0 {
            let t = reproduce::trap_ratios(n, a.trials, seed, threads)?;
            rows.push(row(
                format!("best fixed threshold {}", t.best_fixed_threshold),
                t.best_fixed * prophet,
                prophet,
            ));
        }
    }
    let csv = csv_lines(AdversarialRow::CSV_HEADER, rows.iter().map(AdversarialRow::csv_row));
    let json = json!({ "closed_forms": named.closed_forms, "rows": rows });
    Ok(Report { json, csv })
}

fn reproduce_cmd(a: &ReproduceArgs, seed: u64, threads: Option<usize>) -> prophet_core::Result<(Report, Vec<Check>)> {
    let checks = reproduce::reproduce_all(seed, threads, a.quick)?;
    let csv = csv_lines(Check::CSV_HEADER, checks.iter().map(Check::csv_row));
    Ok((Report { json: serde_json::to_value(&checks)?, csv }, checks))
}

fn print_table(checks: &[Check]) {
    eprintln!("{:<9} {:<34} {:>10} {:>8}  {:<6} target", "constant", "check", "value", "seconds", "result");
    for c in checks {
        eprintln!(
            "{:<9} {:<34} {:>10.6} {:>8.2}  {:<6} {}",
            c.constant,
            c.label,
            c.value,
            c.seconds,
            if c.pass { "PASS" } else { "FAIL" },
            c.target
        );
    }
}

fn emit(report: &Report, format: Format, output: Option<&PathBuf>) -> prophet_core::Result<()> {
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json)?;
            s.push('\n');
            s
        }
        Format::Csv => report.csv.clone(),
    };
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn run(cli: &Cli) -> prophet_core::Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // a second initialization only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let default_format = match cli.command {
        Command::Adversarial(_) => Format::Csv,
        _ => Format::Json,
    };
    let format = cli.format.unwrap_or(default_format);
    let (report, all_pass) = match &cli.command {
        Command::Bounds(a) => (bounds_cmd(a)?, true),
        Command::Optimize(a) => (optimize_cmd(a, cli.seed)?, true),
        Command::Simulate(a) => (simulate_cmd(a, cli.seed, cli.threads)?, true),
        Command::UpperBound(a) => (upper_bound_cmd(a)?, true),
        Command::Adversarial(a) => (adversarial_cmd(a, cli.seed, cli.threads)?, true),
        Command::ReproduceAll(a) => {
            let (report, checks) = reproduce_cmd(a, cli.seed, cli.threads)?;
            print_table(&checks);
            let pass = checks.iter().all(|c| c.pass);
            if cli.output.is_none() {
                return Ok(pass);
            }
            (report, pass)
        }
    };
    emit(&report, format, cli.output.as_ref())?;
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
