//! The control family `alpha_{K,tbar}`: one on `[0, tbar)`, then a curve
//! `beta` solving `beta' = -K exp(int_tbar^t ln beta)` that reaches zero
//! exactly at `t = 1`.
//!
//! With `g(t) = int_tbar^t ln beta` the problem is the explicit system
//! `beta' = -K e^g`, `g' = ln beta`, integrated forward from `beta(tbar) = b0`,
//! `g(tbar) = 0`, until `beta` hits zero. The system does not depend on `t`,
//! so the blow-down time only has to equal `1 - tbar` after shifting time.
//! `b0` is bracketed by a scan in `ln b0` and refined by bisection.

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha::AlphaStrategy;
use crate::bounds::{blind_upper_objective, ln_level};
use crate::ode::{self, End, Options, System};
use crate::{Error, Result};

pub const K_MAX: f64 = 3.0;
pub const T_BAR_MAX: f64 = 1.0 / 3.0;
pub const DEFAULT_K_POINTS: usize = 61;
pub const DEFAULT_T_POINTS: usize = 21;

const SCAN_LO: f64 = -8.0;
const SCAN_POINTS: usize = 33;
const BISECTIONS: usize = 60;
/// `beta` below this counts as having reached zero.
const BETA_EPS: f64 = 1e-12;
/// Intervals of the emitted `beta` table.
const CURVE_INTERVALS: usize = 512;
/// Cells used when scoring the emitted strategy.
const SCORE_CELLS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlFamilyPoint {
    #[serde(rename = "K")]
    pub k: f64,
    pub t_bar: f64,
    pub feasible: bool,
    /// `beta(tbar)`.
    pub beta0: f64,
    /// Times in `[tbar, 1]` and the values of `beta` there.
    pub beta_grid: Vec<f64>,
    pub beta_values: Vec<f64>,
    /// The two-instance objective of the emitted strategy.
    pub objective: Option<f64>,
    /// The same objective from the integrals carried along the trajectory.
    pub objective_ode: Option<f64>,
    /// Largest `|beta(t) - beta0 + K int_tbar^t e^g|` on the output grid.
    pub defect: f64,
}

impl ControlFamilyPoint {
    fn infeasible(k: f64, t_bar: f64) -> Self {
        ControlFamilyPoint {
            k,
            t_bar,
            feasible: false,
            beta0: f64::NAN,
            beta_grid: Vec::new(),
            beta_values: Vec::new(),
            objective: None,
            objective_ode: None,
            defect: f64::NAN,
        }
    }

    /// `alpha_{K,tbar}` as a table with its jump at `tbar`.
    pub fn alpha(&self) -> Option<AlphaStrategy> {
        if !self.feasible {
            return None;
        }
        Some(control_alpha(self.t_bar, &self.beta_grid, &self.beta_values))
    }
}

fn control_alpha(t_bar: f64, grid: &[f64], values: &[f64]) -> AlphaStrategy {
    let mut g = Vec::with_capacity(grid.len() + 2);
    let mut a = Vec::with_capacity(grid.len() + 2);
    if t_bar > 0.0 {
        g.push(0.0);
        a.push(1.0);
        g.push(t_bar);
        a.push(1.0);
    }
    g.extend_from_slice(grid);
    a.extend(values.iter().map(|v| v.clamp(0.0, 1.0)));
    AlphaStrategy::tabulated(g, a).expect("control strategies are valid tables")
}

/// State `(beta, g, int beta, int e^g)` in shifted time `s = t - tbar`.
struct Adjoint {
    k: f64,
}

impl System<4> for Adjoint {
    fn rhs(&self, _s: f64, y: &[f64; 4]) -> [f64; 4] {
        let eg = y[1].exp();
        [-self.k * eg, ln_level(y[0].max(0.0)), y[0], eg]
    }

    fn step_cap(&self, _s: f64, y: &[f64; 4]) -> f64 {
        // approach the zero of beta geometrically
        0.5 * y[0].max(0.0) / (self.k * y[1].exp())
    }

    fn stop(&self, _s: f64, y: &[f64; 4]) -> bool {
        y[0] <= BETA_EPS
    }
}

fn options() -> Options {
    Options { rtol: 1e-10, atol: 1e-13, h0: 1e-4, h_min: 1e-15, max_steps: 200_000 }
}

/// Time at which `beta` reaches zero from `beta(0) = b0`, or `None` if it
/// has not by `horizon`.
fn blow_down_time(k: f64, b0: f64, horizon: f64) -> Option<f64> {
    let sys = Adjoint { k };
    let tr = ode::integrate(&sys, 0.0, [b0, 0.0, 0.0, 0.0], &[horizon], &options());
    match tr.end {
        End::Stopped => Some(tr.t_end + tr.y_end[0].max(0.0) / (k * tr.y_end[1].exp())),
        _ => None,
    }
}

/// Solves for `beta` and scores `alpha_{K,tbar}`. Points with no
/// blow-down at `t = 1` come back marked infeasible.
pub fn solve_control_family(k: f64, t_bar: f64) -> Result<ControlFamilyPoint> {
    if !(0.0..=K_MAX).contains(&k) || !(0.0..=T_BAR_MAX).contains(&t_bar) {
        return Err(Error::InvalidArgument(format!(
            "(K, tbar) = ({k}, {t_bar}) outside [0, {K_MAX}] x [0, 1/3]"
        )));
    }
    if k == 0.0 {
        return Ok(ControlFamilyPoint::infeasible(k, t_bar));
    }
    let target = 1.0 - t_bar;
    let horizon = target + 0.5;
    // positive: blows down after the target, or never
    let miss = |ln_b0: f64| match blow_down_time(k, ln_b0.exp(), horizon) {
        Some(t) => t - target,
        None => f64::INFINITY,
    };
    let scan: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|i| {
            let s = SCAN_LO * (1.0 - i as f64 / (SCAN_POINTS - 1) as f64);
            (s, miss(s))
        })
        .collect();
    // the bracket closest to beta0 = 1
    let bracket = scan.windows(2).rev().find(|w| w[0].1 < 0.0 && w[1].1 >= 0.0);
    let Some(w) = bracket else {
        return Ok(ControlFamilyPoint::infeasible(k, t_bar));
    };
    let (mut lo, mut hi) = (w[0].0, w[1].0);
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if miss(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b0 = hi.exp();
    let stops: Vec<f64> = (0..=CURVE_INTERVALS)
        .map(|i| target * i as f64 / CURVE_INTERVALS as f64)
        .collect();
    let sys = Adjoint { k };
    let tr = ode::integrate(&sys, 0.0, [b0, 0.0, 0.0, 0.0], &stops, &options());
    if tr.end == End::Failed {
        return Ok(ControlFamilyPoint::infeasible(k, t_bar));
    }
    let mut beta_values: Vec<f64> = tr.y.iter().map(|y| y[0].max(0.0)).collect();
    let mut defect = tr
        .y
        .iter()
        .map(|y| (y[0] - b0 + k * y[3]).abs())
        .fold(0.0, f64::max);
    // what is left of the trajectory beyond the stop is the linear run to zero
    let (rest_beta, rest_eg) = if tr.end != End::Stopped {
        (0.0, 0.0)
    } else {
        let eg = tr.y_end[1].exp();
        let dt = tr.y_end[0].max(0.0) / (k * eg);
        (0.5 * tr.y_end[0].max(0.0) * dt, eg * dt)
    };
    let int_beta = tr.y_end[2] + rest_beta;
    let int_eg = tr.y_end[3] + rest_eg;
    if tr.end == End::Stopped {
        let remaining = stops.len() - beta_values.len();
        beta_values.extend(std::iter::repeat_n(0.0, remaining));
        defect = defect.max((tr.y_end[0] - b0 + k * tr.y_end[3]).abs());
    }
    *beta_values.last_mut().unwrap() = 0.0;
    // monotone against roundoff
    for i in 1..beta_values.len() {
        beta_values[i] = beta_values[i].min(beta_values[i - 1]);
    }
    let beta_grid: Vec<f64> = stops.iter().map(|s| t_bar + s).collect();
    let mut beta_grid = beta_grid;
    *beta_grid.last_mut().unwrap() = 1.0;
    let alpha = control_alpha(t_bar, &beta_grid, &beta_values);
    let objective = blind_upper_objective(&alpha, SCORE_CELLS);
    let objective_ode = (1.0 - t_bar - int_beta).min(t_bar + int_eg);
    Ok(ControlFamilyPoint {
        k,
        t_bar,
        feasible: true,
        beta0: b0,
        beta_grid,
        beta_values,
        objective: Some(objective),
        objective_ode: Some(objective_ode),
        defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub sup: f64,
    #[serde(rename = "argmax_K")]
    pub argmax_k: f64,
    pub argmax_t_bar: f64,
    pub feasible_points: usize,
    pub total_points: usize,
    /// `(K, tbar, objective)` of every feasible point, in grid order.
    pub points: Vec<(f64, f64, f64)>,
}

/// `count` equispaced values on `[0, max]`.
pub fn linspace(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Largest objective over the grid; ties go to the lexicographically
/// smallest `(K, tbar)`.
pub fn sweep_upper_bound(grid_k: &[f64], grid_t: &[f64]) -> Result<SweepResult> {
    let pairs: Vec<(f64, f64)> =
        grid_k.iter().flat_map(|&k| grid_t.iter().map(move |&t| (k, t))).collect();
    let scored: Vec<Option<(f64, f64, f64)>> = pairs
        .par_iter()
        .map(|&(k, t)| {
            solve_control_family(k, t).map(|p| p.objective.map(|o| (k, t, o)))
        })
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64, f64)> = scored.into_iter().flatten().collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for &(k, t, o) in &points {
        let better = match best {
            None => true,
            Some((bk, bt, bo)) => o > bo || (o == bo && (k, t) < (bk, bt)),
        };
        if better {
            best = Some((k, t, o));
        }
    }
    let (argmax_k, argmax_t_bar, sup) =
        best.ok_or_else(|| Error::Numerical("no feasible point on the grid".into()))?;
    Ok(SweepResult {
        sup,
        argmax_k,
        argmax_t_bar,
        feasible_points: points.len(),
        total_points: pairs.len(),
        points,
    })
}

/// The default 61 x 21 sweep over `[0, 3] x [0, 1/3]`.
pub fn sweep_default() -> Result<SweepResult> {
    sweep_upper_bound(&linspace(K_MAX, DEFAULT_K_POINTS), &linspace(T_BAR_MAX, DEFAULT_T_POINTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forcing_is_infeasible() {
        let p = solve_control_family(0.0, 0.1).unwrap();
        assert!(!p.feasible);
        assert!(p.objective.is_none());
    }

    #[test]
    fn out_of_box_rejected() {
        assert!(solve_control_family(3.5, 0.1).is_err());
        assert!(solve_control_family(1.0, 0.5).is_err());
    }

    #[test]
    fn feasible_point_meets_terminal_condition() {
        let p = solve_control_family(1.2, 1.0 / 30.0).unwrap();
        assert!(p.feasible);
        assert!(*p.beta_values.last().unwrap() < 1e-3);
        assert!(p.defect < 1e-6, "defect {}", p.defect);
        let o = p.objective.unwrap();
        assert!((o - p.objective_ode.unwrap()).abs() < 1e-4, "{o} vs {:?}", p.objective_ode);
        let a = p.alpha().unwrap();
        assert_eq!(a.eval(0.0), 1.0);
        assert!(crate::optimizer::is_feasible(&a, 10_000));
        // blow-down lands on t = 1
        let t = blow_down_time(1.2, p.beta0, 2.0).unwrap();
        assert!((t - (1.0 - 1.0 / 30.0)).abs() < 1e-8);
    }

    #[test]
    fn large_forcing_is_infeasible() {
        assert!(!solve_control_family(3.0, 0.0).unwrap().feasible);
    }
}
