//! Fixed point of the equalizing ODE `u'^2 K(x) = u'' u`, where
//! `u(x) = int_0^x (1 - alpha)` and `K(x) = 1 - exp(int_0^x ln alpha)`.
//!
//! Each Picard step freezes `K` from the previous strategy, shoots on
//! `c = u'(0)` until `u'(1) = 1` and reads off `alpha = 1 - u'`.

use serde::Serialize;

use crate::alpha::AlphaStrategy;
use crate::bounds::{self, ln_level};
use crate::ode::{self, End, Options, System};
use crate::quad;
use crate::{Error, Result};

/// Intervals of the default grid.
pub const DEFAULT_NODES: usize = 2048;
/// Picard steps used when the caller has no preference.
pub const DEFAULT_ITERATIONS: usize = 30;

/// Where integration starts; the series expansion covers `[0, X0]`.
const X0: f64 = 1e-6;
const SHOOT_ITERATIONS: usize = 60;
/// `u'` beyond this means the shot overshoots `u'(1) = 1`.
const OVERSHOOT: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    pub u_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    /// Largest `|u'^2 (K_u - K_frozen)|` on the grid, the defect of the
    /// unfrozen equation.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub slope: f64,
    pub alpha0: f64,
    pub residual: f64,
}

impl OdeSolution {
    /// Strategy `alpha = 0.6 (1 - x)` on `nodes` equal intervals.
    pub fn linear_seed(nodes: usize) -> Self {
        let grid: Vec<f64> = (0..=nodes).map(|k| k as f64 / nodes as f64).collect();
        let alpha_values = grid.iter().map(|x| 0.6 * (1.0 - x)).collect();
        let u_values = grid.iter().map(|x| 0.4 * x + 0.3 * x * x).collect();
        OdeSolution { grid, u_values, alpha_values, residual: f64::NAN }
    }

    pub fn from_alpha(alpha: &AlphaStrategy, nodes: usize) -> Self {
        let grid: Vec<f64> = (0..=nodes).map(|k| k as f64 / nodes as f64).collect();
        let alpha_values: Vec<f64> = grid.iter().map(|&x| alpha.eval(x)).collect();
        let mut u_values = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            u_values[i] =
                u_values[i - 1] + quad::gl5(|x| 1.0 - alpha.eval(x), grid[i - 1], grid[i]);
        }
        OdeSolution { grid, u_values, alpha_values, residual: f64::NAN }
    }

    /// The strategy as a linear interpolant of the grid values.
    pub fn alpha(&self) -> AlphaStrategy {
        AlphaStrategy::tabulated(self.grid.clone(), self.alpha_values.clone())
            .expect("ode strategies are valid tables")
    }
}

/// `K = 1 - exp(int_0^x ln alpha)` at the grid nodes, with `alpha` linear
/// between them.
fn frozen_k(grid: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut l = 0.0;
    let mut k = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        let (x0, x1) = (grid[i - 1], grid[i]);
        let (a0, a1) = (alpha[i - 1], alpha[i]);
        l += quad::gl5(|x| ln_level(a0 + (a1 - a0) * (x - x0) / (x1 - x0)), x0, x1);
        k[i] = 1.0 - l.exp();
    }
    k
}

struct Frozen<'a> {
    grid: &'a [f64],
    k: &'a [f64],
}

impl Frozen<'_> {
    fn k_at(&self, x: f64) -> f64 {
        let g = self.grid;
        let hi = g.partition_point(|&v| v < x).clamp(1, g.len() - 1);
        let lo = hi - 1;
        let w = (x - g[lo]) / (g[hi] - g[lo]);
        self.k[lo] + w * (self.k[hi] - self.k[lo])
    }
}

impl System<2> for Frozen<'_> {
    fn rhs(&self, x: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], y[1] * y[1] * self.k_at(x) / y[0]]
    }

    fn stop(&self, _x: f64, y: &[f64; 2]) -> bool {
        y[1] > OVERSHOOT
    }
}

struct Shot {
    overshoot: bool,
    traj: ode::Trajectory<2>,
}

fn shoot(sys: &Frozen<'_>, k_slope0: f64, c: f64, stops: &[f64], opts: &Options) -> Shot {
    let y0 = [c * X0 + 0.5 * c * k_slope0 * X0 * X0, c + c * k_slope0 * X0];
    let traj = ode::integrate(sys, X0, y0, stops, opts);
    let overshoot = match traj.end {
        End::Reached => traj.y_end[1] > 1.0,
        End::Stopped | End::Failed => true,
    };
    Shot { overshoot, traj }
}

/// One Picard step from `prev`.
fn picard_step(prev: &OdeSolution, opts: &Options) -> Result<(OdeSolution, f64)> {
    let grid = &prev.grid;
    let k = frozen_k(grid, &prev.alpha_values);
    let sys = Frozen { grid, k: &k };
    let a0 = prev.alpha_values[0];
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(Error::ShootingFailure(format!("alpha(0) = {a0} leaves (0, 1)")));
    }
    // K'(0) = -ln alpha(0)
    let k_slope0 = -a0.ln();
    let stops: Vec<f64> = grid.iter().copied().filter(|&x| x > X0).collect();
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-12);
    if shoot(&sys, k_slope0, lo, &stops, opts).overshoot {
        return Err(Error::ShootingFailure(format!("slope {lo} already overshoots u'(1) = 1")));
    }
    if !shoot(&sys, k_slope0, hi, &stops, opts).overshoot {
        return Err(Error::ShootingFailure(format!("slope {hi} never reaches u'(1) = 1")));
    }
    for _ in 0..SHOOT_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shoot(&sys, k_slope0, mid, &stops, opts).overshoot {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let shot = shoot(&sys, k_slope0, lo, &stops, opts);
    if shot.traj.end != End::Reached {
        return Err(Error::ShootingFailure(format!("final shot with slope {lo} did not reach x = 1")));
    }
    let offset = grid.len() - stops.len();
    let mut u_values = Vec::with_capacity(grid.len());
    let mut du = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        if i < offset {
            u_values.push(lo * x + 0.5 * lo * k_slope0 * x * x);
            du.push(lo + lo * k_slope0 * x);
        } else {
            let y = shot.traj.y[i - offset];
            u_values.push(y[0]);
            du.push(y[1]);
        }
    }
    // alpha = 1 - u', kept monotone against roundoff, with alpha(1) = 0
    let mut alpha_values = Vec::with_capacity(grid.len());
    let mut prev_a = 1.0f64;
    for d in &du {
        let a = (1.0 - d).clamp(0.0, 1.0).min(prev_a);
        alpha_values.push(a);
        prev_a = a;
    }
    *alpha_values.last_mut().unwrap() = 0.0;
    let k_new = frozen_k(grid, &alpha_values);
    let residual = du
        .iter()
        .zip(k_new.iter().zip(&k))
        .map(|(d, (kn, kf))| (d * d * (kn - kf)).abs())
        .fold(0.0, f64::max);
    Ok((OdeSolution { grid: grid.clone(), u_values, alpha_values, residual }, lo))
}

/// `iterations` Picard steps from `init`, which must end at `alpha(1) = 0`.
pub fn solve_equalizing_ode(init: &OdeSolution, iterations: usize) -> Result<OdeSolution> {
    Ok(solve_equalizing_ode_logged(init, iterations)?.0)
}

pub fn solve_equalizing_ode_logged(
    init: &OdeSolution,
    iterations: usize,
) -> Result<(OdeSolution, Vec<IterationLog>)> {
    if init.grid.len() < 3 || init.grid.len() != init.alpha_values.len() {
        return Err(Error::InvalidArgument("initial solution needs a grid of at least 3 nodes".into()));
    }
    if init.grid[0] != 0.0 || *init.grid.last().unwrap() != 1.0 {
        return Err(Error::InvalidArgument("initial grid must span [0, 1]".into()));
    }
    if *init.alpha_values.last().unwrap() != 0.0 {
        return Err(Error::InvalidArgument("initial strategy must satisfy alpha(1) = 0".into()));
    }
    let opts = Options { rtol: 1e-9, atol: 1e-9, h0: 1e-6, ..Options::default() };
    let mut cur = init.clone();
    let mut log = Vec::with_capacity(iterations);
    for it in 1..=iterations {
        let (next, slope) = picard_step(&cur, &opts)?;
        log.push(IterationLog {
            iteration: it,
            slope,
            alpha0: next.alpha_values[0],
            residual: next.residual,
        });
        cur = next;
    }
    Ok((cur, log))
}

/// Range of the equalizer curve over the grid nodes of `sol`, and the
/// continuum guarantee of its strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualizerCheck {
    pub curve_min: f64,
    pub curve_max: f64,
    pub guarantee: f64,
}

pub fn check(sol: &OdeSolution, cells: usize) -> Result<EqualizerCheck> {
    let alpha = sol.alpha();
    let p = bounds::profile(&alpha, cells);
    let curve = bounds::equalizer_curve(&p)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, e) in curve {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    let guarantee = bounds::guarantee_limit(&alpha, cells)?;
    Ok(EqualizerCheck { curve_min: lo, curve_max: hi, guarantee })
}
