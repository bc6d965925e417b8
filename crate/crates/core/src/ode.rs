//! Adaptive Dormand–Prince 5(4) integration for small fixed-size systems.

/// Right-hand side plus optional hooks used by the caller to cap the step
/// or terminate early.
pub trait System<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];

    /// Upper bound on the next step from state `(t, y)`.
    fn step_cap(&self, _t: f64, _y: &[f64; N]) -> f64 {
        f64::INFINITY
    }

    /// Checked after every accepted step; `true` ends the integration.
    fn stop(&self, _t: f64, _y: &[f64; N]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { rtol: 1e-9, atol: 1e-9, h0: 1e-4, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// Reached the last output time.
    Reached,
    /// [`System::stop`] fired.
    Stopped,
    /// Non-finite state, step underflow or step budget exhausted.
    Failed,
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    /// Output times actually reached, in order.
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    /// Time and state at the end of the integration.
    pub t_end: f64,
    pub y_end: [f64; N],
    pub end: End,
    pub steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates from `(t0, y0)` through the ascending output times `stops`,
/// never stepping across one, and records the state at each reached stop.
pub fn integrate<S: System<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    opts: &Options,
) -> Trajectory<N> {
    let mut traj = Trajectory {
        t: Vec::with_capacity(stops.len()),
        y: Vec::with_capacity(stops.len()),
        t_end: t0,
        y_end: y0,
        end: End::Reached,
        steps: 0,
    };
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h0;
    let mut k1 = sys.rhs(t, &y);
    let mut next = 0;
    while next < stops.len() && stops[next] <= t {
        traj.t.push(stops[next]);
        traj.y.push(y);
        next += 1;
    }
    while next < stops.len() {
        if traj.steps >= opts.max_steps {
            traj.end = End::Failed;
            break;
        }
        let target = stops[next];
        let cap = sys.step_cap(t, &y);
        let mut step = h.min(cap).min(target - t);
        let lands = step >= target - t;
        if lands {
            step = target - t;
        }
        let k2 = sys.rhs(t + C2 * step, &axpy(&y, step, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * step, &axpy(&y, step, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(t + C4 * step, &axpy(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = sys.rhs(
            t + C5 * step,
            &axpy(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            t + step,
            &axpy(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = sys.rhs(t + step, &y_new);
        let mut err = 0.0f64;
        for i in 0..N {
            let e = step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        traj.steps += 1;
        let finite = y_new.iter().all(|v| v.is_finite()) && err.is_finite();
        if finite && err <= 1.0 {
            t = if lands { target } else { t + step };
            y = y_new;
            k1 = k7;
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // keep the untruncated step size when a stop shortened this one
            if !lands || step >= h {
                h = step * grow;
            }
            if lands {
                traj.t.push(target);
                traj.y.push(y);
                next += 1;
            }
            if sys.stop(t, &y) {
                traj.end = End::Stopped;
                break;
            }
        } else {
            let shrink = if finite { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.25 };
            h = step * shrink;
            if h < opts.h_min {
                traj.end = End::Failed;
                break;
            }
        }
    }
    traj.t_end = t;
    traj.y_end = y;
    traj
}
