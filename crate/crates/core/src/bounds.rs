//! Closed-form guarantee functionals of blind strategies.
//!
//! Continuum functionals are integrated with five-point Gauss–Legendre on
//! cells whose endpoints include every breakpoint of `alpha`, so jumps and
//! the `ln 0` endpoint of strategies reaching zero never land on a node.

use serde::{Deserialize, Serialize};

use crate::alpha::AlphaStrategy;
use crate::quad;
use crate::{Error, Result};

/// Change between dyadic refinements at which continuum functionals stop.
pub const REFINE_TOL: f64 = 1e-6;

/// Cell count beyond which refinement gives up.
const MAX_CELLS: usize = 1 << 17;

/// Levels at or below this are treated as zero when taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub per_j: Vec<f64>,
    pub min: f64,
    /// 1-based index of the smallest `f_j`.
    pub argmin: usize,
}

impl BoundReport {
    fn from_values(per_j: Vec<f64>) -> Self {
        let (mut argmin, mut min) = (0, f64::INFINITY);
        for (i, &v) in per_j.iter().enumerate() {
            if v < min {
                min = v;
                argmin = i;
            }
        }
        BoundReport { per_j, min, argmin: argmin + 1 }
    }
}

/// `ln v` with `-inf` for levels at or below [`LOG_FLOOR`].
#[inline]
pub fn ln_level(v: f64) -> f64 {
    if v <= LOG_FLOOR {
        f64::NEG_INFINITY
    } else {
        v.ln()
    }
}

/// Guarantee of the constant strategy `alpha = p`: `min{1-p, (1-p)/(-ln p)}`.
pub fn constant_alpha_factor(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok((1.0 - p).min((1.0 - p) / -p.ln()))
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("need at least one level".into()));
    }
    if levels.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidAlpha("levels must lie in [0,1]".into()));
    }
    if levels.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidAlpha("levels must be nonincreasing".into()));
    }
    Ok(())
}

/// `f_j` of the deterministic strategy with `levels[k-1] = alpha(k/n)` and
/// `alpha((n+1)/n) = 0`, for `j` in `1..=n+1`.
pub fn f_j_discrete(levels: &[f64], j: usize) -> Result<f64> {
    check_levels(levels)?;
    let n = levels.len();
    if j == 0 || j > n + 1 {
        return Err(Error::InvalidArgument(format!("j = {j} outside 1..={}", n + 1)));
    }
    let nf = n as f64;
    let aj = if j == n + 1 { 0.0 } else { levels[j - 1] };
    let head: f64 = levels[..j - 1].iter().map(|a| 1.0 - a).sum();
    let first = if j == 1 {
        0.0
    } else {
        if aj >= 1.0 {
            return Err(Error::DivisionByZeroGuarantee(j));
        }
        head / (nf * (1.0 - aj))
    };
    let mut log_prod = 0.0;
    let mut tail = 0.0;
    for (k, a) in levels.iter().enumerate() {
        log_prod += ln_level(*a);
        if k + 1 >= j {
            tail += (log_prod / nf).exp();
        }
    }
    Ok(first + tail / nf)
}

/// All `f_j` for `j = 1..=n+1` in linear time.
pub fn discrete_report(levels: &[f64]) -> Result<BoundReport> {
    check_levels(levels)?;
    let n = levels.len();
    let nf = n as f64;
    let mut roots = Vec::with_capacity(n);
    let mut log_prod = 0.0;
    for a in levels {
        log_prod += ln_level(*a);
        roots.push((log_prod / nf).exp());
    }
    // suffix[k] = sum_{i >= k} roots[i]
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + roots[k];
    }
    let mut per_j = Vec::with_capacity(n + 1);
    let mut head = 0.0;
    for j in 1..=n + 1 {
        let aj = if j == n + 1 { 0.0 } else { levels[j - 1] };
        let first = if j == 1 {
            0.0
        } else {
            if aj >= 1.0 {
                return Err(Error::DivisionByZeroGuarantee(j));
            }
            head / (nf * (1.0 - aj))
        };
        per_j.push(first + suffix[j - 1] / nf);
        if j <= n {
            head += 1.0 - levels[j - 1];
        }
    }
    Ok(BoundReport::from_values(per_j))
}

/// Bounds on `P(T <= k)` for the deterministic strategy with the given
/// levels: `(1/n) sum_{j<=k} (1 - a_j)` and `1 - (prod_{j<=k} a_j)^(1/n)`.
pub fn stop_cdf_bounds(levels: &[f64], k: usize) -> Result<(f64, f64)> {
    check_levels(levels)?;
    let n = levels.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    let nf = n as f64;
    let lower = levels[..k].iter().map(|a| 1.0 - a).sum::<f64>() / nf;
    let log_prod: f64 = levels[..k].iter().map(|a| ln_level(*a)).sum();
    let upper = 1.0 - (log_prod / nf).exp();
    Ok((lower, upper))
}

/// `1/(1 - (k/m)(1-p))` for `k <= m/2`, else `2/(1+p)`.
pub fn g_factor(m: usize, p: f64, k: usize) -> f64 {
    if 2 * k <= m {
        1.0 / (1.0 - (k as f64 / m as f64) * (1.0 - p))
    } else {
        2.0 / (1.0 + p)
    }
}

/// `(1 - a^(1/m)) / (-ln a)`, which tends to `1/m` as `a -> 1`.
fn level_fraction(a: f64, m: f64) -> f64 {
    if a >= 1.0 {
        return 1.0 / m;
    }
    let l = a.ln();
    -(l / m).exp_m1() / -l
}

fn check_piecewise(levels: &[f64]) -> Result<()> {
    check_levels(levels)?;
    if *levels.last().unwrap() <= 0.0 {
        return Err(Error::ZeroLevel(levels.len()));
    }
    Ok(())
}

/// `f_j` of the piecewise-constant strategy with levels `alpha_1..alpha_m`,
/// for `j` in `1..=m+1`.
pub fn f_j_piecewise(levels: &[f64], j: usize) -> Result<f64> {
    check_piecewise(levels)?;
    let m = levels.len();
    if j == 0 || j > m + 1 {
        return Err(Error::InvalidArgument(format!("j = {j} outside 1..={}", m + 1)));
    }
    let mf = m as f64;
    if j == m + 1 {
        return Ok(levels.iter().map(|a| 1.0 - a).sum::<f64>() / mf);
    }
    let aj = levels[j - 1];
    if j > 1 && aj >= 1.0 {
        return Err(Error::DivisionByZeroGuarantee(j));
    }
    let mut sum = 0.0;
    let mut log_prefix = 0.0;
    for k in 1..=m {
        let ak = levels[k - 1];
        if k >= j {
            let weight = if j == 1 { 1.0 } else { g_factor(m, levels[0], k - 1) };
            sum += (log_prefix / mf).exp() * weight * level_fraction(ak, mf);
        }
        log_prefix += ak.ln();
    }
    if j > 1 {
        let head: f64 = levels[..j - 1].iter().map(|a| 1.0 - a).sum();
        sum += head / (mf * (1.0 - aj));
    }
    Ok(sum)
}

/// All `f_j` for `j = 1..=m+1` in linear time.
pub fn piecewise_report(levels: &[f64]) -> Result<BoundReport> {
    check_piecewise(levels)?;
    let m = levels.len();
    let mf = m as f64;
    let a1 = levels[0];
    let mut plain = vec![0.0; m];
    let mut weighted = vec![0.0; m];
    let mut log_prefix = 0.0;
    for k in 1..=m {
        let ak = levels[k - 1];
        let base = (log_prefix / mf).exp() * level_fraction(ak, mf);
        plain[k - 1] = base;
        weighted[k - 1] = base * g_factor(m, a1, k - 1);
        log_prefix += ak.ln();
    }
    let mut suffix = vec![0.0; m + 1];
    for k in (0..m).rev() {
        suffix[k] = suffix[k + 1] + weighted[k];
    }
    let mut per_j = Vec::with_capacity(m + 1);
    per_j.push(plain.iter().sum());
    let mut head = 1.0 - levels[0];
    for j in 2..=m {
        let aj = levels[j - 1];
        if aj >= 1.0 {
            return Err(Error::DivisionByZeroGuarantee(j));
        }
        per_j.push(head / (mf * (1.0 - aj)) + suffix[j - 1]);
        head += 1.0 - aj;
    }
    per_j.push(head / mf);
    Ok(BoundReport::from_values(per_j))
}

/// Running integrals of `alpha` at the endpoints of the quadrature cells.
#[derive(Debug, Clone)]
pub struct Profile {
    pub nodes: Vec<f64>,
    /// `alpha` at each node (the right value at a jump).
    pub alpha: Vec<f64>,
    /// `int_0^x (1 - alpha)`.
    pub a: Vec<f64>,
    /// `int_0^x ln alpha`, possibly `-inf`.
    pub l: Vec<f64>,
    /// `int_x^1 exp(int_0^y ln alpha) dy`.
    pub s: Vec<f64>,
}

fn cell_nodes(alpha: &AlphaStrategy, cells: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=cells).map(|k| k as f64 / cells as f64).collect();
    xs.extend(alpha.breakpoints());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Integrals of `alpha` on `cells` equal cells refined at its breakpoints.
pub fn profile(alpha: &AlphaStrategy, cells: usize) -> Profile {
    let nodes = cell_nodes(alpha, cells.max(1));
    let k = nodes.len();
    let mut a = vec![0.0; k];
    let mut l = vec![0.0; k];
    // S contribution of each cell
    let mut cell_s = vec![0.0; k - 1];
    let ln_a = |x: f64| ln_level(alpha.eval(x));
    for c in 0..k - 1 {
        let (x0, x1) = (nodes[c], nodes[c + 1]);
        a[c + 1] = a[c] + quad::gl5(|x| 1.0 - alpha.eval(x), x0, x1);
        l[c + 1] = l[c] + quad::gl5(ln_a, x0, x1);
        if l[c] == f64::NEG_INFINITY {
            continue;
        }
        let mut acc = 0.0;
        for (y, w) in quad::gl5_points(x0, x1) {
            let ly = l[c] + quad::gl5(ln_a, x0, y);
            acc += w * ly.exp();
        }
        cell_s[c] = acc;
    }
    let mut s = vec![0.0; k];
    for c in (0..k - 1).rev() {
        s[c] = s[c + 1] + cell_s[c];
    }
    let alpha_vals = nodes.iter().map(|&x| alpha.eval_right(x)).collect();
    Profile { nodes, alpha: alpha_vals, a, l, s }
}

/// The two terms of the continuum guarantee on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTerms {
    /// `int_0^1 (1 - alpha)`.
    pub integral: f64,
    /// Infimum over nodes of the equalizer curve.
    pub inf: f64,
    pub argmin_x: f64,
    pub cells: usize,
}

impl LimitTerms {
    pub fn value(&self) -> f64 {
        self.integral.min(self.inf)
    }
}

/// `x -> int_0^x (1-alpha)/(1-alpha(x)) + int_x^1 exp(int_0^y ln alpha)` at
/// the profile nodes, with the quotient taken as zero at `x = 0`.
pub fn equalizer_curve(p: &Profile) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(p.nodes.len());
    for i in 0..p.nodes.len() {
        let x = p.nodes[i];
        let quot = if x == 0.0 {
            0.0
        } else {
            if p.alpha[i] >= 1.0 {
                return Err(Error::InvalidAlpha(format!("alpha reaches 1 at x = {x}")));
            }
            p.a[i] / (1.0 - p.alpha[i])
        };
        out.push((x, quot + p.s[i]));
    }
    Ok(out)
}

pub fn limit_terms(alpha: &AlphaStrategy, cells: usize) -> Result<LimitTerms> {
    let p = profile(alpha, cells);
    let curve = equalizer_curve(&p)?;
    let (mut argmin_x, mut inf) = (0.0, f64::INFINITY);
    for (x, e) in curve {
        if e < inf {
            inf = e;
            argmin_x = x;
        }
    }
    Ok(LimitTerms { integral: *p.a.last().unwrap(), inf, argmin_x, cells })
}

/// Doubles `cells` from `start` until `f` changes by less than [`REFINE_TOL`].
fn refine<T>(start: usize, mut f: impl FnMut(usize) -> Result<T>, value: impl Fn(&T) -> f64) -> Result<T> {
    let mut cells = start.max(2);
    let mut prev = f(cells)?;
    loop {
        cells *= 2;
        let next = f(cells)?;
        if (value(&next) - value(&prev)).abs() < REFINE_TOL {
            return Ok(next);
        }
        if cells >= MAX_CELLS {
            return Err(Error::Numerical(format!(
                "refinement did not settle below {REFINE_TOL} at {cells} cells"
            )));
        }
        prev = next;
    }
}

/// Continuum limit of `min_j f_j` as `n -> inf`, refined from `grid_size`.
pub fn guarantee_limit(alpha: &AlphaStrategy, grid_size: usize) -> Result<f64> {
    Ok(guarantee_limit_terms(alpha, grid_size)?.value())
}

pub fn guarantee_limit_terms(alpha: &AlphaStrategy, grid_size: usize) -> Result<LimitTerms> {
    refine(grid_size, |c| limit_terms(alpha, c), LimitTerms::value)
}

/// `1 - int_0^1 alpha`, the limit value on a nearly deterministic variable.
pub fn one_minus_integral(alpha: &AlphaStrategy, grid_size: usize) -> f64 {
    refine(grid_size, |c| Ok(*profile(alpha, c).a.last().unwrap()), |v| *v)
        .unwrap_or_else(|_| *profile(alpha, MAX_CELLS).a.last().unwrap())
}

/// `int_0^1 exp(int_0^s ln alpha) ds`, the limit value on i.i.d. spikes.
pub fn survival_integral(alpha: &AlphaStrategy, grid_size: usize) -> f64 {
    refine(grid_size, |c| Ok(profile(alpha, c).s[0]), |v| *v)
        .unwrap_or_else(|_| profile(alpha, MAX_CELLS).s[0])
}

/// `min{1 - int alpha, int exp(int ln alpha)}`, the two-instance upper bound.
pub fn blind_upper_objective(alpha: &AlphaStrategy, grid_size: usize) -> f64 {
    let pair = |c: usize| {
        let p = profile(alpha, c);
        Ok((*p.a.last().unwrap(), p.s[0]))
    };
    let (a, s) = refine(grid_size, pair, |v: &(f64, f64)| v.0.min(v.1))
        .unwrap_or_else(|_| pair(MAX_CELLS).unwrap());
    a.min(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E_INV: f64 = 0.367_879_441_171_442_3;

    #[test]
    fn constant_factor_examples() {
        assert!((constant_alpha_factor(E_INV).unwrap() - (1.0 - E_INV)).abs() < 1e-15);
        assert_eq!(constant_alpha_factor(1.0).unwrap(), 0.0);
        assert_eq!(constant_alpha_factor(0.0).unwrap(), 0.0);
        assert_eq!(constant_alpha_factor(0.5).unwrap(), 0.5);
        assert!(constant_alpha_factor(1.1).is_err());
    }

    #[test]
    fn discrete_single_threshold_recovered() {
        let n = 10_000;
        let levels = vec![E_INV; n];
        let f1 = f_j_discrete(&levels, 1).unwrap();
        assert!((f1 - (1.0 - E_INV)).abs() < 1e-4);
    }

    #[test]
    fn discrete_last_index_collapses() {
        let levels = vec![0.9, 0.7, 0.2];
        let v = f_j_discrete(&levels, 4).unwrap();
        assert!((v - (0.1 + 0.3 + 0.8) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn discrete_report_matches_direct_formula() {
        let levels = AlphaStrategy::affine(0.53, -0.38).unwrap().levels_at(50);
        let r = discrete_report(&levels).unwrap();
        for j in 1..=51 {
            let d = f_j_discrete(&levels, j).unwrap();
            assert!((r.per_j[j - 1] - d).abs() < 1e-12, "j = {j}");
        }
    }

    #[test]
    fn discrete_affine_above_0657() {
        let levels = AlphaStrategy::affine(0.53, -0.38).unwrap().levels_at(10_000);
        let r = discrete_report(&levels).unwrap();
        assert!(r.min >= 0.657, "{}", r.min);
    }

    #[test]
    fn discrete_division_guard() {
        assert_eq!(f_j_discrete(&[1.0, 1.0], 2).unwrap_err(), Error::DivisionByZeroGuarantee(2));
        assert!(f_j_discrete(&[1.0, 1.0], 1).is_ok());
        assert!(discrete_report(&[1.0, 0.5]).is_ok());
        assert!(discrete_report(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn stop_cdf_examples() {
        assert_eq!(stop_cdf_bounds(&[1.0; 4], 3).unwrap(), (0.0, 0.0));
        assert_eq!(stop_cdf_bounds(&[0.0; 4], 4).unwrap(), (1.0, 1.0));
        let (lo, hi) = stop_cdf_bounds(&[0.9, 0.6, 0.3], 2).unwrap();
        assert!((lo - 1.0 / 6.0).abs() < 1e-15);
        assert!((hi - (1.0 - 0.54f64.powf(1.0 / 3.0))).abs() < 1e-15);
    }

    #[test]
    fn g_factor_examples() {
        assert_eq!(g_factor(30, 0.8, 0), 1.0);
        assert!((g_factor(30, 0.8, 30) - 2.0 / 1.8).abs() < 1e-15);
        assert!((g_factor(30, 0.8, 10) - 15.0 / 14.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_single_level() {
        let v = f_j_piecewise(&[E_INV], 1).unwrap();
        assert!((v - (1.0 - E_INV)).abs() < 1e-15);
        let last = f_j_piecewise(&[0.9, 0.5, 0.2], 4).unwrap();
        assert!((last - (0.1 + 0.5 + 0.8) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn piecewise_errors() {
        assert_eq!(f_j_piecewise(&[0.5, 0.0], 1).unwrap_err(), Error::ZeroLevel(2));
        assert_eq!(f_j_piecewise(&[1.0, 1.0, 0.5], 2).unwrap_err(), Error::DivisionByZeroGuarantee(2));
        // a level at 1 is fine where no division happens
        assert!(f_j_piecewise(&[1.0, 0.5], 1).is_ok());
    }

    #[test]
    fn piecewise_report_matches_direct_formula() {
        let levels: Vec<f64> = (0..30).map(|k| 0.6 * (1.0 - k as f64 / 31.0)).collect();
        let r = piecewise_report(&levels).unwrap();
        for j in 1..=31 {
            let d = f_j_piecewise(&levels, j).unwrap();
            assert!((r.per_j[j - 1] - d).abs() < 1e-12, "j = {j}");
        }
    }

    #[test]
    fn limit_constant_inverse_e() {
        let a = AlphaStrategy::constant(E_INV).unwrap();
        let v = guarantee_limit(&a, 64).unwrap();
        assert!((v - (1.0 - E_INV)).abs() < 1e-6);
    }

    #[test]
    fn limit_constant_zero() {
        let a = AlphaStrategy::constant(0.0).unwrap();
        assert_eq!(guarantee_limit(&a, 16).unwrap(), 0.0);
        assert_eq!(blind_upper_objective(&a, 16), 0.0);
    }

    #[test]
    fn limit_affine_above_0657() {
        let a = AlphaStrategy::affine(0.53, -0.38).unwrap();
        assert!(guarantee_limit(&a, 64).unwrap() >= 0.657);
    }

    #[test]
    fn limit_rejects_alpha_one_away_from_zero() {
        let a = AlphaStrategy::piecewise(vec![1.0, 0.3]).unwrap();
        assert!(guarantee_limit(&a, 16).is_err());
    }

    #[test]
    fn upper_objective_constant_inverse_e() {
        let a = AlphaStrategy::constant(E_INV).unwrap();
        assert!((blind_upper_objective(&a, 16) - (1.0 - E_INV)).abs() < 1e-9);
        assert!((one_minus_integral(&a, 16) - (1.0 - E_INV)).abs() < 1e-12);
        assert!((survival_integral(&a, 16) - (1.0 - E_INV)).abs() < 1e-9);
    }

    #[test]
    fn survival_of_linear_alpha() {
        // alpha = 1 - x: int_0^s ln(1-w) dw = -(1-s) ln(1-s) - s
        let a = AlphaStrategy::affine(1.0, -1.0).unwrap();
        let f = |s: f64| {
            let l = if s < 1.0 { -(1.0 - s) * (1.0 - s).ln() - s } else { -1.0 };
            l.exp()
        };
        let (oracle, _) = quad::gl5_refined(f, 0.0, 1.0, 1e-12);
        assert!((survival_integral(&a, 16) - oracle).abs() < 1e-6);
    }

    #[test]
    fn constant_levels_match_factor() {
        for p in [0.2, E_INV, 0.5, 0.8] {
            let r = discrete_report(&vec![p; 10_000]).unwrap();
            let c = constant_alpha_factor(p).unwrap();
            assert!((r.min - c).abs() < 1e-3, "p = {p}: {} vs {c}", r.min);
        }
    }

    fn piecewise_levels() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.3f64..1.0, 1..12).prop_map(|s| {
            let mut acc = 0.95;
            s.iter().map(|v| { acc *= v; acc }).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn guarantee_below_upper_objective(
            a in 0.05f64..1.0,
            b in -1.0f64..0.0,
        ) {
            let alpha = AlphaStrategy::affine(a.min(0.99), b).unwrap();
            let g = guarantee_limit(&alpha, 32).unwrap();
            let u = blind_upper_objective(&alpha, 32);
            prop_assert!(g <= u + 1e-6, "{g} > {u}");
        }

        #[test]
        fn piecewise_guarantee_below_upper_objective(levels in piecewise_levels()) {
            let alpha = AlphaStrategy::piecewise(levels).unwrap();
            let g = guarantee_limit(&alpha, 32).unwrap();
            let u = blind_upper_objective(&alpha, 32);
            prop_assert!(g <= u + 1e-6, "{g} > {u}");
        }

        #[test]
        fn piecewise_dominates_discrete(levels in piecewise_levels()) {
            let m = levels.len();
            let n = 10 * m;
            // level at k/n is alpha_ceil(k m / n)
            let step: Vec<f64> = (1..=n).map(|k| levels[(k * m).div_ceil(n) - 1]).collect();
            for j in 1..=m + 1 {
                let pw = f_j_piecewise(&levels, j).unwrap();
                let jd = 10 * (j - 1) + 1;
                let d = f_j_discrete(&step, jd).unwrap();
                prop_assert!(pw >= d - 5e-3, "j = {j}: {pw} < {d}");
            }
        }

        #[test]
        fn stop_bounds_ordered(levels in piecewise_levels(), k in 0usize..12) {
            let k = k % levels.len() + 1;
            let (lo, hi) = stop_cdf_bounds(&levels, k).unwrap();
            prop_assert!(lo <= hi + 1e-15);
        }
    }
}
