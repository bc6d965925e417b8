//! Named hard instances and their exact values.

use serde::Serialize;

use crate::alpha::AlphaStrategy;
use crate::bounds;
use crate::model::{Distribution, Instance};
use crate::{Error, Result};

/// Default `eps` for materialized instances.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Largest instance the subset recursion accepts.
pub const DP_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Tag {
    /// One `U(1 - eps, 1 + eps)` variable.
    NearDeterministic { eps: f64 },
    /// `n` i.i.d. variables: `1/eps` w.p. `eps`, else `U(0, eps)`.
    IidSpike { n: usize, eps: f64 },
    /// `n - 1` point masses at 1 and one variable worth `n` w.p. `1/n`.
    SingleThresholdTrap { n: usize },
    /// `n` variables worth `n` w.p. `1/n^2` and a point mass at `a`.
    HardGeneral { n: usize, a: f64 },
}

impl Tag {
    pub fn name(&self) -> &'static str {
        match self {
            Tag::NearDeterministic { .. } => "near_deterministic",
            Tag::IidSpike { .. } => "iid_spike",
            Tag::SingleThresholdTrap { .. } => "single_threshold_trap",
            Tag::HardGeneral { .. } => "hard_general",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForms {
    pub prophet: f64,
    /// Optimal (full-information stopping) value where known.
    pub optimal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedInstance {
    pub tag: Tag,
    pub instance: Instance,
    pub closed_forms: ClosedForms,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, 0.5)")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n} must be at least 2")));
    }
    Ok(())
}

fn check_a(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("a = {a} outside [0, 1]")));
    }
    Ok(())
}

/// `P(no spike among k)` with spike probability `1/n^2`, and
/// `n (1 - that)`, both without cancellation.
fn spike_terms(n: usize, k: usize) -> (f64, f64) {
    let nf = n as f64;
    let log_q = (-1.0 / (nf * nf)).ln_1p();
    let none = (k as f64 * log_q).exp();
    let some = -(k as f64 * log_q).exp_m1();
    (none, nf * some)
}

pub fn hard_general_prophet(n: usize, a: f64) -> f64 {
    let (none, gain) = spike_terms(n, n);
    gain + none * a
}

pub fn make_named(tag: Tag) -> Result<NamedInstance> {
    let (dists, closed_forms) = match tag {
        Tag::NearDeterministic { eps } => {
            check_eps(eps)?;
            (
                vec![Distribution::uniform(1.0 - eps, 1.0 + eps)?],
                ClosedForms { prophet: 1.0, optimal: Some(1.0) },
            )
        }
        Tag::IidSpike { n, eps } => {
            check_n(n)?;
            check_eps(eps)?;
            let d = Distribution::mixture(vec![
                (eps, Distribution::point(1.0 / eps)?),
                (1.0 - eps, Distribution::uniform(0.0, eps)?),
            ])?;
            let nf = n as f64;
            let none = (1.0 - eps).powi(n as i32);
            let prophet = (1.0 - none) / eps + none * eps * nf / (nf + 1.0);
            (vec![d; n], ClosedForms { prophet, optimal: None })
        }
        Tag::SingleThresholdTrap { n } => {
            check_n(n)?;
            let nf = n as f64;
            let mut dists = vec![Distribution::point(1.0)?; n - 1];
            dists.push(Distribution::finite(vec![0.0, nf], vec![1.0 - 1.0 / nf, 1.0 / nf])?);
            (dists, ClosedForms { prophet: 2.0 - 1.0 / nf, optimal: None })
        }
        Tag::HardGeneral { n, a } => {
            check_n(n)?;
            check_a(a)?;
            let nf = n as f64;
            let p = 1.0 / (nf * nf);
            let mut dists = vec![Distribution::finite(vec![0.0, nf], vec![1.0 - p, p])?; n];
            dists.push(Distribution::point(a)?);
            (
                dists,
                ClosedForms {
                    prophet: hard_general_prophet(n, a),
                    optimal: Some(dp_value_hard_general(n, a)?.0),
                },
            )
        }
    };
    Ok(NamedInstance { tag, instance: Instance::new(dists)?, closed_forms })
}

/// Blind value on a nearly deterministic variable as `eps -> 0`.
pub fn blind_value_near_deterministic(alpha: &AlphaStrategy, grid: usize) -> f64 {
    bounds::one_minus_integral(alpha, grid)
}

/// Blind ratio on i.i.d. spikes as `n -> inf`, `eps -> 0`.
pub fn blind_value_iid_spike(alpha: &AlphaStrategy, grid: usize) -> f64 {
    bounds::survival_integral(alpha, grid)
}

/// Optimal value on `hard_general(n, a)` and the first position (1-based)
/// at which `a` is accepted, `n + 2` when it never is.
pub fn dp_value_hard_general(n: usize, a: f64) -> Result<(f64, usize)> {
    check_n(n)?;
    check_a(a)?;
    // a at position i leaves n + 1 - i spikes to come
    let cutoff = (1..=n + 1)
        .find(|&i| spike_terms(n, n + 1 - i).1 < a)
        .unwrap_or(n + 2);
    let (_, reject_all) = spike_terms(n, n);
    let mut total = 0.0;
    for i in 1..=n + 1 {
        total += if i >= cutoff {
            let (none, gain) = spike_terms(n, i - 1);
            gain + none * a
        } else {
            reject_all
        };
    }
    Ok((total / (n + 1) as f64, cutoff))
}

/// `(1 + a^2/2) / (1 + a)`, the large-`n` ratio on `hard_general`.
pub fn hard_general_limit_ratio(a: f64) -> f64 {
    (1.0 + 0.5 * a * a) / (1.0 + a)
}

/// Optimal stopping value with known distributions and uniformly random
/// order, by recursion over the set of variables not yet seen.
pub fn dp_optimal_small(instance: &Instance) -> Result<f64> {
    let n = instance.len();
    if n > DP_MAX_N {
        return Err(Error::SizeGuard(format!("optimal value needs n <= {DP_MAX_N}, got {n}")));
    }
    if !instance.is_discrete() {
        return Err(Error::InvalidInstance("optimal value needs discrete distributions".into()));
    }
    let atoms: Vec<Vec<(f64, f64)>> = instance.dists().iter().map(|d| d.atoms()).collect();
    let support: f64 = atoms.iter().map(|a| a.len() as f64).product();
    if support > 1e6 {
        return Err(Error::SizeGuard(format!("product support {support} exceeds 1e6")));
    }
    // w[mask] = value when the variables in `mask` are still unseen
    let full = 1usize << n;
    let mut w = vec![0.0; full];
    for mask in 1..full {
        let k = mask.count_ones() as f64;
        let mut acc = 0.0;
        for (i, at) in atoms.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let cont = w[mask & !(1 << i)];
            acc += at.iter().map(|(v, p)| p * v.max(cont)).sum::<f64>();
        }
        w[mask] = acc / k;
    }
    Ok(w[full - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialRow {
    pub instance: String,
    pub strategy: String,
    pub value: f64,
    pub prophet: f64,
    pub ratio: f64,
}

impl AdversarialRow {
    pub const CSV_HEADER: &'static str = "instance,strategy,value,prophet,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.instance, self.strategy, self.value, self.prophet, self.ratio
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.367_879_441_171_442_3;

    #[test]
    fn near_deterministic_prophet() {
        let ni = make_named(Tag::NearDeterministic { eps: 0.1 }).unwrap();
        assert!((ni.instance.prophet_value().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ni.closed_forms.prophet, 1.0);
    }

    #[test]
    fn hard_general_prophet_matches_instance() {
        for (n, a) in [(5usize, 0.3), (20, 0.9), (7, 0.0)] {
            let ni = make_named(Tag::HardGeneral { n, a }).unwrap();
            let nf = n as f64;
            let q = 1.0 - 1.0 / (nf * nf);
            let closed = nf * (1.0 - q.powi(n as i32)) + q.powi(n as i32) * a;
            assert!((ni.closed_forms.prophet - closed).abs() < 1e-12);
            assert!((ni.instance.prophet_value().unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_spike_middle_plateau() {
        let (n, eps) = (50usize, 1e-2);
        let ni = make_named(Tag::IidSpike { n, eps }).unwrap();
        let expected = (1.0 - eps).powi(n as i32);
        for t in [eps, 1.0, 50.0, 1.0 / eps - 1e-9] {
            assert!((ni.instance.cdf_max(t) - expected).abs() < 1e-12, "t = {t}");
        }
        assert!((ni.instance.prophet_value().unwrap() - ni.closed_forms.prophet).abs() < 1e-7);
    }

    #[test]
    fn trap_prophet() {
        let ni = make_named(Tag::SingleThresholdTrap { n: 100 }).unwrap();
        assert!((ni.instance.prophet_value().unwrap() - (2.0 - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn parameter_ranges() {
        assert!(make_named(Tag::NearDeterministic { eps: 0.6 }).is_err());
        assert!(make_named(Tag::HardGeneral { n: 1, a: 0.5 }).is_err());
        assert!(make_named(Tag::HardGeneral { n: 3, a: 1.5 }).is_err());
    }

    #[test]
    fn blind_limits_of_constant_strategies() {
        let a = AlphaStrategy::constant(E_INV).unwrap();
        assert!((blind_value_near_deterministic(&a, 16) - (1.0 - E_INV)).abs() < 1e-12);
        assert!((blind_value_iid_spike(&a, 16) - (1.0 - E_INV)).abs() < 1e-9);
        let one = AlphaStrategy::constant(1.0).unwrap();
        assert_eq!(blind_value_near_deterministic(&one, 16), 0.0);
        let almost = AlphaStrategy::constant(1.0 - 1e-9).unwrap();
        assert!((blind_value_iid_spike(&almost, 16) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hard_general_extremes() {
        let n = 1000;
        let (v, cut) = dp_value_hard_general(n, 0.0).unwrap();
        assert_eq!(cut, n + 2);
        assert!((v - spike_terms(n, n).1).abs() < 1e-12);
        let (_, cut) = dp_value_hard_general(n, 1.0).unwrap();
        assert_eq!(cut, 1);
    }

    #[test]
    fn hard_general_bound_chain() {
        // n [1 - (1 - 1/n^2)^(i-1)] <= (i-1)/n
        let n = 300;
        for i in 1..=n + 1 {
            let (_, gain) = spike_terms(n, i - 1);
            assert!(gain <= (i - 1) as f64 / n as f64 + 1e-15);
        }
    }

    #[test]
    fn hard_general_limit_at_sqrt3() {
        let a = 3f64.sqrt() - 1.0;
        assert!((hard_general_limit_ratio(a) - a).abs() < 1e-12);
        let (v, _) = dp_value_hard_general(10_000, a).unwrap();
        assert!(v / hard_general_prophet(10_000, a) <= a + 0.01);
    }

    #[test]
    fn hard_general_ratio_is_smallest_near_sqrt3() {
        let n = 10_000;
        let ratios: Vec<(f64, f64)> = (0..=10)
            .map(|k| {
                let a = k as f64 / 10.0;
                (a, dp_value_hard_general(n, a).unwrap().0 / hard_general_prophet(n, a))
            })
            .collect();
        let (a_min, r_min) = ratios.iter().copied().fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        assert!((a_min - 0.7).abs() < 1e-12, "min at {a_min}");
        assert!((r_min - 0.732).abs() < 2e-3, "{r_min}");
    }

    #[test]
    fn dp_small_examples() {
        let one = Instance::new(vec![Distribution::finite(vec![0.0, 3.0], vec![0.4, 0.6]).unwrap()]).unwrap();
        assert!((dp_optimal_small(&one).unwrap() - 1.8).abs() < 1e-15);
        let two = Instance::new(vec![Distribution::point(1.0).unwrap(), Distribution::point(2.0).unwrap()])
            .unwrap();
        assert_eq!(dp_optimal_small(&two).unwrap(), 2.0);
    }

    #[test]
    fn dp_small_matches_hard_general() {
        let ni = make_named(Tag::HardGeneral { n: 6, a: 0.7 }).unwrap();
        let dp = dp_optimal_small(&ni.instance).unwrap();
        let closed = dp_value_hard_general(6, 0.7).unwrap().0;
        assert!((dp - closed).abs() < 1e-9, "{dp} vs {closed}");
    }
}
