//! Distributions, instances and the law of the maximum.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quad;
use crate::{Error, Result};

/// Relative bracket width at which quantile bisection stops.
const QUANTILE_REL_TOL: f64 = 1e-12;

/// Absolute tolerance of the prophet-value quadrature.
const PROPHET_ABS_TOL: f64 = 1e-9;

/// Law of one nonnegative random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    #[serde(rename = "point")]
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
    #[serde(rename = "finite")]
    FiniteSupport { values: Vec<f64>, probs: Vec<f64> },
    Mixture { components: Vec<Component> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub dist: Distribution,
}

impl Distribution {
    pub fn point(value: f64) -> Result<Self> {
        let d = Distribution::PointMass { value };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Distribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    /// Finite support; values need not be sorted and duplicates are merged.
    pub fn finite(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vs: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut ps: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match vs.last() {
                Some(&last) if last == v => *ps.last_mut().unwrap() += p,
                _ => {
                    vs.push(v);
                    ps.push(p);
                }
            }
        }
        let d = Distribution::FiniteSupport { values: vs, probs: ps };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<(f64, Distribution)>) -> Result<Self> {
        let d = Distribution::Mixture {
            components: components
                .into_iter()
                .map(|(weight, dist)| Component { weight, dist })
                .collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match self {
            Distribution::PointMass { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("point mass at {value} must be finite and nonnegative"));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || *lo < 0.0 || lo >= hi {
                    return bad(format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            Distribution::FiniteSupport { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("finite support needs matching nonempty values and probs".into());
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("finite support values must be strictly increasing".into());
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("finite support values must be finite and nonnegative".into());
                }
                if probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                    return bad("finite support probabilities must be positive".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("finite support probabilities sum to {total}"));
                }
            }
            Distribution::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                if components.iter().any(|c| !(c.weight > 0.0) || !c.weight.is_finite()) {
                    return bad("mixture weights must be positive".into());
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}"));
                }
                for c in components {
                    c.dist.validate()?;
                }
            }
        }
        Ok(())
    }

    /// `P(V <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Distribution::PointMass { value } => {
                if t >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Uniform { lo, hi } => {
                if t <= *lo {
                    0.0
                } else if t >= *hi {
                    1.0
                } else {
                    (t - lo) / (hi - lo)
                }
            }
            Distribution::FiniteSupport { values, probs } => {
                let k = values.partition_point(|v| *v <= t);
                if k == values.len() {
                    1.0
                } else {
                    probs[..k].iter().sum::<f64>().min(1.0)
                }
            }
            Distribution::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.cdf(t))
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// `P(V < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match self {
            Distribution::PointMass { value } => {
                if t > *value {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Uniform { .. } => self.cdf(t),
            Distribution::FiniteSupport { values, probs } => {
                let k = values.partition_point(|v| *v < t);
                if k == values.len() {
                    1.0
                } else {
                    probs[..k].iter().sum::<f64>().min(1.0)
                }
            }
            Distribution::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.cdf_left(t))
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// `P(V = t)`; the weighted sum of component atoms for mixtures.
    pub fn atom_mass(&self, t: f64) -> f64 {
        match self {
            Distribution::PointMass { value } => {
                if t == *value {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Uniform { .. } => 0.0,
            Distribution::FiniteSupport { values, probs } => values
                .binary_search_by(|v| v.total_cmp(&t))
                .map(|k| probs[k])
                .unwrap_or(0.0),
            Distribution::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.atom_mass(t)).sum()
            }
        }
    }

    /// Points where the CDF jumps or changes its analytic form.
    pub fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Distribution::PointMass { value } => out.push(*value),
            Distribution::Uniform { lo, hi } => {
                out.push(*lo);
                out.push(*hi);
            }
            Distribution::FiniteSupport { values, .. } => out.extend_from_slice(values),
            Distribution::Mixture { components } => {
                for c in components {
                    c.dist.breakpoints(out);
                }
            }
        }
    }

    /// True when the law has no continuous part.
    pub fn is_discrete(&self) -> bool {
        match self {
            Distribution::PointMass { .. } | Distribution::FiniteSupport { .. } => true,
            Distribution::Uniform { .. } => false,
            Distribution::Mixture { components } => components.iter().all(|c| c.dist.is_discrete()),
        }
    }

    /// Atoms as `(value, mass)` pairs, sorted by value. Empty for continuous laws.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        self.breakpoints(&mut pts);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.into_iter()
            .map(|v| (v, self.atom_mass(v)))
            .filter(|(_, m)| *m > 0.0)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::PointMass { value } => *value,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::FiniteSupport { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
            Distribution::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.mean()).sum()
            }
        }
    }

    pub fn ess_sup(&self) -> f64 {
        match self {
            Distribution::PointMass { value } => *value,
            Distribution::Uniform { hi, .. } => *hi,
            Distribution::FiniteSupport { values, .. } => *values.last().unwrap(),
            Distribution::Mixture { components } => components
                .iter()
                .map(|c| c.dist.ess_sup())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::PointMass { value } => *value,
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Distribution::FiniteSupport { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            Distribution::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.dist.sample(rng);
                    }
                }
                components.last().unwrap().dist.sample(rng)
            }
        }
    }
}

/// Solution of `P(max <= tau) = q` in the generalized-inverse sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantile {
    pub threshold: f64,
    /// No exact solution: `q` falls strictly inside a jump of the max CDF.
    pub is_atom: bool,
}

/// Ordered collection of independent distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    dists: Vec<Distribution>,
    breakpoints: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRepr {
    dists: Vec<Distribution>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;
    fn try_from(r: InstanceRepr) -> Result<Self> {
        Instance::new(r.dists)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(i: Instance) -> Self {
        InstanceRepr { dists: i.dists }
    }
}

impl Instance {
    pub fn new(dists: Vec<Distribution>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidInstance("instance needs at least one variable".into()));
        }
        for d in &dists {
            d.validate()?;
        }
        let mut breakpoints = Vec::new();
        for d in &dists {
            d.breakpoints(&mut breakpoints);
        }
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(Instance { dists, breakpoints })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn dists(&self) -> &[Distribution] {
        &self.dists
    }

    /// Sorted, deduplicated breakpoints of all members.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn is_discrete(&self) -> bool {
        self.dists.iter().all(Distribution::is_discrete)
    }

    /// `P(max <= t)`.
    pub fn cdf_max(&self, t: f64) -> f64 {
        self.dists.iter().map(|d| d.cdf(t)).product()
    }

    /// `P(max < t)`.
    pub fn cdf_max_left(&self, t: f64) -> f64 {
        self.dists.iter().map(|d| d.cdf_left(t)).product()
    }

    /// `inf { t : P(max <= t) >= q }`, flagged as an atom when `q` lies
    /// strictly inside a jump of the max CDF. `q = 0` maps to `-inf`, so every
    /// value, including zero, clears the threshold.
    pub fn quantile_max(&self, q: f64) -> Result<Quantile> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidProbability(q));
        }
        if q == 0.0 {
            return Ok(Quantile { threshold: f64::NEG_INFINITY, is_atom: false });
        }
        let bps = &self.breakpoints;
        let idx = bps.partition_point(|&b| self.cdf_max(b) < q);
        // the last breakpoint is the largest essential supremum, where the max CDF is 1
        let idx = idx.min(bps.len() - 1);
        let b = bps[idx];
        let left = self.cdf_max_left(b);
        if left >= q {
            let mut lo = if idx == 0 { b - 1.0 } else { bps[idx - 1] };
            let mut hi = b;
            while hi - lo > QUANTILE_REL_TOL * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.cdf_max(mid) >= q {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Quantile { threshold: hi, is_atom: false });
        }
        let full = self.cdf_max(b);
        Ok(Quantile { threshold: b, is_atom: q < full })
    }

    /// `E[max]`. Exact summation over the support of the max for discrete
    /// instances, quadrature of `1 - P(max <= t)` otherwise.
    pub fn prophet_value(&self) -> Result<f64> {
        let v = if self.is_discrete() {
            self.prophet_value_exact()
        } else {
            self.prophet_value_quadrature()?
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InfiniteProphetValue)
        }
    }

    /// `sum_v v * P(max = v)` over the breakpoints. Only meaningful for
    /// discrete instances.
    pub fn prophet_value_exact(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|&v| v * (self.cdf_max(v) - self.cdf_max_left(v)))
            .sum()
    }

    /// `int_0^inf (1 - P(max <= t)) dt`, piece by piece between breakpoints.
    pub fn prophet_value_quadrature(&self) -> Result<f64> {
        let mut edges = vec![0.0];
        edges.extend(self.breakpoints.iter().copied().filter(|&b| b > 0.0));
        let pieces = (edges.len() - 1).max(1) as f64;
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (v, ok) =
                quad::gl5_refined(|t| 1.0 - self.cdf_max(t), w[0], w[1], PROPHET_ABS_TOL / pieces);
            if !ok {
                return Err(Error::Numerical(format!(
                    "prophet quadrature did not converge on [{}, {}]",
                    w[0], w[1]
                )));
            }
            total += v;
        }
        Ok(total)
    }

    /// One realization per variable, reproducible from `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dists.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (slot, d) in out.iter_mut().zip(&self.dists) {
            *slot = d.sample(rng);
        }
    }

    /// The instance with `extra` zero point masses appended.
    pub fn padded_with_zeros(&self, extra: usize) -> Instance {
        let mut dists = self.dists.clone();
        dists.extend(std::iter::repeat_n(Distribution::PointMass { value: 0.0 }, extra));
        Instance::new(dists).expect("padding keeps the instance valid")
    }
}

/// Arrival order and the auxiliary uniforms of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationDraw {
    /// `order[i]` is the variable shown at step `i`.
    pub order: Vec<usize>,
    pub uniforms: Vec<f64>,
}

impl PermutationDraw {
    pub fn identity(n: usize) -> Self {
        PermutationDraw { order: (0..n).collect(), uniforms: vec![0.5; n] }
    }

    pub fn new(order: Vec<usize>, uniforms: Vec<f64>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            seen[i] = true;
        }
        if uniforms.len() != n || uniforms.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::InvalidArgument("need one uniform in [0,1] per variable".into()));
        }
        Ok(PermutationDraw { order, uniforms })
    }

    /// Fisher–Yates order followed by `n` fresh uniforms.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let uniforms = (0..n).map(|_| rng.random::<f64>()).collect();
        PermutationDraw { order, uniforms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(a: f64, b: f64) -> Distribution {
        Distribution::finite(vec![a, b], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn cdf_max_examples() {
        let one = Instance::new(vec![Distribution::point(1.0).unwrap()]).unwrap();
        assert_eq!(one.cdf_max(0.5), 0.0);
        let uu = Instance::new(vec![Distribution::uniform(0.0, 1.0).unwrap(); 2]).unwrap();
        assert!((uu.cdf_max(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cdf_max_spike_instance_at_zero() {
        let n = 1000usize;
        let nf = n as f64;
        let spike =
            Distribution::finite(vec![0.0, nf], vec![1.0 - 1.0 / (nf * nf), 1.0 / (nf * nf)]).unwrap();
        let inst = Instance::new(vec![spike; n]).unwrap();
        let expected = (1.0 - 1.0 / (nf * nf)).powi(n as i32);
        assert!((inst.cdf_max(0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let u = Instance::new(vec![Distribution::uniform(0.0, 1.0).unwrap()]).unwrap();
        let q = u.quantile_max((-1.0f64).exp()).unwrap();
        assert!((q.threshold - (-1.0f64).exp()).abs() < 1e-12);
        assert!(!q.is_atom);

        let p = Instance::new(vec![Distribution::point(1.0).unwrap()]).unwrap();
        assert_eq!(p.quantile_max(0.5).unwrap(), Quantile { threshold: 1.0, is_atom: true });

        // outcomes of (X, Y): max in {0, 2, 3, 3} each w.p. 1/4, so the max
        // CDF is 0.25 at 0, 0.5 at 2, 1 at 3.
        let inst = Instance::new(vec![two_point(0.0, 2.0), two_point(0.0, 3.0)]).unwrap();
        assert_eq!(inst.cdf_max_left(2.0), 0.25);
        assert_eq!(inst.cdf_max(2.0), 0.5);
        assert_eq!(inst.quantile_max(0.3).unwrap(), Quantile { threshold: 2.0, is_atom: true });
        assert_eq!(inst.quantile_max(0.5).unwrap(), Quantile { threshold: 2.0, is_atom: false });
        assert_eq!(inst.quantile_max(0.1).unwrap(), Quantile { threshold: 0.0, is_atom: true });
    }

    #[test]
    fn quantile_edge_levels() {
        let u = Instance::new(vec![Distribution::uniform(0.0, 2.0).unwrap(); 3]).unwrap();
        assert_eq!(u.quantile_max(1.0).unwrap().threshold, 2.0);
        assert_eq!(u.quantile_max(0.0).unwrap().threshold, f64::NEG_INFINITY);
        assert!(u.quantile_max(1.5).is_err());
        assert!(u.quantile_max(-0.1).is_err());
    }

    #[test]
    fn prophet_value_counterexample_at_n_100() {
        let n = 100usize;
        let nf = n as f64;
        let mut dists = vec![Distribution::point(1.0).unwrap(); n - 1];
        dists.push(Distribution::finite(vec![0.0, nf], vec![1.0 - 1.0 / nf, 1.0 / nf]).unwrap());
        let inst = Instance::new(dists).unwrap();
        // max is n w.p. 1/n, else 1
        let expected = 1.0 + (nf - 1.0) / nf;
        assert!((inst.prophet_value().unwrap() - expected).abs() < 1e-9);
        assert!((inst.prophet_value_quadrature().unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn prophet_value_uniform() {
        let u = Instance::new(vec![Distribution::uniform(0.0, 1.0).unwrap()]).unwrap();
        assert!((u.prophet_value().unwrap() - 0.5).abs() < 1e-9);
        let u5 = Instance::new(vec![Distribution::uniform(0.0, 1.0).unwrap(); 5]).unwrap();
        assert!((u5.prophet_value().unwrap() - 5.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn mixture_atoms_are_weighted() {
        let m = Distribution::mixture(vec![
            (0.3, Distribution::point(1.0).unwrap()),
            (0.7, Distribution::finite(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap()),
        ])
        .unwrap();
        assert!((m.atom_mass(1.0) - 0.65).abs() < 1e-15);
        assert!((m.cdf(1.0) - m.cdf_left(1.0) - 0.65).abs() < 1e-15);
        assert_eq!(m.atoms().len(), 2);
    }

    #[test]
    fn sampling_is_deterministic() {
        let inst = Instance::new(vec![
            Distribution::point(3.0).unwrap(),
            Distribution::uniform(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let a = inst.sample(42);
        assert_eq!(a, inst.sample(42));
        assert_eq!(a[0], 3.0);
    }

    #[test]
    fn uniform_sample_mean() {
        let d = Distribution::uniform(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        // 3 sigma of the mean of U(0,1) is 3 * 0.2887 / 1000
        assert!((mean - 0.5).abs() < 0.002);
    }

    #[test]
    fn json_field_names() {
        let text = r#"{"dists":[{"kind":"uniform","lo":0,"hi":1},{"kind":"finite","values":[0,2],"probs":[0.5,0.5]},{"kind":"point","value":1}]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.len(), 3);
        let back = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
        assert!(Instance::from_json(r#"{"dists":[]}"#).is_err());
        assert!(Instance::from_json(r#"{"dists":[{"kind":"uniform","lo":1,"hi":0}]}"#).is_err());
    }

    #[test]
    fn permutation_draw_validation() {
        assert!(PermutationDraw::new(vec![1, 0], vec![0.1, 0.2]).is_ok());
        assert!(PermutationDraw::new(vec![1, 1], vec![0.1, 0.2]).is_err());
        assert!(PermutationDraw::new(vec![1, 0], vec![0.1]).is_err());
    }
}
