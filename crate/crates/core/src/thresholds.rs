//! Threshold schedules, the time threshold algorithm and its stochastic
//! tie-breaking variant.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alpha::AlphaStrategy;
use crate::model::{Instance, PermutationDraw};
use crate::{Error, Result};

/// Acceptance probability of a value equal to the threshold, per variable.
pub type AcceptMap = BTreeMap<usize, f64>;

/// Thresholds by position with optional atom acceptance maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    pub tau: Vec<f64>,
    /// `atoms[i]` is set when `tau[i]` sits inside a jump of the max CDF.
    pub atoms: Vec<Option<Arc<AcceptMap>>>,
}

/// Where a run stopped, by 0-based position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopOutcome {
    pub stop_index: Option<usize>,
    pub reward: f64,
}

impl StopOutcome {
    pub const NONE: StopOutcome = StopOutcome { stop_index: None, reward: 0.0 };
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    /// `null` stands for `-inf`, the accept-everything threshold.
    tau: Vec<Option<f64>>,
    atoms: Vec<AtomRepr>,
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    pos: usize,
    accept: BTreeMap<String, f64>,
}

impl ThresholdSchedule {
    /// Plain thresholds with no tie-breaking.
    pub fn fixed(tau: Vec<f64>) -> Self {
        let n = tau.len();
        ThresholdSchedule { tau, atoms: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(Option::is_some)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.tau.windows(2).all(|w| w[1] <= w[0])
    }

    /// The same thresholds with every atom map dropped.
    pub fn without_atoms(&self) -> Self {
        ThresholdSchedule::fixed(self.tau.clone())
    }

    pub fn to_json(&self) -> String {
        let repr = ScheduleRepr {
            tau: self.tau.iter().map(|t| t.is_finite().then_some(*t)).collect(),
            atoms: self
                .atoms
                .iter()
                .enumerate()
                .filter_map(|(pos, a)| {
                    a.as_ref().map(|m| AtomRepr {
                        pos,
                        accept: m.iter().map(|(j, p)| (j.to_string(), *p)).collect(),
                    })
                })
                .collect(),
        };
        serde_json::to_string(&repr).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ScheduleRepr = serde_json::from_str(text)?;
        let tau: Vec<f64> = repr.tau.iter().map(|t| t.unwrap_or(f64::NEG_INFINITY)).collect();
        let mut atoms = vec![None; tau.len()];
        for a in repr.atoms {
            if a.pos >= tau.len() {
                return Err(Error::InvalidArgument(format!("atom position {} out of range", a.pos)));
            }
            let mut map = AcceptMap::new();
            for (k, p) in a.accept {
                let j = k
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad variable index '{k}'")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProbability(p));
                }
                map.insert(j, p);
            }
            atoms[a.pos] = Some(Arc::new(map));
        }
        Ok(ThresholdSchedule { tau, atoms })
    }
}

/// `p(j)` for every variable when `target_q` falls inside the jump of the
/// max CDF at `tau`: a common `s` solves `prod_j (F_j(tau-) + s a_j) = q`
/// and `p(j) = 1 - s` for the variables with an atom at `tau`.
pub fn tie_break_probabilities(instance: &Instance, tau: f64, target_q: f64) -> Result<AcceptMap> {
    let parts: Vec<(f64, f64)> = instance
        .dists()
        .iter()
        .map(|d| (d.cdf_left(tau), d.atom_mass(tau)))
        .collect();
    let at = |s: f64| parts.iter().map(|(l, a)| l + s * a).product::<f64>();
    let lo_val = at(0.0);
    let hi_val = at(1.0);
    if !(lo_val < target_q && target_q < hi_val) {
        return Err(Error::TargetOutsideAtomGap);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if at(mid) < target_q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(parts
        .iter()
        .enumerate()
        .map(|(j, (_, a))| (j, if *a > 0.0 { 1.0 - s } else { 0.0 }))
        .collect())
}

/// Threshold and tie-break map for one probability level.
pub fn level_threshold(instance: &Instance, q: f64) -> Result<(f64, Option<Arc<AcceptMap>>)> {
    let quant = instance.quantile_max(q)?;
    if quant.is_atom {
        let map = tie_break_probabilities(instance, quant.threshold, q)?;
        Ok((quant.threshold, Some(Arc::new(map))))
    } else {
        Ok((quant.threshold, None))
    }
}

/// Per-level memo of [`level_threshold`], filled eagerly for strategies with
/// finitely many levels.
#[derive(Debug, Clone)]
pub struct LevelCache {
    table: HashMap<u64, (f64, Option<Arc<AcceptMap>>)>,
}

impl LevelCache {
    pub fn new(instance: &Instance, alpha: &AlphaStrategy) -> Result<Self> {
        let mut table = HashMap::new();
        let levels: Vec<f64> = match alpha {
            AlphaStrategy::Constant { p } => vec![*p],
            AlphaStrategy::PiecewiseConstant { levels } => levels.clone(),
            _ => Vec::new(),
        };
        for q in levels {
            if let std::collections::hash_map::Entry::Vacant(e) = table.entry(q.to_bits()) {
                e.insert(level_threshold(instance, q)?);
            }
        }
        Ok(LevelCache { table })
    }

    pub fn get(&self, instance: &Instance, q: f64) -> Result<(f64, Option<Arc<AcceptMap>>)> {
        match self.table.get(&q.to_bits()) {
            Some(v) => Ok(v.clone()),
            None => level_threshold(instance, q),
        }
    }
}

fn assemble(
    instance: &Instance,
    cache: &LevelCache,
    levels: impl Iterator<Item = f64>,
) -> Result<ThresholdSchedule> {
    let mut tau = Vec::with_capacity(instance.len());
    let mut atoms = Vec::with_capacity(instance.len());
    for q in levels {
        let (t, a) = cache.get(instance, q)?;
        tau.push(t);
        atoms.push(a);
    }
    Ok(ThresholdSchedule { tau, atoms })
}

/// Step `i` uses level `alpha(u_(i))`, the `i`-th smallest uniform.
pub fn build_blind(
    instance: &Instance,
    alpha: &AlphaStrategy,
    uniforms: &[f64],
) -> Result<ThresholdSchedule> {
    let cache = LevelCache::new(instance, alpha)?;
    build_blind_cached(instance, alpha, &cache, uniforms)
}

pub fn build_blind_cached(
    instance: &Instance,
    alpha: &AlphaStrategy,
    cache: &LevelCache,
    uniforms: &[f64],
) -> Result<ThresholdSchedule> {
    if uniforms.len() != instance.len() {
        return Err(Error::InvalidArgument(format!(
            "{} uniforms for {} variables",
            uniforms.len(),
            instance.len()
        )));
    }
    let mut u = uniforms.to_vec();
    u.sort_by(f64::total_cmp);
    let s = assemble(instance, cache, u.into_iter().map(|x| alpha.eval(x)))?;
    debug_assert!(s.is_nonincreasing());
    Ok(s)
}

/// Step `i` (1-based) uses level `alpha(i/n)`.
pub fn build_deterministic(instance: &Instance, alpha: &AlphaStrategy) -> Result<ThresholdSchedule> {
    let cache = LevelCache::new(instance, alpha)?;
    let s = assemble(instance, &cache, alpha.levels_at(instance.len()).into_iter())?;
    debug_assert!(s.is_nonincreasing());
    Ok(s)
}

/// Stops at the first position whose value strictly exceeds its threshold.
/// `realizations` is indexed by variable, not by position.
pub fn run_tta(schedule: &ThresholdSchedule, draw: &PermutationDraw, realizations: &[f64]) -> StopOutcome {
    for (i, &j) in draw.order.iter().enumerate() {
        let v = realizations[j];
        if v > schedule.tau[i] {
            return StopOutcome { stop_index: Some(i), reward: v };
        }
    }
    StopOutcome::NONE
}

/// [`run_tta`] plus acceptance of a value equal to an atom threshold with
/// probability `p_i(j)`, drawn from a generator seeded by `seed`.
pub fn run_stochastic_tta(
    schedule: &ThresholdSchedule,
    draw: &PermutationDraw,
    realizations: &[f64],
    seed: u64,
) -> Result<StopOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_stochastic_tta_with(schedule, draw, realizations, &mut rng)
}

pub fn run_stochastic_tta_with<R: Rng + ?Sized>(
    schedule: &ThresholdSchedule,
    draw: &PermutationDraw,
    realizations: &[f64],
    tie_rng: &mut R,
) -> Result<StopOutcome> {
    for (i, &j) in draw.order.iter().enumerate() {
        let v = realizations[j];
        let t = schedule.tau[i];
        if v > t {
            return Ok(StopOutcome { stop_index: Some(i), reward: v });
        }
        if v == t {
            if let Some(map) = &schedule.atoms[i] {
                let p = *map
                    .get(&j)
                    .ok_or(Error::UnresolvedTie { position: i, variable: j })?;
                if tie_rng.random::<f64>() < p {
                    return Ok(StopOutcome { stop_index: Some(i), reward: v });
                }
            }
        }
    }
    Ok(StopOutcome::NONE)
}
