//! Blind strategies `alpha: [0,1] -> [0,1]`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Points used to check monotonicity of affine and tabulated strategies.
pub const MONOTONICITY_GRID: usize = 10_000;

/// A nonincreasing map from normalized time to a probability level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaStrategy {
    Constant { p: f64 },
    /// `clamp(intercept + slope * x, 0, 1)`.
    AffineClipped { intercept: f64, slope: f64 },
    /// Level `levels[k]` on `(k/m, (k+1)/m]`, and `levels[0]` at zero.
    PiecewiseConstant { levels: Vec<f64> },
    /// Linear interpolation between `(grid[i], alpha[i])`. A repeated grid
    /// point encodes a jump; the value there is the right limit.
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub grid: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl AlphaStrategy {
    pub fn constant(p: f64) -> Result<Self> {
        let a = AlphaStrategy::Constant { p };
        a.validate()?;
        Ok(a)
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        let a = AlphaStrategy::AffineClipped { intercept, slope };
        a.validate()?;
        Ok(a)
    }

    pub fn piecewise(levels: Vec<f64>) -> Result<Self> {
        let a = AlphaStrategy::PiecewiseConstant { levels };
        a.validate()?;
        Ok(a)
    }

    pub fn tabulated(grid: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let a = AlphaStrategy::Tabulated(Table { grid, alpha });
        a.validate()?;
        Ok(a)
    }

    /// Parses `constant:p`, `affine:a,b`, `pw:a1,...,am` or `tab:path`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, args) = spec
            .split_once(':')
            .ok_or_else(|| Error::InvalidAlpha(format!("expected kind:args, got '{spec}'")))?;
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidAlpha(format!("not a number: '{t}'")))
                })
                .collect()
        };
        match kind {
            "constant" => {
                let v = nums(args)?;
                if v.len() != 1 {
                    return Err(Error::InvalidAlpha("constant takes one value".into()));
                }
                AlphaStrategy::constant(v[0])
            }
            "affine" => {
                let v = nums(args)?;
                if v.len() != 2 {
                    return Err(Error::InvalidAlpha("affine takes intercept,slope".into()));
                }
                AlphaStrategy::affine(v[0], v[1])
            }
            "pw" => AlphaStrategy::piecewise(nums(args)?),
            "tab" => AlphaStrategy::load_table(Path::new(args)),
            other => Err(Error::InvalidAlpha(format!("unknown kind '{other}'"))),
        }
    }

    /// Reads a `{"grid":[...],"alpha":[...]}` file.
    pub fn load_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let table: Table = serde_json::from_str(&text)?;
        let a = AlphaStrategy::Tabulated(table);
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAlpha(msg));
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            AlphaStrategy::Constant { p } => {
                if !in_unit(*p) {
                    return bad(format!("constant level {p} outside [0,1]"));
                }
            }
            AlphaStrategy::AffineClipped { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return bad("affine coefficients must be finite".into());
                }
                if *slope > 0.0 {
                    return bad(format!("affine slope {slope} makes alpha increasing"));
                }
            }
            AlphaStrategy::PiecewiseConstant { levels } => {
                if levels.is_empty() {
                    return bad("piecewise strategy needs at least one level".into());
                }
                if levels.iter().any(|v| !in_unit(*v)) {
                    return bad("piecewise levels must lie in [0,1]".into());
                }
                if levels.windows(2).any(|w| w[1] > w[0]) {
                    return bad("piecewise levels must be nonincreasing".into());
                }
            }
            AlphaStrategy::Tabulated(t) => {
                if t.grid.len() < 2 || t.grid.len() != t.alpha.len() {
                    return bad("table needs matching grid and alpha with at least two points".into());
                }
                if t.grid[0] != 0.0 || *t.grid.last().unwrap() != 1.0 {
                    return bad("table grid must start at 0 and end at 1".into());
                }
                if t.grid.windows(2).any(|w| !(w[1] >= w[0])) {
                    return bad("table grid must be nondecreasing".into());
                }
                if t.grid.windows(3).any(|w| w[0] == w[2]) {
                    return bad("table grid repeats a point more than twice".into());
                }
                if t.alpha.iter().any(|v| !in_unit(*v)) {
                    return bad("table values must lie in [0,1]".into());
                }
            }
        }
        if !self.is_nonincreasing(MONOTONICITY_GRID) {
            return bad("alpha is not nonincreasing".into());
        }
        Ok(())
    }

    /// `alpha(x)`, with `x` clamped to `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            AlphaStrategy::Constant { p } => *p,
            AlphaStrategy::AffineClipped { intercept, slope } => {
                (intercept + slope * x).clamp(0.0, 1.0)
            }
            AlphaStrategy::PiecewiseConstant { levels } => levels[piece_index(levels.len(), x)],
            AlphaStrategy::Tabulated(t) => {
                let g = &t.grid;
                // first index with grid > x; the segment ends there
                let hi = g.partition_point(|&v| v <= x);
                if hi == 0 {
                    return t.alpha[0];
                }
                if hi == g.len() {
                    return *t.alpha.last().unwrap();
                }
                let lo = hi - 1;
                let w = (x - g[lo]) / (g[hi] - g[lo]);
                (t.alpha[lo] + w * (t.alpha[hi] - t.alpha[lo])).clamp(0.0, 1.0)
            }
        }
    }

    /// Right limit `alpha(x+)`; differs from [`Self::eval`] only at the
    /// jumps of a piecewise-constant strategy.
    pub fn eval_right(&self, x: f64) -> f64 {
        if let AlphaStrategy::PiecewiseConstant { levels } = self {
            let m = levels.len();
            let y = x * m as f64;
            let r = y.round();
            if (y - r).abs() <= 1e-9 * m as f64 && r >= 0.0 && (r as usize) < m {
                return levels[r as usize];
            }
        }
        self.eval(x)
    }

    /// Interior points of `(0, 1)` where `alpha` jumps or has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            AlphaStrategy::Constant { .. } => Vec::new(),
            AlphaStrategy::AffineClipped { intercept, slope } => {
                let mut v = Vec::new();
                if *slope != 0.0 {
                    v.push((1.0 - intercept) / slope);
                    v.push(-intercept / slope);
                }
                v
            }
            AlphaStrategy::PiecewiseConstant { levels } => {
                let m = levels.len();
                (1..m).map(|k| k as f64 / m as f64).collect()
            }
            AlphaStrategy::Tabulated(t) => t.grid.clone(),
        };
        out.retain(|x| *x > 0.0 && *x < 1.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// `alpha(k/n)` for `k = 1..=n`.
    pub fn levels_at(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|k| self.eval(k as f64 / n as f64)).collect()
    }

    /// Monotonicity on `points + 1` equispaced nodes plus the breakpoints.
    pub fn is_nonincreasing(&self, points: usize) -> bool {
        match self {
            AlphaStrategy::Constant { .. } => true,
            AlphaStrategy::PiecewiseConstant { levels } => levels.windows(2).all(|w| w[1] <= w[0]),
            AlphaStrategy::Tabulated(t) => t.alpha.windows(2).all(|w| w[1] <= w[0]),
            AlphaStrategy::AffineClipped { .. } => {
                let mut prev = self.eval(0.0);
                for k in 1..=points {
                    let v = self.eval(k as f64 / points as f64);
                    if v > prev {
                        return false;
                    }
                    prev = v;
                }
                true
            }
        }
    }

    /// Samples `alpha` on `points + 1` equispaced nodes as a table. Jumps of
    /// piecewise strategies are kept exact.
    pub fn to_table(&self, points: usize) -> Table {
        let mut grid = Vec::with_capacity(points + 1);
        let mut alpha = Vec::with_capacity(points + 1);
        let mut xs: Vec<f64> = (0..=points).map(|k| k as f64 / points as f64).collect();
        let levels = match self {
            AlphaStrategy::PiecewiseConstant { levels } => levels.as_slice(),
            _ => &[],
        };
        let m = levels.len();
        xs.extend((1..m).map(|k| k as f64 / m as f64));
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for x in xs {
            grid.push(x);
            alpha.push(self.eval(x));
            if m > 1 && x > 0.0 && x < 1.0 {
                let y = x * m as f64;
                if (y - y.round()).abs() <= 1e-9 * m as f64 {
                    // the jump to the next piece
                    grid.push(x);
                    alpha.push(levels[y.round() as usize]);
                }
            }
        }
        Table { grid, alpha }
    }
}

impl fmt::Display for AlphaStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaStrategy::Constant { p } => write!(f, "constant:{p}"),
            AlphaStrategy::AffineClipped { intercept, slope } => {
                write!(f, "affine:{intercept},{slope}")
            }
            AlphaStrategy::PiecewiseConstant { levels } => {
                let s: Vec<String> = levels.iter().map(|v| v.to_string()).collect();
                write!(f, "pw:{}", s.join(","))
            }
            AlphaStrategy::Tabulated(t) => write!(f, "tab:<{} points>", t.grid.len()),
        }
    }
}

/// Index of the piece holding `x` for `m` pieces closed on the right.
/// Products `x * m` within rounding of an integer snap to it.
pub fn piece_index(m: usize, x: f64) -> usize {
    let y = x * m as f64;
    let r = y.round();
    let y = if (y - r).abs() <= 1e-9 * m as f64 { r } else { y };
    let k = y.ceil() as usize;
    k.clamp(1, m) - 1
}
