//! Greedy construction of a lattice supersolution `v` with
//! `v(i+1) + v(i-1) - 2 v(i) <= f(i, v(i)) - F`, and its exact verification.
//!
//! Starting from `v(0)`, each step fixes the provisional value `v_bar(n+1)`
//! allowed by the supersolution condition at `n`, then lowers it by the `m >= 0`
//! that maximises `f(n+1, v_bar(n+1) - m) - m`, which makes the next provisional
//! increment as large as possible. The negative direction mirrors the positive.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::media::{ExtInt, SeededField};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscreteError {
    #[error("no finite obstacle in column 0 within {budget} levels above {start}")]
    NoStart { start: i64, budget: i64 },
    #[error("argmax search in column {column} exhausted {budget} levels below {top}")]
    SearchExhausted { column: i64, top: i64, budget: i64 },
    #[error("half width must be at least {min}, got {got}")]
    Width { min: i64, got: i64 },
    #[error("malformed path text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Limits for the vertical searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    /// How far above `N_start` to look for a finite `f(0, M)`.
    pub start_levels: i64,
    /// How far below a provisional value the argmax search may descend.
    pub drop_levels: i64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { start_levels: 1 << 20, drop_levels: 1 << 20 }
    }
}

/// Barrier on `[-W, W]`, with the provisional values at `+-(W+1)` kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupersolutionPath {
    pub half_width: i64,
    pub force: i64,
    pub n_start: i64,
    v: Vec<i64>,
    v_bar: Vec<i64>,
    argmax: Vec<i64>,
}

impl SupersolutionPath {
    /// A hand-built path: `v` on `[-W, W]` (length `2W+1`) and provisional
    /// values beyond each end. Interior provisional values equal `v`.
    pub fn from_heights(v: Vec<i64>, frontier: (i64, i64), force: i64) -> Result<Self, DiscreteError> {
        if v.len() < 3 || v.len().is_multiple_of(2) {
            return Err(DiscreteError::Width { min: 1, got: (v.len() as i64 - 1) / 2 });
        }
        let w = (v.len() as i64 - 1) / 2;
        let mut v_bar = Vec::with_capacity(v.len() + 2);
        v_bar.push(frontier.0);
        v_bar.extend_from_slice(&v);
        v_bar.push(frontier.1);
        let argmax = vec![0; v.len()];
        Ok(Self { half_width: w, force, n_start: v[w as usize], v, v_bar, argmax })
    }

    #[inline]
    pub fn v(&self, i: i64) -> i64 {
        self.v[(i + self.half_width) as usize]
    }

    /// Provisional value at `i` in `[-W-1, W+1]`.
    #[inline]
    pub fn v_bar(&self, i: i64) -> i64 {
        self.v_bar[(i + self.half_width + 1) as usize]
    }

    /// Levels dropped below the provisional value at `i` (0 at `i = 0`).
    #[inline]
    pub fn argmax_m(&self, i: i64) -> i64 {
        self.argmax[(i + self.half_width) as usize]
    }

    /// `D(n) = v_bar(n) - v(n-1)` for `n >= 1`, mirrored for `n <= -1`.
    pub fn increment(&self, n: i64) -> i64 {
        assert!(n != 0 && n.abs() <= self.half_width + 1);
        if n > 0 {
            self.v_bar(n) - self.v(n - 1)
        } else {
            self.v_bar(n) - self.v(n + 1)
        }
    }

    pub fn heights(&self) -> &[i64] {
        &self.v
    }

    /// Neighbour value used by the supersolution check: `v` inside, `v_bar` at the frontier.
    #[inline]
    fn neighbour(&self, i: i64) -> i64 {
        if i.abs() > self.half_width {
            self.v_bar(i)
        } else {
            self.v(i)
        }
    }

    /// Columnar text: a metadata comment, a header, then one row `i v v_bar argmax_m`.
    pub fn to_columnar(&self) -> String {
        let w = self.half_width;
        let mut out = String::with_capacity(32 * (2 * w as usize + 4));
        let _ = writeln!(
            out,
            "# half_width={w} force={} n_start={} frontier_left={} frontier_right={}",
            self.force,
            self.n_start,
            self.v_bar(-w - 1),
            self.v_bar(w + 1)
        );
        out.push_str("i,v,v_bar,argmax_m\n");
        for i in -w..=w {
            let _ = writeln!(out, "{i},{},{},{}", self.v(i), self.v_bar(i), self.argmax_m(i));
        }
        out
    }

    pub fn from_columnar(text: &str) -> Result<Self, DiscreteError> {
        let err = |line: usize, msg: &str| DiscreteError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| err(1, "empty"))?;
        let meta = meta.strip_prefix('#').ok_or_else(|| err(1, "missing metadata comment"))?;
        let get = |key: &str| -> Result<i64, DiscreteError> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| err(1, &format!("missing {key}")))?
                .parse()
                .map_err(|_| err(1, &format!("bad {key}")))
        };
        let w = get("half_width")?;
        let force = get("force")?;
        let n_start = get("n_start")?;
        let left = get("frontier_left")?;
        let right = get("frontier_right")?;
        if w < 1 {
            return Err(DiscreteError::Width { min: 1, got: w });
        }
        let n = (2 * w + 1) as usize;
        let (mut v, mut v_bar, mut argmax) = (Vec::with_capacity(n), vec![left], Vec::with_capacity(n));
        for (ln, line) in lines.skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<i64> = line
                .split(',')
                .map(|c| c.trim().parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err(ln + 1, "non-integer field"))?;
            if cols.len() != 4 || cols[0] != v.len() as i64 - w {
                return Err(err(ln + 1, "expected consecutive rows `i,v,v_bar,argmax_m`"));
            }
            v.push(cols[1]);
            v_bar.push(cols[2]);
            argmax.push(cols[3]);
        }
        if v.len() != n {
            return Err(err(0, "row count does not match half_width"));
        }
        v_bar.push(right);
        Ok(Self { half_width: w, force, n_start, v, v_bar, argmax })
    }
}

/// `floor(a / 2)`, rounding toward `-inf`.
#[inline]
pub fn floor_half(a: i64) -> i64 {
    a.div_euclid(2)
}

/// The greedy drop in one column: the smallest `m >= 0` maximising
/// `f(column, top - m) - m`. Returns `(m, f(column, top - m))`.
///
/// Since `f <= U`, every `m` with `U - m <= best` is dominated, which ends the scan.
pub fn column_argmax(field: &SeededField, column: i64, top: i64, budget: i64) -> Result<(i64, i64), DiscreteError> {
    let upper = field.spec.max_atom();
    let mut best: Option<(i64, i64)> = None;
    let mut m = 0i64;
    loop {
        if let Some((_, score)) = best {
            if upper - m <= score {
                break;
            }
        }
        if m > budget {
            return Err(DiscreteError::SearchExhausted { column, top, budget });
        }
        if let ExtInt::Finite(f) = field.value(column, top - m) {
            let score = f - m;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((m, score));
            }
        }
        m += 1;
    }
    let (m, score) = best.expect("loop exits only with a candidate");
    Ok((m, score + m))
}

struct Branch {
    v: Vec<i64>,
    v_bar: Vec<i64>,
    argmax: Vec<i64>,
}

fn grow(
    field: &SeededField,
    direction: i64,
    v0: i64,
    v_bar1: i64,
    force: i64,
    half_width: i64,
    budget: i64,
) -> Result<Branch, DiscreteError> {
    let cap = half_width as usize;
    let mut out = Branch { v: Vec::with_capacity(cap), v_bar: Vec::with_capacity(cap + 1), argmax: Vec::with_capacity(cap) };
    let (mut prev, mut provisional) = (v0, v_bar1);
    for n in 1..=half_width {
        let column = direction * n;
        let (m, f) = column_argmax(field, column, provisional, budget)?;
        let here = provisional - m;
        out.v_bar.push(provisional);
        out.v.push(here);
        out.argmax.push(m);
        provisional = 2 * here - prev + f - force;
        prev = here;
    }
    out.v_bar.push(provisional);
    Ok(out)
}

/// Build the barrier on `[-half_width, half_width]`.
pub fn construct_supersolution(
    field: &SeededField,
    n_start: i64,
    force: i64,
    half_width: i64,
    budget: SearchBudget,
    exec: Exec,
) -> Result<SupersolutionPath, DiscreteError> {
    if half_width < 1 {
        return Err(DiscreteError::Width { min: 1, got: half_width });
    }
    let (v0, f0) = (n_start..=n_start.saturating_add(budget.start_levels))
        .find_map(|m| field.value(0, m).finite().map(|f| (m, f)))
        .ok_or(DiscreteError::NoStart { start: n_start, budget: budget.start_levels })?;
    let v_bar1 = v0 + floor_half(f0 - force);
    let (fwd, bwd) = exec::join(
        exec,
        || grow(field, 1, v0, v_bar1, force, half_width, budget.drop_levels),
        || grow(field, -1, v0, v_bar1, force, half_width, budget.drop_levels),
    );
    let (fwd, bwd) = (fwd?, bwd?);

    let n = (2 * half_width + 1) as usize;
    let mut v = Vec::with_capacity(n);
    let mut v_bar = Vec::with_capacity(n + 2);
    let mut argmax = Vec::with_capacity(n);
    v_bar.extend(bwd.v_bar.iter().rev());
    v.extend(bwd.v.iter().rev());
    argmax.extend(bwd.argmax.iter().rev());
    v.push(v0);
    v_bar.push(v0);
    argmax.push(0);
    v.extend(&fwd.v);
    v_bar.extend(&fwd.v_bar);
    argmax.extend(&fwd.argmax);
    Ok(SupersolutionPath { half_width, force, n_start, v, v_bar, argmax })
}

/// A failed supersolution inequality at `site`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub site: i64,
    pub lhs: i64,
    pub rhs: ExtInt,
}

/// Exact check of `v(i+1) + v(i-1) - 2 v(i) <= f(i, v(i)) - F` on `[-W, W]`.
pub fn verify_discrete(path: &SupersolutionPath, field: &SeededField, force: i64) -> Vec<Violation> {
    let w = path.half_width;
    (-w..=w)
        .filter_map(|i| {
            let lhs = path.neighbour(i + 1) + path.neighbour(i - 1) - 2 * path.v(i);
            let rhs = field.value(i, path.v(i)).minus(force);
            (ExtInt::Finite(lhs) > rhs).then_some(Violation { site: i, lhs, rhs })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub min_v: i64,
    /// `(v(W) - v(h)) / (W - h)` with `h = ceil(W/2)`.
    pub forward_secant: f64,
    pub backward_secant: f64,
    /// `(v(W) - v(W-1)) / W`; tends to `E[M] - F`.
    pub forward_slope: f64,
    pub backward_slope: f64,
    pub nonnegative: bool,
}

pub fn path_stats(path: &SupersolutionPath) -> PathStats {
    let w = path.half_width;
    assert!(w >= 2, "path_stats needs half_width >= 2");
    let h = (w + 1) / 2;
    let span = (w - h) as f64;
    let min_v = *path.v.iter().min().expect("non-empty");
    PathStats {
        min_v,
        forward_secant: (path.v(w) - path.v(h)) as f64 / span,
        backward_secant: (path.v(-w) - path.v(-h)) as f64 / span,
        forward_slope: (path.v(w) - path.v(w - 1)) as f64 / w as f64,
        backward_slope: (path.v(-w) - path.v(-w + 1)) as f64 / w as f64,
        nonnegative: min_v >= 0,
    }
}
