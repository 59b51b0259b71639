//! d-independent site percolation on a `(1+1)`-dimensional window, minimal
//! open Lipschitz surfaces, and the admissible-path counting bounds behind
//! their existence.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("search budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("bound diverges: 8 n q^(1/d) = {0} >= 1")]
    Divergent(f64),
    #[error("invalid grid parameters: {0}")]
    BadParams(String),
    #[error("malformed grid text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Horizontal boundary of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizontal {
    #[default]
    Periodic,
    /// No wrap-around: columns `0` and `W-1` have a single neighbour.
    Free,
}

/// Open/closed sites `(z, h)` with `0 <= z < width`, `1 <= h <= height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGrid {
    pub width: usize,
    pub height: usize,
    /// Vertical dependence range.
    pub d: usize,
    pub p: f64,
    pub seed: u64,
    pub boundary: Horizontal,
    open: Vec<bool>,
}

impl SiteGrid {
    /// Grid from explicit states; `states[z][h-1]`.
    pub fn from_columns(columns: Vec<Vec<bool>>, d: usize, boundary: Horizontal) -> Result<Self, PercolationError> {
        let width = columns.len();
        let height = columns.first().map_or(0, Vec::len);
        if width == 0 || height == 0 || columns.iter().any(|c| c.len() != height) {
            return Err(PercolationError::BadParams("columns must be non-empty and equally tall".into()));
        }
        if d == 0 {
            return Err(PercolationError::BadParams("d must be >= 1".into()));
        }
        let open = columns.into_iter().flatten().collect();
        Ok(Self { width, height, d, p: f64::NAN, seed: 0, boundary, open })
    }

    #[inline]
    pub fn is_open(&self, z: usize, h: usize) -> bool {
        debug_assert!(h >= 1 && h <= self.height);
        self.open[z * self.height + h - 1]
    }

    pub fn set(&mut self, z: usize, h: usize, open: bool) {
        self.open[z * self.height + h - 1] = open;
    }

    pub fn open_fraction(&self) -> f64 {
        self.open.iter().filter(|&&o| o).count() as f64 / self.open.len() as f64
    }

    pub fn with_boundary(mut self, boundary: Horizontal) -> Self {
        self.boundary = boundary;
        self
    }

    fn neighbours(&self, z: usize) -> [Option<usize>; 2] {
        let w = self.width;
        match self.boundary {
            Horizontal::Periodic => [Some((z + w - 1) % w), Some((z + 1) % w)],
            Horizontal::Free => [z.checked_sub(1), (z + 1 < w).then_some(z + 1)],
        }
    }

    /// Run-length encoded text: a header line, then per column
    /// `z: <state of h=1> <run> <run> ...` with runs of alternating state.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let boundary = match self.boundary {
            Horizontal::Periodic => "periodic",
            Horizontal::Free => "free",
        };
        let _ = writeln!(
            out,
            "# W={} H={} d={} p={} seed={} boundary={boundary}",
            self.width, self.height, self.d, self.p, self.seed
        );
        for z in 0..self.width {
            let col = &self.open[z * self.height..(z + 1) * self.height];
            let _ = write!(out, "{z}: {}", u8::from(col[0]));
            let mut run = 1;
            for h in 1..self.height {
                if col[h] == col[h - 1] {
                    run += 1;
                } else {
                    let _ = write!(out, " {run}");
                    run = 1;
                }
            }
            let _ = writeln!(out, " {run}");
        }
        out
    }

    pub fn from_rle(text: &str) -> Result<Self, PercolationError> {
        let err = |line: usize, msg: &str| PercolationError::Parse { line, msg: msg.into() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty"))?;
        let header = header.strip_prefix('#').ok_or_else(|| err(1, "missing header"))?;
        let field = |key: &str| -> Result<&str, PercolationError> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| err(1, &format!("missing {key}")))
        };
        let num = |key: &str| -> Result<usize, PercolationError> { field(key)?.parse().map_err(|_| err(1, key)) };
        let (width, height, d) = (num("W")?, num("H")?, num("d")?);
        let p: f64 = field("p")?.parse().map_err(|_| err(1, "p"))?;
        let seed: u64 = field("seed")?.parse().map_err(|_| err(1, "seed"))?;
        let boundary = match field("boundary")? {
            "periodic" => Horizontal::Periodic,
            "free" => Horizontal::Free,
            _ => return Err(err(1, "boundary")),
        };
        let mut open = Vec::with_capacity(width * height);
        for z in 0..width {
            let (ln, line) = lines.next().ok_or_else(|| err(0, "missing column"))?;
            let (idx, body) = line.split_once(':').ok_or_else(|| err(ln + 1, "expected `z:`"))?;
            if idx.trim().parse::<usize>().ok() != Some(z) {
                return Err(err(ln + 1, "columns out of order"));
            }
            let mut it = body.split_whitespace().map(|t| t.parse::<usize>());
            let mut state = match it.next() {
                Some(Ok(0)) => false,
                Some(Ok(1)) => true,
                _ => return Err(err(ln + 1, "bad initial state")),
            };
            let before = open.len();
            for run in it {
                let run = run.map_err(|_| err(ln + 1, "bad run length"))?;
                open.extend(std::iter::repeat_n(state, run));
                state = !state;
            }
            if open.len() - before != height {
                return Err(err(ln + 1, "runs do not add up to H"));
            }
        }
        Ok(Self { width, height, d, p, seed, boundary, open })
    }
}

fn check_params(width: usize, height: usize, p: f64, d: usize) -> Result<(), PercolationError> {
    if width == 0 || height == 0 {
        return Err(PercolationError::BadParams("empty grid".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(PercolationError::BadParams(format!("p = {p}")));
    }
    if d == 0 {
        return Err(PercolationError::BadParams("d must be >= 1".into()));
    }
    Ok(())
}

/// Independent sites, open with probability `p`.
pub fn generate_grid_iid(width: usize, height: usize, p: f64, seed: u64) -> Result<SiteGrid, PercolationError> {
    generate_grid_blocked(width, height, p, 1, seed)
}

/// Each column is cut into aligned vertical blocks of `d` sites sharing one
/// Bernoulli(`p`) state. Sites `d` or more apart vertically lie in different
/// blocks, so the family is d-independent.
pub fn generate_grid_blocked(width: usize, height: usize, p: f64, d: usize, seed: u64) -> Result<SiteGrid, PercolationError> {
    check_params(width, height, p, d)?;
    let mut open = Vec::with_capacity(width * height);
    for z in 0..width {
        for h in 1..=height {
            let block = ((h - 1) / d) as i64;
            let u = rng::unit_f64(rng::hash_key(seed, streams::GRID, z as i64, block));
            open.push(u < p);
        }
    }
    Ok(SiteGrid { width, height, d, p, seed, boundary: Horizontal::Periodic, open })
}

/// A 1-Lipschitz height function through open sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LipschitzSurface {
    pub phi: Vec<usize>,
}

impl LipschitzSurface {
    /// Both surface invariants on `grid`.
    pub fn is_valid_on(&self, grid: &SiteGrid) -> bool {
        self.phi.len() == grid.width
            && (0..grid.width).all(|z| {
                let h = self.phi[z];
                h >= 1
                    && h <= grid.height
                    && grid.is_open(z, h)
                    && grid.neighbours(z).iter().flatten().all(|&n| self.phi[n].abs_diff(h) <= 1)
            })
    }
}

/// Visiting order for the push-up iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    RoundRobin,
    Shuffled(u64),
}

/// Least fixed point of the push-up map, visited in `schedule` order.
///
/// Each visit raises `phi(z)` to `max(phi(z), phi(z-1) - 1, phi(z+1) - 1)` and
/// then to the next open site at or above it. Both moves are monotone, so every
/// schedule reaches the same pointwise-minimal open Lipschitz surface, or
/// overflows the window.
pub fn push_up(grid: &SiteGrid, schedule: Schedule) -> Option<LipschitzSurface> {
    let w = grid.width;
    let mut phi = vec![1usize; w];
    let mut order: Vec<usize> = (0..w).collect();
    let mut shuffler = match schedule {
        Schedule::Shuffled(seed) => Some(rng::keyed_rng(seed, 0x5ced, 0, 0)),
        Schedule::RoundRobin => None,
    };
    loop {
        if let Some(r) = shuffler.as_mut() {
            order.shuffle(r);
        }
        let mut changed = false;
        for &z in &order {
            let floor = grid
                .neighbours(z)
                .iter()
                .flatten()
                .map(|&n| phi[n].saturating_sub(1))
                .fold(phi[z], usize::max);
            let next = (floor..=grid.height).find(|&h| grid.is_open(z, h))?;
            if next != phi[z] {
                phi[z] = next;
                changed = true;
            }
        }
        if !changed {
            return Some(LipschitzSurface { phi });
        }
    }
}

/// Pointwise-minimal open Lipschitz surface within `[1, H]`, or `None`.
pub fn minimal_open_surface(grid: &SiteGrid) -> Option<LipschitzSurface> {
    // Worklist form of the round-robin iteration.
    let w = grid.width;
    let mut phi = vec![1usize; w];
    let mut queued = vec![true; w];
    let mut work: std::collections::VecDeque<usize> = (0..w).collect();
    while let Some(z) = work.pop_front() {
        queued[z] = false;
        let floor = grid
            .neighbours(z)
            .iter()
            .flatten()
            .map(|&n| phi[n].saturating_sub(1))
            .fold(phi[z], usize::max);
        let next = (floor..=grid.height).find(|&h| grid.is_open(z, h))?;
        if next != phi[z] {
            phi[z] = next;
            for n in grid.neighbours(z).into_iter().flatten() {
                if !queued[n] {
                    queued[n] = true;
                    work.push_back(n);
                }
            }
        }
    }
    Some(LipschitzSurface { phi })
}

/// Exhaustive search over all `H^W` height functions.
///
/// Keeps the running pointwise minimum of the valid candidates and asserts it
/// stays valid, which is the lattice property that makes a least surface exist.
pub fn brute_force_minimal_surface(grid: &SiteGrid, budget: u64) -> Result<Option<LipschitzSurface>, PercolationError> {
    let (w, h) = (grid.width as u32, grid.height as u64);
    let total = h.checked_pow(w).filter(|&t| t <= budget).ok_or(PercolationError::BudgetExceeded(budget))?;
    let mut cand = LipschitzSurface { phi: vec![1; grid.width] };
    let mut best: Option<LipschitzSurface> = None;
    for _ in 0..total {
        if cand.is_valid_on(grid) {
            best = Some(match best {
                None => cand.clone(),
                Some(b) => {
                    let meet = LipschitzSurface { phi: b.phi.iter().zip(&cand.phi).map(|(a, c)| *a.min(c)).collect() };
                    assert!(meet.is_valid_on(grid), "pointwise minimum of open Lipschitz surfaces must be one");
                    meet
                }
            });
        }
        // odometer increment
        for z in 0..grid.width {
            if cand.phi[z] < grid.height {
                cand.phi[z] += 1;
                break;
            }
            cand.phi[z] = 1;
        }
    }
    Ok(best)
}

/// `p0(n, d) = 1 - (8n)^-d`.
pub fn critical_probability(n: u32, d: u32) -> f64 {
    1.0 - (8.0 * n as f64).powi(-(d as i32))
}

/// Upper bound on the expected number of admissible lambda-paths from `(z, 0)`
/// to `(0, h)`: `2^h q^(h/d) (8n q^(1/d))^|z| / (1 - 8n q^(1/d))`.
pub fn admissible_path_bound(h: u32, z_abs: u32, q: f64, n: u32, d: u32) -> Result<f64, PercolationError> {
    let ratio = 8.0 * n as f64 * q.powf(1.0 / d as f64);
    if ratio >= 1.0 {
        return Err(PercolationError::Divergent(ratio));
    }
    Ok(2f64.powi(h as i32) * q.powf(h as f64 / d as f64) * ratio.powi(z_abs as i32) / (1.0 - ratio))
}

/// Count lambda-paths from `(from_z, 0)` to `(0, to_h)` whose up-steps all end
/// at closed sites. Steps are `(0, +1)` (up) or `(+-1, -1)` (down), vertices
/// are distinct, and paths stay inside the window: columns map to
/// `z = column - width / 2` (no wrap) and heights to `0..=height`.
pub fn enumerate_admissible_paths(grid: &SiteGrid, from_z: i64, to_h: usize, budget: u64) -> Result<u64, PercolationError> {
    let centre = (grid.width / 2) as i64;
    let col = |z: i64| -> Option<usize> { usize::try_from(z + centre).ok().filter(|&c| c < grid.width) };
    let (Some(start), Some(target)) = (col(from_z), col(0)) else {
        return Err(PercolationError::BadParams("endpoints outside the window".into()));
    };
    if to_h == 0 || to_h > grid.height {
        return Err(PercolationError::BadParams(format!("target height {to_h}")));
    }
    let rows = grid.height + 1;
    let mut visited = vec![false; grid.width * rows];
    let mut count = 0u64;
    let mut steps = 0u64;

    struct Frame {
        c: usize,
        h: usize,
        next_move: u8,
    }
    let mut stack = vec![Frame { c: start, h: 0, next_move: 0 }];
    visited[start * rows] = true;
    while let Some(top) = stack.last_mut() {
        if top.c == target && top.h == to_h {
            count += 1;
            visited[top.c * rows + top.h] = false;
            stack.pop();
            continue;
        }
        let (c, h) = (top.c, top.h);
        let mv = top.next_move;
        if mv >= 3 {
            visited[c * rows + h] = false;
            stack.pop();
            continue;
        }
        top.next_move += 1;
        let next = match mv {
            0 => (h < grid.height && !grid.is_open(c, h + 1)).then_some((c, h + 1)),
            1 => (h > 0 && c > 0).then(|| (c - 1, h - 1)),
            _ => (h > 0 && c + 1 < grid.width).then(|| (c + 1, h - 1)),
        };
        if let Some((nc, nh)) = next {
            if !visited[nc * rows + nh] {
                steps += 1;
                if steps > budget {
                    return Err(PercolationError::BudgetExceeded(budget));
                }
                visited[nc * rows + nh] = true;
                stack.push(Frame { c: nc, h: nh, next_move: 0 });
            }
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(width: usize, height: usize, open: bool) -> SiteGrid {
        SiteGrid::from_columns(vec![vec![open; height]; width], 1, Horizontal::Periodic).unwrap()
    }

    #[test]
    fn extreme_probabilities() {
        assert_eq!(generate_grid_iid(10, 10, 1.0, 3).unwrap().open_fraction(), 1.0);
        assert_eq!(generate_grid_iid(10, 10, 0.0, 3).unwrap().open_fraction(), 0.0);
        assert!(generate_grid_iid(10, 10, 1.5, 3).is_err());
        assert!(generate_grid_blocked(10, 10, 0.5, 0, 3).is_err());
    }

    #[test]
    fn iid_open_fraction() {
        let g = generate_grid_iid(100, 100, 0.7, 17).unwrap();
        assert!((g.open_fraction() - 0.7).abs() <= 3.0 * (0.21f64 / 1e4).sqrt());
    }

    #[test]
    fn blocked_d1_matches_iid_and_blocks_share_state() {
        assert_eq!(generate_grid_iid(20, 12, 0.5, 9).unwrap(), generate_grid_blocked(20, 12, 0.5, 1, 9).unwrap());
        let g = generate_grid_blocked(50, 12, 0.5, 3, 9).unwrap();
        for z in 0..50 {
            for b in 0..4 {
                let s = g.is_open(z, 3 * b + 1);
                assert!((2..=3).all(|k| g.is_open(z, 3 * b + k) == s));
            }
        }
    }

    #[test]
    fn all_open_and_single_closed() {
        assert_eq!(minimal_open_surface(&all(6, 4, true)).unwrap().phi, vec![1; 6]);
        assert_eq!(minimal_open_surface(&all(6, 4, false)), None);
        let mut g = all(3, 4, true);
        g.set(0, 1, false);
        assert_eq!(minimal_open_surface(&g).unwrap().phi, vec![2, 1, 1]);
        assert_eq!(brute_force_minimal_surface(&g, 1000).unwrap().unwrap().phi, vec![2, 1, 1]);
        assert_eq!(brute_force_minimal_surface(&all(3, 3, false), 1000).unwrap(), None);
    }

    #[test]
    fn free_boundary_relaxes_wrap() {
        let mut g = all(5, 6, true).with_boundary(Horizontal::Free);
        for h in 1..=4 {
            g.set(0, h, false);
        }
        assert_eq!(minimal_open_surface(&g).unwrap().phi, vec![5, 4, 3, 2, 1]);
        let g = g.with_boundary(Horizontal::Periodic);
        assert_eq!(minimal_open_surface(&g).unwrap().phi, vec![5, 4, 3, 3, 4]);
    }

    #[test]
    fn surface_overflow_is_none() {
        let mut g = all(4, 3, true);
        for h in 1..=3 {
            g.set(2, h, false);
        }
        assert_eq!(minimal_open_surface(&g), None);
        assert_eq!(push_up(&g, Schedule::RoundRobin), None);
    }

    #[test]
    fn schedules_agree() {
        for seed in 0..200 {
            let g = generate_grid_iid(12, 15, 0.75, seed).unwrap();
            let a = minimal_open_surface(&g);
            assert_eq!(a, push_up(&g, Schedule::RoundRobin));
            assert_eq!(a, push_up(&g, Schedule::Shuffled(seed ^ 0xabc)));
            if let Some(s) = &a {
                assert!(s.is_valid_on(&g));
            }
        }
    }

    #[test]
    fn brute_force_budget() {
        assert!(matches!(brute_force_minimal_surface(&all(10, 10, true), 1000), Err(PercolationError::BudgetExceeded(_))));
    }

    #[test]
    fn formula_values() {
        assert_eq!(critical_probability(1, 1), 0.875);
        assert_eq!(critical_probability(1, 6), 1.0 - 8f64.powi(-6));
        assert!((critical_probability(1, 6) - 0.999_996_185_3).abs() < 1e-10);
        assert_eq!(critical_probability(2, 1), 0.9375);
        assert_eq!(admissible_path_bound(3, 2, 0.0, 1, 1).unwrap(), 0.0);
        let b = admissible_path_bound(1, 0, 0.01, 1, 1).unwrap();
        assert!((b - 0.02 / 0.92).abs() < 1e-15);
        assert!(matches!(admissible_path_bound(1, 0, 0.2, 1, 1), Err(PercolationError::Divergent(_))));
    }

    #[test]
    fn path_counts_on_simple_grids() {
        let g = all(7, 6, true);
        for h in 1..=3 {
            for z in -1..=1 {
                assert_eq!(enumerate_admissible_paths(&g, z, h, 1_000_000).unwrap(), 0);
            }
        }
        let closed = all(7, 6, false);
        // Straight up is one of several admissible paths when everything is closed.
        assert!(enumerate_admissible_paths(&closed, 0, 3, 10_000_000).unwrap() >= 1);
        let mut column = all(7, 6, true);
        for h in 1..=3 {
            column.set(3, h, false);
        }
        assert_eq!(enumerate_admissible_paths(&column, 0, 3, 1_000).unwrap(), 1);
        assert!(enumerate_admissible_paths(&closed, 5, 3, 1_000).is_err());
    }

    #[test]
    fn rle_round_trip() {
        let g = generate_grid_blocked(9, 13, 0.6, 2, 44).unwrap().with_boundary(Horizontal::Free);
        let text = g.to_rle();
        assert!(text.starts_with("# W=9 H=13 d=2 p=0.6 seed=44 boundary=free"));
        assert_eq!(SiteGrid::from_rle(&text).unwrap(), g);
        assert!(SiteGrid::from_rle("# W=1 H=2 d=1 p=0.5 seed=0 boundary=free\n0: 1 3\n").is_err());
    }
}
