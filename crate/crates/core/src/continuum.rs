//! Poisson-obstacle model: scale selection, open-box classification, assembly
//! of a piecewise-parabolic barrier along an open Lipschitz surface of boxes,
//! and a sampled check of the viscosity supersolution inequality
//! `v'' - f(x, v) + F <= 0`.
//!
//! Positive obstacles push with at least `S = 2k/rho` on their cores (squares
//! of half-side `rho`); negative obstacles are avoided entirely, so the barrier
//! keeps a distance greater than `alpha * rho` from every negative center.
//!
//! Quadratic pieces are stored relative to their own left breakpoint: with
//! `rho` around `1e-7` and abscissae in the hundreds, absolute-coordinate
//! coefficients cancel catastrophically.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::media::{sample_poisson_points, MediaError, Rect};
use crate::percolation::{critical_probability, minimal_open_surface, Horizontal, LipschitzSurface, SiteGrid};
use crate::rng::{self, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuumError {
    #[error("invalid scale parameters: {0}")]
    InvalidParams(String),
    #[error("obstacle window does not cover site ({i}, {j})")]
    WindowTooSmall { i: i64, j: usize },
    #[error("site ({i}, {j}) is not open")]
    ClosedSite { i: i64, j: usize },
    #[error("surface is not 1-Lipschitz between columns {0} and {1}")]
    NotLipschitz(i64, i64),
    #[error("no admissible connector between sites {left:?} and {right:?}: F window [{lo}, {hi}], blocked {blocked}")]
    Infeasible { left: (i64, usize), right: (i64, usize), lo: f64, hi: f64, blocked: f64 },
    #[error("no open Lipschitz surface within {height} box rows")]
    NoSurface { height: usize },
    #[error("malformed obstacle CSV at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Media(#[from] MediaError),
}

// ---------------------------------------------------------------------------
// Scales

/// Length, height and strength scales of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub k: f64,
    pub alpha: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Box length.
    pub l: f64,
    /// Gap between box columns; always `l`.
    pub d_gap: f64,
    /// Box height, `k d_gap / 4`.
    pub h: f64,
    /// Clearance strip around a core.
    pub b: f64,
    /// Negative centers allowed in a box's count rectangle are `< N`.
    #[serde(rename = "N")]
    pub n: u32,
    pub rho: f64,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    /// Core strength `2k/rho`.
    #[serde(rename = "S")]
    pub s: f64,
    pub p0: f64,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ContinuumError> {
    if ok {
        Ok(())
    } else {
        Err(ContinuumError::InvalidParams(msg()))
    }
}

fn check_inputs(k: f64, alpha: f64, lambda_plus: f64, lambda_minus: f64) -> Result<(), ContinuumError> {
    check(k > 0.0 && k <= 1.0, || format!("k = {k} not in (0, 1]"))?;
    check(alpha > std::f64::consts::SQRT_2 && alpha.is_finite(), || format!("alpha = {alpha} must exceed sqrt 2"))?;
    check(lambda_plus > 0.0 && lambda_plus.is_finite(), || format!("lambda_plus = {lambda_plus}"))?;
    check(lambda_minus > 0.0 && lambda_minus.is_finite(), || format!("lambda_minus = {lambda_minus}"))
}

/// `ln(1 - p0^(1/3))` and `ln(p0^(1/3))` without cancellation.
fn cube_root_target(p0: f64) -> (f64, f64) {
    let ln_target = (-(1.0 - p0)).ln_1p() / 3.0;
    ((-ln_target.exp_m1()).ln(), ln_target)
}

/// `ln((x^n) / n!)`.
fn ln_poisson_tail_term(x: f64, n: u32) -> f64 {
    n as f64 * x.ln() - (1..=n).map(|i| (i as f64).ln()).sum::<f64>()
}

impl ScaleParams {
    /// Scales from explicit `l`, `b`, `N`, `rho`; the rest follows.
    #[allow(clippy::too_many_arguments)]
    pub fn manual(
        k: f64,
        alpha: f64,
        lambda_plus: f64,
        lambda_minus: f64,
        l: f64,
        b: f64,
        n: u32,
        rho: f64,
    ) -> Result<Self, ContinuumError> {
        check_inputs(k, alpha, lambda_plus, lambda_minus)?;
        let s = Self {
            k,
            alpha,
            lambda_plus,
            lambda_minus,
            l,
            d_gap: l,
            h: k * l / 4.0,
            b,
            n,
            rho,
            f_star: k / (18.0 * l),
            s: 2.0 * k / rho,
            p0: critical_probability(1, 6),
        };
        s.validate()?;
        Ok(s)
    }

    /// Every structural invariant of the construction.
    pub fn validate(&self) -> Result<(), ContinuumError> {
        let Self { k, alpha, l, d_gap, h, b, n, rho, f_star, s, .. } = *self;
        check_inputs(k, alpha, self.lambda_plus, self.lambda_minus)?;
        check([l, d_gap, h, b, rho].iter().all(|v| v.is_finite() && *v > 0.0), || "scales must be positive".into())?;
        check(n >= 1, || "N must be >= 1".into())?;
        check(d_gap == l, || "d_gap must equal l".into())?;
        check(k * d_gap > 2.0 * h, || format!("k d = {} <= 2h = {}", k * d_gap, 2.0 * h))?;
        check(b < h && b < d_gap / 2.0, || format!("b = {b} must be below h = {h} and d/2"))?;
        check(b >= (1.0 + alpha) * rho, || format!("b = {b} < (1 + alpha) rho = {}", (1.0 + alpha) * rho))?;
        check(h > (alpha - 1.0) * rho, || "h <= (alpha - 1) rho".into())?;
        check(l >= 4.0 * rho && h >= 4.0 * rho, || "l and h must be >= 4 rho".into())?;
        check(((f_star - k / (18.0 * l)) / f_star).abs() <= 1e-12, || format!("F_star = {f_star} != k / 18l"))?;
        check((s - 2.0 * k / rho).abs() <= 1e-12 * s, || "S != 2k / rho".into())?;
        check(2.0 * f_star <= s / 2.0, || "2 F_star > S / 2".into())?;
        let cap = self.rho_cap();
        check(rho <= cap * (1.0 + 1e-12), || format!("rho = {rho} above k b (l - b) / (288 alpha N l) = {cap}"))
    }

    /// `k b (l - b) / (288 alpha N l)`.
    pub fn rho_cap(&self) -> f64 {
        self.k * self.b * (self.l - self.b) / (288.0 * self.alpha * self.n as f64 * self.l)
    }

    /// `(4h / (2l+d)^2, 2(kd - 2h) / (2l+d)^2)`; `F_star` is half their minimum.
    pub fn fstar_branches(&self) -> (f64, f64) {
        let w = (2.0 * self.l + self.d_gap).powi(2);
        (4.0 * self.h / w, 2.0 * (self.k * self.d_gap - 2.0 * self.h) / w)
    }

    /// `6 h (l + d)`, area of a count rectangle.
    pub fn count_area(&self) -> f64 {
        6.0 * self.h * (self.l + self.d_gap)
    }

    /// Product lower bound on `P(site open)`.
    pub fn open_probability_bound(&self) -> f64 {
        let Self { lambda_plus, lambda_minus, l, h, b, rho, alpha, n, .. } = *self;
        let core = -(-lambda_plus * (l - 2.0 * rho) * (h - 2.0 * rho)).exp_m1();
        let strip = (-4.0 * lambda_minus * (b + (1.0 + alpha) * rho).powi(2)).exp();
        let count = -ln_poisson_tail_term(lambda_minus * self.count_area(), n).exp_m1();
        core * strip * count
    }

    /// Support radius `alpha rho`.
    pub fn reach(&self) -> f64 {
        self.alpha * self.rho
    }
}

/// Smallest scales meeting the three open-site conditions with `p0(1, 6)`.
pub fn select_scales(k: f64, alpha: f64, lambda_plus: f64, lambda_minus: f64) -> Result<ScaleParams, ContinuumError> {
    check_inputs(k, alpha, lambda_plus, lambda_minus)?;
    let p0 = critical_probability(1, 6);
    let (ln_miss, ln_target) = cube_root_target(p0);

    // l: exp(-lambda+ h l / 4) <= 1 - p0^(1/3) with h = k l / 4.
    let enough = |l: f64| -lambda_plus * (k * l / 4.0) * l / 4.0 <= ln_miss;
    let mut hi = 1.0f64;
    while !enough(hi) {
        hi *= 2.0;
        check(hi.is_finite(), || "no finite box length".into())?;
    }
    let mut lo = hi / 2.0;
    if enough(lo) {
        lo = 0.0;
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if enough(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let l = hi;
    let h = k * l / 4.0;

    // b: exp(-16 lambda- b^2) >= p0^(1/3).
    let b = (0.99 * h).min((-ln_target / (16.0 * lambda_minus)).sqrt());

    // N: (lambda- V)^N / N! < 1 - p0^(1/3).
    let x = lambda_minus * 6.0 * h * 2.0 * l;
    let n = (1..=1_000_000u32)
        .find(|&n| ln_poisson_tail_term(x, n) < ln_miss)
        .ok_or_else(|| ContinuumError::InvalidParams(format!("no N for lambda- V = {x}")))?;

    let rho_144 = k * b * (l - b) / (144.0 * alpha * n as f64 * l);
    let rho_288 = rho_144 / 2.0;
    let mut rho = rho_144.min(rho_288);
    let mut halvings = 0;
    while b < (1.0 + alpha) * rho || l < 4.0 * rho || h < 4.0 * rho {
        rho /= 2.0;
        halvings += 1;
        check(halvings < 64, || "cannot fit (1 + alpha) rho below b".into())?;
    }
    let scales = ScaleParams {
        k,
        alpha,
        lambda_plus,
        lambda_minus,
        l,
        d_gap: l,
        h,
        b,
        n,
        rho,
        f_star: k / (18.0 * l),
        s: 2.0 * k / rho,
        p0,
    };
    scales.validate()?;
    Ok(scales)
}

/// Box `Q(i, j)`: `[i(l+d) - l/2, i(l+d) + l/2] x [j h, (j+1) h]`.
pub fn box_rect(i: i64, j: usize, scales: &ScaleParams) -> Rect {
    assert!(j >= 1, "box rows start at 1");
    let cx = i as f64 * (scales.l + scales.d_gap);
    let y = j as f64 * scales.h;
    Rect::new(cx - scales.l / 2.0, cx + scales.l / 2.0, y, y + scales.h)
}

/// Rectangle of width `l + d` and height `6h` centered on the box column,
/// spanning rows `j - 2.5` to `j + 3.5`, in which negatives are counted.
pub fn count_rect(i: i64, j: usize, scales: &ScaleParams) -> Rect {
    let cx = i as f64 * (scales.l + scales.d_gap);
    let half = (scales.l + scales.d_gap) / 2.0;
    let jf = j as f64;
    Rect::new(cx - half, cx + half, (jf - 2.5) * scales.h, (jf + 3.5) * scales.h)
}

/// Obstacle window needed to classify columns `i0..i0+width`, rows `1..=height`.
pub fn required_window(i0: i64, width: usize, height: usize, scales: &ScaleParams) -> Rect {
    let margin = scales.b + (2.0 + 2.0 * scales.alpha) * scales.rho;
    let lo = count_rect(i0, 1, scales);
    let hi = count_rect(i0 + width as i64 - 1, height, scales);
    Rect::new(lo.x_min - margin, hi.x_max + margin, lo.y_min - margin, hi.y_max + margin)
}

// ---------------------------------------------------------------------------
// Obstacles

/// Positive and negative obstacle centers, each sorted by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSet {
    pub positives: Vec<(f64, f64)>,
    pub negatives: Vec<(f64, f64)>,
    pub rho: f64,
    pub window: Rect,
}

fn sort_points(points: &mut [(f64, f64)]) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

fn x_slice(points: &[(f64, f64)], x0: f64, x1: f64) -> &[(f64, f64)] {
    let a = points.partition_point(|p| p.0 < x0);
    let b = points.partition_point(|p| p.0 <= x1);
    &points[a..b.max(a)]
}

impl ObstacleSet {
    pub fn new(mut positives: Vec<(f64, f64)>, mut negatives: Vec<(f64, f64)>, rho: f64, window: Rect) -> Self {
        sort_points(&mut positives);
        sort_points(&mut negatives);
        Self { positives, negatives, rho, window }
    }

    /// Independent Poisson processes of intensity `lambda+` / `lambda-` on `window`.
    pub fn generate(window: Rect, scales: &ScaleParams, seed: u64) -> Result<Self, ContinuumError> {
        let pos = sample_poisson_points(window, scales.lambda_plus, seed, streams::POSITIVE_OBSTACLES)?;
        let neg = sample_poisson_points(window, scales.lambda_minus, seed, streams::NEGATIVE_OBSTACLES)?;
        Ok(Self::new(pos.points, neg.points, scales.rho, window))
    }

    pub fn positives_in_x(&self, x0: f64, x1: f64) -> &[(f64, f64)] {
        x_slice(&self.positives, x0, x1)
    }

    pub fn negatives_in_x(&self, x0: f64, x1: f64) -> &[(f64, f64)] {
        x_slice(&self.negatives, x0, x1)
    }

    /// Negatives in the half-open rectangle.
    pub fn count_negatives(&self, r: &Rect) -> usize {
        self.negatives_in_x(r.x_min, r.x_max).iter().filter(|&&(x, y)| r.contains(x, y)).count()
    }

    pub fn covers(&self, r: &Rect) -> bool {
        let w = &self.window;
        w.x_min <= r.x_min && w.x_max >= r.x_max && w.y_min <= r.y_min && w.y_max >= r.y_max
    }

    /// `x,y,sign` rows after a `# window=... rho=...` comment.
    pub fn to_csv(&self) -> String {
        let w = &self.window;
        let mut out = format!("# window={},{},{},{} rho={}\nx,y,sign\n", w.x_min, w.x_max, w.y_min, w.y_max, self.rho);
        for (pts, sign) in [(&self.positives, '+'), (&self.negatives, '-')] {
            for (x, y) in pts.iter() {
                let _ = writeln!(out, "{x},{y},{sign}");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ContinuumError> {
        let err = |line: usize, msg: &str| ContinuumError::Parse { line, msg: msg.to_string() };
        let num = |line: usize, s: &str| s.trim().parse::<f64>().map_err(|_| err(line, "bad number"));
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        let (mut window, mut rho) = (None, None);
        let (mut bounds, mut bbox) = (false, [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if let Some(meta) = t.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("window", v)) => {
                            let parts = v.split(',').map(|p| num(line, p)).collect::<Result<Vec<_>, _>>()?;
                            if parts.len() != 4 {
                                return Err(err(line, "window needs 4 numbers"));
                            }
                            window = Some(Rect::new(parts[0], parts[1], parts[2], parts[3]));
                        }
                        Some(("rho", v)) => rho = Some(num(line, v)?),
                        _ => {}
                    }
                }
                continue;
            }
            if t.is_empty() || t == "x,y,sign" {
                continue;
            }
            let f: Vec<&str> = t.split(',').collect();
            if f.len() != 3 {
                return Err(err(line, "expected x,y,sign"));
            }
            let p = (num(line, f[0])?, num(line, f[1])?);
            bounds = true;
            bbox = [bbox[0].min(p.0), bbox[1].max(p.0), bbox[2].min(p.1), bbox[3].max(p.1)];
            match f[2].trim() {
                "+" => pos.push(p),
                "-" => neg.push(p),
                _ => return Err(err(line, "sign must be + or -")),
            }
        }
        let window = match (window, bounds) {
            (Some(w), _) => w,
            (None, true) => Rect::new(bbox[0], bbox[1], bbox[2], bbox[3]),
            (None, false) => Rect::new(0.0, 0.0, 0.0, 0.0),
        };
        Ok(Self::new(pos, neg, rho.unwrap_or(f64::NAN), window))
    }
}

/// Outcome of classifying one box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteClass {
    pub open: bool,
    /// Lowest (then leftmost) positive center whose core lies in the box and
    /// whose clearance square holds no negative center.
    pub core: Option<(f64, f64)>,
}

/// Open iff the box holds a core with a clear strip and its count rectangle
/// holds fewer than `N` negative centers.
pub fn classify_site(i: i64, j: usize, obstacles: &ObstacleSet, scales: &ScaleParams) -> Result<SiteClass, ContinuumError> {
    let count = count_rect(i, j, scales);
    if !obstacles.covers(&count) {
        return Err(ContinuumError::WindowTooSmall { i, j });
    }
    let r = box_rect(i, j, scales);
    let rho = scales.rho;
    let half = scales.b + rho + scales.alpha * rho;
    let clear = |&(x, y): &(f64, f64)| {
        obstacles
            .negatives_in_x(x - half, x + half)
            .iter()
            .all(|&(_, ny)| (ny - y).abs() > half)
    };
    let core = obstacles
        .positives_in_x(r.x_min + rho, r.x_max - rho)
        .iter()
        .copied()
        .filter(|&(_, y)| y >= r.y_min + rho && y <= r.y_max - rho)
        .filter(clear)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let few = obstacles.count_negatives(&count) < scales.n as usize;
    Ok(SiteClass { open: core.is_some() && few, core })
}

/// Classified boxes for columns `first_column..first_column+width`, rows `1..=height`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedGrid {
    pub first_column: i64,
    pub grid: SiteGrid,
    /// `cores[z * height + j - 1]`.
    pub cores: Vec<Option<(f64, f64)>>,
}

impl ClassifiedGrid {
    pub fn core(&self, z: usize, j: usize) -> Option<(f64, f64)> {
        self.cores[z * self.grid.height + j - 1]
    }
}

pub fn classify_grid(
    first_column: i64,
    width: usize,
    height: usize,
    obstacles: &ObstacleSet,
    scales: &ScaleParams,
    exec: Exec,
) -> Result<ClassifiedGrid, ContinuumError> {
    let classes = exec::map_indexed(width * height, exec, |idx| {
        classify_site(first_column + (idx / height) as i64, idx % height + 1, obstacles, scales)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let columns = classes.chunks(height).map(|c| c.iter().map(|s| s.open).collect()).collect();
    let mut grid = SiteGrid::from_columns(columns, 6, Horizontal::Free)
        .map_err(|e| ContinuumError::InvalidParams(e.to_string()))?;
    grid.p = scales.open_probability_bound();
    Ok(ClassifiedGrid { first_column, grid, cores: classes.iter().map(|c| c.core).collect() })
}

/// Frequency of open boxes over `samples` independent obstacle draws around
/// `Q(0, 1)`, with its standard error.
pub fn open_site_frequency(scales: &ScaleParams, samples: usize, seed: u64, exec: Exec) -> Result<(f64, f64), ContinuumError> {
    let window = required_window(0, 1, 1, scales);
    let opens = exec::map_indexed(samples, exec, |s| {
        let key = rng::hash_key(seed, 0x20, s as i64, 0);
        let obstacles = ObstacleSet::generate(window, scales, key)?;
        Ok::<_, ContinuumError>(classify_site(0, 1, &obstacles, scales)?.open)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let n = samples as f64;
    let p = opens.iter().filter(|&&o| o).count() as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

// ---------------------------------------------------------------------------
// Piecewise quadratics

/// `v(x) = a (x - x0)^2 + b (x - x0) + c` on `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub x0: f64,
    pub x1: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        let s = x - self.x0;
        (self.a * s + self.b) * s + self.c
    }

    pub fn slope(&self, x: f64) -> f64 {
        2.0 * self.a * (x - self.x0) + self.b
    }

    pub fn right_value(&self) -> f64 {
        self.eval(self.x1)
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slope(self.x0).abs().max(self.slope(self.x1).abs())
    }

    pub fn min_value(&self) -> f64 {
        let mut m = self.eval(self.x0).min(self.right_value());
        if self.a > 0.0 {
            let vx = self.x0 - self.b / (2.0 * self.a);
            if vx > self.x0 && vx < self.x1 {
                m = m.min(self.eval(vx));
            }
        }
        m
    }

    pub fn max_value(&self) -> f64 {
        -Quadratic { a: -self.a, b: -self.b, c: -self.c, ..*self }.min_value()
    }
}

/// Continuous piecewise quadratic on `[breakpoints[0], breakpoints[M]]`.
///
/// `segments[s] = [A, B, C]` means `v(x) = A t^2 + B t + C` with
/// `t = x - breakpoints[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadratic {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<[f64; 3]>,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    pub rho: f64,
}

impl PiecewiseQuadratic {
    /// Joins contiguous pieces; panics if they do not share breakpoints.
    pub fn from_pieces(pieces: &[Quadratic], f_star: f64, rho: f64) -> Self {
        assert!(!pieces.is_empty(), "at least one piece");
        let mut breakpoints = vec![pieces[0].x0];
        for (p, q) in pieces.iter().zip(pieces.iter().skip(1)) {
            assert!(p.x1 == q.x0, "pieces must share breakpoints");
        }
        breakpoints.extend(pieces.iter().map(|p| p.x1));
        let segments = pieces.iter().map(|p| [p.a, p.b, p.c]).collect();
        Self { breakpoints, segments, f_star, rho }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn piece(&self, s: usize) -> Quadratic {
        let [a, b, c] = self.segments[s];
        Quadratic { x0: self.breakpoints[s], x1: self.breakpoints[s + 1], a, b, c }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// Index of the piece containing `x` (the left one at breakpoints).
    pub fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let s = self.breakpoints.partition_point(|&b| b < x);
        Some(s.saturating_sub(1).min(self.len() - 1))
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        self.locate(x).map(|s| self.piece(s).eval(x))
    }

    pub fn min_value(&self) -> f64 {
        (0..self.len()).map(|s| self.piece(s).min_value()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_slope(&self) -> f64 {
        (0..self.len()).map(|s| self.piece(s).max_abs_slope()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Obstacle force

/// Obstacle profile `phi`, supported in the ball of radius `alpha`.
pub trait Shape: Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    fn alpha(&self) -> f64;
}

/// Radial bump: `plateau` for `r <= sqrt 2`, smooth step down to 0 at `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpShape {
    pub alpha: f64,
    pub plateau: f64,
}

impl BumpShape {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, plateau: 1.05 }
    }
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

impl Shape for BumpShape {
    fn value(&self, x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        let inner = std::f64::consts::SQRT_2;
        if r <= inner {
            self.plateau
        } else if r >= self.alpha {
            0.0
        } else {
            self.plateau * smooth_step((self.alpha - r) / (self.alpha - inner))
        }
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn default_shape(x: f64, y: f64, alpha: f64) -> f64 {
    BumpShape::new(alpha).value(x, y)
}

/// Lower bound on the medium's response at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Force {
    Value(f64),
    /// Within `alpha rho` of a negative center.
    NegProximity,
}

pub fn eval_force(x: f64, y: f64, obstacles: &ObstacleSet, scales: &ScaleParams, shape: &dyn Shape) -> Force {
    let rho = scales.rho;
    let reach = scales.reach();
    let near_negative = obstacles
        .negatives_in_x(x - reach, x + reach)
        .iter()
        .any(|&(nx, ny)| (x - nx).hypot(y - ny) <= reach);
    if near_negative {
        return Force::NegProximity;
    }
    let support = shape.alpha() * rho;
    let sum = obstacles
        .positives_in_x(x - support, x + support)
        .iter()
        .filter(|&&(_, py)| (y - py).abs() <= support)
        .map(|&(px, py)| shape.value((x - px) / rho, (y - py) / rho))
        .sum::<f64>();
    Force::Value(scales.s * sum)
}

// ---------------------------------------------------------------------------
// Construction

/// Parabola with `v'' = k / rho` through the upper corners of the core at `center`.
pub fn core_parabola(center: (f64, f64), scales: &ScaleParams) -> Quadratic {
    let (xc, yc) = center;
    let rho = scales.rho;
    Quadratic { x0: xc - rho, x1: xc + rho, a: scales.k / (2.0 * rho), b: -scales.k, c: yc + rho }
}

/// Sorted union of closed intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalUnion {
    pub parts: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a <= b);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut parts: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match parts.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => parts.push((a, b)),
            }
        }
        Self { parts }
    }

    pub fn measure(&self) -> f64 {
        self.parts.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.parts.iter().any(|&(a, b)| a <= x && x <= b)
    }

    /// Open gaps of `[lo, hi]` not covered by the union.
    pub fn gaps_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &self.parts {
            if b < cursor {
                continue;
            }
            if a > hi {
                break;
            }
            if a > cursor {
                out.push((cursor, a.min(hi)));
            }
            cursor = cursor.max(b);
        }
        if cursor < hi {
            out.push((cursor, hi));
        }
        out
    }
}

/// Heights `[y - 2 alpha rho, y + 2 alpha rho]` of negatives whose centers lie
/// within `2 alpha rho` of the vertical line `x = border_x`.
pub fn blocked_intervals(border_x: f64, obstacles: &ObstacleSet, scales: &ScaleParams) -> IntervalUnion {
    let w = 2.0 * scales.reach();
    IntervalUnion::from_intervals(
        obstacles.negatives_in_x(border_x - w, border_x + w).iter().map(|&(_, y)| (y - w, y + w)).collect(),
    )
}

/// A connecting parabola and the force it was built for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub segment: Quadratic,
    pub force: f64,
    /// Admissible `F` window before negatives are removed.
    pub window: (f64, f64),
    /// Measure of that window blocked by negatives.
    pub blocked: f64,
}

/// Why no connector exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoConnector {
    pub window: (f64, f64),
    pub blocked: f64,
}

/// Parabola `v'' = -F` from the right upper corner `a` of one core to the left
/// upper corner `b` of the next.
///
/// `F` ranges over `[F*, min(2F*, 2(km - |n|)/m^2, 4h/(2l+d)^2)]`. A negative
/// center at local abscissa `t` blocks every `F` whose parabola passes within
/// `2 alpha rho` of it vertically at `t`; since slopes stay within `k <= 1`,
/// the remaining parabolas keep a distance above `alpha rho`. The midpoint of
/// the widest remaining gap is used.
pub fn connect_cores(a: (f64, f64), b: (f64, f64), obstacles: &ObstacleSet, scales: &ScaleParams) -> Result<Connector, NoConnector> {
    let m = b.0 - a.0;
    let n = b.1 - a.1;
    let k = scales.k;
    let lo = scales.f_star;
    let hi = (2.0 * scales.f_star)
        .min(2.0 * (k * m - n.abs()) / (m * m))
        .min(4.0 * scales.h / (2.0 * scales.l + scales.d_gap).powi(2));
    if !(m > 0.0) || !(hi > lo) {
        return Err(NoConnector { window: (lo, hi), blocked: 0.0 });
    }
    let margin = 2.0 * scales.reach();
    let blocked = IntervalUnion::from_intervals(
        obstacles
            .negatives_in_x(a.0, b.0)
            .iter()
            .filter_map(|&(x, y)| {
                let t = x - a.0;
                let span = t * (m - t) / 2.0;
                if !(span > 0.0) {
                    return None;
                }
                let base = y - a.1 - n * t / m;
                Some(((base - margin) / span, (base + margin) / span))
            })
            .filter(|&(f0, f1)| f1 >= lo && f0 <= hi)
            .collect(),
    );
    let gaps = blocked.gaps_within(lo, hi);
    let widest = gaps.iter().copied().filter(|(g0, g1)| g1 > g0).max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0)));
    let blocked_measure = (hi - lo) - gaps.iter().map(|(g0, g1)| g1 - g0).sum::<f64>();
    let Some((g0, g1)) = widest else {
        return Err(NoConnector { window: (lo, hi), blocked: blocked_measure });
    };
    let force = 0.5 * (g0 + g1);
    let segment = Quadratic { x0: a.0, x1: b.0, a: -force / 2.0, b: force * m / 2.0 + n / m, c: a.1 };
    Ok(Connector { segment, force, window: (lo, hi), blocked: blocked_measure })
}

/// Barrier assembled along a surface, with its building blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub v: PiecewiseQuadratic,
    pub cores: Vec<(f64, f64)>,
    pub forces: Vec<f64>,
}

/// Core parabolas in boxes `Q(first_column + z, phi(z))` joined by connectors.
pub fn assemble(
    surface: &LipschitzSurface,
    first_column: i64,
    obstacles: &ObstacleSet,
    scales: &ScaleParams,
) -> Result<Assembly, ContinuumError> {
    let site = |z: usize| (first_column + z as i64, surface.phi[z]);
    let mut cores = Vec::with_capacity(surface.phi.len());
    for z in 0..surface.phi.len() {
        let (i, j) = site(z);
        if z > 0 && surface.phi[z - 1].abs_diff(j) > 1 {
            return Err(ContinuumError::NotLipschitz(i - 1, i));
        }
        let class = classify_site(i, j, obstacles, scales)?;
        match (class.open, class.core) {
            (true, Some(c)) => cores.push(c),
            _ => return Err(ContinuumError::ClosedSite { i, j }),
        }
    }
    let rho = scales.rho;
    let mut pieces = vec![core_parabola(cores[0], scales)];
    let mut forces = Vec::new();
    for z in 1..cores.len() {
        let (p, q) = (cores[z - 1], cores[z]);
        let a = (p.0 + rho, p.1 + rho);
        let b = (q.0 - rho, q.1 + rho);
        let c = connect_cores(a, b, obstacles, scales).map_err(|e| ContinuumError::Infeasible {
            left: site(z - 1),
            right: site(z),
            lo: e.window.0,
            hi: e.window.1,
            blocked: e.blocked,
        })?;
        pieces.push(c.segment);
        pieces.push(core_parabola(q, scales));
        forces.push(c.force);
    }
    Ok(Assembly { v: PiecewiseQuadratic::from_pieces(&pieces, scales.f_star, rho), cores, forces })
}

// ---------------------------------------------------------------------------
// Verification

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualViolation {
    pub x: f64,
    pub y: f64,
    /// `None` when the point is within `alpha rho` of a negative center.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkViolation {
    pub x: f64,
    pub left_slope: f64,
    pub right_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityViolation {
    pub x: f64,
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    /// Largest sampled `v'' - f(x, v) + F`, ignoring negative proximity.
    pub max_residual: f64,
    pub residual_violations: Vec<ResidualViolation>,
    pub kink_violations: Vec<KinkViolation>,
    pub continuity_violations: Vec<ContinuityViolation>,
    pub min_v: f64,
    /// Lower bound on the distance from the graph to the nearest negative center.
    pub min_neg_clearance: f64,
    pub samples: u64,
}

impl ViscosityReport {
    pub fn is_clean(&self) -> bool {
        self.residual_violations.is_empty() && self.kink_violations.is_empty() && self.continuity_violations.is_empty()
    }
}

/// Checks the supersolution inequality on every piece, the kink condition at
/// every breakpoint, continuity, positivity and clearance.
///
/// Off the obstacle supports the force vanishes and the residual is constant on
/// a piece, so pieces are sampled at `grid_step` (capped at `rho / 20`) near
/// every obstacle whose support can meet the graph, plus at their endpoints
/// and midpoints; short pieces are sampled throughout.
pub fn verify_viscosity(
    v: &PiecewiseQuadratic,
    obstacles: &ObstacleSet,
    scales: &ScaleParams,
    shape: &dyn Shape,
    grid_step: f64,
    exec: Exec,
) -> ViscosityReport {
    let step = grid_step.min(scales.rho / 20.0);
    let tol = 1e-9 * scales.s;
    let reach = scales.reach().max(shape.alpha() * scales.rho);

    let per_piece = exec::map_indexed(v.len(), exec, |s| {
        let q = v.piece(s);
        let lip = q.max_abs_slope();
        let mut xs = vec![q.x0, 0.5 * (q.x0 + q.x1), q.x1];
        let mut dense = |x0: f64, x1: f64| {
            let (x0, x1) = (x0.max(q.x0), x1.min(q.x1));
            if x1 >= x0 {
                let count = ((x1 - x0) / step).ceil() as usize;
                xs.extend((0..=count).map(|t| (x0 + t as f64 * step).min(x1)));
            }
        };
        if (q.x1 - q.x0) / step <= 4096.0 {
            dense(q.x0, q.x1);
        } else {
            let window = reach * (1.0 + lip) + step;
            for &(cx, cy) in obstacles
                .positives_in_x(q.x0 - reach, q.x1 + reach)
                .iter()
                .chain(obstacles.negatives_in_x(q.x0 - reach, q.x1 + reach))
            {
                if (cy - q.eval(cx.clamp(q.x0, q.x1))).abs() <= window {
                    dense(cx - reach - step, cx + reach + step);
                }
            }
        }
        let curvature = 2.0 * q.a;
        let mut max_residual = f64::NEG_INFINITY;
        let mut bad = Vec::new();
        for &x in &xs {
            let y = q.eval(x);
            match eval_force(x, y, obstacles, scales, shape) {
                Force::NegProximity => bad.push(ResidualViolation { x, y, residual: None }),
                Force::Value(f) => {
                    let r = curvature - f + v.f_star;
                    max_residual = max_residual.max(r);
                    if r > tol {
                        bad.push(ResidualViolation { x, y, residual: Some(r) });
                    }
                }
            }
        }
        (max_residual, bad, xs.len() as u64)
    });

    let mut report = ViscosityReport {
        max_residual: f64::NEG_INFINITY,
        residual_violations: Vec::new(),
        kink_violations: Vec::new(),
        continuity_violations: Vec::new(),
        min_v: v.min_value(),
        min_neg_clearance: f64::INFINITY,
        samples: 0,
    };
    for (r, bad, n) in per_piece {
        report.max_residual = report.max_residual.max(r);
        report.residual_violations.extend(bad);
        report.samples += n;
    }
    for s in 1..v.len() {
        let (p, q) = (v.piece(s - 1), v.piece(s));
        let x = q.x0;
        let (left, right) = (p.right_value(), q.c);
        let jump = (left - right).abs();
        if jump > 1e-12 * left.abs().max(right.abs()).max(1.0) {
            report.continuity_violations.push(ContinuityViolation { x, jump });
        }
        let (ls, rs) = (p.slope(p.x1), q.slope(q.x0));
        if ls < rs - 1e-12 {
            report.kink_violations.push(KinkViolation { x, left_slope: ls, right_slope: rs });
        }
    }
    report.min_neg_clearance = exec::map_slice(&obstacles.negatives, exec, |&c| negative_clearance(v, c, step))
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    report
}

/// Lower bound on the distance from `center` to the graph of `v`; exact up to
/// sampling at `step` when the center is close.
fn negative_clearance(v: &PiecewiseQuadratic, (cx, cy): (f64, f64), step: f64) -> f64 {
    let (lo, hi) = v.domain();
    let xs = cx.clamp(lo, hi);
    let dx = (cx - xs).abs();
    let s = v.locate(xs).expect("clamped into domain");
    let off = (cy - v.piece(s).eval(xs)).abs();
    let lip = v.max_abs_slope();
    let bound = dx.max(off / (1.0 + lip * lip).sqrt());
    if bound > 32.0 * v.rho {
        return bound;
    }
    let radius = dx.hypot(off);
    let (a, b) = ((xs - radius).max(lo), (xs + radius).min(hi));
    let count = ((b - a) / step).ceil().max(1.0) as usize;
    (0..=count)
        .map(|t| {
            let x = (a + t as f64 * step).min(b);
            let y = v.eval(x).unwrap_or(f64::NAN);
            (x - cx).hypot(y - cy)
        })
        .fold(radius, f64::min)
}

// ---------------------------------------------------------------------------
// Pipeline

/// One end-to-end run: obstacles, classification, surface, barrier, check.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub scales: ScaleParams,
    pub obstacles: ObstacleSet,
    pub classified: ClassifiedGrid,
    pub surface: LipschitzSurface,
    pub assembly: Assembly,
    pub report: ViscosityReport,
}

/// Builds and verifies a barrier over `columns` box columns starting at 0,
/// searching rows `1..=height`.
pub fn run_pipeline(scales: &ScaleParams, seed: u64, columns: usize, height: usize, exec: Exec) -> Result<PipelineRun, ContinuumError> {
    let window = required_window(0, columns, height, scales);
    let obstacles = ObstacleSet::generate(window, scales, seed)?;
    let mut classified = classify_grid(0, columns, height, &obstacles, scales, exec)?;
    classified.grid.seed = seed;
    let surface = minimal_open_surface(&classified.grid).ok_or(ContinuumError::NoSurface { height })?;
    let assembly = assemble(&surface, 0, &obstacles, scales)?;
    let shape = BumpShape::new(scales.alpha);
    let report = verify_viscosity(&assembly.v, &obstacles, scales, &shape, scales.rho / 20.0, exec);
    Ok(PipelineRun { scales: *scales, obstacles, classified, surface, assembly, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scales() -> ScaleParams {
        // l = 2 so boxes match the hand examples; rho respects the 288 cap.
        ScaleParams::manual(1.0, 1.6, 1.0, 0.01, 2.0, 0.1, 1, 1e-4).unwrap()
    }

    fn empty(window: Rect, rho: f64) -> ObstacleSet {
        ObstacleSet::new(vec![], vec![], rho, window)
    }

    #[test]
    fn fstar_branches_coincide() {
        let s = ScaleParams::manual(1.0, 1.6, 1.0, 0.01, 9.0, 0.1, 3, 1e-5).unwrap();
        assert_eq!(s.f_star, 1.0 / 162.0);
        let (a, b) = s.fstar_branches();
        assert!((a - b).abs() <= 1e-12 * a);
        assert!((0.5 * a.min(b) - s.f_star).abs() <= 1e-12 * s.f_star);
    }

    #[test]
    fn selected_scales_are_coherent() {
        let s = select_scales(1.0, 1.6, 1.0, 0.01).unwrap();
        s.validate().unwrap();
        assert!((s.l - 14.74).abs() < 0.01, "l = {}", s.l);
        assert!((s.b - 2.82e-3).abs() < 1e-5, "b = {}", s.b);
        assert!((25..=35).contains(&s.n), "N = {}", s.n);
        assert!(s.rho > 1e-7 && s.rho < 1e-6, "rho = {}", s.rho);
        assert!(s.open_probability_bound() >= s.p0);
        assert!((s.p0 - 0.999_996_185_3).abs() < 1e-10);
    }

    #[test]
    fn scale_errors() {
        assert!(select_scales(0.0, 1.6, 1.0, 0.01).is_err());
        assert!(select_scales(1.0, 1.4, 1.0, 0.01).is_err());
        assert!(select_scales(1.0, 1.6, 0.0, 0.01).is_err());
        assert!(ScaleParams::manual(1.0, 1.6, 1.0, 0.01, 2.0, 0.1, 1, 1.0).is_err());
    }

    #[test]
    fn box_examples() {
        let s = small_scales();
        assert_eq!(s.h, 0.5);
        let s = ScaleParams { h: 1.0, ..s };
        let r = box_rect(0, 1, &s);
        assert_eq!((r.x_min, r.x_max, r.y_min, r.y_max), (-1.0, 1.0, 1.0, 2.0));
        let r1 = box_rect(1, 1, &s);
        assert_eq!((r1.x_min, r1.x_max), (3.0, 5.0));
        assert_eq!(r1.x_min - r.x_max, s.d_gap);
    }

    #[test]
    fn classification_examples() {
        let s = small_scales();
        let w = required_window(0, 1, 1, &s);
        assert!(!classify_site(0, 1, &empty(w, s.rho), &s).unwrap().open);
        let mid = (0.0, 1.5 * s.h);
        let one = ObstacleSet::new(vec![mid], vec![], s.rho, w);
        let c = classify_site(0, 1, &one, &s).unwrap();
        assert!(c.open);
        assert_eq!(c.core, Some(mid));
        let blocked = ObstacleSet::new(vec![mid], vec![(mid.0 + s.b / 2.0, mid.1)], s.rho, w);
        assert!(!classify_site(0, 1, &blocked, &s).unwrap().open);
        let tiny = empty(Rect::new(0.0, 1.0, 0.0, 1.0), s.rho);
        assert!(matches!(classify_site(0, 1, &tiny, &s), Err(ContinuumError::WindowTooSmall { .. })));
    }

    #[test]
    fn core_choice_is_lowest_then_leftmost() {
        let s = small_scales();
        let w = required_window(0, 1, 1, &s);
        let y = 1.3 * s.h;
        let set = ObstacleSet::new(vec![(0.5, 1.7 * s.h), (0.2, y), (-0.3, y)], vec![], s.rho, w);
        assert_eq!(classify_site(0, 1, &set, &s).unwrap().core, Some((-0.3, y)));
    }

    #[test]
    fn count_condition_closes_site() {
        let s = ScaleParams::manual(1.0, 1.6, 1.0, 0.01, 2.0, 0.1, 2, 1e-4).unwrap();
        let w = required_window(0, 1, 1, &s);
        let mid = (0.0, 1.5 * s.h);
        let negs = vec![(1.5, 0.0), (-1.5, 2.0)];
        let set = ObstacleSet::new(vec![mid], negs, s.rho, w);
        let c = classify_site(0, 1, &set, &s).unwrap();
        assert!(!c.open);
        assert_eq!(c.core, Some(mid));
    }

    #[test]
    fn core_parabola_example() {
        let s = ScaleParams { rho: 0.1, ..small_scales() };
        let q = core_parabola((0.0, 0.0), &s);
        assert!((q.eval(-0.1) - 0.1).abs() < 1e-15 && (q.eval(0.1) - 0.1).abs() < 1e-15);
        assert!((q.eval(0.0) - 0.05).abs() < 1e-15);
        assert!((q.slope(-0.1) + 1.0).abs() < 1e-12 && (q.slope(0.1) - 1.0).abs() < 1e-12);
        assert_eq!(2.0 * q.a, s.k / s.rho);
        for t in [0.01, 0.03, 0.07] {
            assert!((q.eval(t) - q.eval(-t)).abs() < 1e-15);
        }
    }

    #[test]
    fn interval_union_examples() {
        let s = ScaleParams { rho: 0.1 / 1.6, ..small_scales() };
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        assert!(blocked_intervals(0.0, &empty(w, s.rho), &s).parts.is_empty());
        let one = ObstacleSet::new(vec![], vec![(0.0, 5.0)], s.rho, w);
        let u = blocked_intervals(0.0, &one, &s);
        assert_eq!(u.parts.len(), 1);
        assert!((u.parts[0].0 - 4.8).abs() < 1e-12 && (u.parts[0].1 - 5.2).abs() < 1e-12);
        let two = ObstacleSet::new(vec![], vec![(0.0, 5.0), (0.0, 5.1)], s.rho, w);
        let u = blocked_intervals(0.0, &two, &s);
        assert_eq!(u.parts.len(), 1);
        assert!(u.measure() < 0.8 && u.measure() <= 4.0 * 2.0 * s.reach() + 1e-12);
        let gaps = u.gaps_within(0.0, 10.0);
        assert_eq!(gaps.len(), 2);
        assert!((gaps[0].1 - 4.8).abs() < 1e-12 && (gaps[1].0 - 5.3).abs() < 1e-12);
    }

    #[test]
    fn unobstructed_connector_uses_midpoint() {
        let s = small_scales();
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        let c = connect_cores((0.0, 0.0), (s.d_gap, 0.0), &empty(w, s.rho), &s).unwrap();
        assert!((c.force - 1.5 * s.f_star).abs() < 1e-15);
        let q = c.segment;
        assert!((q.eval(0.3) - q.eval(s.d_gap - 0.3)).abs() < 1e-14);
        assert!(q.slope(0.0) <= s.k && -q.slope(s.d_gap) <= s.k);
    }

    #[test]
    fn connector_identities_and_span() {
        let s = small_scales();
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        let (m, n) = (2.7, 0.3);
        let q = connect_cores((0.0, 0.0), (m, n), &empty(w, s.rho), &s).unwrap().segment;
        let f = -2.0 * q.a;
        assert_eq!(q.eval(0.0), 0.0);
        assert!((q.eval(m) - n).abs() < 1e-14);
        assert!((q.slope(0.0) - (f * m / 2.0 + n / m)).abs() < 1e-15);
        assert!((-q.slope(m) - (f * m / 2.0 - n / m)).abs() < 1e-14);
        let par = |f: f64, x: f64| (f / 2.0 * m + n / m) * x - f / 2.0 * x * x;
        let (f1, f2, b) = (0.02, 0.01, 0.4);
        for x in [b, m - b] {
            assert!((par(f1, x) - par(f2, x) - (f1 - f2) / 2.0 * b * (m - b)).abs() < 1e-14);
        }
        // k = 1, m = 2, n = 0: admissible F <= 2(km - |n|)/m^2 = 1
        assert_eq!(2.0 * (1.0 * 2.0 - 0.0) / 4.0, 1.0);
    }

    #[test]
    fn connector_avoids_a_negative() {
        let s = small_scales();
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        let m = s.d_gap;
        // negative sitting on the unobstructed midpoint parabola
        let f_mid = 1.5 * s.f_star;
        let t = m / 2.0;
        let y = f_mid * t * (m - t) / 2.0;
        let set = ObstacleSet::new(vec![], vec![(t, y)], s.rho, w);
        let c = connect_cores((0.0, 0.0), (m, 0.0), &set, &s).unwrap();
        assert!(c.blocked > 0.0);
        assert!((c.segment.eval(t) - y).abs() > 2.0 * s.reach());
        let full = ObstacleSet::new(vec![], (0..80).map(|i| (t, y - 0.02 + i as f64 * 5e-4)).collect(), s.rho, w);
        assert!(connect_cores((0.0, 0.0), (m, 0.0), &full, &s).is_err());
    }

    #[test]
    fn shape_examples() {
        assert_eq!(default_shape(0.0, 0.0, 1.6), 1.05);
        assert_eq!(default_shape(1.0, 1.0, 1.6), 1.05);
        assert_eq!(default_shape(1.6, 0.0, 1.6), 0.0);
        assert_eq!(default_shape(2.0, 0.0, 1.6), 0.0);
        let mid = default_shape(1.5, 0.0, 1.6);
        assert!(mid > 0.0 && mid < 1.05);
        let rs: Vec<f64> = (0..50).map(|i| 1.42 + i as f64 * 0.0036).collect();
        assert!(rs.windows(2).all(|w| default_shape(w[0], 0.0, 1.6) >= default_shape(w[1], 0.0, 1.6)));
    }

    #[test]
    fn force_examples() {
        let s = small_scales();
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        let shape = BumpShape::new(s.alpha);
        let set = ObstacleSet::new(vec![(0.0, 1.0)], vec![(3.0, 1.0)], s.rho, w);
        assert!(matches!(eval_force(0.0, 1.0, &set, &s, &shape), Force::Value(f) if f >= s.s));
        assert_eq!(eval_force(1.0, 1.0, &set, &s, &shape), Force::Value(0.0));
        assert_eq!(eval_force(3.0, 1.0 + 0.5 * s.reach(), &set, &s, &shape), Force::NegProximity);
    }

    #[test]
    fn hand_built_checks() {
        let s = small_scales();
        let shape = BumpShape::new(s.alpha);
        let w = Rect::new(-10.0, 10.0, -10.0, 10.0);
        let set = empty(w, s.rho);
        let down = PiecewiseQuadratic {
            breakpoints: vec![-1.0, 1.0],
            segments: vec![[-1.0, 2.0, -1.0]],
            f_star: 0.0,
            rho: s.rho,
        };
        assert_eq!(down.eval(0.0), Some(0.0));
        let r = verify_viscosity(&down, &set, &s, &shape, s.rho / 20.0, Exec::Sequential);
        assert!(r.residual_violations.is_empty());
        assert_eq!(r.max_residual, -2.0);
        assert!(r.min_v < 0.0);
        let kink = PiecewiseQuadratic {
            breakpoints: vec![0.0, 1.0, 2.0],
            segments: vec![[0.0, -1.0, 1.0], [0.0, 1.0, 0.0]],
            f_star: 0.0,
            rho: s.rho,
        };
        let r = verify_viscosity(&kink, &set, &s, &shape, s.rho / 20.0, Exec::Sequential);
        assert_eq!(r.kink_violations.len(), 1);
        assert!(r.continuity_violations.is_empty());
    }

    #[test]
    fn two_cores_assemble_cleanly() {
        let s = small_scales();
        let w = required_window(0, 2, 1, &s);
        let y = 1.5 * s.h;
        let set = ObstacleSet::new(vec![(0.0, y), (s.l + s.d_gap, y)], vec![], s.rho, w);
        let surface = LipschitzSurface { phi: vec![1, 1] };
        let a = assemble(&surface, 0, &set, &s).unwrap();
        assert_eq!(a.v.len(), 3);
        let r = verify_viscosity(&a.v, &set, &s, &BumpShape::new(s.alpha), s.rho / 20.0, Exec::Sequential);
        assert!(r.is_clean(), "{r:?}");
        assert!(r.min_v > 0.0);
    }

    #[test]
    fn rising_surface_stays_in_three_boxes() {
        let s = small_scales();
        let w = required_window(0, 2, 2, &s);
        let set = ObstacleSet::new(vec![(0.0, 1.5 * s.h), (s.l + s.d_gap, 2.5 * s.h)], vec![], s.rho, w);
        let a = assemble(&LipschitzSurface { phi: vec![1, 2] }, 0, &set, &s).unwrap();
        let conn = a.v.piece(1);
        assert!((conn.right_value() - conn.c - s.h).abs() < 1e-12);
        assert!(conn.max_value() <= conn.c.max(conn.right_value()) + 2.0 * s.h);
        assert!(conn.max_value() <= 4.0 * s.h);
    }

    #[test]
    fn json_layout() {
        let v = PiecewiseQuadratic { breakpoints: vec![0.0, 1.0], segments: vec![[1.0, 2.0, 3.0]], f_star: 0.5, rho: 0.1 };
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(j["segments"][0][2], 3.0);
        assert_eq!(j["F_star"], 0.5);
        let s = serde_json::to_value(small_scales()).unwrap();
        assert!(s.get("N").is_some() && s.get("S").is_some());
    }

    #[test]
    fn csv_round_trip() {
        let set = ObstacleSet::new(vec![(0.1, 0.2), (1.0 / 3.0, 2.5)], vec![(-1.25, 7.0)], 1e-7, Rect::new(-2.0, 2.0, 0.0, 8.0));
        let back = ObstacleSet::from_csv(&set.to_csv()).unwrap();
        assert_eq!(back, set);
        assert!(ObstacleSet::from_csv("x,y,sign\n1,2,*\n").is_err());
    }

    #[test]
    fn small_pipeline_is_clean() {
        let s = select_scales(1.0, 1.6, 1.0, 0.01).unwrap();
        let run = run_pipeline(&s, 7, 6, 4, Exec::Parallel).unwrap();
        assert!(run.report.is_clean(), "{:?}", run.report);
        assert!(run.report.min_v > 0.0);
        assert!(run.report.min_neg_clearance > s.reach());
        assert!(run.surface.is_valid_on(&run.classified.grid));
    }
}
