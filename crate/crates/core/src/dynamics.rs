//! Continuous-time jump dynamics of a lattice interface in a frozen field.
//!
//! Site `i` jumps by `+1` at rate `L` when `L = Lambda(lap u(i) - f(i, u(i)) + F)`
//! is positive, and by `-1` at rate `-L` when it is negative. The engine keeps
//! one exponential clock per active site in a priority queue and redraws the
//! clocks of the jumping site and its two neighbours after every event, which
//! is exact because the clocks are memoryless.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::SupersolutionPath;
use crate::media::{ExtInt, SeededField};
use crate::rng::{self, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("rate table rejected: {0}")]
    BadRateTable(String),
    #[error("obstacle -inf at site {site}, height {height}: dynamics needs a finite field")]
    Unsupported { site: i64, height: i64 },
    #[error("invalid simulation parameters: {0}")]
    BadParams(String),
}

/// The monotone rate function `Lambda`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum RateRule {
    /// `sign(x) (1 - 2^-|x|)`; exact, and strictly increasing in `f64` for `|x| <= 53`.
    #[default]
    DefaultBounded,
    /// Tabulated values on a contiguous range; arguments beyond it clamp to the end points.
    Table(BTreeMap<i64, f64>),
}

impl RateRule {
    pub fn table(entries: impl IntoIterator<Item = (i64, f64)>) -> Result<Self, DynamicsError> {
        let table: BTreeMap<i64, f64> = entries.into_iter().collect();
        if table.get(&0) != Some(&0.0) {
            return Err(DynamicsError::BadRateTable("Lambda(0) must be 0".into()));
        }
        if !table.values().all(|v| v.is_finite()) {
            return Err(DynamicsError::BadRateTable("values must be finite".into()));
        }
        if table.values().zip(table.values().skip(1)).any(|(a, b)| a >= b) {
            return Err(DynamicsError::BadRateTable("values must be strictly increasing".into()));
        }
        let (lo, hi) = (*table.keys().next().unwrap(), *table.keys().next_back().unwrap());
        if lo >= 0 || hi <= 0 {
            return Err(DynamicsError::BadRateTable("table must contain a negative and a positive argument".into()));
        }
        if (hi - lo + 1) as usize != table.len() {
            return Err(DynamicsError::BadRateTable("arguments must form a contiguous range".into()));
        }
        Ok(RateRule::Table(table))
    }

    /// `Lambda(x)`.
    pub fn eval(&self, x: i64) -> f64 {
        match self {
            RateRule::DefaultBounded => {
                let mag = 1.0 - 0.5f64.powi(x.unsigned_abs().min(2048) as i32);
                mag * x.signum() as f64
            }
            RateRule::Table(t) => match t.get(&x) {
                Some(v) => *v,
                None if x > 0 => *t.values().next_back().expect("non-empty"),
                None => *t.values().next().expect("non-empty"),
            },
        }
    }
}

/// `Lambda(x)` for `rule`.
pub fn lambda_eval(rule: &RateRule, x: i64) -> f64 {
    rule.eval(x)
}

/// Horizontal boundary of the simulation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Frozen ghost heights just outside the window.
    Fixed { left: i64, right: i64 },
}

/// Heights on the window `[0, width)`; site `s` sits in lattice column `column_offset + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceState {
    pub u: Vec<i64>,
    pub time: f64,
    pub boundary: Boundary,
    pub column_offset: i64,
}

impl InterfaceState {
    pub fn flat(width: usize, height: i64, boundary: Boundary, column_offset: i64) -> Self {
        Self { u: vec![height; width], time: 0.0, boundary, column_offset }
    }

    pub fn width(&self) -> usize {
        self.u.len()
    }

    #[inline]
    fn left(&self, s: usize) -> i64 {
        match (s, self.boundary) {
            (0, Boundary::Periodic) => self.u[self.u.len() - 1],
            (0, Boundary::Fixed { left, .. }) => left,
            _ => self.u[s - 1],
        }
    }

    #[inline]
    fn right(&self, s: usize) -> i64 {
        let last = self.u.len() - 1;
        match (s == last, self.boundary) {
            (true, Boundary::Periodic) => self.u[0],
            (true, Boundary::Fixed { right, .. }) => right,
            _ => self.u[s + 1],
        }
    }

    /// `u(s+1) + u(s-1) - 2 u(s)`.
    #[inline]
    pub fn laplacian(&self, s: usize) -> i64 {
        self.left(s) + self.right(s) - 2 * self.u[s]
    }

    pub fn column(&self, s: usize) -> i64 {
        self.column_offset + s as i64
    }

    pub fn max_height(&self) -> i64 {
        *self.u.iter().max().expect("non-empty window")
    }
}

/// Signed jump rate at site `s`.
pub fn rate_at(state: &InterfaceState, field: &SeededField, s: usize, force: i64, rule: &RateRule) -> Result<f64, DynamicsError> {
    let column = state.column(s);
    match field.value(column, state.u[s]) {
        ExtInt::Finite(f) => Ok(rule.eval(state.laplacian(s) - f + force)),
        ExtInt::NegInf => Err(DynamicsError::Unsupported { site: column, height: state.u[s] }),
    }
}

/// One jump: `site` moved from `from` to `to` at `time`, driven by signed `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub site: usize,
    pub from: i64,
    pub to: i64,
    pub rate: f64,
}

/// Hooks called by [`simulate`]. `state` is the state after the jump.
pub trait Observer {
    fn start(&mut self, _state: &InterfaceState) {}
    fn on_jump(&mut self, event: &JumpEvent, state: &InterfaceState);
    fn finish(&mut self, _state: &InterfaceState) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub force: i64,
    pub rule: RateRule,
    pub horizon: f64,
    pub seed: u64,
    pub jump_budget: u64,
    /// Spacing of the `(t, max_i u_t(i))` samples; `None` disables the series.
    pub series_interval: Option<f64>,
}

impl SimParams {
    pub fn new(force: i64, horizon: f64, seed: u64) -> Self {
        Self { force, rule: RateRule::DefaultBounded, horizon, seed, jump_budget: 50_000_000, series_interval: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The jump budget ran out before the horizon (a runaway interface).
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub final_u: Vec<i64>,
    pub final_time: f64,
    pub jump_count: u64,
    /// `sup_t max_i u_t(i)` over the run.
    pub max_height: i64,
    /// Last time at which the running supremum increased (0 if never).
    pub last_record_time: f64,
    pub max_height_series: Vec<(f64, i64)>,
    pub status: RunStatus,
}

#[derive(Clone, Copy, PartialEq)]
struct Clock {
    time: f64,
    site: usize,
    stamp: u64,
}

impl Eq for Clock {}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, ties by site for determinism
        other.time.total_cmp(&self.time).then_with(|| other.site.cmp(&self.site))
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Engine<'a> {
    field: &'a SeededField,
    force: i64,
    rule: &'a RateRule,
    rates: Vec<f64>,
    stamps: Vec<u64>,
    queue: BinaryHeap<Clock>,
    rng: ChaCha8Rng,
}

impl Engine<'_> {
    fn refresh(&mut self, state: &InterfaceState, s: usize) -> Result<(), DynamicsError> {
        let rate = rate_at(state, self.field, s, self.force, self.rule)?;
        self.rates[s] = rate;
        self.stamps[s] += 1;
        if rate != 0.0 {
            let wait: f64 = self.rng.sample::<f64, _>(Exp1) / rate.abs();
            self.queue.push(Clock { time: state.time + wait, site: s, stamp: self.stamps[s] });
        }
        Ok(())
    }
}

fn neighbours(width: usize, boundary: Boundary, s: usize) -> impl Iterator<Item = usize> {
    let periodic = boundary == Boundary::Periodic;
    let left = if s > 0 { Some(s - 1) } else if periodic { Some(width - 1) } else { None };
    let right = if s + 1 < width { Some(s + 1) } else if periodic { Some(0) } else { None };
    [left, right].into_iter().flatten().filter(move |&n| n != s)
}

/// Run the dynamics from `state` up to `params.horizon`.
pub fn simulate(
    field: &SeededField,
    mut state: InterfaceState,
    params: &SimParams,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, DynamicsError> {
    if state.u.is_empty() {
        return Err(DynamicsError::BadParams("empty window".into()));
    }
    if !(params.horizon >= 0.0 && params.horizon.is_finite()) {
        return Err(DynamicsError::BadParams(format!("horizon {}", params.horizon)));
    }
    if field.spec.has_minus_infinity() {
        return Err(DynamicsError::BadParams("field law has mass at -inf".into()));
    }
    if let Some(dt) = params.series_interval {
        if !(dt > 0.0) {
            return Err(DynamicsError::BadParams(format!("series interval {dt}")));
        }
    }
    let width = state.width();
    let mut engine = Engine {
        field,
        force: params.force,
        rule: &params.rule,
        rates: vec![0.0; width],
        stamps: vec![0; width],
        queue: BinaryHeap::with_capacity(2 * width),
        rng: rng::keyed_rng(params.seed, streams::DYNAMICS, field.seed as i64, 0),
    };
    for s in 0..width {
        engine.refresh(&state, s)?;
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &h in &state.u {
        *counts.entry(h).or_default() += 1;
    }
    let mut current_max = state.max_height();
    let mut record = current_max;
    let mut last_record_time = 0.0;
    let mut series = Vec::new();
    let mut next_sample = params.series_interval.map(|_| 0.0);
    for o in observers.iter_mut() {
        o.start(&state);
    }

    let mut jumps = 0u64;
    let mut status = RunStatus::Completed;
    while let Some(clock) = engine.queue.pop() {
        if clock.stamp != engine.stamps[clock.site] {
            continue;
        }
        if clock.time > params.horizon {
            break;
        }
        if jumps >= params.jump_budget {
            status = RunStatus::BudgetExhausted;
            break;
        }
        while let (Some(t), Some(dt)) = (next_sample, params.series_interval) {
            if t > clock.time {
                break;
            }
            series.push((t, current_max));
            next_sample = Some(t + dt);
        }
        let s = clock.site;
        let rate = engine.rates[s];
        let from = state.u[s];
        let to = if rate > 0.0 { from + 1 } else { from - 1 };
        state.u[s] = to;
        state.time = clock.time;
        jumps += 1;

        let c = counts.get_mut(&from).expect("height tracked");
        *c -= 1;
        if *c == 0 {
            counts.remove(&from);
        }
        *counts.entry(to).or_default() += 1;
        current_max = *counts.keys().next_back().expect("non-empty");
        if current_max > record {
            record = current_max;
            last_record_time = clock.time;
        }

        engine.refresh(&state, s)?;
        for n in neighbours(width, state.boundary, s) {
            engine.refresh(&state, n)?;
        }
        let event = JumpEvent { time: clock.time, site: s, from, to, rate };
        for o in observers.iter_mut() {
            o.on_jump(&event, &state);
        }
    }
    if status == RunStatus::Completed {
        state.time = params.horizon;
        while let (Some(t), Some(dt)) = (next_sample, params.series_interval) {
            if t > params.horizon {
                break;
            }
            series.push((t, current_max));
            next_sample = Some(t + dt);
        }
    }
    for o in observers.iter_mut() {
        o.finish(&state);
    }
    Ok(Trajectory {
        final_time: state.time,
        final_u: state.u,
        jump_count: jumps,
        max_height: record,
        last_record_time,
        max_height_series: series,
        status,
    })
}

/// First time and site where the interface rose above the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ok: bool,
    pub first_violation: Option<(f64, usize)>,
    pub events_checked: u64,
}

/// Streaming check of `u_t(i) <= v(i)` at every event time.
///
/// Window site `s` is compared with `v(column_offset + s)`; with fixed
/// boundaries the ghost heights are compared with the provisional values just
/// outside the window.
pub struct ComparisonObserver<'a> {
    path: &'a SupersolutionPath,
    report: ComparisonReport,
}

impl<'a> ComparisonObserver<'a> {
    pub fn new(path: &'a SupersolutionPath) -> Self {
        Self { path, report: ComparisonReport { ok: true, first_violation: None, events_checked: 0 } }
    }

    pub fn report(&self) -> ComparisonReport {
        self.report
    }

    fn barrier(&self, state: &InterfaceState, s: usize) -> i64 {
        self.path.v(state.column(s))
    }

    fn flag(&mut self, t: f64, s: usize) {
        if self.report.ok {
            self.report.ok = false;
            self.report.first_violation = Some((t, s));
        }
    }
}

impl Observer for ComparisonObserver<'_> {
    fn start(&mut self, state: &InterfaceState) {
        let w = self.path.half_width;
        let lo = state.column(0);
        let hi = state.column(state.width() - 1);
        assert!(lo >= -w && hi <= w, "path [-{w}, {w}] does not cover window [{lo}, {hi}]");
        for s in 0..state.width() {
            if state.u[s] > self.barrier(state, s) {
                self.flag(0.0, s);
            }
        }
        if let Boundary::Fixed { left, right } = state.boundary {
            let outside = |c: i64| if c.abs() > w { self.path.v_bar(c) } else { self.path.v(c) };
            if left > outside(lo - 1) || right > outside(hi + 1) {
                self.flag(0.0, 0);
            }
        }
    }

    fn on_jump(&mut self, event: &JumpEvent, state: &InterfaceState) {
        self.report.events_checked += 1;
        if event.to > self.barrier(state, event.site) {
            self.flag(event.time, event.site);
        }
    }
}

/// Recorded initial state plus every jump, for offline checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub initial: Vec<i64>,
    pub column_offset: i64,
    pub events: Vec<JumpEvent>,
}

impl Observer for EventLog {
    fn start(&mut self, state: &InterfaceState) {
        self.initial = state.u.clone();
        self.column_offset = state.column_offset;
        self.events.clear();
    }

    fn on_jump(&mut self, event: &JumpEvent, _state: &InterfaceState) {
        self.events.push(*event);
    }
}

/// Replay `log` against the barrier.
pub fn check_comparison(log: &EventLog, path: &SupersolutionPath) -> ComparisonReport {
    let v = |s: usize| path.v(log.column_offset + s as i64);
    let mut report = ComparisonReport { ok: true, first_violation: None, events_checked: 0 };
    if let Some(s) = (0..log.initial.len()).find(|&s| log.initial[s] > v(s)) {
        report.ok = false;
        report.first_violation = Some((0.0, s));
        return report;
    }
    for e in &log.events {
        report.events_checked += 1;
        if e.to > v(e.site) {
            report.ok = false;
            report.first_violation = Some((e.time, e.site));
            break;
        }
    }
    report
}

/// Audits every jump against an independent recomputation of its rate from
/// the pre-jump state: direction must match the sign, and a site touching the
/// barrier must not jump up.
pub struct SignAudit<'a> {
    field: &'a SeededField,
    force: i64,
    rule: RateRule,
    barrier: Option<&'a SupersolutionPath>,
    pub sign_violations: u64,
    pub touching_up_jumps: u64,
    pub jumps: u64,
}

impl<'a> SignAudit<'a> {
    pub fn new(field: &'a SeededField, force: i64, rule: RateRule, barrier: Option<&'a SupersolutionPath>) -> Self {
        Self { field, force, rule, barrier, sign_violations: 0, touching_up_jumps: 0, jumps: 0 }
    }
}

impl Observer for SignAudit<'_> {
    fn on_jump(&mut self, event: &JumpEvent, state: &InterfaceState) {
        self.jumps += 1;
        let mut before = state.clone();
        before.u[event.site] = event.from;
        let rate = rate_at(&before, self.field, event.site, self.force, &self.rule).expect("finite field");
        let up = event.to > event.from;
        if (up && rate <= 0.0) || (!up && rate >= 0.0) || (event.to - event.from).abs() != 1 {
            self.sign_violations += 1;
        }
        if let Some(path) = self.barrier {
            if up && event.from == path.v(before.column(event.site)) {
                self.touching_up_jumps += 1;
            }
        }
    }
}
