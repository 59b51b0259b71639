//! Single experiments: one row (plus artifacts and plots) per seed.

use std::io;
use std::path::{Path, PathBuf};

use pinning_core::continuum::{run_pipeline, PiecewiseQuadratic, PipelineRun};
use pinning_core::discrete::{construct_supersolution, path_stats, verify_discrete, SearchBudget, SupersolutionPath};
use pinning_core::dynamics::{simulate, Boundary, ComparisonObserver, InterfaceState, RunStatus, SignAudit, SimParams};
use pinning_core::exec::{self, Exec};
use pinning_core::media::{mean_max_limit, mean_max_mc, pinning_condition};
use pinning_core::percolation::{critical_probability, generate_grid_blocked, minimal_open_surface, Horizontal};
use pinning_core::{DistributionSpec, ExtInt, SeededField};
use serde::Serialize;

use crate::config::{BoundaryKind, ConfigErrors, ExperimentConfig, ExperimentKind, FieldError, HorizontalKind};
use crate::output::{self, Manifest, Row};
use crate::svg::{render_svg, Glyph, Layer, Plot, Style};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl HarnessError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config(ConfigErrors(vec![FieldError { field: field.into(), message: message.into() }]))
    }

    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub svg: bool,
    pub exec: Exec,
}

/// A file produced by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub rel: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub row: Row,
    /// Extra per-run detail written to `runs/`.
    pub detail: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub plots: Vec<(String, Plot)>,
}

impl SeedOutcome {
    fn failed(kind: ExperimentKind, seed: u64, error: String) -> Self {
        let mut row = Row::new();
        row.set("kind", kind.name()).set("seed", seed).set("ok", false).set("error", error);
        Self { row, detail: serde_json::Value::Null, artifacts: Vec::new(), plots: Vec::new() }
    }

    pub fn ok(&self) -> bool {
        self.row.bool("ok").unwrap_or(false)
    }
}

fn base_row(kind: ExperimentKind, seed: u64) -> Row {
    let mut row = Row::new();
    row.set("kind", kind.name()).set("seed", seed);
    row
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Run `kind` for one seed. Errors inside the experiment become a failed row.
pub fn run_seed(cfg: &ExperimentConfig, kind: ExperimentKind, seed: u64, exec: Exec) -> SeedOutcome {
    let result = match kind {
        ExperimentKind::DiscreteBuild => discrete_build(cfg, seed, exec),
        ExperimentKind::DiscreteSimulate => discrete_simulate(cfg, seed, exec),
        ExperimentKind::AlphaEstimate => alpha_estimate(cfg, seed, exec),
        ExperimentKind::Percolation => percolation(cfg, seed),
        ExperimentKind::ContinuumBuild => continuum_build(cfg, seed, exec),
        ExperimentKind::Sweep => Err("sweep is not a per-seed experiment".into()),
    };
    result.unwrap_or_else(|e| SeedOutcome::failed(kind, seed, e))
}

fn distribution(cfg: &ExperimentConfig) -> Result<DistributionSpec, String> {
    cfg.distribution.build()
}

fn discrete_build(cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<SeedOutcome, String> {
    let spec = distribution(cfg)?;
    let d = &cfg.discrete;
    let field = SeededField::new(seed, spec.clone());
    let path = construct_supersolution(&field, d.n_start, d.force, d.half_width, SearchBudget::default(), exec)
        .map_err(|e| e.to_string())?;
    let violations = verify_discrete(&path, &field, d.force);
    let stats = path_stats(&path);
    let expected = mean_max_limit(&spec).ok().map(|m| m - d.force as f64);
    let mut row = base_row(ExperimentKind::DiscreteBuild, seed);
    row.set("ok", violations.is_empty())
        .set("n_start", path.n_start)
        .set("v0", path.v(0))
        .set("violations", violations.len())
        .set("min_v", stats.min_v)
        .set("nonnegative", stats.nonnegative)
        .set("forward_slope", stats.forward_slope)
        .set("backward_slope", stats.backward_slope)
        .set("forward_secant", stats.forward_secant)
        .set("backward_secant", stats.backward_secant)
        .set("expected_slope", expected);
    let detail = serde_json::json!({ "stats": json(&stats), "violations": json(&violations) });
    let artifacts = vec![Artifact { rel: format!("artifacts/path-seed{seed}.txt"), bytes: path.to_columnar().into_bytes() }];
    let plots = vec![(format!("path-seed{seed}"), path_plot(&path, &field, seed))];
    Ok(SeedOutcome { row, detail, artifacts, plots })
}

fn path_plot(path: &SupersolutionPath, field: &SeededField, seed: u64) -> Plot {
    let w = path.half_width;
    let line: Vec<(f64, f64)> = (-w..=w).map(|i| (i as f64, path.v(i) as f64)).collect();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in -w..=w {
        let p = (i as f64, path.v(i) as f64);
        match field.value(i, path.v(i)) {
            ExtInt::Finite(f) if f > 0 => pos.push(p),
            ExtInt::Finite(f) if f < 0 => neg.push(p),
            ExtInt::NegInf => neg.push(p),
            _ => {}
        }
    }
    Plot {
        title: format!("barrier, seed {seed}, F = {}", path.force),
        x_label: "i".into(),
        y_label: "v(i)".into(),
        layers: vec![
            Layer::Line { label: "v".into(), points: line },
            Layer::Points { label: "f(i, v(i)) > 0".into(), glyph: Glyph::Positive, points: pos },
            Layer::Points { label: "f(i, v(i)) < 0".into(), glyph: Glyph::Negative, points: neg },
        ],
    }
}

/// Barrier value the window sees at lattice column `i`: `v` inside, provisional outside.
fn barrier_at(path: &SupersolutionPath, i: i64) -> i64 {
    if i.abs() > path.half_width {
        path.v_bar(i)
    } else {
        path.v(i)
    }
}

const AUTO_START_ROUNDS: usize = 10_000;

/// Barrier over the window `[offset - 1, offset + width]` lying at or above `height`.
#[allow(clippy::too_many_arguments)]
fn barrier_above(
    field: &SeededField,
    mut n_start: i64,
    force: i64,
    half_width: i64,
    offset: i64,
    width: usize,
    height: i64,
    exec: Exec,
) -> Result<SupersolutionPath, String> {
    for _ in 0..AUTO_START_ROUNDS {
        let path = construct_supersolution(field, n_start, force, half_width, SearchBudget::default(), exec)
            .map_err(|e| e.to_string())?;
        let lowest = (offset - 1..=offset + width as i64).map(|i| barrier_at(&path, i)).min().expect("non-empty");
        if lowest >= height {
            return Ok(path);
        }
        n_start += height - lowest;
    }
    Err(format!("no barrier above height {height} after {AUTO_START_ROUNDS} start levels"))
}

#[derive(Serialize)]
struct SimDetail<'a> {
    final_u: &'a [i64],
    final_time: f64,
    max_height_series: &'a [(f64, i64)],
    first_violation: Option<(f64, usize)>,
}

fn discrete_simulate(cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<SeedOutcome, String> {
    let spec = distribution(cfg)?;
    let s = &cfg.simulate;
    let force = cfg.discrete.force;
    let rule = s.rule.build()?;
    let field = SeededField::new(seed, spec);
    let half_width = (s.width as i64 / 2).max(1);
    let offset = -half_width;
    let path = if s.auto_start {
        barrier_above(&field, cfg.discrete.n_start, force, half_width, offset, s.width, 0, exec)?
    } else {
        construct_supersolution(&field, cfg.discrete.n_start, force, half_width, SearchBudget::default(), exec)
            .map_err(|e| e.to_string())?
    };
    let boundary = match s.boundary {
        BoundaryKind::Fixed => Boundary::Fixed { left: 0, right: 0 },
        BoundaryKind::Periodic => Boundary::Periodic,
    };
    let state = InterfaceState::flat(s.width, 0, boundary, offset);
    let mut params = SimParams::new(force, s.horizon, seed);
    params.rule = rule.clone();
    params.series_interval = Some(s.series_interval.unwrap_or((s.horizon / 200.0).max(f64::MIN_POSITIVE)));
    if let Some(b) = s.jump_budget {
        params.jump_budget = b;
    }
    let mut cmp = ComparisonObserver::new(&path);
    let mut audit = SignAudit::new(&field, force, rule, Some(&path));
    let traj = simulate(&field, state, &params, &mut [&mut cmp, &mut audit]).map_err(|e| e.to_string())?;
    let report = cmp.report();
    // The comparison only applies when the barrier starts above the interface
    // (and, for fixed ends, above the ghost heights).
    let applicable = (offset - 1..=offset + s.width as i64).all(|i| barrier_at(&path, i) >= 0)
        && boundary != Boundary::Periodic;
    let ok = audit.sign_violations == 0 && (!applicable || report.ok);
    let stabilized = traj.status == RunStatus::Completed && traj.last_record_time <= s.horizon / 2.0;
    let mut row = base_row(ExperimentKind::DiscreteSimulate, seed);
    row.set("ok", ok)
        .set("comparison_applies", applicable)
        .set("comparison_ok", report.ok)
        .set("events", traj.jump_count)
        .set("sign_violations", audit.sign_violations)
        .set("touching_up_jumps", audit.touching_up_jumps)
        .set("max_height", traj.max_height)
        .set("final_max_height", traj.final_u.iter().copied().max())
        .set("last_record_time", traj.last_record_time)
        .set("status", json(&traj.status))
        .set("stabilized", stabilized)
        .set("n_start", path.n_start)
        .set("barrier_min", path_stats(&path).min_v);
    let detail = json(&SimDetail {
        final_u: &traj.final_u,
        final_time: traj.final_time,
        max_height_series: &traj.max_height_series,
        first_violation: report.first_violation,
    });
    let series: Vec<(f64, f64)> = traj.max_height_series.iter().map(|&(t, h)| (t, h as f64)).collect();
    let plot = Plot {
        title: format!("running max height, seed {seed}, F = {force}"),
        x_label: "t".into(),
        y_label: "max_i u_t(i)".into(),
        layers: vec![Layer::Line { label: "max height".into(), points: series }],
    };
    Ok(SeedOutcome { row, detail, artifacts: Vec::new(), plots: vec![(format!("max-height-seed{seed}"), plot)] })
}

fn alpha_estimate(cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<SeedOutcome, String> {
    let spec = distribution(cfg)?;
    let a = &cfg.alpha;
    let force = cfg.discrete.force;
    let mc = mean_max_mc(&spec, a.samples, a.depth, seed, exec);
    let limit = mean_max_limit(&spec).map_err(|e| e.to_string())?;
    let verdict = pinning_condition(&spec, force, a.depth).map_err(|e| e.to_string())?;
    let mut row = base_row(ExperimentKind::AlphaEstimate, seed);
    row.set("ok", mc.estimate.is_finite())
        .set("estimate", mc.estimate)
        .set("std_error", mc.std_error)
        .set("samples", mc.samples)
        .set("exact", limit)
        .set("z_score", (mc.estimate - limit) / mc.std_error)
        .set("force", force)
        .set("pinned", verdict.satisfied)
        .set("margin", verdict.margin);
    Ok(SeedOutcome { row, detail: json(&mc), artifacts: Vec::new(), plots: Vec::new() })
}

fn percolation(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, String> {
    let p = &cfg.percolation;
    let boundary = match p.boundary {
        HorizontalKind::Periodic => Horizontal::Periodic,
        HorizontalKind::Free => Horizontal::Free,
    };
    let grid = generate_grid_blocked(p.width, p.height, p.p, p.d, seed).map_err(|e| e.to_string())?.with_boundary(boundary);
    let surface = minimal_open_surface(&grid);
    let mut row = base_row(ExperimentKind::Percolation, seed);
    row.set("ok", surface.as_ref().is_none_or(|s| s.is_valid_on(&grid)))
        .set("open_fraction", grid.open_fraction())
        .set("p0", critical_probability(1, p.d as u32))
        .set("surface_found", surface.is_some())
        .set("surface_max", surface.as_ref().map(|s| *s.phi.iter().max().expect("non-empty")))
        .set("surface_mean", surface.as_ref().map(|s| s.phi.iter().sum::<usize>() as f64 / s.phi.len() as f64));
    let mut artifacts = vec![Artifact { rel: format!("artifacts/grid-seed{seed}.rle"), bytes: grid.to_rle().into_bytes() }];
    let mut layers = Vec::new();
    let closed: Vec<(f64, f64)> = (0..grid.width)
        .flat_map(|z| (1..=grid.height).map(move |h| (z, h)))
        .filter(|&(z, h)| !grid.is_open(z, h))
        .map(|(z, h)| (z as f64, h as f64))
        .collect();
    if let Some(s) = &surface {
        let mut text = serde_json::to_string(&s.phi).expect("serializes");
        text.push('\n');
        artifacts.push(Artifact { rel: format!("artifacts/surface-seed{seed}.json"), bytes: text.into_bytes() });
        layers.push(Layer::Line {
            label: "minimal surface".into(),
            points: s.phi.iter().enumerate().map(|(z, &h)| (z as f64, h as f64)).collect(),
        });
    }
    layers.push(Layer::Points { label: "closed".into(), glyph: Glyph::Negative, points: closed });
    let plot = Plot { title: format!("grid, seed {seed}, p = {}", p.p), x_label: "z".into(), y_label: "h".into(), layers };
    Ok(SeedOutcome { row, detail: serde_json::Value::Null, artifacts, plots: vec![(format!("surface-seed{seed}"), plot)] })
}

fn continuum_build(cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<SeedOutcome, String> {
    let c = &cfg.continuum;
    let scales = c.scales()?;
    let run = run_pipeline(&scales, seed, c.columns, c.rows, exec).map_err(|e| e.to_string())?;
    let rep = &run.report;
    let mut row = base_row(ExperimentKind::ContinuumBuild, seed);
    row.set("ok", rep.is_clean() && rep.min_v > 0.0)
        .set("l", scales.l)
        .set("h", scales.h)
        .set("b", scales.b)
        .set("N", scales.n)
        .set("rho", scales.rho)
        .set("F_star", scales.f_star)
        .set("open_fraction", run.classified.grid.open_fraction())
        .set("surface_max", *run.surface.phi.iter().max().expect("non-empty"))
        .set("pieces", run.assembly.v.len())
        .set("max_residual", rep.max_residual)
        .set("residual_violations", rep.residual_violations.len())
        .set("kink_violations", rep.kink_violations.len())
        .set("continuity_violations", rep.continuity_violations.len())
        .set("min_v", rep.min_v)
        .set("min_neg_clearance", rep.min_neg_clearance)
        .set("samples", rep.samples)
        .set("clean", rep.is_clean());
    let mut v_text = serde_json::to_string_pretty(&run.assembly.v).expect("serializes");
    v_text.push('\n');
    let mut scales_text = serde_json::to_string_pretty(&scales).expect("serializes");
    scales_text.push('\n');
    let artifacts = vec![
        Artifact { rel: format!("artifacts/obstacles-seed{seed}.csv"), bytes: run.obstacles.to_csv().into_bytes() },
        Artifact { rel: format!("artifacts/v-seed{seed}.json"), bytes: v_text.into_bytes() },
        Artifact { rel: format!("artifacts/scales-seed{seed}.json"), bytes: scales_text.into_bytes() },
    ];
    let detail = serde_json::json!({
        "surface": json(&run.surface),
        "forces": json(&run.assembly.forces),
        "report": json(rep),
    });
    Ok(SeedOutcome { row, detail, artifacts, plots: vec![(format!("graph-seed{seed}"), continuum_plot(&run, seed))] })
}

fn sample_graph(v: &PiecewiseQuadratic, n: usize) -> Vec<(f64, f64)> {
    let (x0, x1) = v.domain();
    let mut xs: Vec<f64> = (0..=n).map(|k| x0 + (x1 - x0) * k as f64 / n as f64).collect();
    xs.extend(v.breakpoints.iter().copied());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter().filter_map(|x| v.eval(x).map(|y| (x, y))).collect()
}

fn continuum_plot(run: &PipelineRun, seed: u64) -> Plot {
    let graph = sample_graph(&run.assembly.v, 2000);
    let band = run.scales.h;
    let near = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
        pts.iter()
            .copied()
            .filter(|&(x, y)| run.assembly.v.eval(x).is_some_and(|vy| (y - vy).abs() <= band))
            .collect()
    };
    Plot {
        title: format!("barrier graph, seed {seed}"),
        x_label: "x".into(),
        y_label: "v(x)".into(),
        layers: vec![
            Layer::Line { label: "v".into(), points: graph },
            Layer::Points { label: "positive obstacles".into(), glyph: Glyph::Positive, points: near(&run.obstacles.positives) },
            Layer::Points { label: "negative obstacles".into(), glyph: Glyph::Negative, points: near(&run.obstacles.negatives) },
        ],
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub rows: Vec<Row>,
    pub failures: usize,
    /// Sweep rows taken from an earlier, interrupted run.
    pub reused: usize,
    /// Every file written, with its checksum.
    pub manifest: Manifest,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    schema: u32,
    kind: ExperimentKind,
    seeds: Vec<u64>,
    failures: usize,
    config: &'a ExperimentConfig,
    rows: &'a [Row],
}

pub const LEADING_COLUMNS: [&str; 4] = ["kind", "seed", "ok", "error"];

/// Validate, run every seed, and write the output tree.
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    if kind == ExperimentKind::Sweep {
        return crate::sweep::run_sweep(cfg, opts);
    }
    cfg.validate(kind)?;
    let seeds = cfg.seeds.seeds();
    let outcomes = exec::map_slice(&seeds, opts.exec, |&s| run_seed(cfg, kind, s, opts.exec));
    let manifest = write_outcomes(cfg, kind, &seeds, &outcomes, opts)?;
    let rows: Vec<Row> = outcomes.iter().map(|o| o.row.clone()).collect();
    let failures = outcomes.iter().filter(|o| !o.ok()).count();
    Ok(RunSummary { kind, rows, failures, reused: 0, manifest })
}

fn write_outcomes(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    seeds: &[u64],
    outcomes: &[SeedOutcome],
    opts: &RunOptions,
) -> Result<Manifest, HarnessError> {
    let out = &opts.out;
    std::fs::create_dir_all(out)?;
    let rows: Vec<Row> = outcomes.iter().map(|o| o.row.clone()).collect();
    let failures = outcomes.iter().filter(|o| !o.ok()).count();
    let cols = output::columns(&rows, &LEADING_COLUMNS);
    output::write_atomic(&out.join("summary.csv"), output::rows_to_csv(&rows, &cols)?.as_bytes())?;
    output::write_json(
        &out.join("summary.json"),
        &SummaryJson { schema: output::SCHEMA_VERSION, kind, seeds: seeds.to_vec(), failures, config: cfg, rows: &rows },
    )?;
    output::write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    for (seed, o) in seeds.iter().zip(outcomes) {
        let run = serde_json::json!({ "row": &o.row, "detail": &o.detail });
        output::write_json(&out.join(format!("runs/{kind}-seed{seed}.json")), &run)?;
        for a in &o.artifacts {
            output::write_atomic(&out.join(&a.rel), &a.bytes)?;
        }
        if opts.svg || cfg.emit_svg {
            write_plots(out, &o.plots)?;
        }
    }
    Ok(output::write_manifest(out)?)
}

fn write_plots(out: &Path, plots: &[(String, Plot)]) -> io::Result<()> {
    for (name, plot) in plots {
        // an empty plot (no data) is skipped rather than failing the run
        if let Ok(svg) = render_svg(plot, &Style::default()) {
            output::write_atomic(&out.join(format!("plots/{name}.svg")), svg.as_bytes())?;
        }
    }
    Ok(())
}
