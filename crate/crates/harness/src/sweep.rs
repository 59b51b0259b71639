//! Parameter sweeps: the product of the grid axes times the seed list.
//!
//! Every `(point, seed)` task writes its row to `sweep/rows/` atomically, and
//! rows already on disk are reused, so an interrupted sweep resumes where it
//! stopped. A single consolidation pass then writes the tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pinning_core::exec;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, SweepConfig};
use crate::output::{self, Row};
use crate::runner::{run_seed, HarnessError, RunOptions, RunSummary};

/// One grid point: `(axis, value)` in axis order.
pub type Point = Vec<(String, toml::Value)>;

/// Cartesian product of the axes; the last axis varies fastest.
pub fn grid_points(grid: &BTreeMap<String, Vec<toml::Value>>) -> Vec<Point> {
    let mut points: Vec<Point> = vec![Vec::new()];
    for (axis, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn point_config(base: &ExperimentConfig, point: &Point) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = base.clone();
    for (axis, value) in point {
        cfg = cfg.with_axis(axis, value).map_err(|e| HarnessError::Config(crate::config::ConfigErrors(vec![e])))?;
    }
    Ok(cfg)
}

fn value_json(v: &toml::Value) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

pub fn row_path(out: &Path, point: usize, seed: u64) -> std::path::PathBuf {
    out.join(format!("sweep/rows/p{point}-seed{seed}.json"))
}

fn load_row(path: &Path) -> Option<Row> {
    let text = fs::read_to_string(path).ok()?;
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).ok()?;
    Some(Row(map))
}

#[derive(Serialize)]
struct SweepJson<'a> {
    schema: u32,
    base: ExperimentKind,
    points: usize,
    seeds: Vec<u64>,
    failures: usize,
    config: &'a ExperimentConfig,
}

/// Run (or resume) the sweep described by `cfg.sweep`.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    cfg.validate(ExperimentKind::Sweep)?;
    let SweepConfig { base, grid } = cfg.sweep.clone().expect("validated");
    let points = grid_points(&grid);
    let configs = points.iter().map(|p| point_config(cfg, p)).collect::<Result<Vec<_>, _>>()?;
    let seeds = cfg.seeds.seeds();
    let tasks: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| seeds.iter().map(move |&s| (p, s))).collect();
    let out = &opts.out;
    fs::create_dir_all(out.join("sweep/rows"))?;

    let results = exec::map_slice(&tasks, opts.exec, |&(p, seed)| -> std::io::Result<(Row, bool)> {
        let path = row_path(out, p, seed);
        if let Some(row) = load_row(&path) {
            return Ok((row, true));
        }
        let mut row = run_seed(&configs[p], base, seed, opts.exec).row;
        row.set("point", p);
        for (axis, v) in &points[p] {
            row.set(axis, value_json(v));
        }
        output::write_json(&path, &row)?;
        Ok((row, false))
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut reused = 0;
    for r in results {
        let (row, was_reused) = r?;
        reused += usize::from(was_reused);
        rows.push(row);
    }
    let failures = rows.iter().filter(|r| !r.bool("ok").unwrap_or(false)).count();

    let axes: Vec<&str> = grid.keys().map(String::as_str).collect();
    let mut leading = vec!["point"];
    leading.extend(&axes);
    leading.extend(["seed", "ok", "error"]);
    let cols = output::columns(&rows, &leading);
    output::write_atomic(&out.join("sweep.csv"), output::rows_to_csv(&rows, &cols)?.as_bytes())?;
    let summary = point_means(&rows, &points, &axes, &cols);
    let summary_cols = output::columns(&summary, &leading[..=axes.len()]);
    output::write_atomic(&out.join("sweep_summary.csv"), output::rows_to_csv(&summary, &summary_cols)?.as_bytes())?;
    output::write_json(
        &out.join("sweep.json"),
        &SweepJson { schema: output::SCHEMA_VERSION, base, points: points.len(), seeds, failures, config: cfg },
    )?;
    let manifest = output::write_manifest(out)?;
    Ok(RunSummary { kind: ExperimentKind::Sweep, rows, failures, reused, manifest })
}

/// Per-point means of every numeric column, plus the run count and the ok fraction.
fn point_means(rows: &[Row], points: &[Point], axes: &[&str], cols: &[String]) -> Vec<Row> {
    let skip = |c: &str| c == "point" || c == "seed" || axes.contains(&c);
    points
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let mine: Vec<&Row> = rows.iter().filter(|r| r.f64("point") == Some(p as f64)).collect();
            let mut out = Row::new();
            out.set("point", p);
            for (axis, v) in point {
                out.set(axis, value_json(v));
            }
            out.set("runs", mine.len());
            let ok = mine.iter().filter(|r| r.bool("ok").unwrap_or(false)).count();
            out.set("ok_fraction", ok as f64 / mine.len().max(1) as f64);
            for c in cols.iter().filter(|c| !skip(c)) {
                let vals: Vec<f64> = mine
                    .iter()
                    .filter_map(|r| match r.get(c) {
                        Some(serde_json::Value::Bool(b)) => Some(f64::from(u8::from(*b))),
                        Some(v) => v.as_f64(),
                        None => None,
                    })
                    .collect();
                if !vals.is_empty() && c != "ok" {
                    out.set(&format!("mean_{c}"), vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            out
        })
        .collect()
}
