//! Experiment configuration: TOML in, validated against module preconditions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use pinning_core::continuum::{select_scales, ScaleParams};
use pinning_core::dynamics::RateRule;
use pinning_core::DistributionSpec;
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DiscreteBuild,
    DiscreteSimulate,
    AlphaEstimate,
    Percolation,
    ContinuumBuild,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DiscreteBuild => "discrete-build",
            Self::DiscreteSimulate => "discrete-simulate",
            Self::AlphaEstimate => "alpha-estimate",
            Self::Percolation => "percolation",
            Self::ContinuumBuild => "continuum-build",
            Self::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Either an explicit list or `base, base+1, ..., base+count-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { base: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { base, count } => (0..*count).map(|i| base + i).collect(),
        }
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::Range { base: 0, count: 1 }
    }
}

/// Accepts `0.25`, `1`, or `"0.25"`.
fn num<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        F(f64),
        I(i64),
        S(String),
    }
    match Raw::deserialize(d)? {
        Raw::F(x) => Ok(x),
        Raw::I(x) => Ok(x as f64),
        Raw::S(s) => s.trim().parse::<f64>().map_err(|_| serde::de::Error::custom(format!("not a number: {s:?}"))),
    }
}

/// Keeps a probability as text so `"1/3"` stays exact; bare numbers are accepted too.
fn prob_text<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        F(f64),
        I(i64),
        S(String),
    }
    Ok(Some(match Raw::deserialize(d)? {
        Raw::F(x) => x.to_string(),
        Raw::I(x) => x.to_string(),
        Raw::S(s) => s,
    }))
}

fn num_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    num(d).map(Some)
}

/// Field law: `bernoulli = "p"` for `+1` w.p. `p`, `-1` otherwise, or explicit atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    #[serde(default, deserialize_with = "prob_text", skip_serializing_if = "Option::is_none")]
    pub bernoulli: Option<String>,
    /// `[value, probability]` pairs; value `"minus_inf"` allowed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<i64>,
}

impl DistributionConfig {
    pub fn build(&self) -> Result<DistributionSpec, String> {
        match (&self.bernoulli, &self.atoms) {
            (Some(_), Some(_)) => Err("give either bernoulli or atoms, not both".into()),
            (None, Some(atoms)) => DistributionSpec::from_strings(atoms, self.upper_bound).map_err(|e| e.to_string()),
            (b, None) => {
                let spec = DistributionSpec::bernoulli_pm1_exact(b.as_deref().unwrap_or("1/2")).map_err(|e| e.to_string())?;
                match self.upper_bound {
                    None => Ok(spec),
                    Some(u) => DistributionSpec::from_strings(&spec.to_string_pairs(), Some(u)).map_err(|e| e.to_string()),
                }
            }
        }
    }
}

fn d_force() -> i64 {
    0
}
fn d_half_width() -> i64 {
    1000
}
fn d_width() -> usize {
    256
}
fn d_horizon() -> f64 {
    1000.0
}
fn d_true() -> bool {
    true
}
fn d_samples() -> u64 {
    100_000
}
fn d_depth() -> u32 {
    64
}
fn d_grid() -> usize {
    32
}
fn d_p() -> f64 {
    0.9
}
fn d_one() -> usize {
    1
}
fn d_k() -> f64 {
    1.0
}
fn d_alpha() -> f64 {
    1.6
}
fn d_lp() -> f64 {
    1.0
}
fn d_lm() -> f64 {
    0.01
}
fn d_columns() -> usize {
    50
}
fn d_rows() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    #[serde(default = "d_force")]
    pub force: i64,
    #[serde(default = "d_half_width")]
    pub half_width: i64,
    #[serde(default)]
    pub n_start: i64,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self { force: d_force(), half_width: d_half_width(), n_start: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Fixed,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleConfig {
    Named(String),
    Table { table: Vec<(i64, f64)> },
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self::Named("default".into())
    }
}

impl RuleConfig {
    pub fn build(&self) -> Result<RateRule, String> {
        match self {
            Self::Named(n) if n == "default" => Ok(RateRule::DefaultBounded),
            Self::Named(n) => Err(format!("unknown rule {n:?}; use \"default\" or {{ table = [...] }}")),
            Self::Table { table } => RateRule::table(table.iter().copied()).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "d_width")]
    pub width: usize,
    #[serde(default = "d_horizon", deserialize_with = "num")]
    pub horizon: f64,
    #[serde(default)]
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub rule: RuleConfig,
    /// Raise `N_start` until the barrier sits above the flat start.
    #[serde(default = "d_true")]
    pub auto_start: bool,
    #[serde(default, deserialize_with = "num_opt", skip_serializing_if = "Option::is_none")]
    pub series_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_budget: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            width: d_width(),
            horizon: d_horizon(),
            boundary: BoundaryKind::Fixed,
            rule: RuleConfig::default(),
            auto_start: true,
            series_interval: None,
            jump_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    #[serde(default = "d_samples")]
    pub samples: u64,
    #[serde(default = "d_depth")]
    pub depth: u32,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self { samples: d_samples(), depth: d_depth() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizontalKind {
    #[default]
    Periodic,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolationConfig {
    #[serde(default = "d_grid")]
    pub width: usize,
    #[serde(default = "d_grid")]
    pub height: usize,
    #[serde(default = "d_p", deserialize_with = "num")]
    pub p: f64,
    #[serde(default = "d_one")]
    pub d: usize,
    #[serde(default)]
    pub boundary: HorizontalKind,
}

impl Default for PercolationConfig {
    fn default() -> Self {
        Self { width: d_grid(), height: d_grid(), p: d_p(), d: 1, boundary: HorizontalKind::Periodic }
    }
}

/// Replaces selected scales; the rest are derived as usual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleOverride {
    #[serde(deserialize_with = "num")]
    pub l: f64,
    #[serde(deserialize_with = "num")]
    pub b: f64,
    pub n: u32,
    #[serde(deserialize_with = "num")]
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumConfig {
    #[serde(default = "d_k", deserialize_with = "num")]
    pub k: f64,
    #[serde(default = "d_alpha", deserialize_with = "num")]
    pub alpha: f64,
    #[serde(default = "d_lp", deserialize_with = "num")]
    pub lambda_plus: f64,
    #[serde(default = "d_lm", deserialize_with = "num")]
    pub lambda_minus: f64,
    #[serde(default = "d_columns")]
    pub columns: usize,
    #[serde(default = "d_rows")]
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<ScaleOverride>,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self {
            k: d_k(),
            alpha: d_alpha(),
            lambda_plus: d_lp(),
            lambda_minus: d_lm(),
            columns: d_columns(),
            rows: d_rows(),
            scales: None,
        }
    }
}

impl ContinuumConfig {
    pub fn scales(&self) -> Result<ScaleParams, String> {
        let r = match &self.scales {
            None => select_scales(self.k, self.alpha, self.lambda_plus, self.lambda_minus),
            Some(o) => ScaleParams::manual(self.k, self.alpha, self.lambda_plus, self.lambda_minus, o.l, o.b, o.n, o.rho),
        };
        r.map_err(|e| e.to_string())
    }
}

/// A base experiment run over the product of the axes. Axis names are dotted
/// config paths (`"distribution.bernoulli"`, `"discrete.force"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentKind,
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub emit_svg: bool,
    #[serde(default)]
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub discrete: DiscreteConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default)]
    pub percolation: PercolationConfig,
    #[serde(default)]
    pub continuum: ContinuumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| {
            ConfigErrors(vec![FieldError { field: "<toml>".into(), message: e.to_string().trim().to_string() }])
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Option<ExperimentKind> {
        self.kind
    }

    /// Copy with a dotted path set to `value`.
    pub fn with_axis(&self, path: &str, value: &toml::Value) -> Result<Self, FieldError> {
        let err = |m: String| FieldError { field: format!("sweep.grid.{path}"), message: m };
        let mut root = toml::Value::try_from(self).map_err(|e| err(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| err(format!("{part} is not inside a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        root.try_into().map_err(|e: toml::de::Error| err(e.to_string().trim().to_string()))
    }

    /// Checks every parameter the selected experiment will use.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut push = |field: &str, message: String| errs.push(FieldError { field: field.into(), message });
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            push("seeds", "no seeds given".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            push("seeds", "duplicate seeds".into());
        }
        let needs_dist = matches!(kind, ExperimentKind::DiscreteBuild | ExperimentKind::DiscreteSimulate | ExperimentKind::AlphaEstimate);
        if needs_dist {
            match self.distribution.build() {
                Err(e) => push("distribution", e),
                Ok(spec) if kind == ExperimentKind::DiscreteSimulate && spec.has_minus_infinity() => {
                    push("distribution", "dynamics need a finite field (no minus_inf atom)".into())
                }
                Ok(_) => {}
            }
        }
        if matches!(kind, ExperimentKind::DiscreteBuild | ExperimentKind::DiscreteSimulate) {
            let d = &self.discrete;
            if kind == ExperimentKind::DiscreteBuild && d.half_width < 2 {
                push("discrete.half_width", format!("must be >= 2, got {}", d.half_width));
            }
        }
        if kind == ExperimentKind::DiscreteSimulate {
            let s = &self.simulate;
            if s.width < 2 {
                push("simulate.width", format!("must be >= 2, got {}", s.width));
            }
            if !(s.horizon >= 0.0 && s.horizon.is_finite()) {
                push("simulate.horizon", format!("must be finite and >= 0, got {}", s.horizon));
            }
            if let Err(e) = s.rule.build() {
                push("simulate.rule", e);
            }
            if let Some(dt) = s.series_interval {
                if !(dt > 0.0) {
                    push("simulate.series_interval", format!("must be > 0, got {dt}"));
                }
            }
        }
        if kind == ExperimentKind::AlphaEstimate && self.alpha.samples < 2 {
            push("alpha.samples", "need at least 2 samples".into());
        }
        if kind == ExperimentKind::Percolation {
            let p = &self.percolation;
            if p.width == 0 || p.height == 0 {
                push("percolation", "width and height must be >= 1".into());
            }
            if !(0.0..=1.0).contains(&p.p) {
                push("percolation.p", format!("must lie in [0, 1], got {}", p.p));
            }
            if p.d == 0 {
                push("percolation.d", "must be >= 1".into());
            }
        }
        if kind == ExperimentKind::ContinuumBuild {
            let c = &self.continuum;
            if let Err(e) = c.scales() {
                push("continuum", e);
            }
            if c.columns < 2 || c.rows == 0 {
                push("continuum", "need columns >= 2 and rows >= 1".into());
            }
        }
        if kind == ExperimentKind::Sweep {
            match &self.sweep {
                None => push("sweep", "missing [sweep] table".into()),
                Some(s) if s.base == ExperimentKind::Sweep => push("sweep.base", "cannot sweep a sweep".into()),
                Some(s) if s.grid.is_empty() => push("sweep.grid", "needs at least one axis".into()),
                Some(s) => {
                    for (axis, values) in &s.grid {
                        if values.is_empty() {
                            push(&format!("sweep.grid.{axis}"), "empty axis".into());
                        }
                        for v in values {
                            match self.with_axis(axis, v) {
                                Err(e) => push(&e.field, e.message),
                                Ok(c) => {
                                    if let Err(ConfigErrors(inner)) = c.validate(s.base) {
                                        for e in inner {
                                            push(&format!("sweep.grid.{axis}={v} -> {}", e.field), e.message);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }
}
