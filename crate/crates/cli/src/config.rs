//! Run configuration: a TOML file plus command-line overrides.
//!
//! Every default is written out when the effective configuration is echoed,
//! so the echo alone reproduces a sweep.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use dtn_cluster_core::routing::{Category, GroupMode, RouterKind};
use dtn_cluster_core::sim_engine::{CategoryRule, CreationEvent, MessageSchedule, RouterConfig};
use dtn_cluster_core::trace_model::{NodeId, SyntheticParams, TraceFormat};
use dtn_cluster_core::clustering::{DEFAULT_MAX_ITER, DEFAULT_THRESHOLD};
use dtn_cluster_core::routing::DEFAULT_BUFFER_CAPACITY;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("missing required setting `{0}`")]
    MissingRequired(&'static str),
    #[error("both a trace file and synthetic parameters are configured")]
    ConflictingSources,
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormatName {
    #[default]
    Tabular,
    OneEvents,
}

impl From<TraceFormatName> for TraceFormat {
    fn from(f: TraceFormatName) -> Self {
        match f {
            TraceFormatName::Tabular => TraceFormat::Tabular,
            TraceFormatName::OneEvents => TraceFormat::OneEvents,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RouterName {
    #[default]
    Cluster,
    Epidemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Exact,
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct InputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    pub trace_format: TraceFormatName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
    /// Category count of the profile file; read from its first line when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_categories: Option<usize>,
    /// Optional category names, in category order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub category_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSection {
    pub node_count: usize,
    pub duration: f64,
    pub contact_rate: f64,
    pub mean_contact_duration: f64,
    pub interest_prob: f64,
    pub group_bias: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let p = SyntheticParams::default();
        SyntheticSection {
            node_count: p.node_count,
            duration: p.duration,
            contact_rate: p.contact_rate,
            mean_contact_duration: p.mean_contact_duration,
            interest_prob: p.interest_prob,
            group_bias: p.group_bias,
        }
    }
}

impl SyntheticSection {
    pub fn params(&self, n_categories: usize) -> SyntheticParams {
        SyntheticParams {
            node_count: self.node_count,
            duration: self.duration,
            contact_rate: self.contact_rate,
            mean_contact_duration: self.mean_contact_duration,
            n_categories,
            interest_prob: self.interest_prob,
            group_bias: self.group_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterSection {
    pub kind: RouterName,
    pub mode: ModeName,
    pub strict: bool,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    pub max_iter: usize,
    /// Messages per node; 0 means unlimited.
    pub buffer_capacity: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ttl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_transfers_per_contact: Option<usize>,
}

impl Default for RouterSection {
    fn default() -> Self {
        RouterSection {
            kind: RouterName::Cluster,
            mode: ModeName::Exact,
            strict: false,
            threshold: DEFAULT_THRESHOLD,
            k_clusters: None,
            max_iter: DEFAULT_MAX_ITER,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            ttl: None,
            max_transfers_per_contact: None,
        }
    }
}

impl RouterSection {
    pub fn router_config(&self) -> RouterConfig {
        let mode = match self.mode {
            ModeName::Exact => GroupMode::Exact,
            ModeName::Kmeans => GroupMode::Kmeans,
        };
        RouterConfig {
            kind: match self.kind {
                RouterName::Cluster => RouterKind::Cluster { mode, strict: self.strict },
                RouterName::Epidemic => RouterKind::Epidemic,
            },
            threshold: self.threshold,
            k_clusters: self.k_clusters,
            max_iter: self.max_iter,
            buffer_capacity: NonZeroUsize::new(self.buffer_capacity),
            ttl: self.ttl,
            max_transfers_per_contact: self.max_transfers_per_contact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitMessage {
    pub time: f64,
    pub source: u32,
    pub category: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSection {
    pub count: usize,
    pub start: f64,
    /// Seconds between creations; spread evenly over the trace when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    /// Fixed category for every generated message; uniform when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<u32>,
    pub track_final_destination: bool,
    /// Explicit creations; replaces the generated schedule when non-empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<ExplicitMessage>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            count: 100,
            start: 0.0,
            interval: None,
            category: None,
            track_final_destination: false,
            messages: Vec::new(),
        }
    }
}

impl ScheduleSection {
    pub fn schedule(&self) -> MessageSchedule {
        if !self.messages.is_empty() {
            return MessageSchedule::Explicit(
                self.messages
                    .iter()
                    .map(|m| CreationEvent { time: m.time, source: NodeId(m.source), category: Category(m.category) })
                    .collect(),
            );
        }
        MessageSchedule::Generated {
            count: self.count,
            start: self.start,
            interval: self.interval,
            category_rule: self.category.map_or(CategoryRule::Uniform, |c| CategoryRule::Fixed(Category(c))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    /// Category counts to simulate; the profile file's arity when unset.
    pub categories: Vec<usize>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { categories: Vec::new(), seeds: vec![1], workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub input: InputSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
    pub router: RouterSection,
    pub schedule: ScheduleSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub router: Option<RouterName>,
    pub mode: Option<ModeName>,
    pub strict: bool,
    pub categories: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut unknown = Vec::new();
        let mut cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if let Some(key) = unknown.into_iter().next() {
            return Err(ConfigError::UnknownKey(key));
        }
        cfg.apply(overrides);
        cfg.resolve_paths(base);
        cfg.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base, overrides)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.sweep.seeds = vec![seed];
        }
        if let Some(router) = o.router {
            self.router.kind = router;
        }
        if let Some(mode) = o.mode {
            self.router.mode = mode;
        }
        if o.strict {
            self.router.strict = true;
        }
        if let Some(categories) = &o.categories {
            self.sweep.categories = categories.clone();
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let absolute = |p: &Path| std::path::absolute(base.join(p)).unwrap_or_else(|_| base.join(p));
        self.input.trace = self.input.trace.as_deref().map(absolute);
        self.input.profiles = self.input.profiles.as_deref().map(absolute);
        self.output.dir = absolute(&self.output.dir);
    }

    /// Checks consistency and fills the settings that depend on the inputs.
    fn finish(&mut self) -> Result<(), ConfigError> {
        match (&self.input.trace, &self.synthetic) {
            (Some(_), Some(_)) => return Err(ConfigError::ConflictingSources),
            (None, None) => return Err(ConfigError::MissingRequired("input.trace")),
            (None, Some(_)) if self.input.profiles.is_some() => return Err(ConfigError::ConflictingSources),
            (Some(_), None) if self.input.profiles.is_none() => {
                return Err(ConfigError::MissingRequired("input.profiles"))
            }
            _ => {}
        }
        if let Some(path) = &self.input.profiles {
            if self.input.profile_categories.is_none() {
                self.input.profile_categories = Some(profile_arity(path)?);
            }
        }
        if self.sweep.categories.is_empty() {
            match self.input.profile_categories {
                Some(n) => self.sweep.categories = vec![n],
                None => return Err(ConfigError::MissingRequired("sweep.categories")),
            }
        }
        if self.sweep.categories.contains(&0) {
            return Err(ConfigError::Invalid { key: "sweep.categories", reason: "category counts start at 1".into() });
        }
        if self.sweep.seeds.is_empty() {
            return Err(ConfigError::Invalid { key: "sweep.seeds", reason: "at least one seed is needed".into() });
        }
        if self.sweep.workers == 0 {
            return Err(ConfigError::Invalid { key: "sweep.workers", reason: "at least one worker is needed".into() });
        }
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Number of category bits on the first profile line.
fn profile_arity(path: &Path) -> Result<usize, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().count().saturating_sub(1))
        .filter(|n| *n > 0)
        .ok_or(ConfigError::Invalid { key: "input.profiles", reason: "no profile line to infer the category count from".into() })
}
