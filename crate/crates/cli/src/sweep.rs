//! Sweeps over category counts and seeds.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! effective_config.toml
//! summary.csv
//! runs/n<categories>-s<seed>/messages.csv
//! runs/n<categories>-s<seed>/groups.txt
//! runs/n<categories>-s<seed>/clustering.txt   (kmeans mode)
//! runs/n<categories>-s<seed>/run.log
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use dtn_cluster_core::metrics::{per_message_csv, summary_csv, MetricsReport};
use dtn_cluster_core::routing::classify_message;
use dtn_cluster_core::sim_engine::{self, Scenario, ScheduleWarning, SimResult};
use dtn_cluster_core::trace_model::{
    generate_synthetic_trace, parse_contact_trace, parse_interest_profiles, validate_scenario, ContactTrace,
    ProfileSet, ValidationReport,
};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

/// Trace and profiles loaded from files; synthetic inputs are generated per run.
#[derive(Debug, Clone)]
pub enum Inputs {
    Files { trace: ContactTrace, profiles: ProfileSet },
    Synthetic,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, SweepError> {
    let (Some(trace_path), Some(profile_path)) = (&cfg.input.trace, &cfg.input.profiles) else {
        return Ok(Inputs::Synthetic);
    };
    let read = |path: &PathBuf| {
        std::fs::read_to_string(path).map_err(|e| SweepError::Input { path: path.clone(), message: e.to_string() })
    };
    let trace = parse_contact_trace(&read(trace_path)?, cfg.input.trace_format.into())
        .map_err(|e| SweepError::Input { path: trace_path.clone(), message: e.to_string() })?;
    let arity = cfg.input.profile_categories.expect("filled when the config is loaded");
    let profiles = parse_interest_profiles(&read(profile_path)?, arity)
        .map_err(|e| SweepError::Input { path: profile_path.clone(), message: e.to_string() })?;
    Ok(Inputs::Files { trace, profiles })
}

/// Trace and profiles for one sweep point, with notes on any adjustment.
pub fn scenario_inputs(
    cfg: &RunConfig,
    inputs: &Inputs,
    n_categories: usize,
    seed: u64,
) -> Result<(ContactTrace, ProfileSet, Vec<String>), String> {
    match inputs {
        Inputs::Files { trace, profiles } => {
            let mut notes = Vec::new();
            let arity = profiles.n_categories();
            if n_categories < arity {
                notes.push(format!("profiles truncated from {arity} to {n_categories} categories"));
            } else if n_categories > arity {
                notes.push(format!("profiles zero-padded from {arity} to {n_categories} categories"));
            }
            Ok((trace.clone(), profiles.resized(n_categories), notes))
        }
        Inputs::Synthetic => {
            let params = cfg.synthetic.as_ref().expect("synthetic section present").params(n_categories);
            let (trace, profiles) = generate_synthetic_trace(&params, seed).map_err(|e| e.to_string())?;
            Ok((trace, profiles, Vec::new()))
        }
    }
}

pub fn build_scenario(cfg: &RunConfig, trace: ContactTrace, profiles: ProfileSet, n_categories: usize, seed: u64) -> Scenario {
    Scenario {
        trace,
        profiles,
        n_categories,
        router: cfg.router.router_config(),
        schedule: cfg.schedule.schedule(),
        track_final_destination: cfg.schedule.track_final_destination,
        seed,
    }
}

pub fn run_id(n_categories: usize, seed: u64) -> String {
    format!("n{n_categories}-s{seed}")
}

/// Everything one run writes.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub messages_csv: String,
    pub groups: String,
    pub clustering: Option<String>,
    pub log: String,
}

fn category_names(cfg: &RunConfig, n: usize) -> Vec<String> {
    (1..=n)
        .map(|k| cfg.input.category_names.get(k - 1).cloned().unwrap_or_else(|| format!("category-{k}")))
        .collect()
}

fn artifacts(cfg: &RunConfig, id: &str, n: usize, result: &SimResult, notes: Vec<String>) -> RunArtifacts {
    let names = category_names(cfg, n);
    let mut groups = String::new();
    for (category, group) in &result.groups {
        let name = classify_message(&names, *category).expect("category within range");
        let members: Vec<String> = group.members.iter().map(|m| m.to_string()).collect();
        let fallback = if group.fallback { " (exact fallback)" } else { "" };
        let _ = writeln!(groups, "{category} {name}{fallback}: {}", members.join(" "));
    }
    let mut log = String::new();
    for note in notes {
        let _ = writeln!(log, "{note}");
    }
    for w in &result.warnings {
        match w {
            ScheduleWarning::EmptySchedule => log.push_str("warning: empty message schedule\n"),
        }
    }
    let c = &result.counts;
    let _ = writeln!(
        log,
        "contacts={} created={} forwards={} drops={} closes={} expired={}",
        c.contacts_processed, c.messages_created, c.forwards, c.drops, c.closes, c.expired
    );
    RunArtifacts {
        report: MetricsReport::from_result(id, n, result),
        messages_csv: per_message_csv(&result.records),
        groups,
        clustering: result.clustering.as_ref().map(|c| c.dump()),
        log,
    }
}

/// Runs one sweep point.
pub fn run_point(cfg: &RunConfig, inputs: &Inputs, n_categories: usize, seed: u64) -> Result<RunArtifacts, String> {
    let (trace, profiles, notes) = scenario_inputs(cfg, inputs, n_categories, seed)?;
    let scenario = build_scenario(cfg, trace, profiles, n_categories, seed);
    let result = sim_engine::run(&scenario).map_err(|e| e.to_string())?;
    Ok(artifacts(cfg, &run_id(n_categories, seed), n_categories, &result, notes))
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub reports: Vec<MetricsReport>,
    /// `(n_categories, seed, error)` of every failed run.
    pub failures: Vec<(usize, u64, String)>,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), SweepError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| SweepError::Output { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| SweepError::Output { path: path.to_path_buf(), source })
}

/// Executes every `(n_categories, seed)` point and writes the output tree.
/// Points run on up to `sweep.workers` threads; files are written afterwards
/// in `(n_categories, seed)` order.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome, SweepError> {
    let inputs = load_inputs(cfg)?;
    let points: Vec<(usize, u64)> = cfg
        .sweep
        .categories
        .iter()
        .flat_map(|&n| cfg.sweep.seeds.iter().map(move |&s| (n, s)))
        .collect();

    let results: Vec<Mutex<Option<Result<RunArtifacts, String>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..cfg.sweep.workers.min(points.len().max(1)) {
            scope.spawn(|| loop {
                let idx = {
                    let mut n = next.lock().expect("lock");
                    let idx = *n;
                    *n += 1;
                    idx
                };
                let Some(&(n, seed)) = points.get(idx) else { break };
                let outcome = run_point(cfg, &inputs, n, seed);
                *results[idx].lock().expect("lock") = Some(outcome);
            });
        }
    });

    let out = &cfg.output.dir;
    write(&out.join("effective_config.toml"), &cfg.to_toml())?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (&(n, seed), slot) in points.iter().zip(results) {
        let outcome = slot.into_inner().expect("lock").expect("every point ran");
        match outcome {
            Ok(a) => {
                let dir = out.join("runs").join(run_id(n, seed));
                write(&dir.join("messages.csv"), &a.messages_csv)?;
                write(&dir.join("groups.txt"), &a.groups)?;
                write(&dir.join("run.log"), &a.log)?;
                if let Some(dump) = &a.clustering {
                    write(&dir.join("clustering.txt"), dump)?;
                }
                reports.push(a.report);
            }
            Err(e) => failures.push((n, seed, e)),
        }
    }
    write(&out.join("summary.csv"), &summary_csv(&reports))?;
    Ok(SweepOutcome { reports, failures })
}

/// Validation of the configured inputs, one report per category count
/// (synthetic inputs use the first seed).
pub fn validate(cfg: &RunConfig) -> Result<Vec<(usize, ValidationReport)>, SweepError> {
    let inputs = load_inputs(cfg)?;
    let seed = cfg.sweep.seeds[0];
    cfg.sweep
        .categories
        .iter()
        .map(|&n| {
            let (trace, profiles, _) = scenario_inputs(cfg, &inputs, n, seed)
                .map_err(|message| SweepError::Input { path: cfg.output.dir.clone(), message })?;
            Ok((n, validate_scenario(&trace, &profiles)))
        })
        .collect()
}

/// Writes `trace.txt` and `profiles.txt` for the first category count and
/// seed of a synthetic configuration.
pub fn gen_trace(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), SweepError> {
    let Some(synthetic) = &cfg.synthetic else {
        return Err(ConfigError::MissingRequired("synthetic").into());
    };
    let params = synthetic.params(cfg.sweep.categories[0]);
    let (trace, profiles) = generate_synthetic_trace(&params, cfg.sweep.seeds[0])
        .map_err(|e| SweepError::Input { path: cfg.output.dir.clone(), message: e.to_string() })?;
    let trace_path = cfg.output.dir.join("trace.txt");
    let profile_path = cfg.output.dir.join("profiles.txt");
    write(&trace_path, &trace.to_tabular())?;
    write(&profile_path, &profiles.to_text())?;
    Ok((trace_path, profile_path))
}
