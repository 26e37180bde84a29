//! Delivery, delay, hop and cost metrics, plus the CSV reports.
//!
//! The summary CSV uses six fixed decimals. The per-message CSV writes times
//! in their shortest exact decimal form so it parses back losslessly. Absent
//! values are empty fields.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::routing::{Category, MessageId, RouterKind};
use crate::sim_engine::{DeliveryRecord, SimResult};
use crate::trace_model::NodeId;

pub const SUMMARY_HEADER: &str = "run_id,router,mode,strict,n_categories,k_clusters,seed,created,delivered,delivery_ratio,avg_delay,avg_hops,avg_cost,resource_used";
pub const PER_MESSAGE_HEADER: &str = "message_id,source,category,created_at,group_size,group_delivered_at,first_receiver,hops,forwards_total,final_delivered_at";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no messages were created")]
    NoMessages,
    #[error("no message was delivered")]
    NothingDelivered,
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("cannot write {path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("per-message CSV line {0} is malformed")]
    MalformedCsv(usize),
}

pub fn delivery_ratio(records: &[DeliveryRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoMessages);
    }
    let delivered = records.iter().filter(|r| r.delivered()).count();
    Ok(delivered as f64 / records.len() as f64)
}

fn mean_over_delivered(records: &[DeliveryRecord], value: impl Fn(&DeliveryRecord) -> f64) -> Result<f64, MetricsError> {
    let delivered: Vec<f64> = records.iter().filter(|r| r.delivered()).map(value).collect();
    if delivered.is_empty() {
        return Err(MetricsError::NothingDelivered);
    }
    Ok(delivered.iter().sum::<f64>() / delivered.len() as f64)
}

pub fn avg_delay(records: &[DeliveryRecord]) -> Result<f64, MetricsError> {
    mean_over_delivered(records, |r| r.delay().expect("delivered"))
}

pub fn avg_hops(records: &[DeliveryRecord]) -> Result<f64, MetricsError> {
    mean_over_delivered(records, |r| r.hops_at_delivery.expect("delivered") as f64)
}

/// All forwards, delivered or not, per delivered message.
pub fn avg_cost(records: &[DeliveryRecord]) -> Result<f64, MetricsError> {
    let delivered = records.iter().filter(|r| r.delivered()).count();
    if delivered == 0 {
        return Err(MetricsError::NothingDelivered);
    }
    let forwards: usize = records.iter().map(|r| r.forwards_total).sum();
    Ok(forwards as f64 / delivered as f64)
}

pub fn resource_used(group: &BTreeSet<NodeId>, all_nodes: usize) -> Result<f64, MetricsError> {
    if all_nodes == 0 {
        return Err(MetricsError::EmptyNetwork);
    }
    Ok(group.len() as f64 / all_nodes as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub router: RouterKind,
    pub n_categories: usize,
    /// Cluster count actually used, in `kmeans` mode.
    pub k_clusters: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub meta: RunMeta,
    pub created: usize,
    pub delivered: usize,
    pub delivery_ratio: Option<f64>,
    pub avg_delay: Option<f64>,
    pub avg_hops: Option<f64>,
    pub avg_cost: Option<f64>,
    pub group_size_per_category: BTreeMap<Category, usize>,
    /// Share of the network's nodes that belong to at least one group.
    pub resource_used: Option<f64>,
}

impl MetricsReport {
    pub fn from_result(run_id: impl Into<String>, n_categories: usize, result: &SimResult) -> Self {
        let records = &result.records;
        let in_groups: BTreeSet<NodeId> = result
            .groups
            .values()
            .flat_map(|g| g.members.iter().copied())
            .collect();
        MetricsReport {
            meta: RunMeta {
                run_id: run_id.into(),
                router: result.router.kind,
                n_categories,
                k_clusters: result.clustering.as_ref().map(|c| c.k),
                seed: result.seed,
            },
            created: records.len(),
            delivered: records.iter().filter(|r| r.delivered()).count(),
            delivery_ratio: delivery_ratio(records).ok(),
            avg_delay: avg_delay(records).ok(),
            avg_hops: avg_hops(records).ok(),
            avg_cost: avg_cost(records).ok(),
            group_size_per_category: result
                .groups
                .iter()
                .map(|(c, g)| (*c, g.members.len()))
                .collect(),
            resource_used: resource_used(&in_groups, result.node_count).ok(),
        }
    }

    pub fn summary_row(&self) -> String {
        let fixed = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let (mode, strict) = match self.meta.router {
            RouterKind::Cluster { mode, strict } => (mode.to_string(), strict),
            RouterKind::Epidemic => (String::new(), false),
        };
        [
            self.meta.run_id.clone(),
            self.meta.router.name().to_string(),
            mode,
            strict.to_string(),
            self.meta.n_categories.to_string(),
            self.meta.k_clusters.map(|k| k.to_string()).unwrap_or_default(),
            self.meta.seed.to_string(),
            self.created.to_string(),
            self.delivered.to_string(),
            fixed(self.delivery_ratio),
            fixed(self.avg_delay),
            fixed(self.avg_hops),
            fixed(self.avg_cost),
            fixed(self.resource_used),
        ]
        .join(",")
    }
}

pub fn summary_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in reports {
        out.push_str(&r.summary_row());
        out.push('\n');
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn per_message_csv(records: &[DeliveryRecord]) -> String {
    let mut out = format!("{PER_MESSAGE_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.message_id,
            r.source,
            r.category,
            r.created_at,
            r.group_size,
            opt(r.group_delivered_at),
            opt(r.first_receiver),
            opt(r.hops_at_delivery),
            r.forwards_total,
            opt(r.final_delivered_at),
        );
    }
    out
}

pub fn parse_per_message_csv(text: &str) -> Result<Vec<DeliveryRecord>, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PER_MESSAGE_HEADER => {}
        _ => return Err(MetricsError::MalformedCsv(1)),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let bad = || MetricsError::MalformedCsv(line_no);
        let fields: Vec<&str> = line.split(',').collect();
        let [id, source, category, created, group_size, delivered, first, hops, forwards, final_at] = fields[..] else {
            return Err(bad());
        };
        fn req<T: std::str::FromStr>(s: &str, bad: impl Fn() -> MetricsError) -> Result<T, MetricsError> {
            s.parse().map_err(|_| bad())
        }
        fn maybe<T: std::str::FromStr>(s: &str, bad: impl Fn() -> MetricsError) -> Result<Option<T>, MetricsError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        }
        records.push(DeliveryRecord {
            message_id: MessageId(req(id, bad)?),
            source: NodeId(req(source, bad)?),
            category: Category(req(category, bad)?),
            created_at: req(created, bad)?,
            group_size: req(group_size, bad)?,
            group_delivered_at: maybe(delivered, bad)?,
            first_receiver: maybe(first, bad)?.map(NodeId),
            hops_at_delivery: maybe(hops, bad)?,
            forwards_total: req(forwards, bad)?,
            final_delivered_at: maybe(final_at, bad)?,
        });
    }
    Ok(records)
}

fn write_file(path: &Path, contents: &str) -> Result<(), MetricsError> {
    std::fs::write(path, contents).map_err(|source| MetricsError::IoFailure { path: path.to_path_buf(), source })
}

/// Writes `summary.csv` (one row) and `messages.csv` into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, records: &[DeliveryRecord]) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir).map_err(|source| MetricsError::IoFailure { path: dir.to_path_buf(), source })?;
    write_file(&dir.join("summary.csv"), &summary_csv(std::slice::from_ref(report)))?;
    write_file(&dir.join("messages.csv"), &per_message_csv(records))
}
