//! Nodes, interest profiles and contact traces.
//!
//! Two contact formats are understood:
//!
//! * tabular: `t_start t_end node_a node_b` per line, `#` comments. A
//!   `# duration: <secs>` comment overrides the trace duration.
//! * one_events: `time CONN node_a node_b up|down`, with up/down paired per
//!   unordered node pair in file order.
//!
//! Contacts are symmetric, so every parsed event is stored with `a < b`.
//! Overlapping (or touching) intervals of the same pair are merged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::clustering::InterestVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {0}: malformed line")]
    MalformedLine(usize),
    #[error("line {0}: contact start is not before its end")]
    InvertedInterval(usize),
    #[error("line {0}: node in contact with itself")]
    SelfContact(usize),
    #[error("duration header {header} is shorter than the last contact end {last_end}")]
    DurationTooShort { header: f64, last_end: f64 },
    #[error("line {0}: expected node id followed by the category bits")]
    WrongArity(usize),
    #[error("line {0}: interest bit is not 0 or 1")]
    NonBinaryValue(usize),
    #[error("node {0} listed twice")]
    DuplicateNode(NodeId),
    #[error("invalid synthetic parameter `{0}`")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Tabular,
    OneEvents,
}

/// One connectivity interval between two nodes. `a < b` after construction
/// through [`ContactEvent::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub a: NodeId,
    pub b: NodeId,
}

impl ContactEvent {
    pub fn new(t_start: f64, t_end: f64, a: NodeId, b: NodeId) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        ContactEvent { t_start, t_end, a, b }
    }

    fn sort_key(&self) -> (f64, f64, NodeId, NodeId) {
        (self.t_start, self.t_end, self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactTrace {
    pub events: Vec<ContactEvent>,
    pub duration: f64,
    pub node_count: usize,
}

impl ContactTrace {
    /// Builds a trace from raw events: merges overlapping intervals of the
    /// same pair, sorts, and derives the node count. `duration` defaults to the
    /// last contact end.
    pub fn from_events(events: Vec<ContactEvent>, duration: Option<f64>) -> Result<Self, TraceError> {
        let events = merge_and_sort(events);
        let last_end = events.iter().map(|e| e.t_end).fold(0.0, f64::max);
        let duration = match duration {
            Some(d) if d < last_end => {
                return Err(TraceError::DurationTooShort { header: d, last_end })
            }
            Some(d) => d,
            None => last_end,
        };
        let mut trace = ContactTrace { events, duration, node_count: 0 };
        trace.node_count = trace.nodes().len();
        Ok(trace)
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.events.iter().flat_map(|e| [e.a, e.b]).collect()
    }

    /// Canonical tabular serialization. Times use the shortest exact decimal
    /// representation, so parsing the output gives back the same events.
    pub fn to_tabular(&self) -> String {
        let mut out = format!("# duration: {}\n", self.duration);
        for e in &self.events {
            out.push_str(&format!("{} {} {} {}\n", e.t_start, e.t_end, e.a, e.b));
        }
        out
    }
}

fn merge_and_sort(mut events: Vec<ContactEvent>) -> Vec<ContactEvent> {
    events.sort_by(|x, y| x.sort_key().partial_cmp(&y.sort_key()).expect("finite times"));
    let mut open: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    let mut merged: Vec<ContactEvent> = Vec::with_capacity(events.len());
    for e in events {
        if let Some(&idx) = open.get(&(e.a, e.b)) {
            let last = &mut merged[idx];
            if e.t_start <= last.t_end {
                last.t_end = last.t_end.max(e.t_end);
                continue;
            }
        }
        open.insert((e.a, e.b), merged.len());
        merged.push(e);
    }
    // merging can only extend t_end, so the t_start order still holds
    merged.sort_by(|x, y| x.sort_key().partial_cmp(&y.sort_key()).expect("finite times"));
    merged
}

fn parse_time(field: &str, line_no: usize) -> Result<f64, TraceError> {
    match field.parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Ok(t),
        _ => Err(TraceError::MalformedLine(line_no)),
    }
}

fn parse_node(field: &str, line_no: usize) -> Result<NodeId, TraceError> {
    field.parse::<u32>().map(NodeId).map_err(|_| TraceError::MalformedLine(line_no))
}

fn duration_header(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("duration")?;
    Some(rest.trim_start_matches(':').trim())
}

/// Lines with content, numbered from 1, skipping blanks and `#` comments.
/// Duration headers are reported through `header`.
fn content_lines<'a>(
    text: &'a str,
    header: &mut Option<f64>,
) -> Result<Vec<(usize, Vec<&'a str>)>, TraceError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(value) = duration_header(line) {
                *header = Some(parse_time(value, line_no)?);
            }
            continue;
        }
        lines.push((line_no, line.split_whitespace().collect()));
    }
    Ok(lines)
}

pub fn parse_contact_trace(text: &str, format: TraceFormat) -> Result<ContactTrace, TraceError> {
    match format {
        TraceFormat::Tabular => parse_tabular(text),
        TraceFormat::OneEvents => parse_one_events(text),
    }
}

fn parse_tabular(text: &str) -> Result<ContactTrace, TraceError> {
    let mut header = None;
    let mut events = Vec::new();
    for (line_no, fields) in content_lines(text, &mut header)? {
        let [t0, t1, a, b] = fields[..] else {
            return Err(TraceError::MalformedLine(line_no));
        };
        let (t_start, t_end) = (parse_time(t0, line_no)?, parse_time(t1, line_no)?);
        let (a, b) = (parse_node(a, line_no)?, parse_node(b, line_no)?);
        if t_start >= t_end {
            return Err(TraceError::InvertedInterval(line_no));
        }
        if a == b {
            return Err(TraceError::SelfContact(line_no));
        }
        events.push(ContactEvent::new(t_start, t_end, a, b));
    }
    ContactTrace::from_events(events, header)
}

fn parse_one_events(text: &str) -> Result<ContactTrace, TraceError> {
    let mut header = None;
    let mut events = Vec::new();
    // unordered pair -> (start time, line of the `up`)
    let mut open: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut last_time = 0.0_f64;
    for (line_no, fields) in content_lines(text, &mut header)? {
        let [time, "CONN", a, b, state] = fields[..] else {
            return Err(TraceError::MalformedLine(line_no));
        };
        let time = parse_time(time, line_no)?;
        let (a, b) = (parse_node(a, line_no)?, parse_node(b, line_no)?);
        if a == b {
            return Err(TraceError::SelfContact(line_no));
        }
        last_time = last_time.max(time);
        let key = if a < b { (a, b) } else { (b, a) };
        match state {
            "up" => {
                // a repeated `up` while the pair is already connected is ignored
                open.entry(key).or_insert(time);
            }
            "down" => {
                let Some(start) = open.remove(&key) else {
                    return Err(TraceError::MalformedLine(line_no));
                };
                if start >= time {
                    return Err(TraceError::InvertedInterval(line_no));
                }
                events.push(ContactEvent::new(start, time, key.0, key.1));
            }
            _ => return Err(TraceError::MalformedLine(line_no)),
        }
    }
    let close_at = header.unwrap_or(last_time);
    for ((a, b), start) in open {
        // an `up` at the very end of the trace leaves nothing to replay
        if start < close_at {
            events.push(ContactEvent::new(start, close_at, a, b));
        }
    }
    ContactTrace::from_events(events, header)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterestProfile {
    pub node: NodeId,
    pub interests: InterestVector,
}

/// Interest profiles of a scenario, keyed and iterated by ascending node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileSet {
    n_categories: usize,
    profiles: BTreeMap<NodeId, InterestVector>,
}

impl ProfileSet {
    pub fn new(n_categories: usize) -> Self {
        ProfileSet { n_categories, profiles: BTreeMap::new() }
    }

    /// Panics if the vector length differs from the set's category count.
    pub fn insert(&mut self, node: NodeId, interests: InterestVector) -> Option<InterestVector> {
        assert_eq!(interests.len(), self.n_categories, "interest vector arity");
        self.profiles.insert(node, interests)
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn get(&self, node: NodeId) -> Option<&InterestVector> {
        self.profiles.get(&node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.profiles.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.profiles.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &InterestVector)> + '_ {
        self.profiles.iter().map(|(n, v)| (*n, v))
    }

    pub fn to_profiles(&self) -> Vec<InterestProfile> {
        self.iter()
            .map(|(node, v)| InterestProfile { node, interests: v.clone() })
            .collect()
    }

    /// Truncates or zero-pads every vector to `n_categories`.
    pub fn resized(&self, n_categories: usize) -> ProfileSet {
        ProfileSet {
            n_categories,
            profiles: self.iter().map(|(n, v)| (n, v.resized(n_categories))).collect(),
        }
    }

    /// Adds an all-zero profile for every listed node that has none.
    pub fn fill_missing(&mut self, nodes: impl IntoIterator<Item = NodeId>) {
        for node in nodes {
            self.profiles
                .entry(node)
                .or_insert_with(|| InterestVector::zeros(self.n_categories));
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (node, v) in self.iter() {
            out.push_str(&node.to_string());
            for bit in v.bits() {
                out.push(' ');
                out.push(if bit { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_interest_profiles(text: &str, n_categories: usize) -> Result<ProfileSet, TraceError> {
    let mut set = ProfileSet::new(n_categories);
    let mut ignored_header = None;
    for (line_no, fields) in content_lines(text, &mut ignored_header)? {
        let node = parse_node(fields[0], line_no)?;
        if fields.len() != n_categories + 1 {
            return Err(TraceError::WrongArity(line_no));
        }
        let bits = fields[1..]
            .iter()
            .map(|f| match *f {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(TraceError::NonBinaryValue(line_no)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if set.insert(node, InterestVector::new(bits)).is_some() {
            return Err(TraceError::DuplicateNode(node));
        }
    }
    Ok(set)
}

/// Parameters for seeded synthetic scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub node_count: usize,
    pub duration: f64,
    /// Meetings per second for each unordered node pair.
    pub contact_rate: f64,
    pub mean_contact_duration: f64,
    pub n_categories: usize,
    /// Probability that a node holds any given category.
    pub interest_prob: f64,
    /// Rate multiplier for pairs sharing at least one interest.
    pub group_bias: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            node_count: 20,
            duration: 10_000.0,
            contact_rate: 1e-4,
            mean_contact_duration: 60.0,
            n_categories: 5,
            interest_prob: 0.3,
            group_bias: 2.0,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<(), TraceError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.node_count < 2 {
            return Err(TraceError::InvalidParams("node_count"));
        }
        if !positive(self.duration) {
            return Err(TraceError::InvalidParams("duration"));
        }
        if !positive(self.contact_rate) {
            return Err(TraceError::InvalidParams("contact_rate"));
        }
        if !positive(self.mean_contact_duration) {
            return Err(TraceError::InvalidParams("mean_contact_duration"));
        }
        if self.n_categories < 1 {
            return Err(TraceError::InvalidParams("n_categories"));
        }
        if !(0.0..=1.0).contains(&self.interest_prob) {
            return Err(TraceError::InvalidParams("interest_prob"));
        }
        if !positive(self.group_bias) {
            return Err(TraceError::InvalidParams("group_bias"));
        }
        Ok(())
    }
}

/// Poisson pairwise meetings with exponential contact durations. Node ids are
/// `0..node_count`. Pairs that share an interest meet `group_bias` times as
/// often as other pairs.
pub fn generate_synthetic_trace(
    params: &SyntheticParams,
    seed: u64,
) -> Result<(ContactTrace, ProfileSet), TraceError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut profiles = ProfileSet::new(params.n_categories);
    for node in 0..params.node_count {
        let bits = (0..params.n_categories)
            .map(|_| rng.gen_bool(params.interest_prob))
            .collect();
        profiles.insert(NodeId(node as u32), InterestVector::new(bits));
    }

    let length = Exp::new(1.0 / params.mean_contact_duration).expect("positive rate");
    let mut events = Vec::new();
    for i in 0..params.node_count {
        for j in (i + 1)..params.node_count {
            let (a, b) = (NodeId(i as u32), NodeId(j as u32));
            let shared = profiles
                .get(a)
                .zip(profiles.get(b))
                .is_some_and(|(x, y)| x.shares_interest(y));
            let rate = if shared { params.contact_rate * params.group_bias } else { params.contact_rate };
            let gap = Exp::new(rate).expect("positive rate");
            let mut t = gap.sample(&mut rng);
            while t < params.duration {
                let end = (t + length.sample(&mut rng)).min(params.duration);
                if end > t {
                    events.push(ContactEvent::new(t, end, a, b));
                }
                t = end + gap.sample(&mut rng);
            }
        }
    }
    let trace = ContactTrace::from_events(events, Some(params.duration))?;
    Ok((trace, profiles))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub missing_profile: BTreeSet<NodeId>,
    pub unused_profile: BTreeSet<NodeId>,
}

impl ValidationReport {
    pub fn is_consistent(&self) -> bool {
        self.missing_profile.is_empty() && self.unused_profile.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<NodeId>| {
            s.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
        };
        writeln!(f, "missing_profile: [{}]", join(&self.missing_profile))?;
        writeln!(f, "unused_profile: [{}]", join(&self.unused_profile))
    }
}

pub fn validate_scenario(trace: &ContactTrace, profiles: &ProfileSet) -> ValidationReport {
    let in_trace = trace.nodes();
    let with_profile: BTreeSet<NodeId> = profiles.nodes().collect();
    ValidationReport {
        missing_profile: in_trace.difference(&with_profile).copied().collect(),
        unused_profile: with_profile.difference(&in_trace).copied().collect(),
    }
}
