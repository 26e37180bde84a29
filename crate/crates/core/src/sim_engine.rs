//! Deterministic replay of a contact trace under a chosen router.
//!
//! A run merges contact starts, contact ends and message creations into one
//! time-ordered stream. At equal timestamps ends come first, then creations,
//! then starts; ends and starts tie-break on the node pair, creations on the
//! message id. Transfers are instantaneous. When a node receives a message
//! while some of its contacts are open, those contacts exchange again at the
//! same timestamp, so a message can cross several hops within one instant.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clustering::{
    self, kmeans, resolve_group_kmeans, ClusterError, Clustering,
    DEFAULT_MAX_ITER, DEFAULT_THRESHOLD,
};
use crate::routing::{
    Buffer, Category, ForwardDecision, GroupMode, Message, MessageId, RouterKind, RoutingError,
    DEFAULT_BUFFER_CAPACITY,
};
use crate::trace_model::{ContactTrace, NodeId, ProfileSet};

const SCHEDULE_STREAM: u64 = 1;
const DESTINATION_STREAM: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("profiles have {profiles} categories, scenario has {scenario}")]
    CategoryMismatch { profiles: usize, scenario: usize },
    #[error("scenario needs at least one interest category")]
    NoCategories,
    #[error("message creation at {time} outside [0, {duration}]")]
    CreationOutOfRange { time: f64, duration: f64 },
    #[error("message source {0} is not a scenario node")]
    UnknownSource(NodeId),
    #[error("category {category} outside 1..={n}")]
    CategoryOutOfRange { category: u32, n: usize },
    #[error("no profile-bearing node to draw message sources from")]
    NoSourceCandidates,
    #[error("invalid router setting `{0}`")]
    InvalidRouterConfig(&'static str),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterConfig {
    pub kind: RouterKind,
    /// Centroid threshold for `kmeans` group resolution.
    pub threshold: f64,
    /// Cluster count for `kmeans` mode; the category count when unset.
    pub k_clusters: Option<usize>,
    pub max_iter: usize,
    /// `None` means unlimited buffers.
    pub buffer_capacity: Option<NonZeroUsize>,
    pub ttl: Option<f64>,
    pub max_transfers_per_contact: Option<usize>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            kind: RouterKind::Cluster { mode: GroupMode::Exact, strict: false },
            threshold: DEFAULT_THRESHOLD,
            k_clusters: None,
            max_iter: DEFAULT_MAX_ITER,
            buffer_capacity: NonZeroUsize::new(DEFAULT_BUFFER_CAPACITY),
            ttl: None,
            max_transfers_per_contact: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreationEvent {
    pub time: f64,
    pub source: NodeId,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoryRule {
    Uniform,
    Fixed(Category),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageSchedule {
    Explicit(Vec<CreationEvent>),
    /// `count` messages from uniformly drawn profile-bearing sources, created
    /// every `interval` seconds from `start`, or spread evenly over
    /// `[start, duration)` when `interval` is unset.
    Generated {
        count: usize,
        start: f64,
        interval: Option<f64>,
        category_rule: CategoryRule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trace: ContactTrace,
    /// Profiles as declared; trace nodes without one get an all-zero vector.
    pub profiles: ProfileSet,
    pub n_categories: usize,
    pub router: RouterConfig,
    pub schedule: MessageSchedule,
    pub track_final_destination: bool,
    pub seed: u64,
}

impl Scenario {
    pub fn new(trace: ContactTrace, profiles: ProfileSet, schedule: MessageSchedule) -> Self {
        Scenario {
            trace,
            n_categories: profiles.n_categories(),
            profiles,
            router: RouterConfig::default(),
            schedule,
            track_final_destination: false,
            seed: 0,
        }
    }

    /// Every node in the trace or the profile set.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        let mut nodes = self.trace.nodes();
        nodes.extend(self.profiles.nodes());
        nodes
    }

    /// Declared profiles plus zero vectors for unprofiled trace nodes.
    pub fn effective_profiles(&self) -> ProfileSet {
        let mut p = self.profiles.clone();
        p.fill_missing(self.trace.nodes());
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleWarning {
    EmptySchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub events: Vec<CreationEvent>,
    pub warnings: Vec<ScheduleWarning>,
}

pub fn build_schedule(scenario: &Scenario) -> Result<Schedule, SimError> {
    let n = scenario.n_categories;
    let duration = scenario.trace.duration;
    let events = match &scenario.schedule {
        MessageSchedule::Explicit(events) => events.clone(),
        MessageSchedule::Generated { count, start, interval, category_rule } => {
            let sources: Vec<NodeId> = scenario.profiles.nodes().collect();
            if *count > 0 && sources.is_empty() {
                return Err(SimError::NoSourceCandidates);
            }
            let step = interval.unwrap_or((duration - start) / *count.max(&1) as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(SCHEDULE_STREAM);
            (0..*count)
                .map(|i| {
                    let source = sources[rng.gen_range(0..sources.len())];
                    let category = match category_rule {
                        CategoryRule::Uniform => Category(rng.gen_range(1..=n.max(1)) as u32),
                        CategoryRule::Fixed(c) => *c,
                    };
                    CreationEvent { time: start + i as f64 * step, source, category }
                })
                .collect()
        }
    };
    let nodes = scenario.nodes();
    for e in &events {
        if !(e.time >= 0.0 && e.time <= duration) {
            return Err(SimError::CreationOutOfRange { time: e.time, duration });
        }
        if e.category.0 == 0 || e.category.0 as usize > n {
            return Err(SimError::CategoryOutOfRange { category: e.category.0, n });
        }
        if !nodes.contains(&e.source) {
            return Err(SimError::UnknownSource(e.source));
        }
    }
    let warnings = if events.is_empty() { vec![ScheduleWarning::EmptySchedule] } else { vec![] };
    Ok(Schedule { events, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub message_id: MessageId,
    pub source: NodeId,
    pub category: Category,
    pub created_at: f64,
    pub group_size: usize,
    pub group_delivered_at: Option<f64>,
    pub first_receiver: Option<NodeId>,
    pub hops_at_delivery: Option<usize>,
    pub final_delivered_at: Option<f64>,
    pub forwards_total: usize,
}

impl DeliveryRecord {
    pub fn delivered(&self) -> bool {
        self.group_delivered_at.is_some()
    }

    pub fn delay(&self) -> Option<f64> {
        self.group_delivered_at.map(|t| t - self.created_at)
    }
}

/// A node taking in a copy of a message from a peer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receipt {
    pub message: MessageId,
    pub node: NodeId,
    pub from: NodeId,
    pub time: f64,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Created { time: f64, message: MessageId, node: NodeId },
    Forwarded { time: f64, message: MessageId, from: NodeId, to: NodeId },
    Dropped { time: f64, message: MessageId, node: NodeId },
    Expired { time: f64, message: MessageId, node: NodeId },
    Closed { time: f64, a: NodeId, b: NodeId },
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEntry::Created { time, message, node } => write!(f, "{time} create m{message} at {node}"),
            LogEntry::Forwarded { time, message, from, to } => {
                write!(f, "{time} forward m{message} {from}->{to}")
            }
            LogEntry::Dropped { time, message, node } => write!(f, "{time} drop m{message} at {node}"),
            LogEntry::Expired { time, message, node } => write!(f, "{time} expire m{message} at {node}"),
            LogEntry::Closed { time, a, b } => write!(f, "{time} close {a}-{b}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub contacts_processed: usize,
    pub messages_created: usize,
    pub forwards: usize,
    pub drops: usize,
    pub closes: usize,
    pub expired: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub members: Arc<BTreeSet<NodeId>>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub records: Vec<DeliveryRecord>,
    /// Tracked final destination of each message, indexed like `records`.
    pub final_destinations: Vec<Option<NodeId>>,
    pub receipts: Vec<Receipt>,
    pub log: Vec<LogEntry>,
    pub counts: EventCounts,
    /// Destination group of every category, resolved once before replay.
    pub groups: BTreeMap<Category, Group>,
    pub clustering: Option<Clustering>,
    pub node_count: usize,
    pub router: RouterConfig,
    pub seed: u64,
    pub warnings: Vec<ScheduleWarning>,
}

/// Resolves the destination group of every category. In `kmeans` mode the
/// cluster count is capped at the number of distinct interest vectors.
pub fn resolve_groups(
    scenario: &Scenario,
) -> Result<(BTreeMap<Category, Group>, Option<Clustering>), SimError> {
    let profiles = scenario.effective_profiles();
    let n = scenario.n_categories;
    let categories = (1..=n as u32).map(Category);
    match scenario.router.kind {
        RouterKind::Cluster { mode: GroupMode::Kmeans, .. } if !profiles.is_empty() => {
            let distinct = profiles.iter().map(|(_, v)| v).collect::<HashSet<_>>().len();
            let k = scenario.router.k_clusters.unwrap_or(n).min(distinct);
            let clustering = kmeans(&profiles, k, scenario.seed, scenario.router.max_iter)?;
            let mut groups = BTreeMap::new();
            for c in categories {
                let g = resolve_group_kmeans(&clustering, &profiles, c, scenario.router.threshold)?;
                groups.insert(c, Group { members: Arc::new(g.members), fallback: g.fallback });
            }
            Ok((groups, Some(clustering)))
        }
        _ => {
            let mut groups = BTreeMap::new();
            for c in categories {
                let members = clustering::resolve_group_exact(&profiles, c)?;
                groups.insert(c, Group { members: Arc::new(members), fallback: false });
            }
            Ok((groups, None))
        }
    }
}

fn check_router(router: &RouterConfig) -> Result<(), SimError> {
    if !(router.threshold > 0.0 && router.threshold <= 1.0) {
        return Err(SimError::InvalidRouterConfig("threshold"));
    }
    if router.k_clusters == Some(0) {
        return Err(SimError::InvalidRouterConfig("k_clusters"));
    }
    if router.max_iter == 0 {
        return Err(SimError::InvalidRouterConfig("max_iter"));
    }
    if router.ttl.is_some_and(|t| !(t > 0.0)) {
        return Err(SimError::InvalidRouterConfig("ttl"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    ContactEnd,
    Creation,
    ContactStart,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    a: NodeId,
    b: NodeId,
    /// Index into the schedule for creations.
    index: usize,
}

fn event_stream(trace: &ContactTrace, schedule: &[CreationEvent]) -> Vec<Event> {
    let mut events = Vec::with_capacity(trace.events.len() * 2 + schedule.len());
    for c in &trace.events {
        events.push(Event { time: c.t_start, kind: EventKind::ContactStart, a: c.a, b: c.b, index: 0 });
        events.push(Event { time: c.t_end, kind: EventKind::ContactEnd, a: c.a, b: c.b, index: 0 });
    }
    for (index, c) in schedule.iter().enumerate() {
        events.push(Event { time: c.time, kind: EventKind::Creation, a: c.source, b: c.source, index });
    }
    events.sort_by(|x, y| {
        x.time
            .partial_cmp(&y.time)
            .expect("finite times")
            .then(x.kind.cmp(&y.kind))
            .then((x.a, x.b, x.index).cmp(&(y.a, y.b, y.index)))
    });
    events
}

struct NodeState {
    buffer: Buffer,
    /// Every message id this node has ever held.
    seen: HashSet<MessageId>,
    open: BTreeSet<NodeId>,
}

#[derive(Default)]
struct ContactState {
    closed: bool,
    transfers: usize,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

struct Engine<'a> {
    router: &'a RouterConfig,
    nodes: HashMap<NodeId, NodeState>,
    contacts: HashMap<(NodeId, NodeId), ContactState>,
    pending: VecDeque<(NodeId, NodeId)>,
    queued: HashSet<(NodeId, NodeId)>,
    records: Vec<DeliveryRecord>,
    receipts: Vec<Receipt>,
    log: Vec<LogEntry>,
    counts: EventCounts,
}

impl Engine<'_> {
    fn node(&mut self, id: NodeId) -> &mut NodeState {
        let capacity = self.router.buffer_capacity;
        self.nodes.entry(id).or_insert_with(|| NodeState {
            buffer: capacity.map_or_else(Buffer::unlimited, Buffer::new),
            seen: HashSet::new(),
            open: BTreeSet::new(),
        })
    }

    fn store(&mut self, node: NodeId, message: Message, now: f64) {
        let state = self.node(node);
        state.seen.insert(message.id);
        let evicted = state.buffer.insert(message, now).expect("seen-set excludes duplicates");
        for m in evicted {
            self.counts.drops += 1;
            self.log.push(LogEntry::Dropped { time: now, message: m.id, node });
        }
    }

    /// Queues every open contact of `node` for another exchange.
    fn wake(&mut self, node: NodeId) {
        let peers: Vec<NodeId> = self.node(node).open.iter().copied().collect();
        for peer in peers {
            let key = pair(node, peer);
            if self.queued.insert(key) {
                self.pending.push_back(key);
            }
        }
    }

    fn drain(&mut self, now: f64) {
        while let Some((a, b)) = self.pending.pop_front() {
            self.queued.remove(&(a, b));
            self.exchange(a, b, now);
        }
    }

    fn create(&mut self, message: Message, now: f64) {
        let idx = message.id.0 as usize;
        let source = message.source;
        self.counts.messages_created += 1;
        self.log.push(LogEntry::Created { time: now, message: message.id, node: source });
        let record = &mut self.records[idx];
        if message.destination_group.contains(&source) {
            record.group_delivered_at = Some(now);
            record.first_receiver = Some(source);
            record.hops_at_delivery = Some(0);
        }
        if message.final_destination == Some(source) {
            record.final_delivered_at = Some(now);
        }
        self.store(source, message, now);
        self.wake(source);
        self.drain(now);
    }

    fn exchange(&mut self, a: NodeId, b: NodeId, now: f64) {
        for (from, to) in [(a, b), (b, a)] {
            let offered: Vec<Message> = self
                .node(from)
                .buffer
                .entries()
                .iter()
                .map(|e| e.message.clone())
                .collect();
            for message in offered {
                let contact = self.contacts.get(&pair(a, b)).expect("exchange on an open contact");
                if contact.closed {
                    return;
                }
                if self
                    .router
                    .max_transfers_per_contact
                    .is_some_and(|cap| contact.transfers >= cap)
                {
                    return;
                }
                let peer_has = self.node(to).seen.contains(&message.id);
                match self.router.kind.decide(from, to, &message, peer_has) {
                    ForwardDecision::Forward => {
                        self.contacts.get_mut(&pair(a, b)).expect("open contact").transfers += 1;
                        self.transfer(&message, from, to, now);
                    }
                    ForwardDecision::CloseConnection => {
                        self.contacts.get_mut(&pair(a, b)).expect("open contact").closed = true;
                        self.counts.closes += 1;
                        self.log.push(LogEntry::Closed { time: now, a, b });
                        return;
                    }
                    ForwardDecision::Skip | ForwardDecision::Noop => {}
                }
            }
        }
    }

    fn transfer(&mut self, message: &Message, from: NodeId, to: NodeId, now: f64) {
        let copy = message.copy_for(to);
        let hops = copy.hop_count();
        self.counts.forwards += 1;
        self.log.push(LogEntry::Forwarded { time: now, message: message.id, from, to });
        self.receipts.push(Receipt { message: message.id, node: to, from, time: now, hops });

        let record = &mut self.records[message.id.0 as usize];
        record.forwards_total += 1;
        if record.group_delivered_at.is_none() && message.destination_group.contains(&to) {
            record.group_delivered_at = Some(now);
            record.first_receiver = Some(to);
            record.hops_at_delivery = Some(hops);
        }
        if record.final_delivered_at.is_none() && message.final_destination == Some(to) {
            record.final_delivered_at = Some(now);
        }
        self.store(to, copy, now);
        self.wake(to);
    }

    fn expire(&mut self, now: f64) {
        let Some(ttl) = self.router.ttl else { return };
        let mut ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            let gone = self.node(id).buffer.purge(|m| m.created_at + ttl <= now);
            for m in gone {
                self.counts.expired += 1;
                self.log.push(LogEntry::Expired { time: now, message: m.id, node: id });
            }
        }
    }
}

pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    if scenario.n_categories == 0 {
        return Err(SimError::NoCategories);
    }
    if scenario.profiles.n_categories() != scenario.n_categories {
        return Err(SimError::CategoryMismatch {
            profiles: scenario.profiles.n_categories(),
            scenario: scenario.n_categories,
        });
    }
    check_router(&scenario.router)?;
    let schedule = build_schedule(scenario)?;
    let (groups, clustering) = resolve_groups(scenario)?;

    let mut destination_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    destination_rng.set_stream(DESTINATION_STREAM);
    let mut messages = Vec::with_capacity(schedule.events.len());
    for (i, c) in schedule.events.iter().enumerate() {
        let group = Arc::clone(&groups[&c.category].members);
        let final_destination = if scenario.track_final_destination && !group.is_empty() {
            group.iter().nth(destination_rng.gen_range(0..group.len())).copied()
        } else {
            None
        };
        messages.push(Message::new(MessageId(i as u64), c.source, c.category, c.time, group, final_destination)?);
    }

    let mut engine = Engine {
        router: &scenario.router,
        nodes: HashMap::new(),
        contacts: HashMap::new(),
        pending: VecDeque::new(),
        queued: HashSet::new(),
        records: messages
            .iter()
            .map(|m| DeliveryRecord {
                message_id: m.id,
                source: m.source,
                category: m.category,
                created_at: m.created_at,
                group_size: m.destination_group.len(),
                group_delivered_at: None,
                first_receiver: None,
                hops_at_delivery: None,
                final_delivered_at: None,
                forwards_total: 0,
            })
            .collect(),
        receipts: Vec::new(),
        log: Vec::new(),
        counts: EventCounts::default(),
    };
    for node in scenario.nodes() {
        engine.node(node);
    }

    let final_destinations = messages.iter().map(|m| m.final_destination).collect();
    let mut messages: Vec<Option<Message>> = messages.into_iter().map(Some).collect();
    for event in event_stream(&scenario.trace, &schedule.events) {
        engine.expire(event.time);
        match event.kind {
            EventKind::ContactEnd => {
                engine.contacts.remove(&(event.a, event.b));
                engine.node(event.a).open.remove(&event.b);
                engine.node(event.b).open.remove(&event.a);
            }
            EventKind::Creation => {
                let message = messages[event.index].take().expect("each message is created once");
                engine.create(message, event.time);
            }
            EventKind::ContactStart => {
                engine.counts.contacts_processed += 1;
                engine.contacts.insert((event.a, event.b), ContactState::default());
                engine.node(event.a).open.insert(event.b);
                engine.node(event.b).open.insert(event.a);
                engine.queued.insert((event.a, event.b));
                engine.pending.push_back((event.a, event.b));
                engine.drain(event.time);
            }
        }
    }

    Ok(SimResult {
        records: engine.records,
        final_destinations,
        receipts: engine.receipts,
        log: engine.log,
        counts: engine.counts,
        groups,
        clustering,
        node_count: scenario.nodes().len(),
        router: scenario.router.clone(),
        seed: scenario.seed,
        warnings: schedule.warnings,
    })
}
