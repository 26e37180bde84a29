//! Messages, node buffers and forwarding decisions.

use std::collections::BTreeSet;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use thiserror::Error;

use crate::trace_model::NodeId;

pub const DEFAULT_BUFFER_CAPACITY: usize = 50;

/// Interest category, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category(pub u32);

impl Category {
    /// Zero-based position inside an interest vector.
    pub fn index(self) -> usize {
        (self.0 as usize)
            .checked_sub(1)
            .expect("categories are 1-based")
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("category {category} outside 1..={n}")]
    CategoryOutOfRange { category: u32, n: usize },
    #[error("message {0} already buffered")]
    DuplicateMessage(MessageId),
    #[error("final destination {0} is not in the destination group")]
    DestinationOutsideGroup(NodeId),
}

/// One copy of a message as held by a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub source: NodeId,
    pub category: Category,
    pub created_at: f64,
    pub destination_group: Arc<BTreeSet<NodeId>>,
    pub final_destination: Option<NodeId>,
    /// Nodes this copy went through, starting at the source.
    pub path: Vec<NodeId>,
}

impl Message {
    pub fn new(
        id: MessageId,
        source: NodeId,
        category: Category,
        created_at: f64,
        destination_group: Arc<BTreeSet<NodeId>>,
        final_destination: Option<NodeId>,
    ) -> Result<Self, RoutingError> {
        if let Some(dest) = final_destination {
            if !destination_group.contains(&dest) {
                return Err(RoutingError::DestinationOutsideGroup(dest));
            }
        }
        Ok(Message {
            id,
            source,
            category,
            created_at,
            destination_group,
            final_destination,
            path: vec![source],
        })
    }

    pub fn hop_count(&self) -> usize {
        self.path.len() - 1
    }

    /// The copy handed to `peer`.
    pub fn copy_for(&self, peer: NodeId) -> Message {
        let mut copy = self.clone();
        copy.path.push(peer);
        copy
    }
}

/// Returns the name of category `k` (1-based) as the message classification.
pub fn classify_message(categories: &[String], k: Category) -> Result<&str, RoutingError> {
    if k.0 == 0 || k.0 as usize > categories.len() {
        return Err(RoutingError::CategoryOutOfRange { category: k.0, n: categories.len() });
    }
    Ok(&categories[k.index()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub message: Message,
    pub received_at: f64,
}

/// Per-node message store with Drop Oldest eviction. Entries are kept in
/// ascending `(received_at, message id)`, which is both the eviction order
/// and the order messages are offered to peers.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    entries: Vec<BufferEntry>,
    capacity: Option<NonZeroUsize>,
}

impl Buffer {
    pub fn new(capacity: NonZeroUsize) -> Self {
        Buffer { entries: Vec::new(), capacity: Some(capacity) }
    }

    pub fn unlimited() -> Self {
        Buffer { entries: Vec::new(), capacity: None }
    }

    pub fn capacity(&self) -> Option<NonZeroUsize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: MessageId) -> bool {
        self.entries.iter().any(|e| e.message.id == id)
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    /// Stores `message` received at `now` and evicts the oldest-received
    /// entries (smaller id first on ties) while over capacity. Evicted
    /// messages are returned in eviction order; this can include the message
    /// just inserted.
    pub fn insert(&mut self, message: Message, now: f64) -> Result<Vec<Message>, RoutingError> {
        if self.contains(message.id) {
            return Err(RoutingError::DuplicateMessage(message.id));
        }
        let key = (now, message.id);
        let pos = self
            .entries
            .partition_point(|e| (e.received_at, e.message.id) < key);
        self.entries.insert(pos, BufferEntry { message, received_at: now });

        let mut evicted = Vec::new();
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap.get() {
                evicted.push(self.entries.remove(0).message);
            }
        }
        Ok(evicted)
    }

    /// Drops every entry matching `expired`, returning them in buffer order.
    pub fn purge(&mut self, mut expired: impl FnMut(&Message) -> bool) -> Vec<Message> {
        let (gone, kept) = std::mem::take(&mut self.entries)
            .into_iter()
            .partition(|e| expired(&e.message));
        self.entries = kept;
        gone.into_iter().map(|e: BufferEntry| e.message).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    Skip,
    CloseConnection,
    Noop,
}

/// Forward only to members of the message's group. A non-member peer is
/// skipped for this message, or ends the whole contact when `strict`.
pub fn interest_cluster_transfer(
    group: &BTreeSet<NodeId>,
    _carrier: NodeId,
    peer: NodeId,
    _message: &Message,
    peer_has_message: bool,
    strict: bool,
) -> ForwardDecision {
    if peer_has_message {
        ForwardDecision::Noop
    } else if group.contains(&peer) {
        ForwardDecision::Forward
    } else if strict {
        ForwardDecision::CloseConnection
    } else {
        ForwardDecision::Skip
    }
}

pub fn epidemic_decide(
    _carrier: NodeId,
    peer: NodeId,
    message: &Message,
    peer_has_message: bool,
) -> ForwardDecision {
    if peer_has_message || peer == message.source {
        ForwardDecision::Noop
    } else {
        ForwardDecision::Forward
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupMode {
    Exact,
    Kmeans,
}

impl fmt::Display for GroupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupMode::Exact => "exact",
            GroupMode::Kmeans => "kmeans",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouterKind {
    Cluster { mode: GroupMode, strict: bool },
    Epidemic,
}

impl RouterKind {
    pub fn decide(&self, carrier: NodeId, peer: NodeId, message: &Message, peer_has_message: bool) -> ForwardDecision {
        match *self {
            RouterKind::Cluster { strict, .. } => interest_cluster_transfer(
                &message.destination_group,
                carrier,
                peer,
                message,
                peer_has_message,
                strict,
            ),
            RouterKind::Epidemic => epidemic_decide(carrier, peer, message, peer_has_message),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RouterKind::Cluster { .. } => "cluster",
            RouterKind::Epidemic => "epidemic",
        }
    }
}
