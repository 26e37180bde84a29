//! Deterministic, trace-driven simulation of interest-group message
//! dissemination in delay tolerant networks.
//!
//! Nodes carry binary interest vectors. Messages are classified into one
//! interest category and routed toward the group of nodes interested in
//! that category, either by exact filtering of the interest bits or by
//! K-means clusters over the interest vectors. Contacts come from a replayed
//! (or synthetic) contact trace.

pub mod clustering;
pub mod metrics;
pub mod routing;
pub mod sim_engine;
pub mod trace_model;

pub use clustering::{Centroid, Clustering, InterestVector};
pub use routing::{Category, ForwardDecision, Message, MessageId};
pub use sim_engine::{Scenario, SimResult};
pub use trace_model::{ContactEvent, ContactTrace, InterestProfile, NodeId, ProfileSet};
