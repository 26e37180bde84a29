//! Interest groups: K-means over binary interest vectors and resolution of
//! the destination group for a message category.
//!
//! The K-means loop is plain Lloyd iteration. Initial centroids are `k`
//! distinct interest vectors drawn without replacement by a seeded
//! generator, scanning points in ascending node order. Each pass assigns
//! every point to its nearest centroid (lowest cluster index on ties),
//! repairs empty clusters, then recomputes centroids as member means. The
//! loop stops when a pass changes no assignment or `max_iter` passes ran.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::routing::Category;
use crate::trace_model::{NodeId, ProfileSet};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("vectors of length {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
    #[error("point {0} has no cluster assignment")]
    UnassignedPoint(NodeId),
    #[error("k = {k} exceeds the {distinct} distinct interest vectors")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("no points to cluster")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("category {category} outside 1..={n}")]
    CategoryOutOfRange { category: u32, n: usize },
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
}

/// Binary interest vector; component `i` is category `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterestVector(Vec<bool>);

impl InterestVector {
    pub fn new(bits: Vec<bool>) -> Self {
        InterestVector(bits)
    }

    pub fn zeros(n: usize) -> Self {
        InterestVector(vec![false; n])
    }

    /// Vector with only `category` set.
    pub fn one_hot(n: usize, category: Category) -> Self {
        let mut bits = vec![false; n];
        bits[category.index()] = true;
        InterestVector(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Panics when `category` is outside the vector.
    pub fn has(&self, category: Category) -> bool {
        self.0[category.index()]
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn shares_interest(&self, other: &InterestVector) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| *a && *b)
    }

    pub fn resized(&self, n: usize) -> InterestVector {
        let mut bits = self.0.clone();
        bits.resize(n, false);
        InterestVector(bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid(Vec<f64>);

impl Centroid {
    pub fn new(components: Vec<f64>) -> Self {
        Centroid(components)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

impl From<&InterestVector> for Centroid {
    fn from(v: &InterestVector) -> Self {
        Centroid(v.bits().map(|b| if b { 1.0 } else { 0.0 }).collect())
    }
}

/// Anything that can be measured against a centroid.
pub trait Coordinates {
    fn dim(&self) -> usize;
    fn coord(&self, i: usize) -> f64;
}

impl Coordinates for InterestVector {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn coord(&self, i: usize) -> f64 {
        if self.0[i] {
            1.0
        } else {
            0.0
        }
    }
}

impl Coordinates for Centroid {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn coord(&self, i: usize) -> f64 {
        self.0[i]
    }
}

pub fn squared_distance<P: Coordinates + ?Sized>(p: &P, q: &Centroid) -> Result<f64, ClusterError> {
    if p.dim() != q.dim() {
        return Err(ClusterError::LengthMismatch(p.dim(), q.dim()));
    }
    Ok(sq_dist(p, q))
}

fn sq_dist<P: Coordinates + ?Sized>(p: &P, q: &Centroid) -> f64 {
    q.0.iter()
        .enumerate()
        .map(|(i, m)| {
            let d = p.coord(i) - m;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Centroid>,
    pub assignment: BTreeMap<NodeId, usize>,
    pub iterations_used: usize,
    /// Objective after each pass, evaluated with the recomputed centroids.
    pub sse_history: Vec<f64>,
    pub converged: bool,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<NodeId> {
        self.assignment
            .iter()
            .filter(|(_, c)| **c == cluster)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn final_sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }

    /// `cluster_idx: centroid_components | member_ids`, one line per cluster.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (idx, centroid) in self.centroids.iter().enumerate() {
            let comps: Vec<String> = centroid.0.iter().map(|c| format!("{c:.6}")).collect();
            let members: Vec<String> = self.members(idx).iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{idx}: {} | {}", comps.join(" "), members.join(" "));
        }
        out
    }
}

/// Sum of squared distances of every point to its assigned centroid.
pub fn sse(points: &ProfileSet, clustering: &Clustering) -> Result<f64, ClusterError> {
    let mut total = 0.0;
    for (node, v) in points.iter() {
        let idx = *clustering
            .assignment
            .get(&node)
            .ok_or(ClusterError::UnassignedPoint(node))?;
        total += squared_distance(v, &clustering.centroids[idx])?;
    }
    Ok(total)
}

pub fn kmeans(points: &ProfileSet, k: usize, seed: u64, max_iter: usize) -> Result<Clustering, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::InvalidK);
    }
    if max_iter == 0 {
        return Err(ClusterError::InvalidMaxIter);
    }
    let (ids, data): (Vec<NodeId>, Vec<&InterestVector>) = points.iter().unzip();

    let mut seen = HashMap::new();
    let distinct: Vec<usize> = data
        .iter()
        .enumerate()
        .filter(|(i, v)| *seen.entry(**v).or_insert(*i) == *i)
        .map(|(i, _)| i)
        .collect();
    if distinct.len() < k {
        return Err(ClusterError::TooFewDistinctPoints { k, distinct: distinct.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, distinct.len(), k).into_vec();
    chosen.sort_unstable();
    let mut centroids: Vec<Centroid> =
        chosen.iter().map(|&i| Centroid::from(data[distinct[i]])).collect();

    let mut assignment: Vec<usize> = Vec::new();
    let mut sse_history = Vec::new();
    let mut iterations_used = 0;
    let mut converged = false;
    while iterations_used < max_iter {
        iterations_used += 1;
        let mut next: Vec<usize> = data.iter().map(|v| nearest(*v, &centroids)).collect();
        if next == assignment {
            converged = true;
        } else {
            repair_empty(&data, &mut next, k);
        }
        centroids = means(&data, &next, k);
        sse_history.push(
            data.iter()
                .zip(&next)
                .map(|(v, &c)| sq_dist(*v, &centroids[c]))
                .sum(),
        );
        assignment = next;
        if converged {
            break;
        }
    }

    Ok(Clustering {
        k,
        centroids,
        assignment: ids.into_iter().zip(assignment).collect(),
        iterations_used,
        sse_history,
        converged,
    })
}

fn nearest(v: &InterestVector, centroids: &[Centroid]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (idx, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (idx, d);
        }
    }
    best.0
}

fn means(data: &[&InterestVector], assignment: &[usize], k: usize) -> Vec<Centroid> {
    let dim = data[0].len();
    let mut ones = vec![vec![0usize; dim]; k];
    let mut sizes = vec![0usize; k];
    for (v, &c) in data.iter().zip(assignment) {
        sizes[c] += 1;
        for (acc, bit) in ones[c].iter_mut().zip(v.bits()) {
            *acc += bit as usize;
        }
    }
    ones.into_iter()
        .zip(sizes)
        .map(|(counts, size)| {
            Centroid(counts.into_iter().map(|c| c as f64 / size.max(1) as f64).collect())
        })
        .collect()
}

/// Moves the point farthest from its own cluster mean into each empty
/// cluster, lowest empty index first. With at least `k` distinct vectors a
/// point at positive distance always exists while a cluster is empty.
fn repair_empty(data: &[&InterestVector], assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let centroids = means(data, assignment, k);
        let mut far = (usize::MAX, 0.0);
        for (i, v) in data.iter().enumerate() {
            let d = sq_dist(*v, &centroids[assignment[i]]);
            if d > far.1 {
                far = (i, d);
            }
        }
        assert!(far.0 != usize::MAX, "empty cluster with every point on its centroid");
        assignment[far.0] = empty;
    }
}

fn check_category(category: Category, n: usize) -> Result<(), ClusterError> {
    if category.0 == 0 || category.0 as usize > n {
        return Err(ClusterError::CategoryOutOfRange { category: category.0, n });
    }
    Ok(())
}

/// Nodes whose interest bit for `category` is set.
pub fn resolve_group_exact(profiles: &ProfileSet, category: Category) -> Result<BTreeSet<NodeId>, ClusterError> {
    check_category(category, profiles.n_categories())?;
    Ok(profiles
        .iter()
        .filter(|(_, v)| v.has(category))
        .map(|(n, _)| n)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupResolution {
    pub members: BTreeSet<NodeId>,
    /// The centroid rule selected no node and the exact filter was used.
    pub fallback: bool,
}

/// Union of every cluster whose centroid component for `category` reaches
/// `threshold`, falling back to the exact filter when that union is empty.
pub fn resolve_group_kmeans(
    clustering: &Clustering,
    profiles: &ProfileSet,
    category: Category,
    threshold: f64,
) -> Result<GroupResolution, ClusterError> {
    check_category(category, profiles.n_categories())?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ClusterError::InvalidThreshold(threshold));
    }
    let selected: Vec<bool> = clustering
        .centroids
        .iter()
        .map(|c| c.0.get(category.index()).is_some_and(|m| *m >= threshold))
        .collect();
    let members: BTreeSet<NodeId> = clustering
        .assignment
        .iter()
        .filter(|(_, c)| selected[**c])
        .map(|(n, _)| *n)
        .collect();
    if members.is_empty() {
        return Ok(GroupResolution {
            members: resolve_group_exact(profiles, category)?,
            fallback: true,
        });
    }
    Ok(GroupResolution { members, fallback: false })
}
