//! Undirected spatial graph and its summary metrics.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};

/// Undirected simple graph over spatial units.
///
/// Nodes are addressed by their position in [`SpatialGraph::ids`]; every
/// other module (thresholds, states, durations) uses the same ordering.
/// Neighbor lists are sorted and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl SpatialGraph {
    /// Builds a graph from node ids and index pairs.
    ///
    /// Rejects duplicate ids, out-of-range endpoints, self-loops and
    /// duplicate edges (in either orientation).
    pub fn from_index_edges(ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let n = ids.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            for endpoint in [u, v] {
                if endpoint >= n {
                    return Err(Error::UnknownEndpoint {
                        src: u.to_string(),
                        dst: v.to_string(),
                        missing: endpoint.to_string(),
                    });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(ids[u].clone()));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge(ids[u].clone(), ids[v].clone()));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            ids,
            index,
            adjacency,
            edge_count: seen.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Sorted neighbor indices of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Edges as index pairs `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Edges as unordered id pairs, each stored with the smaller id first.
    pub fn edge_id_pairs(&self) -> BTreeSet<(String, String)> {
        self.edges()
            .map(|(u, v)| {
                let (a, b) = (self.ids[u].clone(), self.ids[v].clone());
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut visited = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.len()
    }
}

/// Builds a graph from string ids and an undirected id-pair edge list.
pub fn load_edge_list<S: AsRef<str>>(node_ids: &[S], edges: &[(S, S)]) -> Result<SpatialGraph> {
    let ids: Vec<String> = node_ids.iter().map(|s| s.as_ref().to_owned()).collect();
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut pairs = Vec::with_capacity(edges.len());
    let mut seen = BTreeSet::new();
    for (src, dst) in edges {
        let (src, dst) = (src.as_ref(), dst.as_ref());
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::UnknownEndpoint {
                src: src.to_owned(),
                dst: dst.to_owned(),
                missing: id.to_owned(),
            })
        };
        let (u, v) = (lookup(src)?, lookup(dst)?);
        if u == v {
            return Err(Error::SelfLoop(src.to_owned()));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(Error::DuplicateEdge(src.to_owned(), dst.to_owned()));
        }
        pairs.push((u, v));
    }
    SpatialGraph::from_index_edges(ids, &pairs)
}

/// Size, average degree, density and degree histogram of a graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphMetrics {
    pub n: usize,
    pub m: usize,
    pub avg_degree: f64,
    pub density: f64,
    /// `degree_histogram[k]` is the number of nodes with degree `k`.
    pub degree_histogram: Vec<usize>,
}

/// Average degree `2m / n`.
pub fn average_degree(n: usize, m: usize) -> f64 {
    2.0 * m as f64 / n as f64
}

/// Undirected density `2m / (n (n - 1))`, defined as 0 for a single node.
pub fn density(n: usize, m: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        2.0 * m as f64 / (n as f64 * (n as f64 - 1.0))
    }
}

pub fn graph_metrics(g: &SpatialGraph) -> Result<GraphMetrics> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = g.len();
    let m = g.edge_count();
    let max_degree = (0..n).map(|v| g.degree(v)).max().unwrap_or(0);
    let mut degree_histogram = vec![0; max_degree + 1];
    for v in 0..n {
        degree_histogram[g.degree(v)] += 1;
    }
    Ok(GraphMetrics {
        n,
        m,
        avg_degree: average_degree(n, m),
        density: density(n, m),
        degree_histogram,
    })
}
