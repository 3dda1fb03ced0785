//! Directed communication topology.
//!
//! An edge `(j, i)` means node `i` sends to node `j`. Self links are implicit
//! in every update rule and are never stored.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_nb: Vec<Vec<usize>>,
    out_nb: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    pub in_neighbors: Vec<Vec<usize>>,
    pub out_neighbors: Vec<Vec<usize>>,
    pub out_degree: Vec<usize>,
}

impl DiGraph {
    /// Builds a graph from `(j, i)` pairs, each meaning `i -> j`. Duplicates collapse.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            for node in [j, i] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            set.insert((j, i));
        }
        let mut in_nb = vec![Vec::new(); n];
        let mut out_nb = vec![Vec::new(); n];
        for &(j, i) in &set {
            in_nb[j].push(i);
            out_nb[i].push(j);
        }
        for v in in_nb.iter_mut().chain(out_nb.iter_mut()) {
            v.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            in_nb,
            out_nb,
        })
    }

    /// Builds a graph from `(from, to)` links.
    pub fn from_links(n: usize, links: &[(usize, usize)]) -> Result<Self> {
        Self::new(n, links.iter().map(|&(from, to)| (to, from)))
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(n, []);
        }
        Self::new(n, (0..n).map(|i| ((i + 1) % n, i)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored `(j, i)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True when `from` sends to `to`.
    pub fn has_link(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(to, from))
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nb[i]
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nb[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_nb[i].len()
    }

    /// Parses the edge-list format: first line `n`, then `j i` per line for `i -> j`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| Error::GraphParse {
                    line: lineno,
                    msg: format!("bad integer {s:?}: {e}"),
                })
            };
            match (n, fields.as_slice()) {
                (None, [count]) => n = Some(parse(count)?),
                (None, _) => {
                    return Err(Error::GraphParse {
                        line: lineno,
                        msg: "expected the node count".into(),
                    })
                }
                (Some(_), [j, i]) => edges.push((parse(j)?, parse(i)?)),
                (Some(_), _) => {
                    return Err(Error::GraphParse {
                        line: lineno,
                        msg: "expected two node indices".into(),
                    })
                }
            }
        }
        let n = n.ok_or(Error::GraphParse {
            line: 0,
            msg: "empty edge list".into(),
        })?;
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (j, i) in self.edges() {
            let _ = writeln!(s, "{j} {i}");
        }
        s
    }
}

pub fn neighbor_sets(g: &DiGraph) -> NeighborSets {
    NeighborSets {
        in_neighbors: g.in_nb.clone(),
        out_neighbors: g.out_nb.clone(),
        out_degree: g.out_nb.iter().map(Vec::len).collect(),
    }
}

fn reach_all(n: usize, adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

pub fn is_strongly_connected(g: &DiGraph) -> bool {
    reach_all(g.n, &g.out_nb) && reach_all(g.n, &g.in_nb)
}

/// Longest shortest path from any node to `target`, or `None` if some node cannot reach it.
pub fn in_eccentricity(g: &DiGraph, target: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; g.n];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(v) = queue.pop_front() {
        for &w in &g.in_nb[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist.iter().copied().try_fold(0, |acc, d| (d != usize::MAX).then(|| acc.max(d)))
}

/// Random Hamiltonian cycle plus each remaining ordered pair with probability `extra_edge_prob`.
pub fn random_strongly_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Result<DiGraph> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if !(0.0..=1.0).contains(&extra_edge_prob) {
        return Err(Error::InvalidArgument(format!(
            "edge probability {extra_edge_prob} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    if n > 1 {
        for k in 0..n {
            edges.insert((order[(k + 1) % n], order[k]));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !edges.contains(&(j, i)) && rng.random_bool(extra_edge_prob) {
                edges.insert((j, i));
            }
        }
    }
    DiGraph::new(n, edges)
}
