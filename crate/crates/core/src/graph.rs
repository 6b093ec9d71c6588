//! Undirected interaction topologies, Laplacians, neighbor sets and the Δ
//! cumulative-sum transformation.
//!
//! Agents are indexed from 0 in the API; the 1-indexed edge-list form used
//! in configuration files is handled by [`Topology::from_one_indexed`].

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::matcore::{kron, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Topology {
    agents: usize,
    /// Normalized so that `i < j`.
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    /// Builds a connected undirected topology. Self-loops, duplicate edges
    /// (in either orientation) and out-of-range indices are rejected.
    pub fn new(agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if agents < 2 {
            return Err(Error::Topology(format!(
                "need at least 2 agents, got {agents}"
            )));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= agents || j >= agents {
                return Err(Error::Topology(format!(
                    "edge ({i}, {j}) out of range for {agents} agents"
                )));
            }
            if i == j {
                return Err(Error::Topology(format!("self-loop at agent {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::Topology(format!("duplicate edge ({i}, {j})")));
            }
        }
        let topo = Topology { agents, edges: set };
        if !topo.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Same as [`Topology::new`] but with 1-indexed agent labels.
    pub fn from_one_indexed(agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == 0 || j == 0 {
                return Err(Error::Topology(format!(
                    "edge ({i}, {j}): agent labels are 1-indexed"
                )));
            }
            zero.push((i - 1, j - 1));
        }
        Self::new(agents, &zero)
    }

    pub fn line(agents: usize) -> Result<Self> {
        let edges: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        Self::new(agents, &edges)
    }

    pub fn ring(agents: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        if agents > 2 {
            edges.push((0, agents - 1));
        }
        Self::new(agents, &edges)
    }

    pub fn complete(agents: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..agents {
            for j in i + 1..agents {
                edges.push((i, j));
            }
        }
        Self::new(agents, &edges)
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> Result<BTreeSet<usize>> {
        if i >= self.agents {
            return Err(Error::Argument(format!(
                "agent {i} out of range for {} agents",
                self.agents
            )));
        }
        Ok(self
            .edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &self.edges {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Integer Laplacian D − C.
    pub fn laplacian_int(&self) -> Vec<Vec<i64>> {
        let mut l = vec![vec![0i64; self.agents]; self.agents];
        for &(i, j) in &self.edges {
            l[i][j] -= 1;
            l[j][i] -= 1;
            l[i][i] += 1;
            l[j][j] += 1;
        }
        l
    }

    pub fn laplacian(&self) -> Mat {
        let l = self.laplacian_int();
        Mat::from_fn(self.agents, self.agents, |i, j| l[i][j] as f64)
    }

    pub fn sparsity(&self) -> SparsityPattern {
        let n = self.agents;
        let allowed = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                i == j || self.has_edge(i, j)
            })
            .collect();
        SparsityPattern { blocks: n, allowed }
    }
}

/// Block positions a distributed gain may populate: the diagonal and the
/// edges of the topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    blocks: usize,
    allowed: Vec<bool>,
}

impl SparsityPattern {
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.blocks + j]
    }
}

/// Upper-triangular matrix of ones, `size × size`.
fn upper_ones(size: usize) -> Mat {
    Mat::from_fn(size, size, |i, j| if i <= j { 1.0 } else { 0.0 })
}

/// Δ_{nN} = Δ_{1N} ⊗ Iₙ: block upper triangular with every nonzero block Iₙ.
pub fn delta(n: usize, agents: usize) -> Mat {
    kron(&upper_ones(agents), &Mat::identity(n, n))
}
