//! Agent communication topology, its Laplacian, and the consensus mixing matrix.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Tolerance for the row/column sums of a mixing matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("a topology needs at least one agent")]
    NoAgents,
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    IndexOutOfRange(usize, usize, usize),
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("topology is disconnected; consensus cannot reach a single value")]
    Disconnected,
    #[error("unknown topology name `{0}` (expected ring, path, complete or star)")]
    UnknownName(alloc::string::String),
    #[error("mixing matrix is not doubly stochastic, symmetric and nonnegative")]
    NotDoublyStochastic,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
}

/// Undirected communication graph over `n_agents` vertices.
///
/// Edges are kept normalized as `(min, max)` pairs in a sorted set.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphTopology {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl GraphTopology {
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::NoAgents);
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n_agents || j >= n_agents {
                return Err(GraphError::IndexOutOfRange(i, j, n_agents));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n_agents, edges: set })
    }

    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = if n < 2 { Vec::new() } else { (0..n).map(|i| (i, (i + 1) % n)).collect() };
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    /// Star centred on agent 0.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn named(name: &str, n: usize) -> Result<Self, GraphError> {
        match name {
            "ring" => Self::ring(n),
            "path" => Self::path(n),
            "complete" => Self::complete(n),
            "star" => Self::star(n),
            other => Err(GraphError::UnknownName(other.into())),
        }
    }

    #[inline]
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_agents];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<i64>> {
        let mut a = vec![vec![0; self.n_agents]; self.n_agents];
        for &(i, j) in &self.edges {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        a
    }

    /// `L = D - A`, in exact integer arithmetic.
    pub fn laplacian(&self) -> Vec<Vec<i64>> {
        let mut l = self.adjacency();
        for (i, row) in l.iter_mut().enumerate() {
            let deg: i64 = row.iter().sum();
            for x in row.iter_mut() {
                *x = -*x;
            }
            row[i] = deg;
        }
        l
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n_agents];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n_agents
    }
}

/// Symmetric doubly stochastic weights supported on the graph plus the diagonal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixingMatrix {
    weights: Vec<Vec<f64>>,
}

impl MixingMatrix {
    /// Validates the invariants before wrapping.
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        let n = weights.len();
        if n == 0 {
            return Err(GraphError::NoAgents);
        }
        let ok_shape = weights.iter().all(|r| r.len() == n);
        if !ok_shape {
            return Err(GraphError::NotDoublyStochastic);
        }
        for i in 0..n {
            let row: f64 = weights[i].iter().sum();
            let col: f64 = weights.iter().map(|r| r[i]).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(GraphError::NotDoublyStochastic);
            }
            for j in 0..n {
                let w = weights[i][j];
                if !(w >= 0.0) || w != weights[j][i] {
                    return Err(GraphError::NotDoublyStochastic);
                }
            }
        }
        Ok(Self { weights })
    }

    /// All entries `1/n`: one application averages exactly.
    pub fn uniform(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoAgents);
        }
        Ok(Self { weights: vec![vec![1.0 / n as f64; n]; n] })
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![vec![0.0; n]; n];
        for (i, row) in weights.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { weights }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `out = W v`, combining agents in ascending index order.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(v).fold(0.0, |acc, (w, x)| acc + w * x))
            .collect()
    }
}

/// Metropolis–Hastings weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges,
/// the diagonal absorbs the remainder.
pub fn metropolis_weights(g: &GraphTopology) -> Result<MixingMatrix, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let n = g.n_agents();
    let deg = g.degrees();
    let mut w = vec![vec![0.0; n]; n];
    for (i, j) in g.edges() {
        let x = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[i][j] = x;
        w[j][i] = x;
    }
    for (i, row) in w.iter_mut().enumerate() {
        let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum();
        row[i] = 1.0 - off;
    }
    Ok(MixingMatrix { weights: w })
}

/// Second-largest eigenvalue magnitude of a symmetric doubly stochastic
/// matrix, by power iteration restricted to the complement of `1_N`.
pub fn contraction_factor(m: &MixingMatrix) -> Result<f64, GraphError> {
    let n = m.n();
    if n == 1 {
        return Ok(0.0);
    }
    // Deterministic start with no special symmetry.
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + libm::sqrt((k * 7 + 3) as f64) + 0.5 * k as f64).collect();
    if !deflate_normalize(&mut v) {
        return Ok(0.0);
    }
    let mut estimate = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let mut w = m.apply(&v);
        let mean = w.iter().sum::<f64>() / n as f64;
        for x in &mut w {
            *x -= mean;
        }
        let next = crate::numerics::norm2(&w);
        if next <= f64::EPSILON {
            return Ok(0.0);
        }
        for x in &mut w {
            *x /= next;
        }
        v = w;
        if (next - estimate).abs() <= POWER_TOL {
            return Ok(next);
        }
        estimate = next;
    }
    Err(GraphError::NoConvergence(POWER_MAX_ITERS))
}

fn deflate_normalize(v: &mut [f64]) -> bool {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    let norm = crate::numerics::norm2(v);
    if norm <= f64::EPSILON {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}
