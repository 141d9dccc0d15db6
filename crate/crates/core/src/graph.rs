//! Undirected network topologies and their Laplacian spectra.
//!
//! The Laplacian is `L = D - A` with `D` the degree matrix and `A` the 0/1
//! adjacency matrix. Its second-smallest eigenvalue (the algebraic
//! connectivity, `lambda2`) is positive iff the graph is connected and equals
//! the minimum of the Rayleigh quotient `v^T L v / v^T v` over `v ⊥ 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Relative threshold under which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGEN_REL_TOL: f64 = 1e-9;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Simple undirected graph on nodes `0..node_count`.
///
/// Edges are stored normalized as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, out-of-range
    /// endpoints and duplicate edges (in either orientation).
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {node_count} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
        }
        Ok(Graph { node_count, edges: set })
    }

    pub fn empty(node_count: usize) -> Result<Self> {
        Graph::new(node_count, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Returns a copy with one extra edge; errors if the edge is invalid or present.
    pub fn with_edge(&self, a: usize, b: usize) -> Result<Self> {
        Graph::new(self.node_count, self.edges().chain(std::iter::once((a, b))))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == node || b == node).count()
    }

    /// Neighbour lists, each sorted ascending.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Parses the plain-text edge-list format: a `nodes N` header followed by
    /// one `i j` pair per line. Blank lines and `#` comments are ignored.
    pub fn from_edge_list_str(text: &str) -> Result<Self> {
        let mut node_count = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let at = |msg: &str| Error::invalid(format!("edge list line {}: {msg}", lineno + 1));
            match node_count {
                None => {
                    if fields.len() != 2 || fields[0] != "nodes" {
                        return Err(at("expected header `nodes N`"));
                    }
                    let n = fields[1].parse::<usize>().map_err(|_| at("bad node count"))?;
                    node_count = Some(n);
                }
                Some(_) => {
                    if fields.len() != 2 {
                        return Err(at("expected `i j`"));
                    }
                    let a = fields[0].parse::<usize>().map_err(|_| at("bad node index"))?;
                    let b = fields[1].parse::<usize>().map_err(|_| at("bad node index"))?;
                    edges.push((a, b));
                }
            }
        }
        let n = node_count.ok_or_else(|| Error::invalid("edge list is missing `nodes N` header"))?;
        Graph::new(n, edges)
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count);
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Graph::from_edge_list_str(s)
    }
}

/// Topology families understood by [`build_topology`].
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Path `0 - 1 - ... - (n-1)`.
    Chain,
    /// Cycle; degenerates to a chain for `n < 3`.
    Ring,
    Complete,
    /// Star centred on node 0.
    Star,
    EdgeList(Vec<(usize, usize)>),
    /// G(n, p) random graph, reproducible from `seed`.
    ErdosRenyi {
        p: f64,
        seed: u64,
    },
}

pub fn build_topology(kind: &Topology, n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("topology needs n >= 1"));
    }
    match kind {
        Topology::Chain => Graph::new(n, (1..n).map(|i| (i - 1, i))),
        Topology::Ring => {
            let closing = (n >= 3).then_some((n - 1, 0));
            Graph::new(n, (1..n).map(|i| (i - 1, i)).chain(closing))
        }
        Topology::Complete => Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))),
        Topology::Star => Graph::new(n, (1..n).map(|i| (0, i))),
        Topology::EdgeList(edges) => Graph::new(n, edges.iter().copied()),
        Topology::ErdosRenyi { p, seed } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::invalid(format!("edge probability {p} not in [0, 1]")));
            }
            let mut rng = rng_from_seed(*seed);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < *p {
                        edges.push((i, j));
                    }
                }
            }
            Graph::new(n, edges)
        }
    }
}

/// Dense Laplacian `D - A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for (a, b) in g.edges() {
        l[(a, b)] = -1.0;
        l[(b, a)] = -1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub connected: bool,
}

impl SpectralInfo {
    /// Tolerance used to decide whether an eigenvalue is zero.
    pub fn zero_tolerance(&self) -> f64 {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0);
        ZERO_EIGEN_REL_TOL * max.max(1.0)
    }
}

/// Eigen-decomposes the Laplacian and extracts the algebraic connectivity.
///
/// A single-node graph is reported as connected with `lambda2 = 0`; it has no
/// second eigenvalue.
pub fn spectral_info(g: &Graph) -> Result<SpectralInfo> {
    let n = g.node_count();
    let eig =
        SymmetricEigen::try_new(laplacian(g), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(Error::EigenNoConvergence(n))?;
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNoConvergence(n));
    }
    eigenvalues.sort_by(f64::total_cmp);
    if n == 1 {
        return Ok(SpectralInfo { eigenvalues, lambda2: 0.0, connected: true });
    }
    let lambda_max = eigenvalues[n - 1];
    let tol = ZERO_EIGEN_REL_TOL * lambda_max.max(1.0);
    let lambda2 = if eigenvalues[1].abs() <= tol { 0.0 } else { eigenvalues[1] };
    Ok(SpectralInfo { eigenvalues, lambda2, connected: lambda2 > tol })
}
