//! Multiclass multi-pool networks as labeled bipartite trees.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("activity graph is not a tree: {0}")]
    NotATree(String),
    #[error("non-positive rate: {0}")]
    NonPositiveRate(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Which side of the bipartite graph a node lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Class,
    Pool,
}

/// A node of the activity graph. `index` is 1-based, as in every external format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn class(index: usize) -> Self {
        Self { kind: NodeKind::Class, index }
    }

    pub fn pool(index: usize) -> Self {
        Self { kind: NodeKind::Pool, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Class => write!(f, "class {}", self.index),
            NodeKind::Pool => write!(f, "pool {}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub lambda: f64,
    #[serde(default)]
    pub lambda_hat: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    /// 1-based class index.
    pub class: usize,
    /// 1-based pool index.
    pub pool: usize,
    pub mu: f64,
    #[serde(default)]
    pub mu_hat: f64,
}

/// Raw, unvalidated network description as it appears in the JSON spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub classes: Vec<ClassSpec>,
    pub pools: Vec<PoolSpec>,
    pub edges: Vec<EdgeSpec>,
}

/// An activity (class, pool), 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub class: usize,
    pub pool: usize,
}

/// A validated network. Immutable once built; all indices are 0-based.
///
/// Edges are kept sorted by (class, pool), so every derived quantity that is
/// indexed by edge is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    num_classes: usize,
    num_pools: usize,
    edges: Vec<Edge>,
    lambda: Vec<f64>,
    lambda_hat: Vec<f64>,
    gamma: Vec<f64>,
    nu: Vec<f64>,
    /// Row-major I x J, zero off the edge set.
    mu: Vec<f64>,
    mu_hat: Vec<f64>,
}

fn check_finite(what: &str, v: f64) -> Result<(), NetworkError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(NetworkError::ShapeMismatch(format!("{what} is not finite")))
    }
}

impl Network {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pools(&self) -> usize {
        self.num_pools
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// Service rate of class `i` at pool `j`; zero when `i` and `j` are not adjacent.
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.num_pools + j]
    }

    pub fn mu_hat(&self, i: usize, j: usize) -> f64 {
        self.mu_hat[i * self.num_pools + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.mu(i, j) > 0.0
    }

    /// Position of `(i, j)` in [`Network::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&Edge { class: i, pool: j }).ok()
    }

    /// Pools adjacent to class `i`, ascending.
    pub fn pools_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_pools).filter(move |&j| self.has_edge(i, j))
    }

    /// Classes adjacent to pool `j`, ascending.
    pub fn classes_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_classes).filter(move |&i| self.has_edge(i, j))
    }

    pub fn has_abandonment(&self) -> bool {
        self.gamma.iter().any(|&g| g > 0.0)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_classes + self.num_pools
    }

    /// Returns a copy with a different abandonment vector.
    pub fn with_gamma(&self, gamma: &[f64]) -> Result<Self, NetworkError> {
        let mut spec = self.to_spec();
        if gamma.len() != spec.classes.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "gamma has length {}, expected {}",
                gamma.len(),
                spec.classes.len()
            )));
        }
        for (c, &g) in spec.classes.iter_mut().zip(gamma) {
            c.gamma = g;
        }
        validate_network(&spec)
    }

    /// Converts back to the external (1-based) description.
    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            classes: (0..self.num_classes)
                .map(|i| ClassSpec {
                    lambda: self.lambda[i],
                    lambda_hat: self.lambda_hat[i],
                    gamma: self.gamma[i],
                })
                .collect(),
            pools: self.nu.iter().map(|&nu| PoolSpec { nu }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    class: e.class + 1,
                    pool: e.pool + 1,
                    mu: self.mu(e.class, e.pool),
                    mu_hat: self.mu_hat(e.class, e.pool),
                })
                .collect(),
        }
    }

    /// Node ordering used by graph traversals: classes `0..I`, then pools `I..I+J`.
    fn neighbors(&self, node: usize) -> Vec<usize> {
        let i_count = self.num_classes;
        if node < i_count {
            self.pools_of(node).map(|j| i_count + j).collect()
        } else {
            self.classes_of(node - i_count).collect()
        }
    }

    /// Breadth-first traversal from `start`; returns the visited nodes in order.
    pub fn bfs(&self, start: NodeId) -> Vec<NodeId> {
        let to_flat = |n: NodeId| match n.kind {
            NodeKind::Class => n.index - 1,
            NodeKind::Pool => self.num_classes + n.index - 1,
        };
        let to_node = |k: usize| {
            if k < self.num_classes {
                NodeId::class(k + 1)
            } else {
                NodeId::pool(k - self.num_classes + 1)
            }
        };
        bfs_flat(self.num_nodes(), to_flat(start), |k| self.neighbors(k))
            .into_iter()
            .map(to_node)
            .collect()
    }
}

fn bfs_flat(n: usize, start: usize, neighbors: impl Fn(usize) -> Vec<usize>) -> Vec<usize> {
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(k) = queue.pop_front() {
        order.push(k);
        for nb in neighbors(k) {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    order
}

/// Validates a raw description into a [`Network`].
pub fn validate_network(spec: &NetworkSpec) -> Result<Network, NetworkError> {
    let num_classes = spec.classes.len();
    let num_pools = spec.pools.len();
    if num_classes == 0 || num_pools == 0 {
        return Err(NetworkError::ShapeMismatch(
            "need at least one class and one pool".into(),
        ));
    }

    let mut lambda = Vec::with_capacity(num_classes);
    let mut lambda_hat = Vec::with_capacity(num_classes);
    let mut gamma = Vec::with_capacity(num_classes);
    for (i, c) in spec.classes.iter().enumerate() {
        check_finite("lambda", c.lambda)?;
        check_finite("lambda_hat", c.lambda_hat)?;
        check_finite("gamma", c.gamma)?;
        if c.lambda <= 0.0 {
            return Err(NetworkError::NonPositiveRate(format!(
                "lambda of class {} is {}",
                i + 1,
                c.lambda
            )));
        }
        if c.gamma < 0.0 {
            return Err(NetworkError::NonPositiveRate(format!(
                "gamma of class {} is negative ({})",
                i + 1,
                c.gamma
            )));
        }
        lambda.push(c.lambda);
        lambda_hat.push(c.lambda_hat);
        gamma.push(c.gamma);
    }
    let mut nu = Vec::with_capacity(num_pools);
    for (j, p) in spec.pools.iter().enumerate() {
        check_finite("nu", p.nu)?;
        if p.nu <= 0.0 {
            return Err(NetworkError::NonPositiveRate(format!(
                "nu of pool {} is {}",
                j + 1,
                p.nu
            )));
        }
        nu.push(p.nu);
    }

    let mut mu = vec![0.0; num_classes * num_pools];
    let mut mu_hat = vec![0.0; num_classes * num_pools];
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        if e.class == 0 || e.class > num_classes || e.pool == 0 || e.pool > num_pools {
            return Err(NetworkError::ShapeMismatch(format!(
                "edge ({}, {}) is out of range for I={num_classes}, J={num_pools}",
                e.class, e.pool
            )));
        }
        check_finite("mu", e.mu)?;
        check_finite("mu_hat", e.mu_hat)?;
        let (i, j) = (e.class - 1, e.pool - 1);
        if e.mu <= 0.0 {
            return Err(NetworkError::NonPositiveRate(format!(
                "mu of edge ({}, {}) is {}",
                e.class, e.pool, e.mu
            )));
        }
        if mu[i * num_pools + j] > 0.0 {
            return Err(NetworkError::ShapeMismatch(format!(
                "edge ({}, {}) listed twice",
                e.class, e.pool
            )));
        }
        mu[i * num_pools + j] = e.mu;
        mu_hat[i * num_pools + j] = e.mu_hat;
        edges.push(Edge { class: i, pool: j });
    }
    edges.sort();

    if edges.len() != num_classes + num_pools - 1 {
        return Err(NetworkError::NotATree(format!(
            "{} edges but a tree on {} nodes has {}",
            edges.len(),
            num_classes + num_pools,
            num_classes + num_pools - 1
        )));
    }

    let net = Network {
        num_classes,
        num_pools,
        edges,
        lambda,
        lambda_hat,
        gamma,
        nu,
        mu,
        mu_hat,
    };
    let reached = bfs_flat(net.num_nodes(), 0, |k| net.neighbors(k)).len();
    if reached != net.num_nodes() {
        return Err(NetworkError::NotATree(format!(
            "graph is disconnected ({reached} of {} nodes reachable)",
            net.num_nodes()
        )));
    }
    Ok(net)
}

/// Degree-one nodes of the tree, split by side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaves {
    pub classes: Vec<NodeId>,
    pub pools: Vec<NodeId>,
}

pub fn leaves(net: &Network) -> Leaves {
    let classes = (0..net.num_classes())
        .filter(|&i| net.pools_of(i).count() == 1)
        .map(|i| NodeId::class(i + 1))
        .collect();
    let pools = (0..net.num_pools())
        .filter(|&j| net.classes_of(j).count() == 1)
        .map(|j| NodeId::pool(j + 1))
        .collect();
    Leaves { classes, pools }
}
