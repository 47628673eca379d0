//! Undirected topologies, generators and the metrics that appear in the
//! dissemination bounds: maximum degree, diameter and degree-weighted
//! distance.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

const MAX_GENERATION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParams { family: String, reason: String },
    #[error("{family}: no connected sample after {attempts} attempts")]
    RetriesExhausted { family: String, attempts: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// An immutable connected undirected graph on nodes `0..n`.
#[derive(Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<Vec<NodeId>>,
    max_degree: usize,
    diameter: usize,
}

impl fmt::Debug for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Topology")
            .field("n", &self.n())
            .field("edges", &self.edge_count())
            .field("max_degree", &self.max_degree)
            .field("diameter", &self.diameter)
            .finish()
    }
}

impl Topology {
    /// Builds a topology from an edge list. Self-loops and duplicate edges are
    /// rejected, as is a disconnected result.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid("edges", format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(invalid("edges", format!("self-loop at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid("edges", format!("duplicate edge at {u}")));
            }
        }
        Self::from_adjacency(adjacency)
    }

    fn from_adjacency(adjacency: Vec<Vec<NodeId>>) -> Result<Self, GraphError> {
        if adjacency.len() < 2 {
            return Err(invalid("topology", "need at least 2 nodes".into()));
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let mut g = Topology {
            adjacency,
            max_degree,
            diameter: 0,
        };
        let mut diameter = 0;
        for s in 0..g.n() {
            let d = g.bfs(s);
            if d.iter().any(Option::is_none) {
                return Err(GraphError::Disconnected);
            }
            diameter = diameter.max(d.into_iter().flatten().max().unwrap_or(0));
        }
        g.diameter = diameter;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adjacency[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// Hop distances from `s`; `None` for unreachable nodes.
    pub fn bfs(&self, s: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn eccentricity(&self, u: NodeId) -> usize {
        self.bfs(u).into_iter().flatten().max().unwrap_or(0)
    }

    /// The lowest-numbered node of maximum eccentricity.
    pub fn most_eccentric_node(&self) -> NodeId {
        (0..self.n())
            .max_by_key(|&u| (self.eccentricity(u), Reverse(u)))
            .unwrap_or(0)
    }

    /// Degree-weighted distances from `u`: for every `v`, the minimum over
    /// u-v paths of the summed degrees of all path nodes except `v`.
    pub fn weighted_dists_from(&self, u: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        dist[u] = 0;
        let mut heap = BinaryHeap::from([Reverse((0usize, u))]);
        while let Some(Reverse((d, w))) = heap.pop() {
            if d > dist[w] {
                continue;
            }
            let nd = d + self.degree(w);
            for &x in &self.adjacency[w] {
                if nd < dist[x] {
                    dist[x] = nd;
                    heap.push(Reverse((nd, x)));
                }
            }
        }
        dist
    }

    pub fn weighted_dist(&self, u: NodeId, v: NodeId) -> usize {
        self.weighted_dists_from(u)[v]
    }

    /// The edge-list text form: a header `n <nodes>` then one `u v` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n());
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["n", count] => count.parse::<usize>().map_err(|e| GraphError::Parse {
                line: hline,
                reason: format!("bad node count: {e}"),
            })?,
            _ => {
                return Err(GraphError::Parse {
                    line: hline,
                    reason: format!("expected `n <count>`, got `{header}`"),
                })
            }
        };
        let mut adjacency = vec![Vec::new(); n];
        for (line, text) in lines {
            let parse_err = |reason: String| GraphError::Parse { line, reason };
            let fields: Vec<_> = text.split_whitespace().collect();
            let [a, b] = fields[..] else {
                return Err(parse_err(format!("expected `u v`, got `{text}`")));
            };
            let u: usize = a
                .parse()
                .map_err(|e| parse_err(format!("bad node `{a}`: {e}")))?;
            let v: usize = b
                .parse()
                .map_err(|e| parse_err(format!("bad node `{b}`: {e}")))?;
            if u >= n || v >= n {
                return Err(parse_err(format!("node out of range 0..{n}")));
            }
            if u == v {
                return Err(parse_err(format!("self-loop at {u}")));
            }
            if adjacency[u].contains(&v) {
                return Err(parse_err(format!("duplicate edge {u} {v}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        adjacency.iter_mut().for_each(|l| l.sort_unstable());
        Self::from_adjacency(adjacency).map_err(|e| match e {
            GraphError::Disconnected => GraphError::Parse {
                line: hline,
                reason: "graph is disconnected".into(),
            },
            other => other,
        })
    }
}

fn invalid(family: &str, reason: String) -> GraphError {
    GraphError::InvalidParams {
        family: family.into(),
        reason,
    }
}

/// A named generator with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GraphFamily {
    Path(usize),
    Cycle(usize),
    Star(usize),
    Complete(usize),
    /// Heap-ordered binary tree on `n` nodes.
    BinaryTree(usize),
    Grid2d(usize, usize),
    RandomRegular {
        n: usize,
        d: usize,
        seed: u64,
    },
    Gnp {
        n: usize,
        p: f64,
        seed: u64,
    },
    /// Two cliques of `clique` nodes joined by a path of `path` nodes.
    Barbell {
        clique: usize,
        path: usize,
    },
}

impl GraphFamily {
    pub fn generate(&self) -> Result<Topology, GraphError> {
        match *self {
            GraphFamily::Path(n) => {
                check(n >= 2, "path", "n >= 2")?;
                Topology::from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>())
            }
            GraphFamily::Cycle(n) => {
                check(n >= 3, "cycle", "n >= 3")?;
                Topology::from_edges(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>())
            }
            GraphFamily::Star(n) => {
                check(n >= 2, "star", "n >= 2")?;
                Topology::from_edges(n, &(1..n).map(|i| (0, i)).collect::<Vec<_>>())
            }
            GraphFamily::Complete(n) => {
                check(n >= 2, "complete", "n >= 2")?;
                let edges: Vec<_> = (0..n)
                    .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                    .collect();
                Topology::from_edges(n, &edges)
            }
            GraphFamily::BinaryTree(n) => {
                check(n >= 2, "binary_tree", "n >= 2")?;
                Topology::from_edges(n, &(1..n).map(|i| ((i - 1) / 2, i)).collect::<Vec<_>>())
            }
            GraphFamily::Grid2d(r, c) => {
                check(r >= 1 && c >= 1 && r * c >= 2, "grid2d", "rows*cols >= 2")?;
                let id = |i: usize, j: usize| i * c + j;
                let mut edges = Vec::new();
                for i in 0..r {
                    for j in 0..c {
                        if j + 1 < c {
                            edges.push((id(i, j), id(i, j + 1)));
                        }
                        if i + 1 < r {
                            edges.push((id(i, j), id(i + 1, j)));
                        }
                    }
                }
                Topology::from_edges(r * c, &edges)
            }
            GraphFamily::RandomRegular { n, d, seed } => random_regular(n, d, seed),
            GraphFamily::Gnp { n, p, seed } => gnp(n, p, seed),
            GraphFamily::Barbell { clique, path } => {
                check(clique >= 2, "barbell", "clique >= 2")?;
                let n = 2 * clique + path;
                let mut edges = Vec::new();
                for base in [0, clique + path] {
                    for u in base..base + clique {
                        for v in u + 1..base + clique {
                            edges.push((u, v));
                        }
                    }
                }
                // chain: last node of clique A, path nodes, first node of clique B
                let chain: Vec<_> = std::iter::once(clique - 1)
                    .chain(clique..clique + path)
                    .chain(std::iter::once(clique + path))
                    .collect();
                edges.extend(chain.windows(2).map(|w| (w[0], w[1])));
                Topology::from_edges(n, &edges)
            }
        }
    }
}

fn check(ok: bool, family: &str, what: &str) -> Result<(), GraphError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(family, format!("requires {what}")))
    }
}

/// Pairing model with rejection of loops, multi-edges and disconnected samples.
fn random_regular(n: usize, d: usize, seed: u64) -> Result<Topology, GraphError> {
    check(n >= 2, "random_regular", "n >= 2")?;
    check(d >= 1 && d < n, "random_regular", "1 <= d < n")?;
    check((n * d).is_multiple_of(2), "random_regular", "n*d even")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<NodeId> = (0..n).flat_map(|u| std::iter::repeat_n(u, d)).collect();
    'attempt: for _ in 0..MAX_GENERATION_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut adjacency = vec![Vec::with_capacity(d); n];
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adjacency[u].contains(&v) {
                continue 'attempt;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        adjacency.iter_mut().for_each(|l| l.sort_unstable());
        match Topology::from_adjacency(adjacency) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::RetriesExhausted {
        family: "random_regular".into(),
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn gnp(n: usize, p: f64, seed: u64) -> Result<Topology, GraphError> {
    check(n >= 2, "gnp", "n >= 2")?;
    check((0.0..=1.0).contains(&p) && p > 0.0, "gnp", "0 < p <= 1")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        match Topology::from_edges(n, &edges) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::RetriesExhausted {
        family: "gnp".into(),
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFamily::Path(n) => write!(f, "path:{n}"),
            GraphFamily::Cycle(n) => write!(f, "cycle:{n}"),
            GraphFamily::Star(n) => write!(f, "star:{n}"),
            GraphFamily::Complete(n) => write!(f, "complete:{n}"),
            GraphFamily::BinaryTree(n) => write!(f, "binary_tree:{n}"),
            GraphFamily::Grid2d(r, c) => write!(f, "grid2d:{r}x{c}"),
            GraphFamily::RandomRegular { n, d, seed } => write!(f, "random_regular:{n},{d},{seed}"),
            GraphFamily::Gnp { n, p, seed } => write!(f, "gnp:{n},{p},{seed}"),
            GraphFamily::Barbell { clique, path } => write!(f, "barbell:{clique},{path}"),
        }
    }
}

impl FromStr for GraphFamily {
    type Err = GraphError;

    /// Parses `family:params`, e.g. `path:50`, `grid2d:8x8`,
    /// `random_regular:64,4,7`, `gnp:64,0.1,3`, `barbell:20,20`.
    fn from_str(s: &str) -> Result<Self, GraphError> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| invalid(s, "expected `family:params`".into()))?;
        let parts: Vec<&str> = if family == "grid2d" {
            params.split([',', 'x']).map(str::trim).collect()
        } else {
            params.split(',').map(str::trim).collect()
        };
        let bad = |what: &str| invalid(family, format!("{what} in `{params}`"));
        let int = |i: usize| -> Result<usize, GraphError> {
            parts
                .get(i)
                .ok_or_else(|| bad("missing parameter"))?
                .parse()
                .map_err(|_| bad("bad integer"))
        };
        let seed = |i: usize| -> Result<u64, GraphError> {
            parts
                .get(i)
                .map_or(Ok(0), |s| s.parse().map_err(|_| bad("bad seed")))
        };
        let arity = |n: usize| {
            if parts.len() > n {
                Err(bad("too many parameters"))
            } else {
                Ok(())
            }
        };
        let fam = match family {
            "path" => GraphFamily::Path(int(0)?),
            "cycle" => GraphFamily::Cycle(int(0)?),
            "star" => GraphFamily::Star(int(0)?),
            "complete" => GraphFamily::Complete(int(0)?),
            "binary_tree" => GraphFamily::BinaryTree(int(0)?),
            "grid2d" => {
                arity(2)?;
                GraphFamily::Grid2d(int(0)?, int(1)?)
            }
            "random_regular" => {
                arity(3)?;
                GraphFamily::RandomRegular {
                    n: int(0)?,
                    d: int(1)?,
                    seed: seed(2)?,
                }
            }
            "gnp" => {
                arity(3)?;
                GraphFamily::Gnp {
                    n: int(0)?,
                    p: parts
                        .get(1)
                        .ok_or_else(|| bad("missing p"))?
                        .parse()
                        .map_err(|_| bad("bad probability"))?,
                    seed: seed(2)?,
                }
            }
            "barbell" => {
                arity(2)?;
                GraphFamily::Barbell {
                    clique: int(0)?,
                    path: int(1)?,
                }
            }
            other => return Err(invalid(other, "unknown family".into())),
        };
        if !matches!(
            fam,
            GraphFamily::Grid2d(..)
                | GraphFamily::RandomRegular { .. }
                | GraphFamily::Gnp { .. }
                | GraphFamily::Barbell { .. }
        ) {
            arity(1)?;
        }
        Ok(fam)
    }
}

impl TryFrom<String> for GraphFamily {
    type Error = GraphError;
    fn try_from(s: String) -> Result<Self, GraphError> {
        s.parse()
    }
}

impl From<GraphFamily> for String {
    fn from(f: GraphFamily) -> String {
        f.to_string()
    }
}
