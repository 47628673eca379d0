//! Worst-case bound formulas, the knowledge-of-μ test, and the hindsight
//! routing oracle: the earliest round by which the realized exchange schedule
//! could have carried all k messages to a node, computed as a max-flow over
//! the time-expanded network of that schedule.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ExchangeTrace, RunResult};
use crate::field::{dot, CoefficientVector, FieldError};
use crate::graph::{NodeId, Topology};
use crate::par::{self, Execution};
use crate::protocols::{AgState, Protocol, SourceAssignment};

pub const DEFAULT_CONSTANT: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("bound {formula} does not apply to protocol {protocol}")]
    FormulaMismatch {
        formula: BoundFormula,
        protocol: Protocol,
    },
    #[error(
        "result for {found} (k = {found_k}) mixed into a {expected} (k = {expected_k}) report"
    )]
    ResultMismatch {
        expected: Protocol,
        expected_k: usize,
        found: Protocol,
        found_k: usize,
    },
    #[error("μ must be nonzero")]
    ZeroMu,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// ⌈log2 n⌉, with log of 1 taken as 0.
pub fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

/// min{3n, ΔD}
pub fn path_term(g: &Topology) -> u64 {
    path_term_with(g, 3)
}

/// min{factor·n, ΔD}. The degree-sum argument gives 3n; a looser reading of
/// the same proof gives 6n, which reports carry alongside.
pub fn path_term_with(g: &Topology, factor: u64) -> u64 {
    (factor * g.n() as u64).min((g.max_degree() * g.diameter()) as u64)
}

/// c·Δ·(D + k + ⌈log2 n⌉)
pub fn bound_thm1(g: &Topology, k: usize, c: u64) -> u64 {
    c * g.max_degree() as u64 * (g.diameter() as u64 + k as u64 + ceil_log2(g.n()))
}

/// c·(min{3n, ΔD} + Δ·(k + ⌈log2 n⌉)); thm4 for uniform gossip has the same shape.
pub fn bound_thm2(g: &Topology, k: usize, c: u64) -> u64 {
    bound_thm2_with(g, k, c, 3)
}

pub fn bound_thm2_with(g: &Topology, k: usize, c: u64, factor: u64) -> u64 {
    c * (path_term_with(g, factor) + g.max_degree() as u64 * (k as u64 + ceil_log2(g.n())))
}

/// min{3n, ΔD} + Δ·k, exact: round-robin routing never exceeds it.
pub fn bound_rr(g: &Topology, k: usize) -> u64 {
    path_term(g) + (g.max_degree() * k) as u64
}

/// 2·(k + D') + 2 forwarding rounds over a tree of diameter D'.
pub fn bound_tree_forwarding(k: usize, tree_diameter: usize) -> u64 {
    2 * (k + tree_diameter) as u64 + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundFormula {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
}

impl BoundFormula {
    pub fn name(&self) -> &'static str {
        match self {
            BoundFormula::Thm1 => "thm1",
            BoundFormula::Thm2 => "thm2",
            BoundFormula::Thm3 => "thm3",
            BoundFormula::Thm4 => "thm4",
            BoundFormula::Thm5 => "thm5",
        }
    }

    pub fn default_for(protocol: Protocol) -> Self {
        match protocol {
            Protocol::Ag => BoundFormula::Thm1,
            Protocol::Rr => BoundFormula::Thm3,
            Protocol::Pug => BoundFormula::Thm4,
            Protocol::Tree => BoundFormula::Thm5,
        }
    }

    pub fn applies_to(&self, protocol: Protocol) -> bool {
        matches!(
            (self, protocol),
            (BoundFormula::Thm1 | BoundFormula::Thm2, Protocol::Ag)
                | (BoundFormula::Thm3, Protocol::Rr)
                | (BoundFormula::Thm4, Protocol::Pug)
                | (BoundFormula::Thm5, Protocol::Tree)
        )
    }

    /// Whether a single violation is a defect rather than a whp miss.
    pub fn is_deterministic(&self) -> bool {
        *self == BoundFormula::Thm3
    }

    /// The bound for a graph, or `None` for thm5, whose value depends on the
    /// tree each trial builds.
    pub fn value(&self, g: &Topology, k: usize, c: u64) -> Option<u64> {
        match self {
            BoundFormula::Thm1 => Some(bound_thm1(g, k, c)),
            BoundFormula::Thm2 | BoundFormula::Thm4 => Some(bound_thm2(g, k, c)),
            BoundFormula::Thm3 => Some(bound_rr(g, k)),
            BoundFormula::Thm5 => None,
        }
    }

    pub fn constant(&self, c: u64) -> Option<u64> {
        match self {
            BoundFormula::Thm1 | BoundFormula::Thm2 | BoundFormula::Thm4 => Some(c),
            BoundFormula::Thm3 | BoundFormula::Thm5 => None,
        }
    }
}

impl fmt::Display for BoundFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundFormula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "thm1" => Ok(BoundFormula::Thm1),
            "thm2" => Ok(BoundFormula::Thm2),
            "thm3" => Ok(BoundFormula::Thm3),
            "thm4" => Ok(BoundFormula::Thm4),
            "thm5" => Ok(BoundFormula::Thm5),
            other => Err(format!("unknown bound `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCheck {
    pub seed: u64,
    /// Completion round (forwarding rounds for thm5); `None` if never.
    pub observed: Option<u64>,
    pub bound: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub graph: String,
    pub n: usize,
    pub max_degree: usize,
    pub diameter: usize,
    pub k: usize,
    pub protocol: Protocol,
    pub formula: BoundFormula,
    pub constant: Option<u64>,
    /// The bound; for thm5 the largest per-trial bound.
    pub bound: u64,
    /// thm2/thm4 with 6n in place of 3n; pass/fail uses `bound`.
    pub wide_bound: Option<u64>,
    pub trials: Vec<TrialCheck>,
    pub violations: usize,
    /// Every trial within its bound.
    pub pass: bool,
}

/// Checks each result against `formula` (the protocol's default if `None`).
pub fn check_bounds(
    results: &[RunResult],
    g: &Topology,
    graph_label: &str,
    k: usize,
    protocol: Protocol,
    formula: Option<BoundFormula>,
    c: u64,
) -> Result<BoundReport, AnalysisError> {
    let formula = formula.unwrap_or_else(|| BoundFormula::default_for(protocol));
    if !formula.applies_to(protocol) {
        return Err(AnalysisError::FormulaMismatch { formula, protocol });
    }
    if let Some(r) = results.iter().find(|r| r.protocol != protocol || r.k != k) {
        return Err(AnalysisError::ResultMismatch {
            expected: protocol,
            expected_k: k,
            found: r.protocol,
            found_k: r.k,
        });
    }
    let fixed = formula.value(g, k, c);
    let trials: Vec<TrialCheck> = results
        .iter()
        .map(|r| {
            let (observed, bound) = match fixed {
                Some(b) => (r.completion_round, b),
                None => {
                    let tree = r.tree.as_ref();
                    let observed = tree.and_then(|t| t.forwarding_rounds);
                    let bound = tree
                        .and_then(|t| t.tree_diameter)
                        .map_or(0, |d| bound_tree_forwarding(k, d));
                    (observed, bound)
                }
            };
            TrialCheck {
                seed: r.seed,
                observed,
                bound,
                pass: observed.is_some_and(|o| o <= bound),
            }
        })
        .collect();
    let violations = trials.iter().filter(|t| !t.pass).count();
    Ok(BoundReport {
        graph: graph_label.to_string(),
        n: g.n(),
        max_degree: g.max_degree(),
        diameter: g.diameter(),
        k,
        protocol,
        formula,
        constant: formula.constant(c),
        bound: fixed.unwrap_or_else(|| trials.iter().map(|t| t.bound).max().unwrap_or(0)),
        wide_bound: matches!(formula, BoundFormula::Thm2 | BoundFormula::Thm4)
            .then(|| bound_thm2_with(g, k, c, 6)),
        violations,
        pass: violations == 0,
        trials,
    })
}

/// Does the node hold some packet whose coefficient vector is not
/// perpendicular to `mu`?
pub fn knows_mu(state: &AgState, mu: &CoefficientVector) -> Result<bool, AnalysisError> {
    if mu.is_zero() {
        return Err(AnalysisError::ZeroMu);
    }
    let field = state.field();
    for (s, _) in state.known() {
        if dot(&field, s, mu)? != 0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Integer max-flow by Dinic's algorithm: BFS level graph, then blocking flow
/// along shortest augmenting paths.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    graph: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            graph: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.graph.len()
    }

    /// Adds arc `u -> v`; arcs are stored in pairs, residual at `id ^ 1`.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: u64) -> usize {
        let id = self.to.len();
        self.graph[u].push(id);
        self.to.push(v);
        self.cap.push(cap);
        self.graph[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0);
        id
    }

    pub fn arc_count(&self) -> usize {
        self.to.len() / 2
    }

    pub fn max_flow(&self, s: usize, t: usize) -> u64 {
        if s == t {
            return 0;
        }
        let mut cap = self.cap.clone();
        let n = self.graph.len();
        let mut total = 0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.graph[u] {
                    let v = self.to[e];
                    if cap[e] > 0 && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; n];
            loop {
                let f = self.augment(s, t, u64::MAX, &level, &mut next, &mut cap);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
    }

    fn augment(
        &self,
        u: usize,
        t: usize,
        limit: u64,
        level: &[usize],
        next: &mut [usize],
        cap: &mut [u64],
    ) -> u64 {
        if u == t {
            return limit;
        }
        while next[u] < self.graph[u].len() {
            let e = self.graph[u][next[u]];
            let v = self.to[e];
            if cap[e] > 0 && level[v] == level[u] + 1 {
                let f = self.augment(v, t, limit.min(cap[e]), level, next, cap);
                if f > 0 {
                    cap[e] -= f;
                    cap[e ^ 1] += f;
                    return f;
                }
            }
            next[u] += 1;
        }
        0
    }
}

/// Layered copy of the schedule: node (v, t) for t = 0..=horizon, hold-over
/// arcs of capacity k, one unit arc per directed transmission, and a super
/// source feeding each origin at layer 0 with its message count.
#[derive(Clone, Debug)]
pub struct TimeExpandedNetwork {
    n: usize,
    horizon: usize,
    flow: FlowNetwork,
    source: usize,
}

impl TimeExpandedNetwork {
    pub fn build(
        trace: &ExchangeTrace,
        sources: &SourceAssignment,
        n: usize,
        horizon: usize,
    ) -> Self {
        let k = sources.k() as u64;
        let layers = horizon + 1;
        let source = n * layers;
        let mut flow = FlowNetwork::new(source + 1);
        let id = |v: usize, t: usize| t * n + v;
        for (v, &c) in sources.counts(n).iter().enumerate() {
            if c > 0 {
                flow.add_arc(source, id(v, 0), c as u64);
            }
        }
        for t in 0..horizon {
            for v in 0..n {
                flow.add_arc(id(v, t), id(v, t + 1), k);
            }
            if let Some(round) = trace.rounds.get(t) {
                for tx in round {
                    flow.add_arc(id(tx.from, t), id(tx.to, t + 1), 1);
                }
            }
        }
        TimeExpandedNetwork {
            n,
            horizon,
            flow,
            source,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn source(&self) -> usize {
        self.source
    }

    /// Index of node `v` at layer `t`.
    pub fn layered(&self, v: NodeId, t: usize) -> usize {
        t * self.n + v
    }

    pub fn flow_network(&self) -> &FlowNetwork {
        &self.flow
    }
}

/// Max-flow from the super source into `sink`.
pub fn max_flow(net: &TimeExpandedNetwork, sink: usize) -> u64 {
    net.flow.max_flow(net.source, sink)
}

fn routable_by(
    trace: &ExchangeTrace,
    sources: &SourceAssignment,
    n: usize,
    v: NodeId,
    t: usize,
) -> bool {
    let net = TimeExpandedNetwork::build(trace, sources, n, t);
    max_flow(&net, net.layered(v, t)) >= sources.k() as u64
}

/// The first round T by which all k messages could have been routed to `v`
/// over the recorded exchanges; `None` if the trace never suffices.
pub fn hindsight_time(
    trace: &ExchangeTrace,
    sources: &SourceAssignment,
    n: usize,
    v: NodeId,
) -> Option<u64> {
    let len = trace.len();
    if !routable_by(trace, sources, n, v, len) {
        return None;
    }
    // feasibility is monotone in T: hold-over arcs carry everything forward
    let (mut lo, mut hi) = (0usize, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if routable_by(trace, sources, n, v, mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo as u64)
}

/// Per-node hindsight times, computed independently per node.
pub fn hindsight_times(
    trace: &ExchangeTrace,
    sources: &SourceAssignment,
    n: usize,
    exec: Execution,
) -> Vec<Option<u64>> {
    let nodes: Vec<NodeId> = (0..n).collect();
    par::map(exec, &nodes, |&v| hindsight_time(trace, sources, n, v))
}

/// Max over nodes of the hindsight time; `None` if any node is unreachable.
pub fn hindsight_global(
    trace: &ExchangeTrace,
    sources: &SourceAssignment,
    n: usize,
    exec: Execution,
) -> Option<u64> {
    hindsight_times(trace, sources, n, exec)
        .into_iter()
        .try_fold(0, |acc, t| t.map(|t| acc.max(t)))
}
