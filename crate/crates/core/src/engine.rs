//! The synchronous round loop.
//!
//! A round has four steps: every node picks a target and a packet, every
//! contacted node picks one response per caller, all packets are delivered,
//! and completion is checked. Decisions in steps one and two read only
//! start-of-round knowledge; receptions are applied only in step three, so a
//! packet received in round t is usable from round t + 1.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{bound_thm1, DEFAULT_CONSTANT};
use crate::field::{decode, FieldError, FieldSpec, Payload};
use crate::graph::{NodeId, Topology};
use crate::par::{map_indexed_mut, Execution};
use crate::protocols::{
    build_parents, AgState, MessageId, NodeState, Packet, PacketSummary, Protocol, ProtocolError,
    RoutingMode, RoutingState, SourceAssignment, TreeState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
}

/// Everything that determines a run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub topology: Arc<Topology>,
    pub k: usize,
    pub sources: SourceAssignment,
    /// Only used by algebraic gossip.
    pub field: FieldSpec,
    pub payload_len: usize,
    pub seed: u64,
    pub max_rounds: u64,
    pub record_trace: bool,
    /// Fan-out of per-node work inside a round.
    pub execution: Execution,
    /// Ids announced in the tree protocol's broadcast phase; node index when unset.
    pub broadcast_ids: Option<Vec<u64>>,
}

pub const DEFAULT_PAYLOAD_LEN: usize = 16;

/// Four times the thm1 bound with constant 16.
pub fn default_max_rounds(g: &Topology, k: usize) -> u64 {
    4 * bound_thm1(g, k, DEFAULT_CONSTANT)
}

impl RunConfig {
    pub fn new(protocol: Protocol, topology: Arc<Topology>, sources: SourceAssignment) -> Self {
        let k = sources.k();
        let max_rounds = default_max_rounds(&topology, k.max(1));
        RunConfig {
            protocol,
            topology,
            k,
            sources,
            field: FieldSpec::GF2,
            payload_len: DEFAULT_PAYLOAD_LEN,
            seed: 0,
            max_rounds,
            record_trace: false,
            execution: Execution::Sequential,
            broadcast_ids: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_field(mut self, field: FieldSpec) -> Self {
        self.field = field;
        self
    }

    pub fn with_payload_len(mut self, len: usize) -> Self {
        self.payload_len = len;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_broadcast_ids(mut self, ids: Vec<u64>) -> Self {
        self.broadcast_ids = Some(ids);
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let n = self.topology.n();
        let fail = |m: String| Err(EngineError::Config(m));
        if self.k < 1 {
            return fail("k must be at least 1".into());
        }
        if self.sources.k() != self.k {
            return fail(format!("{} sources for k = {}", self.sources.k(), self.k));
        }
        if let Some(&bad) = self.sources.origins().iter().find(|&&o| o >= n) {
            return fail(format!("source node {bad} not in 0..{n}"));
        }
        if self.max_rounds < 1 {
            return fail("max_rounds must be at least 1".into());
        }
        if self.protocol == Protocol::Ag {
            self.field.check_payload_len(self.payload_len)?;
        }
        if let Some(ids) = &self.broadcast_ids {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if ids.len() != n || sorted.len() != n {
                return fail("broadcast ids must be n distinct values".into());
            }
        }
        Ok(())
    }
}

/// The message bodies of a run, derived from its seed.
pub fn message_payloads(seed: u64, k: usize, len: usize) -> Vec<Payload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..k)
        .map(|_| {
            let mut b = vec![0u8; len];
            rng.fill_bytes(&mut b);
            Payload(b)
        })
        .collect()
}

fn node_rng(seed: u64, node: NodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64 + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub from: NodeId,
    pub to: NodeId,
    pub packet: PacketSummary,
}

/// Per round, every directed transmission: for each initiation in initiator
/// order, initiator->target followed by target->initiator.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeTrace {
    pub rounds: Vec<Vec<Transmission>>,
}

impl ExchangeTrace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Transmissions of round `t` (1-based).
    pub fn round(&self, t: usize) -> &[Transmission] {
        &self.rounds[t - 1]
    }

    /// The first `t` rounds.
    pub fn truncated(&self, t: usize) -> ExchangeTrace {
        ExchangeTrace {
            rounds: self.rounds[..t.min(self.rounds.len())].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeOutcome {
    /// Rounds until every node had heard the minimum id.
    pub broadcast_rounds: Option<u64>,
    pub parents: Vec<Option<NodeId>>,
    pub tree_diameter: Option<usize>,
    /// Rounds of the forwarding phase until every node held every message.
    pub forwarding_rounds: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: Protocol,
    pub k: usize,
    pub seed: u64,
    /// First round after which each node could output all k messages.
    pub completion_rounds: Vec<Option<u64>>,
    /// Max over nodes; `None` if the round limit was hit first.
    pub completion_round: Option<u64>,
    pub rounds_executed: u64,
    /// Every completed node recovered exactly the original payloads.
    pub payloads_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<ExchangeTrace>,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.completion_round.is_some()
    }
}

/// The completion predicate: AG at full rank, routing protocols holding 1..k.
pub fn completion_check(state: &NodeState) -> bool {
    state.is_complete()
}

struct Slot {
    state: NodeState,
    rng: ChaCha8Rng,
}

struct Sim<'a> {
    topology: &'a Topology,
    slots: Vec<Slot>,
    execution: Execution,
    trace: Option<ExchangeTrace>,
    completion: Vec<Option<u64>>,
}

impl<'a> Sim<'a> {
    fn new(config: &'a RunConfig, payloads: &[Payload]) -> Self {
        let g = &*config.topology;
        let slots = (0..g.n())
            .map(|u| {
                let initial = config
                    .sources
                    .messages_at(u)
                    .map(|m| (m, payloads[m as usize - 1].clone()));
                let neighbors = g.neighbors(u).to_vec();
                let state = match config.protocol {
                    Protocol::Ag => NodeState::Ag(AgState::new(
                        u,
                        neighbors,
                        config.field,
                        config.k,
                        config.payload_len,
                        initial,
                    )),
                    Protocol::Rr => NodeState::Routing(RoutingState::new(
                        u,
                        neighbors,
                        RoutingMode::RoundRobin,
                        config.k,
                        initial,
                    )),
                    Protocol::Pug => NodeState::Routing(RoutingState::new(
                        u,
                        neighbors,
                        RoutingMode::Uniform,
                        config.k,
                        initial,
                    )),
                    Protocol::Tree => {
                        let id = config.broadcast_ids.as_ref().map_or(u as u64, |ids| ids[u]);
                        NodeState::Tree(TreeState::new(u, id, neighbors, config.k, initial))
                    }
                };
                Slot {
                    state,
                    rng: node_rng(config.seed, u),
                }
            })
            .collect();
        Sim {
            topology: g,
            slots,
            execution: config.execution,
            trace: config.record_trace.then(ExchangeTrace::default),
            completion: vec![None; g.n()],
        }
    }

    fn round(&mut self, round: u64) -> Result<(), EngineError> {
        let n = self.topology.n();
        let exec = self.execution;

        let inits = map_indexed_mut(exec, &mut self.slots, |_, s| {
            s.state.initiate(round, &mut s.rng)
        });

        let mut callers: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (u, init) in inits.iter().enumerate() {
            if let Some((t, _)) = init {
                callers[*t].push(u);
            }
        }
        let responses = map_indexed_mut(exec, &mut self.slots, |v, s| {
            callers[v]
                .iter()
                .map(|&u| s.state.respond(u, &mut s.rng))
                .collect::<Vec<_>>()
        });

        let mut pending: Vec<_> = responses.into_iter().map(Vec::into_iter).collect();
        let mut inbox: Vec<Vec<(NodeId, Packet)>> = vec![Vec::new(); n];
        let mut transmissions = Vec::new();
        for (u, init) in inits.into_iter().enumerate() {
            let Some((t, packet)) = init else { continue };
            // callers[t] is ascending, so responses come out in initiator order
            let reply = pending[t].next().expect("one response per caller");
            if self.trace.is_some() {
                transmissions.push(Transmission {
                    from: u,
                    to: t,
                    packet: packet.summary(),
                });
                transmissions.push(Transmission {
                    from: t,
                    to: u,
                    packet: reply.summary(),
                });
            }
            inbox[t].push((u, packet));
            inbox[u].push((t, reply));
        }
        for b in &mut inbox {
            b.sort_by_key(|(s, _)| *s);
        }
        if let Some(trace) = &mut self.trace {
            trace.rounds.push(transmissions);
        }

        let applied = map_indexed_mut(exec, &mut self.slots, |v, s| {
            inbox[v]
                .iter()
                .try_for_each(|(sender, p)| s.state.on_receive(p, *sender, round))
        });
        applied.into_iter().collect::<Result<(), _>>()?;
        Ok(())
    }

    fn mark_completion(&mut self, round: u64) {
        for (c, s) in self.completion.iter_mut().zip(&self.slots) {
            if c.is_none() && completion_check(&s.state) {
                *c = Some(round);
            }
        }
    }

    /// Runs rounds `start + 1 ..= start + limit` until `done` holds. Returns
    /// the number of rounds it took, or `None` if the limit was reached.
    fn drive(
        &mut self,
        start: u64,
        limit: u64,
        track_completion: bool,
        done: impl Fn(&[Slot]) -> bool,
    ) -> Result<(Option<u64>, u64), EngineError> {
        if done(&self.slots) {
            return Ok((Some(0), 0));
        }
        for i in 1..=limit {
            self.round(start + i)?;
            if track_completion {
                self.mark_completion(start + i);
            }
            if done(&self.slots) {
                return Ok((Some(i), i));
            }
        }
        Ok((None, limit))
    }

    fn verify_payloads(&self, config: &RunConfig, payloads: &[Payload]) -> bool {
        self.slots
            .iter()
            .filter(|s| completion_check(&s.state))
            .all(|s| match &s.state {
                NodeState::Ag(a) => {
                    decode(&a.field(), a.known(), a.k()).is_ok_and(|d| d == payloads)
                }
                NodeState::Routing(r) => (1..=config.k as MessageId)
                    .all(|m| r.payload(m) == Some(&payloads[m as usize - 1])),
                NodeState::Tree(t) => (1..=config.k as MessageId)
                    .all(|m| t.payload(m) == Some(&payloads[m as usize - 1])),
            })
    }
}

fn all_complete(slots: &[Slot]) -> bool {
    slots.iter().all(|s| completion_check(&s.state))
}

/// Executes one run to completion or to `max_rounds`.
pub fn run(config: &RunConfig) -> Result<RunResult, EngineError> {
    config.validate()?;
    if config.protocol == Protocol::Tree {
        return run_tree(config);
    }
    let payloads = message_payloads(config.seed, config.k, config.payload_len);
    let mut sim = Sim::new(config, &payloads);
    sim.mark_completion(0);
    let (_, executed) = sim.drive(0, config.max_rounds, true, all_complete)?;
    let payloads_verified = sim.verify_payloads(config, &payloads);
    Ok(finish(config, sim, executed, payloads_verified, None))
}

fn finish(
    config: &RunConfig,
    sim: Sim<'_>,
    rounds_executed: u64,
    payloads_verified: bool,
    tree: Option<TreeOutcome>,
) -> RunResult {
    let completion_round = sim
        .completion
        .iter()
        .try_fold(0u64, |acc, c| c.map(|r| acc.max(r)));
    RunResult {
        protocol: config.protocol,
        k: config.k,
        seed: config.seed,
        completion_rounds: sim.completion,
        completion_round,
        rounds_executed,
        payloads_verified,
        tree,
        trace: sim.trace,
    }
}

/// The tree protocol: min-id broadcast until every node has heard the global
/// minimum, parent selection, then pipelined forwarding. Each phase is capped
/// at `max_rounds`.
pub fn run_tree(config: &RunConfig) -> Result<RunResult, EngineError> {
    config.validate()?;
    if config.protocol != Protocol::Tree {
        return Err(EngineError::Config(
            "run_tree needs the tree protocol".into(),
        ));
    }
    let payloads = message_payloads(config.seed, config.k, config.payload_len);
    let mut sim = Sim::new(config, &payloads);
    let global_min = tree_states(&sim.slots)
        .map(TreeState::broadcast_id)
        .min()
        .expect("n >= 2");

    let (broadcast, executed) = sim.drive(0, config.max_rounds, false, |slots| {
        tree_states(slots).all(|t| t.smallest_seen() == global_min)
    })?;
    let Some(b) = broadcast else {
        let outcome = TreeOutcome {
            broadcast_rounds: None,
            parents: vec![None; sim.slots.len()],
            tree_diameter: None,
            forwarding_rounds: None,
        };
        return Ok(finish(config, sim, executed, true, Some(outcome)));
    };

    let states: Vec<TreeState> = tree_states(&sim.slots).cloned().collect();
    let parents = build_parents(&states, global_min)?;
    for (slot, &p) in sim.slots.iter_mut().zip(&parents) {
        if let NodeState::Tree(t) = &mut slot.state {
            t.start_forwarding(p);
        }
    }
    let tree_diameter = parent_tree(&parents).ok().map(|t| t.diameter());

    sim.mark_completion(b);
    let (forwarding, fwd_executed) = sim.drive(b, config.max_rounds, true, all_complete)?;
    let payloads_verified = sim.verify_payloads(config, &payloads);
    let outcome = TreeOutcome {
        broadcast_rounds: Some(b),
        parents,
        tree_diameter,
        forwarding_rounds: forwarding,
    };
    Ok(finish(
        config,
        sim,
        b + fwd_executed,
        payloads_verified,
        Some(outcome),
    ))
}

fn tree_states(slots: &[Slot]) -> impl Iterator<Item = &TreeState> {
    slots.iter().filter_map(|s| match &s.state {
        NodeState::Tree(t) => Some(t),
        _ => None,
    })
}

/// The graph of parent pointers. Fails unless it is a spanning tree: exactly
/// n - 1 edges and connected.
pub fn parent_tree(parents: &[Option<NodeId>]) -> Result<Topology, crate::graph::GraphError> {
    let edges: Vec<_> = parents
        .iter()
        .enumerate()
        .filter_map(|(v, p)| p.map(|p| (p, v)))
        .collect();
    if edges.len() + 1 != parents.len() {
        return Err(crate::graph::GraphError::InvalidParams {
            family: "parent tree".into(),
            reason: format!("{} parent edges for {} nodes", edges.len(), parents.len()),
        });
    }
    Topology::from_edges(parents.len(), &edges)
}
