//! Per-node state machines for the four dissemination protocols.
//!
//! Every protocol answers the same three questions each round: whom does a
//! node contact, what does it send as initiator, and what does it send back
//! when contacted. The engine asks them against start-of-round state and only
//! then delivers packets, so nothing decided in round `t` can depend on a
//! packet delivered in round `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{random_combination, CoefficientVector, EchelonBasis, FieldSpec, Payload};
use crate::graph::NodeId;

/// Message ids run from 1 to k.
pub type MessageId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("node {node} ({protocol}) cannot accept a {packet} packet")]
    PacketMismatch {
        node: NodeId,
        protocol: &'static str,
        packet: &'static str,
    },
    #[error("message id {0} out of range")]
    BadMessage(MessageId),
    #[error("broadcast phase incomplete: node {0} never heard the minimum id")]
    PhaseIncomplete(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Uniform algebraic gossip.
    Ag,
    /// Prioritized round-robin routing.
    Rr,
    /// Prioritized uniform gossip.
    Pug,
    /// ID broadcast, then pipelined forwarding along the induced tree.
    Tree,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Ag => "ag",
            Protocol::Rr => "rr",
            Protocol::Pug => "pug",
            Protocol::Tree => "tree",
        }
    }

    pub fn is_randomized(&self) -> bool {
        !matches!(self, Protocol::Rr)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ag" => Ok(Protocol::Ag),
            "rr" => Ok(Protocol::Rr),
            "pug" => Ok(Protocol::Pug),
            "tree" => Ok(Protocol::Tree),
            other => Err(format!(
                "unknown protocol `{other}` (expected ag, rr, pug or tree)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Packet {
    Coded {
        coeffs: CoefficientVector,
        payload: Payload,
    },
    Plain {
        message_id: MessageId,
        payload: Payload,
    },
    /// A node id announced during the tree protocol's broadcast phase.
    Announce {
        id: u64,
    },
    Empty,
}

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Coded { .. } => "coded",
            Packet::Plain { .. } => "plain",
            Packet::Announce { .. } => "announce",
            Packet::Empty => "empty",
        }
    }

    pub fn summary(&self) -> PacketSummary {
        match self {
            Packet::Coded { coeffs, .. } => PacketSummary::Coded(coeffs.0.clone()),
            Packet::Plain { message_id, .. } => PacketSummary::Plain(*message_id),
            Packet::Announce { id } => PacketSummary::Announce(*id),
            Packet::Empty => PacketSummary::Empty,
        }
    }
}

/// What a transmission carried, without the payload bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketSummary {
    Coded(Vec<u16>),
    Plain(MessageId),
    Announce(u64),
    Empty,
}

/// Origin node of every message; index `i` holds message `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceAssignment(Vec<NodeId>);

impl SourceAssignment {
    pub fn new(origins: Vec<NodeId>) -> Self {
        SourceAssignment(origins)
    }

    /// All k messages start at `node`.
    pub fn single(node: NodeId, k: usize) -> Self {
        SourceAssignment(vec![node; k])
    }

    /// Message j (1-based) starts at node floor((j - 1) * n / k).
    pub fn spread(n: usize, k: usize) -> Self {
        SourceAssignment((0..k).map(|i| i * n / k).collect())
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn origin(&self, message: MessageId) -> NodeId {
        self.0[message as usize - 1]
    }

    pub fn origins(&self) -> &[NodeId] {
        &self.0
    }

    /// Messages (1-based ids) that start at `node`.
    pub fn messages_at(&self, node: NodeId) -> impl Iterator<Item = MessageId> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(move |(_, &o)| o == node)
            .map(|(i, _)| i as MessageId + 1)
    }

    /// Number of messages starting at each node.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &o in &self.0 {
            c[o] += 1;
        }
        c
    }
}

fn uniform_neighbor<R: Rng + ?Sized>(neighbors: &[NodeId], rng: &mut R) -> NodeId {
    *neighbors
        .choose(rng)
        .expect("connected topology: every node has a neighbor")
}

/// Algebraic gossip: send a uniformly random combination of everything known.
#[derive(Clone, Debug)]
pub struct AgState {
    pub id: NodeId,
    neighbors: Vec<NodeId>,
    field: FieldSpec,
    k: usize,
    payload_len: usize,
    /// Initial messages as unit-vector packets, then every innovative packet.
    known: Vec<(CoefficientVector, Payload)>,
    basis: EchelonBasis,
    received: u64,
}

impl AgState {
    pub fn new(
        id: NodeId,
        neighbors: Vec<NodeId>,
        field: FieldSpec,
        k: usize,
        payload_len: usize,
        initial: impl IntoIterator<Item = (MessageId, Payload)>,
    ) -> Self {
        let mut s = AgState {
            id,
            neighbors,
            field,
            k,
            payload_len,
            known: Vec::new(),
            basis: EchelonBasis::new(field, k),
            received: 0,
        };
        for (m, payload) in initial {
            let e = CoefficientVector::unit(k, m as usize - 1);
            if s.basis.insert(&e).expect("unit vector has length k") {
                s.known.push((e, payload));
            }
        }
        s
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn known(&self) -> &[(CoefficientVector, Payload)] {
        &self.known
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Packets received so far, innovative or not.
    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (NodeId, Packet) {
        let target = uniform_neighbor(&self.neighbors, rng);
        (target, self.respond(rng))
    }

    /// A fresh random combination; the same rule serves initiator and responder.
    pub fn respond<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Packet {
        let (coeffs, payload) =
            random_combination(rng, &self.known, &self.field, self.k, self.payload_len);
        Packet::Coded { coeffs, payload }
    }

    pub fn on_receive(&mut self, coeffs: &CoefficientVector, payload: &Payload) {
        self.received += 1;
        if self.basis.insert(coeffs).unwrap_or(false) {
            self.known.push((coeffs.clone(), payload.clone()));
        }
    }

    pub fn is_complete(&self) -> bool {
        self.basis.is_full()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoutingMode {
    RoundRobin,
    Uniform,
}

/// Prioritized routing shared by round-robin and uniform gossip: send the
/// smallest message not yet sent to this partner and not yet sent `deg` times.
#[derive(Clone, Debug)]
pub struct RoutingState {
    pub id: NodeId,
    mode: RoutingMode,
    neighbors: Vec<NodeId>,
    held: Vec<Option<Payload>>,
    send_count: Vec<usize>,
    /// `sent[m - 1][i]`: message m went to `neighbors[i]`.
    sent: Vec<Vec<bool>>,
}

impl RoutingState {
    pub fn new(
        id: NodeId,
        neighbors: Vec<NodeId>,
        mode: RoutingMode,
        k: usize,
        initial: impl IntoIterator<Item = (MessageId, Payload)>,
    ) -> Self {
        let deg = neighbors.len();
        let mut held = vec![None; k];
        for (m, p) in initial {
            held[m as usize - 1] = Some(p);
        }
        RoutingState {
            id,
            mode,
            neighbors,
            held,
            send_count: vec![0; k],
            sent: vec![vec![false; deg]; k],
        }
    }

    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    pub fn holds(&self, m: MessageId) -> bool {
        self.held[m as usize - 1].is_some()
    }

    pub fn held_messages(&self) -> impl Iterator<Item = MessageId> + '_ {
        self.held
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_some())
            .map(|(i, _)| i as MessageId + 1)
    }

    pub fn payload(&self, m: MessageId) -> Option<&Payload> {
        self.held[m as usize - 1].as_ref()
    }

    pub fn send_count(&self, m: MessageId) -> usize {
        self.send_count[m as usize - 1]
    }

    pub fn was_sent_to(&self, m: MessageId, neighbor: NodeId) -> bool {
        self.neighbor_index(neighbor)
            .is_some_and(|i| self.sent[m as usize - 1][i])
    }

    fn neighbor_index(&self, v: NodeId) -> Option<usize> {
        self.neighbors.binary_search(&v).ok()
    }

    /// Round-robin target: the neighbor at position `round mod deg`.
    pub fn rr_target(&self, round: u64) -> NodeId {
        self.neighbors[(round % self.neighbors.len() as u64) as usize]
    }

    pub fn rr_step(&mut self, round: u64) -> (NodeId, Packet) {
        let target = self.rr_target(round);
        (target, self.packet_for(target))
    }

    pub fn pug_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (NodeId, Packet) {
        let target = uniform_neighbor(&self.neighbors, rng);
        (target, self.packet_for(target))
    }

    /// Applies the priority rule against `partner` and records the send.
    pub fn packet_for(&mut self, partner: NodeId) -> Packet {
        let Some(i) = self.neighbor_index(partner) else {
            return Packet::Empty;
        };
        let deg = self.neighbors.len();
        let pick = (0..self.held.len())
            .find(|&m| self.held[m].is_some() && self.send_count[m] < deg && !self.sent[m][i]);
        match pick {
            Some(m) => {
                self.send_count[m] += 1;
                self.sent[m][i] = true;
                Packet::Plain {
                    message_id: m as MessageId + 1,
                    payload: self.held[m].clone().unwrap(),
                }
            }
            None => Packet::Empty,
        }
    }

    pub fn receive_message(
        &mut self,
        m: MessageId,
        payload: &Payload,
    ) -> Result<(), ProtocolError> {
        let slot = self
            .held
            .get_mut((m as usize).wrapping_sub(1))
            .ok_or(ProtocolError::BadMessage(m))?;
        if slot.is_none() {
            *slot = Some(payload.clone());
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.held.iter().all(Option::is_some)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreePhase {
    Broadcasting,
    Forwarding,
}

/// Tree protocol: gossip the minimum id, adopt the node it was first heard
/// from as parent, then pipeline messages over the tree edges.
#[derive(Clone, Debug)]
pub struct TreeState {
    pub id: NodeId,
    broadcast_id: u64,
    neighbors: Vec<NodeId>,
    phase: TreePhase,
    smallest_seen: u64,
    /// id -> (sender, round) of its first receipt.
    first_heard: BTreeMap<u64, (NodeId, u64)>,
    parent: Option<NodeId>,
    held: Vec<Option<Payload>>,
    /// Per partner, which messages were already sent to it.
    sent: BTreeMap<NodeId, Vec<bool>>,
}

impl TreeState {
    pub fn new(
        id: NodeId,
        broadcast_id: u64,
        neighbors: Vec<NodeId>,
        k: usize,
        initial: impl IntoIterator<Item = (MessageId, Payload)>,
    ) -> Self {
        let mut held = vec![None; k];
        for (m, p) in initial {
            held[m as usize - 1] = Some(p);
        }
        TreeState {
            id,
            broadcast_id,
            neighbors,
            phase: TreePhase::Broadcasting,
            smallest_seen: broadcast_id,
            first_heard: BTreeMap::new(),
            parent: None,
            held,
            sent: BTreeMap::new(),
        }
    }

    pub fn phase(&self) -> TreePhase {
        self.phase
    }

    pub fn broadcast_id(&self) -> u64 {
        self.broadcast_id
    }

    pub fn smallest_seen(&self) -> u64 {
        self.smallest_seen
    }

    pub fn first_heard(&self, id: u64) -> Option<(NodeId, u64)> {
        self.first_heard.get(&id).copied()
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn holds(&self, m: MessageId) -> bool {
        self.held[m as usize - 1].is_some()
    }

    pub fn payload(&self, m: MessageId) -> Option<&Payload> {
        self.held[m as usize - 1].as_ref()
    }

    /// Switches to forwarding with the given parent (`None` for the root).
    pub fn start_forwarding(&mut self, parent: Option<NodeId>) {
        self.phase = TreePhase::Forwarding;
        self.parent = parent;
    }

    /// `None` means no exchange is initiated this round (the root while forwarding).
    pub fn step<R: Rng + ?Sized>(&mut self, _round: u64, rng: &mut R) -> Option<(NodeId, Packet)> {
        match self.phase {
            TreePhase::Broadcasting => {
                let target = uniform_neighbor(&self.neighbors, rng);
                Some((target, self.respond(target)))
            }
            TreePhase::Forwarding => {
                let parent = self.parent?;
                Some((parent, self.respond(parent)))
            }
        }
    }

    pub fn respond(&mut self, partner: NodeId) -> Packet {
        match self.phase {
            TreePhase::Broadcasting => Packet::Announce {
                id: self.smallest_seen,
            },
            TreePhase::Forwarding => {
                let k = self.held.len();
                let sent = self.sent.entry(partner).or_insert_with(|| vec![false; k]);
                match (0..k).find(|&m| self.held[m].is_some() && !sent[m]) {
                    Some(m) => {
                        sent[m] = true;
                        Packet::Plain {
                            message_id: m as MessageId + 1,
                            payload: self.held[m].clone().unwrap(),
                        }
                    }
                    None => Packet::Empty,
                }
            }
        }
    }

    /// Records the first receipt of `id`; a same-round tie goes to the
    /// smaller sender.
    pub fn hear_id(&mut self, id: u64, sender: NodeId, round: u64) {
        self.first_heard
            .entry(id)
            .and_modify(|e| {
                if e.1 == round && sender < e.0 {
                    *e = (sender, round);
                }
            })
            .or_insert((sender, round));
        self.smallest_seen = self.smallest_seen.min(id);
    }

    pub fn receive_message(
        &mut self,
        m: MessageId,
        payload: &Payload,
    ) -> Result<(), ProtocolError> {
        let slot = self
            .held
            .get_mut((m as usize).wrapping_sub(1))
            .ok_or(ProtocolError::BadMessage(m))?;
        if slot.is_none() {
            *slot = Some(payload.clone());
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.phase == TreePhase::Forwarding && self.held.iter().all(Option::is_some)
    }
}

/// One node's state under whichever protocol the run uses.
#[derive(Clone, Debug)]
pub enum NodeState {
    Ag(AgState),
    Routing(RoutingState),
    Tree(TreeState),
}

impl NodeState {
    pub fn protocol_name(&self) -> &'static str {
        match self {
            NodeState::Ag(_) => "ag",
            NodeState::Routing(s) => match s.mode {
                RoutingMode::RoundRobin => "rr",
                RoutingMode::Uniform => "pug",
            },
            NodeState::Tree(_) => "tree",
        }
    }

    pub fn id(&self) -> NodeId {
        match self {
            NodeState::Ag(s) => s.id,
            NodeState::Routing(s) => s.id,
            NodeState::Tree(s) => s.id,
        }
    }

    pub fn initiate<R: Rng + ?Sized>(
        &mut self,
        round: u64,
        rng: &mut R,
    ) -> Option<(NodeId, Packet)> {
        match self {
            NodeState::Ag(s) => Some(s.step(rng)),
            NodeState::Routing(s) => Some(match s.mode {
                RoutingMode::RoundRobin => s.rr_step(round),
                RoutingMode::Uniform => s.pug_step(rng),
            }),
            NodeState::Tree(s) => s.step(round, rng),
        }
    }

    pub fn respond<R: Rng + ?Sized>(&mut self, partner: NodeId, rng: &mut R) -> Packet {
        match self {
            NodeState::Ag(s) => s.respond(rng),
            NodeState::Routing(s) => s.packet_for(partner),
            NodeState::Tree(s) => s.respond(partner),
        }
    }

    pub fn on_receive(
        &mut self,
        packet: &Packet,
        sender: NodeId,
        round: u64,
    ) -> Result<(), ProtocolError> {
        let mismatch = |node, protocol| ProtocolError::PacketMismatch {
            node,
            protocol,
            packet: packet.kind(),
        };
        match (self, packet) {
            (_, Packet::Empty) => Ok(()),
            (NodeState::Ag(s), Packet::Coded { coeffs, payload }) => {
                s.on_receive(coeffs, payload);
                Ok(())
            }
            (
                NodeState::Routing(s),
                Packet::Plain {
                    message_id,
                    payload,
                },
            ) => s.receive_message(*message_id, payload),
            (NodeState::Tree(s), Packet::Announce { id }) if s.phase == TreePhase::Broadcasting => {
                s.hear_id(*id, sender, round);
                Ok(())
            }
            (
                NodeState::Tree(s),
                Packet::Plain {
                    message_id,
                    payload,
                },
            ) if s.phase == TreePhase::Forwarding => s.receive_message(*message_id, payload),
            (state, _) => Err(mismatch(state.id(), state.protocol_name())),
        }
    }

    pub fn is_complete(&self) -> bool {
        match self {
            NodeState::Ag(s) => s.is_complete(),
            NodeState::Routing(s) => s.is_complete(),
            NodeState::Tree(s) => s.is_complete(),
        }
    }
}

/// Parent pointers from the broadcast phase: every node adopts the sender it
/// first heard `global_min` from. The node owning `global_min` is the root.
pub fn build_parents(
    states: &[TreeState],
    global_min: u64,
) -> Result<Vec<Option<NodeId>>, ProtocolError> {
    states
        .iter()
        .map(|s| {
            if s.broadcast_id == global_min {
                Ok(None)
            } else {
                s.first_heard(global_min)
                    .map(|(sender, _)| Some(sender))
                    .ok_or(ProtocolError::PhaseIncomplete(s.id))
            }
        })
        .collect()
}
