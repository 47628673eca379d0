//! Synchronous-round simulation of k-message multicast on arbitrary graphs.
//!
//! Four protocols are implemented: uniform algebraic gossip (random linear
//! network coding with Gaussian-elimination decoding), prioritized round-robin
//! routing, prioritized uniform gossip, and a tree protocol that broadcasts
//! the minimum node id, builds a spanning tree from first receipts and then
//! pipelines messages along it. [`analysis`] holds the worst-case bound
//! formulas the protocols are checked against and a max-flow oracle for the
//! earliest round at which a recorded exchange schedule could have routed
//! every message.
//!
//! ```
//! use std::sync::Arc;
//! use algossip::{analysis, engine, graph::GraphFamily, protocols::{Protocol, SourceAssignment}};
//!
//! let g = Arc::new("path:50".parse::<GraphFamily>().unwrap().generate().unwrap());
//! let cfg = engine::RunConfig::new(Protocol::Rr, g.clone(), SourceAssignment::single(0, 4));
//! let result = engine::run(&cfg).unwrap();
//! assert!(result.completion_round.unwrap() <= analysis::bound_rr(&g, 4));
//! ```

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod field;
pub mod graph;
pub mod par;
pub mod protocols;
