//! Malicious-node identification for a sharded, permissioned committee.
//!
//! * [`field`]: prime-field arithmetic and byte packing.
//! * [`codes`]: shard testable codes (encode, parity test, decode).
//! * [`identity`]: CA-issued scalars and the double-signature proof protocol.
//! * [`gtest`]: adaptive group testing and its closed-form bounds.
//! * [`simnet`]: a deterministic discrete-event committee running the join flow.
//! * [`experiments`]: cost models, figure data, benchmarks and configuration.

use std::fmt;

pub mod codes;
pub mod experiments;
pub mod field;
pub mod gtest;
pub mod identity;
pub mod simnet;

pub use field::{FieldElement, FieldParams};

/// Committee member index. The joining node and the CA are not members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}
