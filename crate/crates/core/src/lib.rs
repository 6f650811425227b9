//! Desk-scale laboratory for fiber-bundle models of visual semantics.
//!
//! * [`bundle`] renders `A+B` expressions under a nuisance group and labels
//!   them with `(A+B) mod n`.
//! * [`manifold`] samples point clouds with known topology.
//! * [`tensor_net`] is a small reverse-mode autodiff engine with dense,
//!   ReLU and softmax-gated mixture layers plus four training losses.
//! * [`topo`] computes Vietoris-Rips persistence in dimensions 0 and 1.
//! * [`metrics`] measures orbit collapse, linear probe accuracy, decision
//!   region convexity and expand-and-snap traces.
//! * [`runner`] drives configured experiments and writes reports.

pub mod bundle;
pub mod error;
pub mod manifold;
pub mod metrics;
pub mod rng;
pub mod runner;
pub mod tensor_net;
pub mod topo;

pub use error::{Error, Result};
